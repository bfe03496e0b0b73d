#!/usr/bin/env python3
"""
Command-line front end: formulas, volumes, unipotent classes, Green
polynomials, character averages and motive fits.

    python scripts/padic_characters.py pas check "ord(x) >= 1"
    python scripts/padic_characters.py vol "ord(x) >= 2" --prime 5 --depth 3
    python scripts/padic_characters.py classes --prime 7
    python scripts/padic_characters.py green --primes 5,7,11
    python scripts/padic_characters.py char --prime 7 --alpha G2 --path both
    python scripts/padic_characters.py fit --primes 5,7,11,13 --predict 17
"""

import argparse
import logging
import math
import os
import sys
from fractions import Fraction
from typing import Any, Dict, List, Optional, Sequence

sys.path.append(os.path.join(os.path.dirname(__file__), '..'))

from models.character_engine import AverageSpec, compare_paths, direct_average, volume_average
from models.classical_groups import GroupBlock
from models.green_characters import GreenPolynomials, dl_cuspidal_values
from models.motive_fitter import ValueTable, cross_validate, fit
from models.padic_model import (
    Ambient, ModelKind, count_and_volume, enumerate_points, eval_formula, point_raws,
)
from models.pas_language import Sort, check_sorts, free_vars, parse_formula
from models.unipotent_classes import brute_force_orbits, classify_unipotent, enumerate_class_labels
from utils.report_generator import render
from utils.run_config import RunConfig

logger = logging.getLogger(__name__)


def _int_list(text: str) -> List[int]:
    return [int(x) for x in text.split(',') if x.strip()]


def _str_list(text: str) -> List[str]:
    return [x.strip() for x in text.split(',') if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='flat JSON run configuration; flags override it')
    common.add_argument('--group', choices=['sp', 'so'], help='Sp(2n) or SO(2n+1)')
    common.add_argument('--rank', type=int, help='n')
    common.add_argument('--w', help='torus partition, e.g. (1)')
    common.add_argument('--alpha', help="Gamma: library name (G1, G2), '@file' or formula text")
    common.add_argument('--gamma-bound', dest='gamma_bound', type=int, help='B in the G2 library entry')
    common.add_argument('--model', dest='kinds', type=_str_list, help='mixed, equal or mixed,equal')
    common.add_argument('--prime', type=int, help='single prime (overrides --primes)')
    common.add_argument('--primes', type=_int_list, help='comma-separated odd primes')
    common.add_argument('--depth', type=int, help='starting depth k0')
    common.add_argument('--max-depth', dest='max_depth', type=int, help='refinement cap')
    common.add_argument('--lambda-bound', dest='lambda_bound', type=int, help='search bound for lambda')
    common.add_argument('--certify-depth', dest='certify_depth', type=int,
                        help='refinement cap for the Gamma-inside-K^rtu check')
    common.add_argument('--format', choices=['json', 'csv'], help='output format')
    common.add_argument('--jobs', type=int, help='parallel workers for volume computations')
    common.add_argument('--audit', action='store_true', default=None,
                        help='check each lambda-class on a second element')
    common.add_argument('--cache-dir', dest='cache_dir', help='point cache directory (else $PADIC_CACHE_DIR)')
    common.add_argument('--output', help='write to this file instead of stdout')

    parser = argparse.ArgumentParser(description='p-adic character averages by definable-set volumes')
    sub = parser.add_subparsers(dest='command', required=True)

    pas = sub.add_parser('pas', parents=[common], help='parse, evaluate or enumerate a formula')
    pas.add_argument('action', choices=['check', 'eval', 'points'])
    pas.add_argument('formula')
    pas.add_argument('--assign', action='append', default=[], help='name=value, repeatable')

    vol = sub.add_parser('vol', parents=[common], help='volume of a definable set')
    vol.add_argument('formula')
    vol.add_argument('--dim', type=int, help='declared dimension (checked against the ambient)')
    vol.add_argument('--ambient', choices=['affine', 'group'], default='affine',
                     help="affine over the free variables, or the group G(O) in variables g1_1..")

    sub.add_parser('classes', parents=[common], help='unipotent classes and their labels')
    sub.add_parser('green', parents=[common], help='cuspidal values and Green polynomials')

    char = sub.add_parser('char', parents=[common], help='character average over Gamma')
    char.add_argument('--path', choices=['direct', 'volume', 'both'], default='direct')

    fit_ = sub.add_parser('fit', parents=[common], help='fit character averages across primes')
    fit_.add_argument('--predict', type=_int_list, default=[], help='primes to cross-validate')
    fit_.add_argument('--path', choices=['direct', 'volume'], default='direct')
    return parser


def load_config(args: argparse.Namespace) -> RunConfig:
    overrides = {k: getattr(args, k, None) for k in (
        'group', 'rank', 'w', 'alpha', 'gamma_bound', 'kinds', 'primes', 'depth', 'max_depth',
        'lambda_bound', 'certify_depth', 'format', 'jobs', 'audit', 'cache_dir')}
    if getattr(args, 'prime', None):
        overrides['primes'] = [args.prime]
    return RunConfig.load(args.config, overrides)


def _parse_assignment(items: Sequence[str], sorts: Dict[str, Sort]) -> Dict[str, Any]:
    out = {}
    for item in items:
        if '=' not in item:
            raise ValueError(f"assignment '{item}' is not of the form name=value")
        name, value = item.split('=', 1)
        name = name.strip()
        if name not in sorts:
            raise ValueError(f"'{name}' is not a free variable of the formula")
        value = value.strip()
        if sorts[name] is Sort.VALUE and value == 'inf':
            out[name] = math.inf
        elif sorts[name] is Sort.VALUED:
            out[name] = Fraction(value)
        else:
            out[name] = int(value)
    return out


def cmd_pas(args: argparse.Namespace, config: RunConfig) -> Dict[str, Any]:
    f = parse_formula(args.formula)
    report = check_sorts(f)
    pairs = free_vars(f)
    if args.action == 'check':
        return {
            'ok': report.ok,
            'errors': [list(e) for e in report.errors],
            'canonical': f.canonical,
            'free_vars': [[name, sort.name.lower()] for name, sort in pairs],
        }
    m = config.model()
    if args.action == 'eval':
        verdict = eval_formula(m, f, _parse_assignment(args.assign, dict(pairs)))
        return {'formula': f.canonical, 'prime': m.prime, 'depth': m.depth, 'kind': m.kind.value,
                'verdict': verdict.value}
    names = [name for name, sort in pairs if sort is Sort.VALUED]
    rows = [dict(zip(names, point_raws(m, point, names))) for point in enumerate_points(m, f)]
    return {'formula': f.canonical, 'prime': m.prime, 'depth': m.depth, 'kind': m.kind.value,
            'variables': names, 'count': len(rows), 'rows': rows}


def cmd_vol(args: argparse.Namespace, config: RunConfig) -> Dict[str, Any]:
    f = parse_formula(args.formula)
    m = config.model()
    if args.ambient == 'group':
        ambient = Ambient.of(GroupBlock(config.descriptor(), 'g'))
    else:
        ambient = Ambient.affine([name for name, sort in free_vars(f) if sort is Sort.VALUED])
    dim = args.dim if args.dim is not None else ambient.dim
    result = count_and_volume(m, f, dim, ambient, cache=config.cache(), jobs=config.jobs)
    return {'formula': f.canonical, 'kind': m.kind.value, 'ambient': ambient.ident(), **result.to_dict()}


def cmd_classes(args: argparse.Namespace, config: RunConfig) -> Dict[str, Any]:
    g = config.descriptor()
    rows = []
    for q in config.primes:
        labels = enumerate_class_labels(g, q)
        orbits = {classify_unipotent(g, o.representative, q): o for o in brute_force_orbits(g, q)}
        for label in labels:
            orbit = orbits.get(label)
            rows.append({
                'q': q,
                'label': label.key(),
                'size': orbit.size if orbit else 0,
                'representative': orbit.representative.reshape(-1).tolist() if orbit else [],
            })
        if set(orbits) != set(labels):
            raise ValueError(f"{g.name} over F_{q}: orbits {sorted(map(str, orbits))} "
                             f"do not match labels {[l.key() for l in labels]}")
    return {'group': g.name, 'rows': rows}


def cmd_green(args: argparse.Namespace, config: RunConfig) -> Dict[str, Any]:
    g, w = config.descriptor(), config.torus()
    values = []
    for q in config.primes:
        for label, value in dl_cuspidal_values(q, g, w).items():
            values.append({'q': q, 'label': label.key(), 'value': str(value)})
    polynomials = GreenPolynomials.fit(config.primes, g=g, w=w) if len(config.primes) >= 2 else None
    return {
        'group': g.name,
        'w': list(w.w),
        'values': values,
        'rows': polynomials.rows() if polynomials else [],
    }


def average_spec(config: RunConfig, prime: int, kind: ModelKind) -> AverageSpec:
    return AverageSpec(config.descriptor(), config.alpha_formula(), config.model(prime, kind),
                       w=config.torus(), lambda_bound=config.lambda_bound, name=config.alpha,
                       certify_depth=config.certification_depth())


def cmd_char(args: argparse.Namespace, config: RunConfig) -> Dict[str, Any]:
    cache = config.cache()
    results = []
    for prime in config.primes:
        for kind in config.model_kinds():
            spec = average_spec(config, prime, kind)
            if args.path == 'both':
                results.append(compare_paths(spec, audit=config.audit, cache=cache, jobs=config.jobs).to_dict())
            elif args.path == 'volume':
                results.append(volume_average(spec, cache=cache, jobs=config.jobs).to_dict())
            else:
                results.append(direct_average(spec, audit=config.audit, cache=cache).to_dict())
    rows = []
    for result in results:
        source = result.get('direct', result)
        for row in source['rows']:
            rows.append({'prime': source['prime'], 'kind': source['kind'], **row})
    return {'alpha': config.alpha, 'results': results, 'rows': rows}


def cmd_fit(args: argparse.Namespace, config: RunConfig) -> Dict[str, Any]:
    cache = config.cache()
    table = ValueTable()
    for prime in config.primes:
        for kind in config.model_kinds():
            spec = average_spec(config, prime, kind)
            runner = direct_average if args.path == 'direct' else volume_average
            table.add(prime, kind, runner(spec, cache=cache).value)
    expression = fit(table)
    out: Dict[str, Any] = {
        'expression': expression.to_dict(),
        'in_localized_ring': expression.in_localized_ring(),
        'table': table.to_frame().to_dict(orient='records'),
        'rows': [],
    }
    if args.predict:
        report = cross_validate(expression, average_spec(config, config.primes[0], config.model_kinds()[0]),
                                args.predict, config.model_kinds(), path=args.path)
        out['cross_validation'] = report.to_dict()
        out['rows'] = [row.to_dict() for row in report.rows]
        if not report.ok:
            raise ValueError(f"prediction of {expression} failed at {args.predict}")
    return out


COMMANDS = {
    'pas': cmd_pas,
    'vol': cmd_vol,
    'classes': cmd_classes,
    'green': cmd_green,
    'char': cmd_char,
    'fit': cmd_fit,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args)
        result = COMMANDS[args.command](args, config)
        text = render(result, config.format)
    except ValueError as e:
        logger.error(f"{args.command} failed: {e}")
        return 1
    if args.output:
        with open(args.output, 'w', encoding='utf-8', newline='') as f:
            f.write(text)
        logger.info(f"Wrote {args.output}")
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')
    sys.exit(main())
