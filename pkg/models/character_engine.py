"""
vol(I) times the character average over a definable compact set Gamma,
computed two ways:

* direct: Gamma is cut into resolved cells, and every cell is conjugated by
  the lambda-class representatives y a; residues are classified and weighted
  by rho(C) vol(I) / q^l_lambda.
* volume: for every (class, lambda) the set W_{C,lambda}(Gamma) is written
  as a formula and measured on G x G; nothing about representatives is used.

The finite lambda-support is certified by two empty boundary shells.
"""

import logging
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import lru_cache
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from models.classical_groups import (
    GroupBlock, GroupDescriptor, MultiIndex, RawMatrix, conj_exponents,
    iwahori_volume, lambda_class_representatives, lambda_length, valid_multi_indices,
    validate_multi_index,
)
from models.formula_builders import build_W_formula, build_group_formulas
from models.green_characters import GreenPolynomials, TorusDatum, default_green_polynomials
from models.padic_model import (
    Ambient, ModelKind, ModelSpec, VolumeResult, count_and_volume, iter_cells,
)
from models.pas_language import Formula, conj, negate
from models.unipotent_classes import (
    NotUnipotentError, UnipotentClassLabel, classify_unipotent, enumerate_class_labels,
)

logger = logging.getLogger(__name__)

# refinement cap for the K^rtu certificate; G2(B) resolves at depth B + 1
CERTIFICATION_DEPTH = 3


class SpecNotCertifiedError(ValueError):
    pass


class SupportNotCertifiedError(ValueError):
    pass


class UnresolvedConditionError(ValueError):
    pass


class NonUnipotentResidueError(ValueError):
    pass


class AuditMismatchError(ValueError):
    pass


@lru_cache(maxsize=None)
def group_block(g: GroupDescriptor, prefix: str) -> GroupBlock:
    return GroupBlock(g, prefix)


@dataclass(frozen=True)
class AverageSpec:
    group: GroupDescriptor
    alpha: Formula
    model: ModelSpec
    w: TorusDatum = TorusDatum((1,))
    lambda_bound: int = 2
    name: str = ''
    certify_depth: int = CERTIFICATION_DEPTH
    green: Optional[GreenPolynomials] = field(default=None, compare=False)

    def __post_init__(self):
        if self.lambda_bound < 0:
            raise ValueError(f"lambda_bound must be non-negative, got {self.lambda_bound}")
        if self.certify_depth < 1:
            raise ValueError(f"certify_depth must be at least 1, got {self.certify_depth}")
        if self.w.rank != self.group.n:
            raise ValueError(f"w = {self.w.w} is not a partition of the rank {self.group.n}")

    @property
    def prime(self) -> int:
        return self.model.prime

    def with_model(self, model: ModelSpec) -> 'AverageSpec':
        return replace(self, model=model)

    def rho(self, label: UnipotentClassLabel) -> Fraction:
        return (self.green or default_green_polynomials()).rho(label, self.prime)

    def gamma_ambient(self) -> Ambient:
        return Ambient.of(group_block(self.group, 'g'))

    def pair_ambient(self) -> Ambient:
        return Ambient.of(group_block(self.group, 'g'), group_block(self.group, 'y'))


@dataclass
class BreakdownRow:
    label: UnipotentClassLabel
    lam: MultiIndex
    l_lambda: int
    rho: Fraction
    volume: Fraction
    contribution: Fraction

    def sort_key(self) -> Tuple:
        return (self.label.sort_key(), self.lam)

    def to_dict(self) -> Dict[str, str]:
        return {
            'label': self.label.key(),
            'lambda': ",".join(str(x) for x in self.lam),
            'l_lambda': str(self.l_lambda),
            'rho': str(self.rho),
            'volume': str(self.volume),
            'contribution': str(self.contribution),
        }


@dataclass
class SupportCertificate:
    bound: int
    support: List[MultiIndex]
    empty_shells: List[MultiIndex]
    note: str = "heuristic certificate: both boundary shells are empty"

    def to_dict(self) -> Dict:
        return {
            'bound': self.bound,
            'support': [list(l) for l in self.support],
            'empty_shells': [list(l) for l in self.empty_shells],
            'note': self.note,
        }


@dataclass
class CharacterAverage:
    value: Fraction
    rows: List[BreakdownRow]
    certificate: SupportCertificate
    path: str
    prime: int
    kind: ModelKind

    @property
    def lambda_support(self) -> List[MultiIndex]:
        return self.certificate.support

    def to_dict(self) -> Dict:
        return {
            'path': self.path,
            'prime': self.prime,
            'kind': self.kind.value,
            'value': str(self.value),
            'lambda_support': [list(l) for l in self.lambda_support],
            'certificate': self.certificate.to_dict(),
            'rows': [row.to_dict() for row in self.rows],
        }


# ----------------------------------------------------------------------------
# Certification
# ----------------------------------------------------------------------------

def certification_model(spec: AverageSpec) -> ModelSpec:
    """The model of spec with refinement capped at the certification depth."""
    cap = max(spec.model.depth, min(spec.model.max_depth, spec.certify_depth))
    return replace(spec.model, max_depth=cap)


def validate_spec(spec: AverageSpec, cache=None) -> VolumeResult:
    """Gamma inside K^rtu: alpha /\\ !rtu must have zero measure and no unknown mass."""
    rtu = build_group_formulas(spec.group, 'g').rtu
    model = certification_model(spec)
    result = count_and_volume(model, conj(spec.alpha, negate(rtu)), spec.group.dim,
                              spec.gamma_ambient(), cache=cache)
    if result.value != 0 or result.unknown_fraction != 0:
        raise SpecNotCertifiedError(
            f"Gamma is not certified inside K^rtu at p={spec.prime}: measure {result.value} outside, "
            f"unknown fraction {result.unknown_fraction} at depth {result.depth_used} "
            f"(certification depth {model.max_depth})")
    logger.info(f"Gamma certified inside K^rtu at p={spec.prime} (depth {result.depth_used})")
    return result


@dataclass
class GammaCells:
    """Resolved cells of Gamma on the group block."""
    points: List[RawMatrix]
    depths: List[int]
    measures: List[Fraction]


def gamma_cells(spec: AverageSpec) -> GammaCells:
    scan = iter_cells(spec.model, spec.alpha, spec.gamma_ambient(), min_depth=1)
    if scan.unknown_measure:
        raise UnresolvedConditionError(
            f"alpha leaves measure {scan.unknown_measure} unresolved at p={spec.prime}; raise max_depth")
    cells = GammaCells([], [], [])
    for cell in scan.cells:
        cells.points.append(tuple(cell.points[0]))
        cells.depths.append(cell.depths[0])
        cells.measures.append(cell.measure)
    logger.info(f"Gamma at p={spec.prime}: {len(cells.points)} cells, measure {scan.measure}")
    return cells


# ----------------------------------------------------------------------------
# Conjugation by y a
# ----------------------------------------------------------------------------

IN_K_FALSE, IN_K_UNRESOLVED, IN_K_TRUE = 0, 1, 2


class BatchArithmetic:
    """O / w^n on stacks of matrices.

    Mixed characteristic stores residues mod p^n; equal characteristic stores
    digit vectors of F_p[t] / t^n along a trailing axis.
    """

    def __init__(self, p: int, kind: ModelKind, n: int):
        self.p = p
        self.kind = kind
        self.n = n
        self.modulus = p ** n
        self._powers = p ** np.arange(n, dtype=np.int64)

    def lift(self, raws: np.ndarray) -> np.ndarray:
        raws = np.asarray(raws, dtype=np.int64) % self.modulus
        if self.kind is ModelKind.MIXED:
            return raws
        return (raws[..., None] // self._powers) % self.p

    def constant(self, M: np.ndarray) -> np.ndarray:
        M = np.asarray(M, dtype=np.int64)
        if self.kind is ModelKind.MIXED:
            return M % self.modulus
        out = np.zeros(M.shape + (self.n,), dtype=np.int64)
        out[..., 0] = M % self.p
        return out

    def matmul(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        if self.kind is ModelKind.MIXED:
            return np.einsum('...ik,...kj->...ij', A, B) % self.modulus
        shape = np.broadcast_shapes(A.shape[:-3], B.shape[:-3]) + (A.shape[-3], B.shape[-2], self.n)
        out = np.zeros(shape, dtype=np.int64)
        for a in range(self.n):
            for b in range(self.n - a):
                out[..., a + b] += np.einsum('...ik,...kj->...ij', A[..., a], B[..., b])
            out %= self.p
        return out

    def transpose(self, A: np.ndarray) -> np.ndarray:
        if self.kind is ModelKind.MIXED:
            return np.swapaxes(A, -1, -2)
        return np.swapaxes(A, -2, -3)

    def truncate(self, A: np.ndarray, n: int) -> np.ndarray:
        if self.kind is ModelKind.MIXED:
            return A % self.p ** n
        return A[..., :n]

    def digits(self, A: np.ndarray) -> np.ndarray:
        if self.kind is ModelKind.MIXED:
            return (A[..., None] // self._powers) % self.p
        return A


class Conjugator:
    """Decides (y a)^-1 gamma (y a) in K for every lambda-class representative y at once."""

    def __init__(self, g: GroupDescriptor, lam: Sequence[int], m: ModelSpec):
        self.descriptor = g
        self.lam = validate_multi_index(g, lam)
        self.model = m
        self.classes = lambda_class_representatives(g, self.lam, m)
        self.depth = self.classes.depth
        self.need = -conj_exponents(g, self.lam)
        full = BatchArithmetic(m.prime, m.kind, self.depth)
        r = g.r
        J = full.constant(g.J)
        Jt = full.transpose(J)
        self.alternate_index = sorted(self.classes.alternates)
        self._full = {}
        for name, raws in (('reps', self.classes.representatives),
                           ('alternates', [self.classes.alternates[i] for i in self.alternate_index])):
            Y = full.lift(np.array(raws, dtype=np.int64).reshape(-1, r, r))
            Y_inv = full.matmul(full.matmul(Jt[None], full.transpose(Y)), J[None])
            self._full[name] = (Y, Y_inv)
        self._truncated: Dict[Tuple[str, int], Tuple[np.ndarray, np.ndarray]] = {}

    @property
    def l_lambda(self) -> int:
        return self.classes.l_lambda

    def __len__(self) -> int:
        return len(self.classes)

    def representative(self, idx: int) -> RawMatrix:
        return self.classes.representatives[idx]

    def _batch(self, which: str, dd: int) -> Tuple[np.ndarray, np.ndarray]:
        key = (which, dd)
        hit = self._truncated.get(key)
        if hit is None:
            full = BatchArithmetic(self.model.prime, self.model.kind, self.depth)
            Y, Y_inv = self._full[which]
            hit = (full.truncate(Y, dd), full.truncate(Y_inv, dd))
            self._truncated[key] = hit
        return hit

    def outcomes(self, gamma: RawMatrix, d: int, which: str = 'reps') -> Tuple[np.ndarray, np.ndarray]:
        """Status per representative and the residue matrices (flattened) of those in K."""
        r, p = self.descriptor.r, self.model.prime
        dd = min(d, self.depth)
        ar = BatchArithmetic(p, self.model.kind, dd)
        Y, Y_inv = self._batch(which, dd)
        G = ar.lift(np.array(gamma, dtype=np.int64).reshape(r, r))
        D = ar.digits(ar.matmul(ar.matmul(Y_inv, G[None]), Y))
        nonzero = D != 0
        v = np.where(nonzero.any(axis=-1), nonzero.argmax(axis=-1), dd)
        need = self.need[None]
        readable = (need >= 0) & (need < dd)
        beyond = need >= dd
        fail = ((readable & (v < need)) | (beyond & (v < dd))).reshape(len(D), -1).any(axis=1)
        pending = (beyond & (v >= dd)).reshape(len(D), -1).any(axis=1)
        status = np.where(fail, IN_K_FALSE, np.where(pending, IN_K_UNRESOLVED, IN_K_TRUE))
        index = np.clip(need, 0, dd - 1)[..., None]
        digit = np.take_along_axis(D, np.broadcast_to(index, D.shape[:-1] + (1,)), axis=-1)[..., 0]
        residue = np.where(readable, digit, 0).reshape(len(D), -1)
        return status, residue


def _refine(block: GroupBlock, m: ModelSpec, point: RawMatrix, d: int) -> List[RawMatrix]:
    return [tuple(c) for c in block.lifts(m, point, d)]


def lambda_witness(spec: AverageSpec, lam: Sequence[int], cells: Optional[GammaCells] = None):
    """(gamma, y) with gamma in Gamma and (y a)^-1 gamma (y a) in K, or None."""
    cells = cells or gamma_cells(spec)
    conjugator = Conjugator(spec.group, lam, spec.model)
    block = group_block(spec.group, 'g')

    def search(gamma: RawMatrix, d: int):
        status, _ = conjugator.outcomes(gamma, d)
        hits = np.nonzero(status == IN_K_TRUE)[0]
        if len(hits):
            return gamma, conjugator.representative(int(hits[0]))
        if not np.any(status == IN_K_UNRESOLVED):
            return None
        for child in _refine(block, spec.model, gamma, d):
            found = search(child, d + 1)
            if found is not None:
                return found
        return None

    for gamma, d in zip(cells.points, cells.depths):
        found = search(gamma, d)
        if found is not None:
            return found
    return None


def shells(bound: int) -> List[int]:
    return [b for b in (bound, bound - 1) if b >= 0]


def lambda_support(spec: AverageSpec, cells: Optional[GammaCells] = None) -> SupportCertificate:
    """All lambda with |lambda| <= bound whose W set is nonempty; both outer shells must be empty."""
    cells = cells or gamma_cells(spec)
    bound = spec.lambda_bound
    support, empty_shells = [], []
    for lam in valid_multi_indices(spec.group, bound):
        norm = max((abs(x) for x in lam), default=0)
        witness = lambda_witness(spec, lam, cells)
        if witness is not None:
            support.append(lam)
            if norm in shells(bound):
                raise SupportNotCertifiedError(
                    f"lambda={lam} on the boundary shell |lambda|={norm} has a nonempty W set; "
                    f"raise lambda_bound above {bound}")
        elif norm in shells(bound):
            empty_shells.append(lam)
        logger.debug(f"lambda={lam}: {'nonempty' if witness else 'empty'}")
    logger.info(f"lambda support at p={spec.prime}: {support} (bound {bound})")
    return SupportCertificate(bound, support, empty_shells)


# ----------------------------------------------------------------------------
# The two paths
# ----------------------------------------------------------------------------

def _rows(spec: AverageSpec, support: Iterable[MultiIndex], volumes: Dict[Tuple, Fraction],
          lengths: Dict[MultiIndex, int]) -> List[BreakdownRow]:
    q = spec.prime
    rows = []
    for label in enumerate_class_labels(spec.group, q):
        rho_c = spec.rho(label)
        for lam in support:
            vol = volumes.get((label, lam), Fraction(0))
            rows.append(BreakdownRow(label, lam, lengths[lam], rho_c, vol, rho_c * q ** lengths[lam] * vol))
    rows.sort(key=BreakdownRow.sort_key)
    return rows


def _certify(spec: AverageSpec, cache=None) -> Tuple[GammaCells, SupportCertificate]:
    validate_spec(spec, cache)
    cells = gamma_cells(spec)
    return cells, lambda_support(spec, cells)


def direct_average(spec: AverageSpec, audit: bool = False, cache=None) -> CharacterAverage:
    """Sum over cells of Gamma and lambda-class representatives."""
    cells, certificate = _certify(spec, cache)
    g, m, q = spec.group, spec.model, spec.prime
    vol_I = iwahori_volume(g, q)
    block = group_block(g, 'g')
    conjugators = {lam: Conjugator(g, lam, m) for lam in certificate.support}
    labels: Dict[Tuple[int, ...], UnipotentClassLabel] = {}
    counts: Dict[Tuple, Fraction] = {}

    def label_of(residue: Tuple[int, ...]) -> UnipotentClassLabel:
        hit = labels.get(residue)
        if hit is None:
            R = np.array(residue, dtype=np.int64).reshape(g.r, g.r)
            try:
                hit = classify_unipotent(g, R, q)
            except NotUnipotentError:
                raise NonUnipotentResidueError(
                    f"residue {R.tolist()} is not unipotent; Gamma is not inside K^rtu") from None
            labels[residue] = hit
        return hit

    def visit(gamma: RawMatrix, d: int, measure: Fraction):
        results = {lam: c.outcomes(gamma, d) for lam, c in conjugators.items()}
        if any(np.any(status == IN_K_UNRESOLVED) for status, _ in results.values()):
            for child in _refine(block, m, gamma, d):
                visit(child, d + 1, measure / q ** g.dim)
            return
        for lam, (status, residues) in results.items():
            hits = np.nonzero(status == IN_K_TRUE)[0]
            if not len(hits):
                continue
            distinct, multiplicity = np.unique(residues[hits], axis=0, return_counts=True)
            for residue, n in zip(distinct, multiplicity):
                label = label_of(tuple(int(x) for x in residue))
                counts[(label, lam)] = counts.get((label, lam), Fraction(0)) + measure * int(n)
            if audit:
                _audit(conjugators[lam], gamma, d, status, residues)

    for gamma, d, measure in zip(cells.points, cells.depths, cells.measures):
        visit(gamma, d, measure)

    lengths = {lam: c.l_lambda for lam, c in conjugators.items()}
    volumes = {key: count * vol_I / q ** lengths[key[1]] for key, count in counts.items()}
    rows = _rows(spec, certificate.support, volumes, lengths)
    value = sum((row.contribution for row in rows), Fraction(0))
    logger.info(f"direct average at p={q} ({m.kind.value}): {value}")
    return CharacterAverage(value, rows, certificate, 'direct', q, m.kind)


def _audit(conjugator: Conjugator, gamma: RawMatrix, d: int, status: np.ndarray, residues: np.ndarray):
    """Second element of each class must agree with the representative on membership and residue class."""
    if not conjugator.alternate_index:
        return
    alt_status, alt_residues = conjugator.outcomes(gamma, d, which='alternates')
    g, q = conjugator.descriptor, conjugator.model.prime
    for k, idx in enumerate(conjugator.alternate_index):
        if (status[idx] == IN_K_TRUE) != (alt_status[k] == IN_K_TRUE):
            raise AuditMismatchError(
                f"lambda={conjugator.lam}: class {idx} disagrees on membership in K between two of its elements")
        if status[idx] == IN_K_TRUE:
            ours = classify_unipotent(g, residues[idx].reshape(g.r, g.r), q)
            theirs = classify_unipotent(g, alt_residues[k].reshape(g.r, g.r), q)
            if ours != theirs:
                raise AuditMismatchError(
                    f"lambda={conjugator.lam}: class {idx} gives {ours} on its representative and {theirs} "
                    f"on a second element")


def volume_average(spec: AverageSpec, cache=None, jobs: int = 1) -> CharacterAverage:
    """Sum of rho(C) q^l_lambda vol(W_{C,lambda}) with volumes from the formula engine."""
    _, certificate = _certify(spec, cache)
    g, m, q = spec.group, spec.model, spec.prime
    ambient = spec.pair_ambient()
    volumes: Dict[Tuple, Fraction] = {}
    lengths = {}
    for lam in certificate.support:
        lengths[lam] = lambda_length(g, lam, q, m.kind)
        for label in enumerate_class_labels(g, q):
            f = build_W_formula(g, lam, label, spec.alpha)
            result = count_and_volume(m, f, 2 * g.dim, ambient, cache=cache, jobs=jobs)
            if not result.stable:
                raise UnresolvedConditionError(
                    f"volume of W for {label}, lambda={lam} is unstable at depth {result.depth_used} "
                    f"(unknown fraction {result.unknown_fraction})")
            volumes[(label, lam)] = result.value
    rows = _rows(spec, certificate.support, volumes, lengths)
    value = sum((row.contribution for row in rows), Fraction(0))
    logger.info(f"volume average at p={q} ({m.kind.value}): {value}")
    return CharacterAverage(value, rows, certificate, 'volume', q, m.kind)


@dataclass
class PathComparison:
    direct: CharacterAverage
    volume: CharacterAverage
    mismatched_rows: List[Tuple[str, MultiIndex]]

    @property
    def agree(self) -> bool:
        return self.direct.value == self.volume.value and not self.mismatched_rows

    def to_dict(self) -> Dict:
        return {
            'agree': self.agree,
            'direct': self.direct.to_dict(),
            'volume': self.volume.to_dict(),
            'mismatched_rows': [[label, list(lam)] for label, lam in self.mismatched_rows],
        }


def compare_paths(spec: AverageSpec, audit: bool = False, cache=None, jobs: int = 1) -> PathComparison:
    direct = direct_average(spec, audit=audit, cache=cache)
    volume = volume_average(spec, cache=cache, jobs=jobs)
    by_key = {(r.label, r.lam): r.volume for r in volume.rows}
    mismatched = [(r.label.key(), r.lam) for r in direct.rows if by_key.get((r.label, r.lam)) != r.volume]
    comparison = PathComparison(direct, volume, mismatched)
    if comparison.agree:
        logger.info(f"paths agree at p={spec.prime} ({spec.model.kind.value}): {direct.value}")
    else:
        logger.warning(f"paths disagree at p={spec.prime}: direct {direct.value}, volume {volume.value}")
    return comparison


def character_average_series(spec: AverageSpec, primes: Sequence[int], kinds: Sequence[ModelKind],
                             path: str = 'direct', cache=None) -> List[Tuple[int, ModelKind, Fraction]]:
    """(p, kind, value) for every requested prime and model kind."""
    runner = {'direct': lambda s: direct_average(s, cache=cache),
              'volume': lambda s: volume_average(s, cache=cache)}.get(path)
    if runner is None:
        raise ValueError(f"unknown path '{path}', expected 'direct' or 'volume'")
    out = []
    for p in primes:
        for kind in kinds:
            run_spec = spec.with_model(spec.model.with_prime(p).with_kind(kind))
            out.append((p, kind, runner(run_spec).value))
    return out
