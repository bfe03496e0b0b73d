"""
The truncated evaluator against exact lifts
"""

from fractions import Fraction

import pytest

from evaluation.semantics_evaluator import (
    ORACLE_LIBRARY, ExactField, ExactEvaluator, OracleError, compare_with_oracle, lift_verdict, oracle_library,
    run_oracle_suite,
)
from models.padic_model import ModelKind, ModelSpec, TriBool
from models.pas_language import free_vars, parse_formula, parse_term
from test_samples.sample_inputs import ORACLE_FORMULAS


@pytest.mark.parametrize('kind', list(ModelKind))
@pytest.mark.parametrize('depth', [1, 2])
@pytest.mark.parametrize('p', [3, 5])
@pytest.mark.parametrize('text', ORACLE_FORMULAS)
def test_evaluator_agrees_with_the_oracle(text, p, depth, kind):
    report = compare_with_oracle(ModelSpec(p, depth, kind), parse_formula(text))
    assert report.points > 0
    assert report.mismatches == []
    assert report.agreement == 1.0


def test_sampling_is_seeded():
    f = parse_formula("ord(x*y) >= 2")
    m = ModelSpec(7, 2)
    first = compare_with_oracle(m, f, max_points=50, seed=4)
    second = compare_with_oracle(m, f, max_points=50, seed=4)
    assert first.to_dict() == second.to_dict()
    assert first.points <= 50


def test_exact_field_in_both_kinds():
    mixed = ExactField(5, ModelKind.MIXED)
    assert mixed.ord(Fraction(50)) == 2
    assert mixed.ac(Fraction(50)) == 2
    equal = ExactField(5, ModelKind.EQUAL)
    # 4 + 1 = 0 in F_5[[t]]
    assert equal.add(equal.from_raw(4), equal.from_raw(1)) == ()
    assert equal.ord(equal.from_raw(10)) == 1
    with pytest.raises(OracleError):
        mixed.constant(Fraction(1, 5))


def test_exact_evaluator_terms():
    evaluator = ExactEvaluator(ModelSpec(7, 2))
    env = {'x': Fraction(98)}
    assert evaluator.term(parse_term("ord(x)"), env) == 2
    assert evaluator.term(parse_term("ac(x)"), env) == 2


def test_lift_verdicts():
    m = ModelSpec(5, 1)
    assert lift_verdict(m, parse_formula("ord(x) >= 1"), {'x': 0}) is TriBool.TRUE
    assert lift_verdict(m, parse_formula("ord(x) >= 2"), {'x': 0}) is TriBool.UNKNOWN
    assert lift_verdict(m, parse_formula("ord(x) = 0"), {'x': 3}) is TriBool.TRUE


def test_oracle_suite_frame():
    frame = run_oracle_suite([parse_formula(t) for t in ORACLE_FORMULAS[:3]], primes=(3,), depths=(1, 2))
    assert len(frame) == 6
    assert set(frame['agreement']) == {1.0}
    assert {'formula', 'prime', 'depth', 'kind', 'resolved'} <= set(frame.columns)


def test_library_spans_the_sample_formulas():
    assert len(ORACLE_LIBRARY) >= 20
    assert len(set(ORACLE_LIBRARY)) == len(ORACLE_LIBRARY)
    assert set(ORACLE_FORMULAS) <= set(ORACLE_LIBRARY)
    sorts = {sort.name for f in oracle_library() for _, sort in free_vars(f)}
    assert sorts == {'VALUED'}


@pytest.mark.slow
def test_full_oracle_grid():
    frame = run_oracle_suite(oracle_library(), primes=(3, 5, 7), depths=(1, 2, 3), kinds=tuple(ModelKind))
    assert len(frame) == len(ORACLE_LIBRARY) * 3 * 3 * 2
    assert (frame['points'] > 0).all()
    assert set(frame['agreement']) == {1.0}
    assert all(not m for m in frame['mismatches'])
