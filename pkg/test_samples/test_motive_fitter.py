"""
Fitting rational functions in L to exact values and checking them at fresh primes
"""

from fractions import Fraction

import pytest
import sympy

from models.motive_fitter import (
    EXCLUDED, L, MATCH, MISMATCH, AnsatzBounds, MotiveExpression, NoAnsatzFitsError, PoleError, ValueTable,
    ValueTableError, cross_validate, fit, in_localized_ring, solve_exact, trace_frobenius,
)
from models.padic_model import ModelKind
from test_samples.expected_results import EXPECTED_RESULTS
from test_samples.sample_inputs import MOTIVE_SAMPLES

ACCEPTANCE = EXPECTED_RESULTS['acceptance']


@pytest.mark.parametrize('name', sorted(MOTIVE_SAMPLES))
def test_sample_tables_fit(name):
    table = ValueTable.from_rows(MOTIVE_SAMPLES[name])
    terms, factors = EXPECTED_RESULTS['motive_fits'][name]
    m = fit(table)
    assert m.terms() == terms
    assert m.factors == factors


def test_acceptance_values_fit_and_predict():
    value = ACCEPTANCE['value']
    table = ValueTable.from_rows([(p, value(p)) for p in ACCEPTANCE['fit_primes']])
    m = fit(table)
    assert m.terms() == ACCEPTANCE['motive']
    assert m.factors == ()
    for p in ACCEPTANCE['predict_primes']:
        assert trace_frobenius(m, p) == value(p)


def test_fit_needs_a_held_out_row():
    with pytest.raises(NoAnsatzFitsError):
        fit(ValueTable.from_rows([(5, '4/5')]))


def test_fit_reports_when_no_ansatz_matches():
    table = ValueTable.from_rows([(5, 1), (7, 2), (11, 3), (13, 5)])
    with pytest.raises(NoAnsatzFitsError):
        fit(table, AnsatzBounds(max_degree=1, max_negative=1, max_terms=1, max_factors=0))


def test_trace_of_frobenius():
    m = MotiveExpression.from_terms({0: 1}, (1,))
    assert trace_frobenius(m, 5) == Fraction(1, 4)
    with pytest.raises(PoleError):
        trace_frobenius(m, 1)


def test_reduction_cancels_cyclotomic_factors():
    m = MotiveExpression.from_terms({1: 1, 0: -1}, (1,)).reduced()
    assert m.terms() == {0: Fraction(1)}
    assert m.factors == ()
    m = MotiveExpression.from_terms({2: 1, 0: -1}, (1, 2)).reduced()
    assert m.factors == (1,)


def test_localized_ring_membership():
    assert MotiveExpression.from_terms({-3: 1}, (1, 2)).in_localized_ring()
    assert in_localized_ring(1 / (L ** 2 + L + 1))
    assert not in_localized_ring(1 / (L - 2))
    assert not in_localized_ring(sympy.sqrt(2) * L)


def test_value_table_rejects_conflicts():
    table = ValueTable.from_rows([(5, 'mixed', '1/4'), (5, ModelKind.EQUAL, '1/4')])
    assert len(table) == 1
    with pytest.raises(ValueTableError):
        table.add(5, ModelKind.EQUAL, Fraction(1, 5))
    with pytest.raises(ValueTableError):
        table.add(5, ModelKind.MIXED, 0)
    frame = table.to_frame()
    assert list(frame.columns) == ['prime', 'kind', 'value']
    assert list(frame['kind']) == ['equal', 'mixed']


def test_solve_exact_detects_singular_systems():
    assert solve_exact([[Fraction(1), Fraction(2)], [Fraction(3), Fraction(4)]], [Fraction(5), Fraction(6)]) == \
        [Fraction(-4), Fraction(9, 2)]
    assert solve_exact([[Fraction(1), Fraction(2)], [Fraction(2), Fraction(4)]], [Fraction(1), Fraction(2)]) is None
    assert solve_exact([[Fraction(1, 2), Fraction(0)], [Fraction(0), Fraction(3)]], [Fraction(1), Fraction(1)]) == \
        [Fraction(2), Fraction(1, 3)]
    assert all(isinstance(x, Fraction) for x in solve_exact([[Fraction(7)]], [Fraction(1)]))


def test_cross_validation_statuses():
    m = MotiveExpression.from_terms(ACCEPTANCE['motive'])

    def observe(p, kind):
        if p == 11:
            return trace_frobenius(m, p) + 1
        if p == 5:
            return Fraction(0)
        return trace_frobenius(m, p)

    report = cross_validate(m, observe, [5, 7, 11])
    statuses = {(row.prime, row.kind): row.status for row in report.rows}
    assert statuses[(5, ModelKind.MIXED)] == EXCLUDED
    assert statuses[(7, ModelKind.EQUAL)] == MATCH
    assert statuses[(11, ModelKind.MIXED)] == MISMATCH
    assert not report.ok
    assert report.kinds_agree
    assert report.to_frame().shape == (6, 5)


def test_cross_validation_against_the_engine(sp2, acceptance_gamma):
    from models.character_engine import AverageSpec
    from models.padic_model import ModelSpec

    m = MotiveExpression.from_terms(ACCEPTANCE['motive'])
    report = cross_validate(m, AverageSpec(sp2, acceptance_gamma, ModelSpec(5)), [5])
    assert report.ok
    assert all(row.status == MATCH for row in report.rows)
