"""
Character tables of Sp(2, F_q), cuspidal values on unipotent classes and their polynomial fits
"""

from fractions import Fraction

import pytest
from sympy import Poly, Symbol, cyclotomic_poly, ilcm

from models.classical_groups import GroupDescriptor, enumerate_finite_group
from models.green_characters import (
    CharacterPolynomial, CuspidalSelectionError, CyclotomicValue, GreenFitError, GreenPolynomials, TorusDatum,
    UnknownLabelError, character_table, default_green_polynomials, dl_cuspidal_values, fit_green_polynomial, rho,
)
from models.unipotent_classes import UnipotentClassLabel
from test_samples.expected_results import EXPECTED_RESULTS

CUSPIDAL = EXPECTED_RESULTS['cuspidal_values']


@pytest.mark.parametrize('q', [5, 7])
def test_character_table_of_sl2(sp2, q):
    table = character_table(enumerate_finite_group(sp2, q))
    assert len(table) == len(table.classes) == q + 4
    assert sum(d * d for d in table.degrees) == q * (q * q - 1)
    assert sum(table.class_sizes) == q * (q * q - 1)
    assert table.degrees.count(q - 1) == (q - 1) // 2


def test_character_table_of_sl2_over_f3(sp2):
    table = character_table(enumerate_finite_group(sp2, 3))
    assert len(table) == len(table.classes) == 7
    assert sum(d * d for d in table.degrees) == 24
    assert sorted(table.degrees) == [1, 1, 1, 2, 2, 2, 3]


X = Symbol('X')


def _cyclotomic_poly_of(value, N, conjugate=False):
    step = N // value.n
    sign = -1 if conjugate else 1
    return Poly(sum(c * X ** ((sign * j * step) % N) for j, c in enumerate(value.coefficients)), X)


def _orthogonality_sums(table):
    N = int(ilcm(*[v.n for row in table.values for v in row]))
    modulus = Poly(cyclotomic_poly(N, X), X)
    rows = [[_cyclotomic_poly_of(v, N) for v in row] for row in table.values]
    bars = [[_cyclotomic_poly_of(v, N, conjugate=True) for v in row] for row in table.values]
    k, sizes = len(table), table.class_sizes

    def reduce(poly):
        return poly.rem(modulus).as_expr()

    row_sums = [[reduce(sum((rows[a][t] * bars[b][t] * sizes[t] for t in range(k)), Poly(0, X)))
                 for b in range(k)] for a in range(k)]
    column_sums = [[reduce(sum((rows[a][s] * bars[a][t] for a in range(k)), Poly(0, X)))
                    for t in range(k)] for s in range(k)]
    return row_sums, column_sums


@pytest.mark.parametrize('q', [3, 5])
def test_character_table_orthogonality(sp2, q):
    table = character_table(enumerate_finite_group(sp2, q))
    order, sizes, k = len(table.group), table.class_sizes, len(table)
    row_sums, column_sums = _orthogonality_sums(table)
    for a in range(k):
        for b in range(k):
            assert row_sums[a][b] == (order if a == b else 0)
    for s in range(k):
        for t in range(k):
            assert column_sums[s][t] == (order // sizes[s] if s == t else 0)


def test_cyclotomic_values_compare_across_conductors():
    # zeta_4^2 = -1 = zeta_2
    assert CyclotomicValue(4, (0, 0, 1)) == CyclotomicValue(2, (0, 1))
    assert CyclotomicValue(3, (1, 1, 1)).rational() == 0
    assert CyclotomicValue(5, (0, 1)).rational() is None


@pytest.mark.parametrize('q', [5, 7, 11])
def test_cuspidal_values(q):
    values = dl_cuspidal_values(q)
    assert {label.key(): value for label, value in values.items()} == {key: f(q) for key, f in CUSPIDAL.items()}


def test_cuspidal_values_need_a_tabulated_group():
    with pytest.raises(ValueError):
        dl_cuspidal_values(5, GroupDescriptor.symplectic(2), TorusDatum((2,)))
    with pytest.raises(ValueError):
        dl_cuspidal_values(5, GroupDescriptor.symplectic(1), TorusDatum((1, 1)))


def test_torus_datum_parsing():
    assert TorusDatum.parse('(1)') == TorusDatum((1,))
    assert TorusDatum.parse('2,1').rank == 3
    with pytest.raises(ValueError):
        TorusDatum((1, 2))


def test_fit_keeps_later_samples_as_checks():
    poly = fit_green_polynomial([(5, Fraction(4)), (7, Fraction(6)), (11, Fraction(10))], 1)
    assert poly.coefficients == (Fraction(-1), Fraction(1))
    assert poly(13) == 12
    with pytest.raises(GreenFitError):
        fit_green_polynomial([(5, Fraction(4)), (7, Fraction(6)), (11, Fraction(11))], 1)
    with pytest.raises(GreenFitError):
        fit_green_polynomial([(5, Fraction(4)), (7, Fraction(6))], 1)


def test_green_polynomials_predict_a_fresh_prime():
    polynomials = GreenPolynomials.fit([5, 7, 11])
    fresh = dl_cuspidal_values(13)
    for label, value in fresh.items():
        assert polynomials.rho(label, 13) == value
    assert {row['label'] for row in polynomials.rows()} == set(CUSPIDAL)


def test_constant_classes_fit_degree_zero():
    polynomials = default_green_polynomials()
    assert polynomials.polynomials[UnipotentClassLabel.parse('(2)[2:sq]')].degree == 0
    assert polynomials.polynomials[UnipotentClassLabel.parse('(1,1)')].degree == 1
    assert rho(UnipotentClassLabel.parse('(1,1)'), 101) == 100


def test_unknown_label():
    with pytest.raises(UnknownLabelError):
        default_green_polynomials().rho(UnipotentClassLabel.parse('(2,2)[2:sq]'), 7)


def test_character_polynomial_printing():
    assert str(CharacterPolynomial((Fraction(-1), Fraction(1)), 1)) == 'q - 1'


def test_selection_error_is_a_value_error():
    assert issubclass(CuspidalSelectionError, ValueError)


def test_any_two_of_three_primes_give_the_same_fit():
    samples = {q: dl_cuspidal_values(q) for q in (5, 7, 11, 13)}
    for label in samples[13]:
        fits = [fit_green_polynomial([(a, samples[a][label]), (b, samples[b][label]), (13, samples[13][label])], 1)
                for a, b in ((5, 7), (5, 11), (7, 11))]
        assert fits[0] == fits[1] == fits[2]
        assert fits[0](5) == samples[5][label]
