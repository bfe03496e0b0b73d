"""
Truncated arithmetic, three-valued evaluation and adaptive volumes
"""

from fractions import Fraction

import pytest

from models.padic_model import (
    Ambient, EvaluationError, ModelKind, ModelSpec, ResidueRing, TriBool, TruncatedElement, classify_points,
    count_and_volume, enumerate_points, eval_formula, eval_term, find_point, iter_cells, point_raws,
)
from models.pas_language import parse_formula, parse_term
from test_samples.expected_results import VOLUMES
from test_samples.sample_inputs import SAMPLE_FORMULAS


@pytest.mark.parametrize('kind', list(ModelKind))
@pytest.mark.parametrize('p', [3, 5, 7])
def test_residue_ring_arithmetic(p, kind):
    ring = ResidueRing(p, kind, 3)
    for a in range(0, p ** 3, 7):
        for b in range(1, p ** 3, 11):
            product = ring.mul(a, b)
            if kind is ModelKind.MIXED:
                assert product == a * b % p ** 3
            assert ring.add(a, ring.neg(a)) == 0
            assert 0 <= product < p ** 3


def test_equal_characteristic_has_no_carries():
    ring = ResidueRing(5, ModelKind.EQUAL, 2)
    # (4 + 0 t) + (1 + 0 t) = 0 in F_5[t], no carry into t
    assert ring.add(4, 1) == 0
    assert ResidueRing(5, ModelKind.MIXED, 2).add(4, 1) == 5


def test_units_are_invertible():
    ring = ResidueRing(7, ModelKind.MIXED, 2)
    for u in (1, 3, 8, 48):
        assert ring.mul(u, ring.inverse(u)) == 1


def test_truncated_element_from_raw_knows_its_precision():
    x = TruncatedElement.from_raw(5, ModelKind.MIXED, 10, 3)
    assert x.valuation == 1
    assert x.ord_range() == (1, 1)
    assert x.ac() == 2
    zero = TruncatedElement.from_raw(5, ModelKind.MIXED, 0, 3)
    assert zero.exhausted
    assert zero.ord_range()[0] == 3


def test_model_spec_rejects_bad_parameters():
    with pytest.raises(ValueError):
        ModelSpec(2)
    with pytest.raises(ValueError):
        ModelSpec(9)
    with pytest.raises(ValueError):
        ModelSpec(5, 0)
    with pytest.raises(ValueError):
        ModelSpec(5, 4, max_depth=3)


def test_exact_values_decide_atoms():
    m = ModelSpec(5, 2)
    assert eval_formula(m, parse_formula("ord(x) >= 1"), {'x': 5}) is TriBool.TRUE
    assert eval_formula(m, parse_formula("ord(x) >= 1"), {'x': 3}) is TriBool.FALSE
    assert eval_formula(m, parse_formula("ac(x) = 3"), {'x': 75}) is TriBool.TRUE
    assert eval_formula(m, parse_formula("x = 0"), {'x': 0}) is TriBool.TRUE


def test_truncated_values_may_stay_unknown():
    m = ModelSpec(5, 2)
    x = TruncatedElement.from_raw(5, ModelKind.MIXED, 0, 2)
    assert eval_formula(m, parse_formula("ord(x) >= 2"), {'x': x}) is TriBool.TRUE
    assert eval_formula(m, parse_formula("x = 0"), {'x': x}) is TriBool.UNKNOWN
    assert eval_formula(m, parse_formula("ord(x) >= 3"), {'x': x}) is TriBool.UNKNOWN
    assert eval_formula(m, parse_formula("ord(x) >= 3 \\/ ord(x) <= 2"), {'x': x}) is TriBool.UNKNOWN


def test_kleene_connectives():
    assert (TriBool.UNKNOWN & TriBool.FALSE) is TriBool.FALSE
    assert (TriBool.UNKNOWN | TriBool.TRUE) is TriBool.TRUE
    assert (TriBool.UNKNOWN & TriBool.TRUE) is TriBool.UNKNOWN
    assert ~TriBool.UNKNOWN is TriBool.UNKNOWN


def test_missing_and_out_of_range_assignments():
    m = ModelSpec(5, 1)
    with pytest.raises(EvaluationError):
        eval_formula(m, parse_formula("ord(x) >= 1 /\\ ord(y) >= 1"), {'x': 5})
    with pytest.raises(EvaluationError):
        eval_formula(m, parse_formula("ord(x) >= n:z"), {'x': 5, 'n': 4})


def test_value_terms_evaluate_to_ranges():
    m = ModelSpec(7, 2)
    assert eval_term(m, parse_term("ord(x) + ord(x)"), {'x': 49}) == (4, 4)
    assert eval_term(m, parse_term("ac(x*x)"), {'x': 3}) == 2


@pytest.mark.parametrize('kind', list(ModelKind))
@pytest.mark.parametrize('p', [5, 7])
@pytest.mark.parametrize('case', SAMPLE_FORMULAS, ids=lambda c: c['text'])
def test_sample_volumes(case, p, kind):
    result = count_and_volume(ModelSpec(p, 1, kind), parse_formula(case['text']), case['dim'])
    assert result.value == VOLUMES[case['volume']](p)
    assert result.stable
    assert result.unknown_fraction == 0


@pytest.mark.parametrize('j', [0, 1, 2, 3])
def test_volume_of_the_powers_of_the_maximal_ideal(j):
    for p in (3, 5, 7):
        assert count_and_volume(ModelSpec(p, 2), parse_formula(f"ord(x) >= {j}"), 1).value == Fraction(1, p ** j)


def test_volume_is_independent_of_the_starting_depth():
    f = parse_formula("exists a:r. ord(x) = 0 /\\ ac(x) = a*a")
    values = {count_and_volume(ModelSpec(5, k), f, 1).value for k in (1, 2, 3)}
    assert values == {Fraction(2, 5)}


def test_measure_zero_sets_report_unknown_mass():
    result = count_and_volume(ModelSpec(5, 1, max_depth=4), parse_formula("x*x = 0"), 1)
    assert result.value == 0
    assert not result.stable
    assert 0 < result.unknown_fraction <= Fraction(1, 5 ** 4)


def test_declared_dimension_must_match_the_ambient():
    with pytest.raises(ValueError):
        count_and_volume(ModelSpec(5), parse_formula("ord(x) >= 1"), 2)


def test_volumes_need_closed_residue_parts():
    with pytest.raises(ValueError):
        count_and_volume(ModelSpec(5), parse_formula("ac(x) = h:r"), 1)


def test_affine_ambient_can_be_larger_than_the_free_variables():
    result = count_and_volume(ModelSpec(5), parse_formula("ord(x) >= 1"), 2, Ambient.affine(['x', 'y']))
    assert result.value == Fraction(1, 5)


def test_point_enumeration_matches_the_volume():
    m = ModelSpec(5, 2)
    f = parse_formula("ord(x - 1) >= 1")
    points = [point_raws(m, point, ['x'])[0] for point in enumerate_points(m, f)]
    assert points == [1 + 5 * k for k in range(5)]
    counts = classify_points(m, f)
    assert counts[TriBool.TRUE] == 5
    assert counts[TriBool.FALSE] == 20
    assert counts[TriBool.UNKNOWN] == 0


def test_cells_cover_the_true_set():
    scan = iter_cells(ModelSpec(7), parse_formula("ord(x) = 1"), min_depth=1)
    assert scan.unknown_measure == 0
    assert scan.measure == Fraction(6, 49)
    assert all(depth >= 1 for cell in scan.cells for depth in cell.depths)


def test_find_point_stops_at_the_first_cell():
    scan = find_point(ModelSpec(5), parse_formula("ord(x) = 0 /\\ ac(x) = 3"))
    assert len(scan.cells) == 1
    assert find_point(ModelSpec(5), parse_formula("ord(x) >= 1 /\\ ord(x) <= 0")).cells == []
