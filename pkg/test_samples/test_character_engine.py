"""
Character averages over Gamma: certification, lambda-support and the two paths
"""

from dataclasses import replace

import pytest

from models.character_engine import (
    CERTIFICATION_DEPTH, AverageSpec, Conjugator, SpecNotCertifiedError, SupportNotCertifiedError,
    certification_model, character_average_series, compare_paths, direct_average, gamma_cells, lambda_support,
    shells, validate_spec,
)
from models.formula_builders import gamma_library
from models.green_characters import TorusDatum
from models.padic_model import ModelKind, ModelSpec
from test_samples.expected_results import EXPECTED_RESULTS

ACCEPTANCE = EXPECTED_RESULTS['acceptance']


@pytest.fixture
def acceptance_spec(sp2, acceptance_gamma):
    return AverageSpec(sp2, acceptance_gamma, ModelSpec(5), name='G2')


def test_spec_validation(sp2, acceptance_gamma):
    with pytest.raises(ValueError):
        AverageSpec(sp2, acceptance_gamma, ModelSpec(5), lambda_bound=-1)
    with pytest.raises(ValueError):
        AverageSpec(sp2, acceptance_gamma, ModelSpec(5), w=TorusDatum((1, 1)))


def test_boundary_shells():
    assert shells(2) == [2, 1]
    assert shells(0) == [0]


def test_gamma_is_certified_inside_the_rtu_set(acceptance_spec):
    result = validate_spec(acceptance_spec)
    assert result.value == 0
    assert result.unknown_fraction == 0


def test_certification_runs_at_a_capped_depth(acceptance_spec):
    assert certification_model(acceptance_spec).max_depth == CERTIFICATION_DEPTH
    assert certification_model(replace(acceptance_spec, certify_depth=20)).max_depth == 8
    deep = acceptance_spec.with_model(ModelSpec(5, 4))
    assert certification_model(deep).max_depth == 4
    with pytest.raises(ValueError):
        replace(acceptance_spec, certify_depth=0)


def test_congruence_alone_is_not_certified(sp2):
    spec = AverageSpec(sp2, gamma_library(sp2, 'G1'), ModelSpec(5))
    with pytest.raises(SpecNotCertifiedError, match="certification depth 3"):
        validate_spec(spec)


@pytest.mark.slow
def test_congruence_alone_is_not_certified_at_full_depth(sp2):
    spec = AverageSpec(sp2, gamma_library(sp2, 'G1'), ModelSpec(5, max_depth=4), certify_depth=4)
    with pytest.raises(SpecNotCertifiedError, match="certification depth 4"):
        validate_spec(spec)


def test_nonempty_boundary_shell_is_rejected(sp2, acceptance_gamma):
    spec = AverageSpec(sp2, acceptance_gamma, ModelSpec(5), lambda_bound=0)
    with pytest.raises(SupportNotCertifiedError):
        lambda_support(spec)


def test_gamma_cells_carry_the_volume(acceptance_spec):
    cells = gamma_cells(acceptance_spec)
    assert sum(cells.measures) == ACCEPTANCE['gamma_volume'](5)
    assert all(d >= 1 for d in cells.depths)


def test_lambda_support(acceptance_spec):
    certificate = lambda_support(acceptance_spec)
    assert certificate.support == ACCEPTANCE['support']
    assert all(max(abs(x) for x in lam) in (1, 2) for lam in certificate.empty_shells)


def test_conjugator_enumerates_the_lambda_classes(sp2):
    c = Conjugator(sp2, (1, -1), ModelSpec(3))
    assert c.l_lambda == 2
    assert len(c) == 9


@pytest.mark.parametrize('kind', list(ModelKind))
def test_direct_average_at_five(acceptance_spec, kind):
    spec = acceptance_spec.with_model(ModelSpec(5, 1, kind))
    average = direct_average(spec, audit=True)
    assert average.value == ACCEPTANCE['value_at_5']
    assert average.lambda_support == ACCEPTANCE['support']
    contributing = [row for row in average.rows if row.contribution]
    assert contributing
    assert all(row.label.key().startswith('(2)') for row in contributing)
    assert sum(row.contribution for row in average.rows) == average.value


def test_breakdown_rows_serialise(acceptance_spec):
    payload = direct_average(acceptance_spec).to_dict()
    assert payload['value'] == str(ACCEPTANCE['value_at_5'])
    assert payload['lambda_support'] == [[0, 0]]
    assert {row['label'] for row in payload['rows']} == {'(1,1)', '(2)[2:sq]', '(2)[2:nsq]'}


@pytest.mark.slow
def test_direct_average_at_seven(acceptance_spec):
    average = direct_average(acceptance_spec.with_model(ModelSpec(7)))
    assert average.value == ACCEPTANCE['value_at_7']


@pytest.mark.slow
def test_the_two_paths_agree(acceptance_spec):
    comparison = compare_paths(acceptance_spec, audit=True)
    assert comparison.agree
    assert comparison.volume.value == ACCEPTANCE['value_at_5']


def test_series_over_kinds(acceptance_spec):
    series = character_average_series(acceptance_spec, [5], list(ModelKind))
    assert [value for _, _, value in series] == [ACCEPTANCE['value_at_5']] * 2
    with pytest.raises(ValueError):
        character_average_series(acceptance_spec, [5], [ModelKind.MIXED], path='both')
