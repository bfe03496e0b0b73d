"""
Group, class and W formulas and the Gamma library
"""

import numpy as np
import pytest

from models.classical_groups import GroupBlock, enumerate_finite_group
from models.formula_builders import (
    build_W_formula, build_class_formula, build_group_formulas, gamma_library, jordan_matrix, residue_vars,
)
from models.padic_model import Ambient, ModelSpec, TriBool, count_and_volume, eval_formula
from models.pas_language import Sort, check_sorts, free_vars
from models.unipotent_classes import (
    UnipotentClassLabel, classify_unipotent, enumerate_class_labels, unipotent_mask,
)
from test_samples.expected_results import EXPECTED_RESULTS


def _residues(names, M):
    return dict(zip((v.name for v in names), (int(x) for x in np.asarray(M).reshape(-1))))


def _check_class_formulas(g, q):
    R = residue_vars([f"r{i + 1}_{j + 1}" for i in range(g.r) for j in range(g.r)])
    group = enumerate_finite_group(g, q)
    unipotents = group.elements[unipotent_mask(group)]
    for label in enumerate_class_labels(g, q):
        f = build_class_formula(g, label, R)
        for u in unipotents:
            verdict = eval_formula(ModelSpec(q), f, _residues(R, u))
            assert verdict is TriBool.of(classify_unipotent(g, u, q) == label)


@pytest.mark.parametrize('q', [3, 5, 7])
def test_class_formulas_pick_out_their_class(sp2, q):
    _check_class_formulas(sp2, q)


@pytest.mark.slow
def test_so3_class_formulas_pick_out_their_class(so3):
    _check_class_formulas(so3, 3)


def test_class_formula_is_false_off_the_unipotent_variety(sp2):
    R = residue_vars(['r1_1', 'r1_2', 'r2_1', 'r2_2'])
    f = build_class_formula(sp2, UnipotentClassLabel.parse('(2)[2:sq]'), R)
    assert eval_formula(ModelSpec(7), f, _residues(R, [[2, 0], [0, 4]])) is TriBool.FALSE


def test_class_formula_needs_matching_eps(sp2):
    R = residue_vars(['r1_1', 'r1_2', 'r2_1', 'r2_2'])
    with pytest.raises(ValueError):
        build_class_formula(sp2, UnipotentClassLabel.parse('(2)'), R)
    with pytest.raises(ValueError):
        build_class_formula(sp2, UnipotentClassLabel.parse('(2)[2:sq]'), R[:3])


@pytest.mark.slow
def test_verbatim_class_formula_agrees_with_the_rank_form(sp2):
    R = residue_vars(['r1_1', 'r1_2', 'r2_1', 'r2_2'])
    q = 3
    group = enumerate_finite_group(sp2, q)
    for label in enumerate_class_labels(sp2, q):
        fast = build_class_formula(sp2, label, R)
        verbatim = build_class_formula(sp2, label, R, verbatim=True)
        for u in group.elements[unipotent_mask(group)]:
            asg = _residues(R, u)
            assert eval_formula(ModelSpec(q), verbatim, asg) is eval_formula(ModelSpec(q), fast, asg)


def test_jordan_matrix():
    assert jordan_matrix((2, 1)).tolist() == [[0, 1, 0], [0, 0, 0], [0, 0, 0]]


def test_group_formulas_are_well_sorted(sp2):
    formulas = build_group_formulas(sp2, 'g').as_dict()
    assert set(formulas) == {'membership', 'iwahori', 'regular', 'top_unipotent', 'rtu'}
    for f in formulas.values():
        assert check_sorts(f).ok
        assert all(sort is Sort.VALUED for _, sort in free_vars(f))


def test_top_unipotent_detects_the_residue(sp2):
    top = build_group_formulas(sp2, 'g').top_unipotent
    m = ModelSpec(7, 2)
    assert eval_formula(m, top, {'g1_1': 8, 'g1_2': 1, 'g2_1': 7, 'g2_2': 1}) is TriBool.TRUE
    assert eval_formula(m, top, {'g1_1': 2, 'g1_2': 0, 'g2_1': 0, 'g2_2': 4}) is TriBool.FALSE


def test_gamma_library_volume(sp2, acceptance_gamma):
    expected = EXPECTED_RESULTS['acceptance']['gamma_volume']
    for p in (5, 7):
        result = count_and_volume(ModelSpec(p), acceptance_gamma, sp2.dim, Ambient.of(GroupBlock(sp2, 'g')))
        assert result.value == expected(p)
        assert result.stable


def test_gamma_library_rejects_bad_entries(sp2):
    with pytest.raises(ValueError):
        gamma_library(sp2, 'G3')
    with pytest.raises(ValueError):
        gamma_library(sp2, 'G2', -1)


def test_W_formula_lives_on_pairs(sp2, acceptance_gamma):
    label = UnipotentClassLabel.parse('(2)[2:sq]')
    f = build_W_formula(sp2, (0, 0), label, acceptance_gamma)
    names = {name for name, _ in free_vars(f)}
    assert names == {'g1_1', 'g1_2', 'g2_1', 'g2_2', 'y1_1', 'y1_2', 'y2_1', 'y2_2'}
    assert check_sorts(f).ok
    union = build_W_formula(sp2, (0, 0), None, acceptance_gamma)
    assert len(union.canonical) < len(f.canonical)
