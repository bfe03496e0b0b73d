"""
Group descriptors, finite groups of points, Hensel lifts, lambda-classes and regularity
"""

from fractions import Fraction

import numpy as np
import pytest

from models.classical_groups import (
    GroupBlock, GroupDescriptor, InvalidMultiIndexError, adjoint_rep, borel_order, cayley, conj_exponents,
    enumerate_finite_group, group_volume, index_K_over_I, inverse_cayley, is_equivalent, iwahori_volume,
    lambda_class_representatives, lambda_length, order_formula, valid_multi_indices, validate_multi_index,
)
from models.formula_builders import build_group_formulas, regular_unipotent
from models.padic_model import Ambient, ModelKind, ModelSpec, TriBool, count_and_volume, eval_formula
from test_samples.expected_results import EXPECTED_RESULTS
from test_samples.sample_inputs import SP2_LAMBDAS, SP2_MATRICES
from utils.finite_field import det_p, matmul_mod

SP2 = EXPECTED_RESULTS['sp2']


def _assignment(prefix, M):
    return {f"{prefix}{i + 1}_{j + 1}": int(M[i][j]) for i in range(len(M)) for j in range(len(M))}


def test_descriptor_shapes():
    sp4 = GroupDescriptor.symplectic(2)
    so5 = GroupDescriptor.orthogonal(2)
    assert (sp4.r, sp4.dim, sp4.l, sp4.name) == (4, 10, 2, 'Sp(4)')
    assert (so5.r, so5.dim, so5.l, so5.name) == (5, 10, 2, 'SO(5)')
    assert GroupDescriptor.from_flag('SP', 1) == GroupDescriptor.symplectic(1)
    with pytest.raises(ValueError):
        GroupDescriptor.from_flag('gl', 2)


@pytest.mark.parametrize('g', [GroupDescriptor.symplectic(1), GroupDescriptor.orthogonal(1),
                               GroupDescriptor.symplectic(2)], ids=lambda g: g.name)
def test_form_is_preserved_by_J(g):
    J = g.J
    assert np.array_equal(J.T @ J, np.eye(g.r, dtype=np.int64))
    assert np.array_equal(J.T, J if g.kind.value == 'so' else -J)


@pytest.mark.parametrize('q', [3, 5, 7])
def test_finite_group_orders(sp2, so3, q):
    assert len(enumerate_finite_group(sp2, q)) == SP2['order'](q) == order_formula(sp2, q)
    assert len(enumerate_finite_group(so3, q)) == order_formula(so3, q)


def test_so3_points_have_determinant_one(so3):
    group = enumerate_finite_group(so3, 5)
    assert all(det_p(M, 5) == 1 for M in group.elements)


def test_inverse_formula_inverts(sp2):
    group = enumerate_finite_group(sp2, 5)
    inv = sp2.inverse_formula(group.elements, 5)
    products = np.einsum('nij,njk->nik', group.elements, inv) % 5
    assert np.all(products == np.eye(2, dtype=np.int64))


@pytest.mark.parametrize('p', [3, 5, 7])
def test_volumes_of_the_standard_subgroups(sp2, p):
    assert iwahori_volume(sp2, p) == SP2['iwahori_volume'](p)
    assert group_volume(sp2, p) == SP2['group_volume'](p)


@pytest.mark.parametrize('kind', list(ModelKind))
def test_hensel_lifts_stay_on_the_group(sp2, kind):
    m = ModelSpec(5, 1, kind)
    block = GroupBlock(sp2, 'g')
    root = block.roots(m)[7]
    lifts = block.lifts(m, root, 1)
    assert len(lifts) == 5 ** sp2.dim
    assert len(set(lifts)) == len(lifts)
    second = block.lifts(m, lifts[3], 2)
    assert len(second) == 5 ** sp2.dim
    assert all(x % 25 == y for x, y in zip(second[0], lifts[3]))


def test_lift_rejects_points_off_the_group(sp2):
    with pytest.raises(ValueError):
        GroupBlock(sp2, 'g').lifts(ModelSpec(5), (1, 1, 1, 1), 1)


@pytest.mark.parametrize('depth', [1, 2])
def test_membership_volume_is_the_group_volume(sp2, depth):
    membership = build_group_formulas(sp2, 'g').membership
    result = count_and_volume(ModelSpec(5, depth), membership, sp2.dim, Ambient.of(GroupBlock(sp2, 'g')))
    assert result.value == group_volume(sp2, 5)


def test_iwahori_formula_volume(sp2):
    iwahori = build_group_formulas(sp2, 'g').iwahori
    result = count_and_volume(ModelSpec(7), iwahori, sp2.dim, Ambient.of(GroupBlock(sp2, 'g')))
    assert result.value == iwahori_volume(sp2, 7)


def test_multi_index_validation(sp2, so3):
    assert validate_multi_index(sp2, [1, -1]) == (1, -1)
    assert validate_multi_index(so3, (2, 0, -2)) == (2, 0, -2)
    with pytest.raises(InvalidMultiIndexError):
        validate_multi_index(sp2, (1, 1))
    with pytest.raises(InvalidMultiIndexError):
        validate_multi_index(so3, (1, -1))
    assert valid_multi_indices(sp2, 2) == SP2_LAMBDAS
    assert len(valid_multi_indices(GroupDescriptor.symplectic(2), 1)) == 9


def test_conjugation_exponents(sp2):
    n = conj_exponents(sp2, (1, -1))
    assert n.tolist() == [[0, -2], [2, 0]]


@pytest.mark.parametrize('lam', SP2_LAMBDAS)
def test_lambda_lengths(sp2, lam):
    expected = EXPECTED_RESULTS['sp2_lambda_lengths'][lam]
    assert lambda_length(sp2, lam, 5) == expected
    assert lambda_length(sp2, lam, 7, ModelKind.EQUAL) == expected


def test_lambda_class_representatives_are_pairwise_inequivalent(sp2):
    m = ModelSpec(3)
    classes = lambda_class_representatives(sp2, (1, -1), m)
    assert len(classes) == 3 ** 2
    assert classes.depth == 3
    reps = classes.representatives
    for i in range(len(reps)):
        for j in range(i + 1, len(reps)):
            assert not is_equivalent(sp2, (1, -1), reps[i], reps[j], m)
    for idx, alternate in classes.alternates.items():
        assert is_equivalent(sp2, (1, -1), reps[idx], alternate, m)


def test_trivial_lambda_has_one_class(sp2):
    classes = lambda_class_representatives(sp2, (0, 0), ModelSpec(5))
    assert len(classes) == 1
    assert classes.l_lambda == 0


@pytest.mark.parametrize('name', ['identity', 'regular_unipotent', 'split_regular'])
def test_regularity(sp2, name):
    regular = build_group_formulas(sp2, 'g').regular
    verdict = eval_formula(ModelSpec(7), regular, _assignment('g', SP2_MATRICES[name]))
    assert verdict is TriBool.of(EXPECTED_RESULTS['sp2_regular'][name])


def test_regular_unipotent_of_sp2(sp2):
    assert regular_unipotent(sp2).tolist() == SP2_MATRICES['regular_unipotent']


@pytest.mark.parametrize('g', [GroupDescriptor.symplectic(1), GroupDescriptor.orthogonal(1)], ids=lambda g: g.name)
def test_regular_unipotent_lies_in_the_group(g):
    u = regular_unipotent(g)
    assert np.array_equal((u.T @ g.J @ u) % 7, g.J % 7)


def test_cayley_round_trip(sp2):
    for name in ('regular_unipotent', 'lower_unipotent'):
        u = np.array(SP2_MATRICES[name], dtype=np.int64)
        assert np.array_equal(inverse_cayley(sp2, cayley(sp2, u, 7), 7), u)


def test_group_volume_is_a_fraction_of_the_ambient(sp2):
    assert group_volume(sp2, 3) == Fraction(8, 9)


def _upper_triangular_count(group):
    lower = np.tril(np.ones((group.descriptor.r, group.descriptor.r), dtype=bool), -1)
    return int(np.sum(~np.any(group.elements[:, lower], axis=1)))


@pytest.mark.parametrize('q', [3, 5, 7])
@pytest.mark.parametrize('g', [GroupDescriptor.symplectic(1), GroupDescriptor.orthogonal(1)], ids=lambda g: g.name)
def test_borel_is_the_upper_triangular_subgroup(g, q):
    group = enumerate_finite_group(g, q)
    assert _upper_triangular_count(group) == borel_order(g, q)
    assert index_K_over_I(g, q) * borel_order(g, q) == len(group)


@pytest.mark.slow
def test_borel_of_sp4():
    g = GroupDescriptor.symplectic(2)
    group = enumerate_finite_group(g, 3)
    assert _upper_triangular_count(group) == borel_order(g, 3)
    assert index_K_over_I(g, 3) == len(group) // borel_order(g, 3) == 160


@pytest.mark.parametrize('g, q', [(GroupDescriptor.symplectic(1), 7), (GroupDescriptor.orthogonal(1), 5)],
                         ids=['Sp(2)', 'SO(3)'])
def test_adjoint_representation_is_a_homomorphism(g, q):
    ad = adjoint_rep(g)
    assert np.array_equal(ad.numeric(np.eye(g.r, dtype=np.int64), q), np.eye(ad.dim, dtype=np.int64))
    group = enumerate_finite_group(g, q)
    rng = np.random.default_rng(11)
    for _ in range(20):
        a, b = group.elements[rng.integers(len(group), size=2)]
        product = ad.numeric(matmul_mod(a, b, q), q)
        assert np.array_equal(product, matmul_mod(ad.numeric(a, q), ad.numeric(b, q), q))


def test_numeric_adjoint_matches_the_symbolic_one(sp2):
    ad = adjoint_rep(sp2)
    gamma = np.array(SP2_MATRICES['split_regular'], dtype=np.int64)
    symbols = {f"g{i + 1}_{j + 1}": int(gamma[i, j]) for i in range(2) for j in range(2)}
    A = ad.symbolic('g')
    substituted = np.array([[int(A[i, j].subs(symbols)) % 7 for j in range(ad.dim)] for i in range(ad.dim)])
    assert np.array_equal(substituted, ad.numeric(gamma, 7))
