"""
Unipotent class labels, classification and the brute-force class census
"""

import numpy as np
import pytest

from models.classical_groups import GroupDescriptor
from models.unipotent_classes import (
    NotUnipotentError, QuadFormClass, SquareClass, UnipotentClassLabel, brute_force_orbits, class_representatives,
    classify_unipotent, enumerate_class_labels, is_unipotent, jordan_partition,
)
from test_samples.expected_results import EXPECTED_RESULTS
from test_samples.sample_inputs import SP2_MATRICES


def test_label_text_round_trip():
    for text in ['(1,1)', '(2)[2:sq]', '(2)[2:nsq]', '(2,2)[2:nsq]', '(3)[1:sq,3:nsq]']:
        assert UnipotentClassLabel.parse(text).key() == text
    with pytest.raises(ValueError):
        UnipotentClassLabel.parse('[2:sq]')


def test_labels_are_ordered_by_partition_then_eps():
    labels = sorted(UnipotentClassLabel.parse(t) for t in ['(2)[2:sq]', '(1,1)', '(2)[2:nsq]'])
    assert [l.key() for l in labels] == ['(1,1)', '(2)[2:nsq]', '(2)[2:sq]']


def test_sp2_labels(sp2):
    keys = [l.key() for l in enumerate_class_labels(sp2, 7)]
    assert sorted(keys) == sorted(EXPECTED_RESULTS['sp2_labels_at_7'])


def test_regular_unipotent_label(sp2):
    u = np.array(SP2_MATRICES['regular_unipotent'], dtype=np.int64)
    assert classify_unipotent(sp2, u, 7).key() == EXPECTED_RESULTS['regular_unipotent_label_at_7']
    assert classify_unipotent(sp2, np.eye(2, dtype=np.int64), 7).key() == '(1,1)'


def test_upper_and_lower_unipotents_split_at_minus_one_nonsquare(sp2):
    upper = np.array(SP2_MATRICES['regular_unipotent'], dtype=np.int64)
    lower = np.array(SP2_MATRICES['lower_unipotent'], dtype=np.int64)
    # -1 is a nonsquare mod 7 and a square mod 5
    assert classify_unipotent(sp2, upper, 7) != classify_unipotent(sp2, lower, 7)
    assert classify_unipotent(sp2, upper, 5) == classify_unipotent(sp2, lower, 5)


def test_non_unipotent_input_is_rejected(sp2):
    M = np.array(SP2_MATRICES['not_unipotent'], dtype=np.int64)
    assert not is_unipotent(M, 7)
    with pytest.raises(NotUnipotentError):
        classify_unipotent(sp2, M, 7)


def test_jordan_partition_of_nilpotent_blocks():
    X = np.zeros((4, 4), dtype=np.int64)
    X[0, 1] = X[1, 2] = 1
    assert jordan_partition(X, 5) == (3, 1)
    assert jordan_partition(np.zeros((2, 2), dtype=np.int64), 5) == (1, 1)


def test_square_classes():
    assert SquareClass.of(2, 7) is SquareClass.SQUARE
    assert SquareClass.of(3, 7) is SquareClass.NONSQUARE
    with pytest.raises(ValueError):
        SquareClass.of(0, 7)


def test_form_class_is_invariant_under_basis_change():
    gram = np.array([[1, 0], [0, 2]])
    form = QuadFormClass.of_gram(gram, 5)
    assert form == QuadFormClass(2, SquareClass.NONSQUARE)
    P = np.array([[2, 1], [1, 1]])
    assert QuadFormClass.of_gram((P.T @ gram @ P) % 5, 5) == form


def test_form_class_direct_sums():
    # -1 is a square mod 5 but not mod 3
    assert QuadFormClass.hyperbolic(1, 5).discriminant_class is SquareClass.SQUARE
    assert QuadFormClass.hyperbolic(1, 3).discriminant_class is SquareClass.NONSQUARE
    nsq = QuadFormClass(1, SquareClass.NONSQUARE)
    assert nsq.direct_sum(nsq) == QuadFormClass(2, SquareClass.SQUARE)
    assert nsq.direct_sum(QuadFormClass.hyperbolic(2, 3)) == QuadFormClass(5, SquareClass.NONSQUARE)


def test_labels_expose_their_forms():
    label = UnipotentClassLabel.parse('(2)[2:nsq]')
    assert label.forms() == {2: QuadFormClass(1, SquareClass.NONSQUARE)}
    assert UnipotentClassLabel.parse('(1,1)').forms() == {}


@pytest.mark.parametrize('q', [3, 5, 7])
@pytest.mark.parametrize('g', [GroupDescriptor.symplectic(1), GroupDescriptor.orthogonal(1)], ids=lambda g: g.name)
def test_labels_match_the_orbit_census(g, q):
    labels = enumerate_class_labels(g, q)
    orbits = brute_force_orbits(g, q)
    assert sorted(classify_unipotent(g, o.representative, q) for o in orbits) == labels
    assert sum(o.size for o in orbits) == q ** 2


def test_so3_has_two_unipotent_classes(so3):
    assert len(enumerate_class_labels(so3, 5)) == EXPECTED_RESULTS['so3_label_count']


def test_classification_does_not_depend_on_the_basis(sp2):
    rng = np.random.default_rng(3)
    for label, rep in class_representatives(sp2, 5).items():
        for _ in range(5):
            assert classify_unipotent(sp2, rep, 5, rng=rng) == label


@pytest.mark.slow
def test_sp4_labels_match_the_orbit_census():
    g = GroupDescriptor.symplectic(2)
    labels = enumerate_class_labels(g, 3)
    orbits = brute_force_orbits(g, 3)
    assert sorted(classify_unipotent(g, o.representative, 3) for o in orbits) == labels
    assert sum(o.size for o in orbits) == 3 ** 8
