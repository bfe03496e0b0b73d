"""
Parser, sort checker, printers and residue lowering of the three-sorted language
"""

from fractions import Fraction

import pytest

from models.padic_model import ModelSpec, TriBool, eval_formula
from models.pas_language import (
    Ac, And, CongMod, Eq, Exists, IntConst, Leq, Neg, Not, Or, Ord, PasSortError, PasSyntaxError,
    RationalConst, Sort, Var, build_res_lowering, check_sorts, free_vars, parse_formula, parse_term, pretty,
    substitute,
)
from test_samples.sample_inputs import ORACLE_FORMULAS, RESIDUE_LOWERINGS, SAMPLE_FORMULAS, SORT_ERRORS, SYNTAX_ERRORS


@pytest.mark.parametrize('case', SAMPLE_FORMULAS, ids=lambda c: c['text'])
def test_sample_formulas_are_well_sorted(case):
    f = parse_formula(case['text'])
    assert check_sorts(f).ok
    assert all(sort is Sort.VALUED for _, sort in free_vars(f))


@pytest.mark.parametrize('text', [c['text'] for c in SAMPLE_FORMULAS] + ORACLE_FORMULAS)
def test_pretty_printing_parses_back_to_the_same_tree(text):
    f = parse_formula(text)
    assert parse_formula(pretty(f)) == f
    assert parse_formula(pretty(f)).canonical == f.canonical


@pytest.mark.parametrize('text', SYNTAX_ERRORS)
def test_syntax_errors_carry_a_position(text):
    with pytest.raises(PasSyntaxError) as info:
        parse_formula(text)
    assert info.value.line == 1
    assert info.value.column >= 1


def test_syntax_error_position_on_second_line():
    with pytest.raises(PasSyntaxError) as info:
        parse_formula("ord(x) >= 1 /\\\n  ord(y) ? 0")
    assert info.value.line == 2
    assert info.value.column == 10


@pytest.mark.parametrize('text', SORT_ERRORS)
def test_sort_errors_are_rejected(text):
    with pytest.raises(PasSortError) as info:
        parse_formula(text)
    assert not info.value.report.ok
    assert info.value.report.errors


def test_literal_sorts_follow_the_other_side():
    f = parse_formula("ord(x) >= 1")
    assert f == Leq(IntConst(1, Sort.VALUE), Ord(Var('x', Sort.VALUED)))
    g = parse_formula("ac(x) = 2")
    assert g == Eq(Ac(Var('x', Sort.VALUED)), IntConst(2, Sort.RESIDUE))


def test_strict_order_is_a_negated_leq():
    assert parse_formula("ord(x) < 2") == Not(Leq(IntConst(2, Sort.VALUE), Ord(Var('x', Sort.VALUED))))


def test_rational_literal_lives_in_the_valued_field():
    t = parse_term("x + 1/3")
    assert t.sort is Sort.VALUED
    assert RationalConst(Fraction(1, 3)) in (t.left, t.right)


def test_bound_variable_takes_its_declared_sort():
    f = parse_formula("exists a:r. ac(x) = a*a")
    assert isinstance(f, Exists)
    assert f.var == Var('a', Sort.RESIDUE)
    assert free_vars(f) == [('x', Sort.VALUED)]


def test_connectives_flatten_left_to_right():
    f = parse_formula("ord(x) >= 1 /\\ ord(y) >= 1 /\\ ord(z) >= 1 \\/ x = 0")
    assert isinstance(f, Or)
    assert isinstance(f.args[0], And)
    assert len(f.args[0].args) == 3


def test_congruence_atom():
    f = parse_formula("cong(3; ord(x), 1)")
    assert isinstance(f, CongMod)
    assert f.modulus == 3


def test_free_vars_lists_first_occurrence_order():
    f = parse_formula("ord(y) >= 0 /\\ ac(x) = h:r /\\ ord(y*x) <= n:z")
    assert free_vars(f) == [('y', Sort.VALUED), ('x', Sort.VALUED), ('h', Sort.RESIDUE), ('n', Sort.VALUE)]


def test_substitution_renames_captured_binders():
    f = parse_formula("exists a:v. ord(a - x) >= 1")
    g = substitute(f, {'x': Var('a', Sort.VALUED)})
    assert isinstance(g, Exists)
    assert g.var.name != 'a'
    assert ('a', Sort.VALUED) in free_vars(g)


@pytest.mark.parametrize('case', RESIDUE_LOWERINGS, ids=lambda c: c['phi'])
def test_residue_lowering_agrees_with_the_residue_map(case):
    phi = parse_formula(case['phi'])
    x = Var('x', Sort.VALUED)
    lowered = build_res_lowering(phi, x, shift=case['shift'])
    assert free_vars(lowered) == [('x', Sort.VALUED)]
    p = 5
    m = ModelSpec(p, 3)
    for raw in range(p ** 3):
        residue = raw * p ** case['shift'] % p
        expected = eval_formula(m, phi, {'h': residue})
        assert eval_formula(m, lowered, {'x': Fraction(raw)}) is expected


def test_residue_lowering_needs_exactly_one_hole():
    with pytest.raises(ValueError):
        build_res_lowering(parse_formula("h:r = k:r"), Var('x', Sort.VALUED))
    with pytest.raises(ValueError):
        build_res_lowering(parse_formula("ord(x) >= 1"), Var('x', Sort.VALUED))


def test_lowering_of_a_residue_equation_is_exact_on_units():
    lowered = build_res_lowering(parse_formula("h:r = 1"), Var('x', Sort.VALUED))
    m = ModelSpec(7, 2)
    assert eval_formula(m, lowered, {'x': 8}) is TriBool.TRUE
    assert eval_formula(m, lowered, {'x': 2}) is TriBool.FALSE
    assert eval_formula(m, lowered, {'x': 7}) is TriBool.FALSE


@pytest.mark.parametrize('arg', [IntConst(3, Sort.VALUE), IntConst(0, Sort.VALUE), Ord(Var('y', Sort.VALUED))])
def test_negated_value_terms_print_back_as_negations(arg):
    f = Eq(Neg(arg), Ord(Var('x', Sort.VALUED)))
    assert '-(' in pretty(f)
    assert parse_formula(pretty(f)) == f


def test_minus_on_a_bare_literal_still_folds():
    f = parse_formula('-3:z = ord(x)')
    assert f.left == IntConst(-3, Sort.VALUE)
    assert parse_formula('-(3:z) = ord(x)').left == Neg(IntConst(3, Sort.VALUE))
