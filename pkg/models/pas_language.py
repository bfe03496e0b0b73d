"""
Three-sorted first-order language with ord and ac.

Terms and formulas are immutable dataclasses. Structural equality and
hashing go through the canonical prefix rendering, which is computed once
per node. Sort rules are enforced when nodes are constructed, so every
AST that exists is well sorted.

Surface syntax (see parse_formula):

    forall u:r. (exists y:r. y * y = ac(x)) \\/ ord(x - 1) >= 2
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from functools import cached_property
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Set, Tuple, Union

import ply.lex

logger = logging.getLogger(__name__)

Token = ply.lex.LexToken


class Sort(Enum):
    VALUED = 'v'
    RESIDUE = 'r'
    VALUE = 'z'


SORT_NAMES = {
    Sort.VALUED: 'valued field',
    Sort.RESIDUE: 'residue field',
    Sort.VALUE: 'value group',
}


@dataclass
class SortReport:
    ok: bool
    errors: List[Tuple[str, str]] = field(default_factory=list)


class PasSyntaxError(ValueError):
    def __init__(self, message: str, line: int = 0, column: int = 0):
        super().__init__(f"line {line}, column {column}: {message}")
        self.message = message
        self.line = line
        self.column = column


class PasSortError(ValueError):
    def __init__(self, report: SortReport):
        super().__init__("; ".join(f"{where}: {msg}" for where, msg in report.errors))
        self.report = report


def _sort_error(message: str, where: str = 'term') -> PasSortError:
    return PasSortError(SortReport(False, [(where, message)]))


# ----------------------------------------------------------------------------
# AST
# ----------------------------------------------------------------------------

class Node:
    """Base of all AST nodes; identity is the canonical prefix text."""

    def render(self) -> str:
        raise NotImplementedError

    @cached_property
    def canonical(self) -> str:
        return self.render()

    @cached_property
    def free_pairs(self) -> FrozenSet[Tuple[str, 'Sort']]:
        """Free (name, sort) pairs; a binder hides every use of its name."""
        return _free_pairs(self)

    @cached_property
    def free_names(self) -> FrozenSet[str]:
        return frozenset(name for name, _ in self.free_pairs)

    @cached_property
    def bound_names(self) -> FrozenSet[str]:
        if isinstance(self, QUANTIFIERS):
            return self.body.bound_names | {self.var.name}
        if isinstance(self, (And, Or)):
            return frozenset().union(*(a.bound_names for a in self.args))
        if isinstance(self, Not):
            return self.arg.bound_names
        return frozenset()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Node):
            return NotImplemented
        return type(self) is type(other) and self.canonical == other.canonical

    def __hash__(self) -> int:
        return hash(self.canonical)

    def __repr__(self) -> str:
        return f"{type(self).__name__}<{self.canonical}>"


class Term(Node):
    sort: Sort


class Formula(Node):
    pass


@dataclass(frozen=True, eq=False, repr=False)
class Var(Term):
    name: str
    sort: Sort = Sort.VALUED

    def render(self) -> str:
        return f"{self.name}:{self.sort.value}"


@dataclass(frozen=True, eq=False, repr=False)
class IntConst(Term):
    value: int
    sort: Sort = Sort.VALUED

    def render(self) -> str:
        return f"{self.value}:{self.sort.value}"


@dataclass(frozen=True, eq=False, repr=False)
class RationalConst(Term):
    value: Fraction

    @property
    def sort(self) -> Sort:
        return Sort.VALUED

    def render(self) -> str:
        return f"{self.value.numerator}/{self.value.denominator}"


@dataclass(frozen=True, eq=False, repr=False)
class Add(Term):
    left: Term
    right: Term

    def __post_init__(self):
        if self.left.sort != self.right.sort:
            raise _sort_error(f"cannot add {SORT_NAMES[self.left.sort]} and {SORT_NAMES[self.right.sort]} terms")

    @property
    def sort(self) -> Sort:
        return self.left.sort

    def render(self) -> str:
        return f"(+ {self.left.canonical} {self.right.canonical})"


@dataclass(frozen=True, eq=False, repr=False)
class Mul(Term):
    left: Term
    right: Term

    def __post_init__(self):
        if self.left.sort != self.right.sort:
            raise _sort_error(f"cannot multiply {SORT_NAMES[self.left.sort]} and {SORT_NAMES[self.right.sort]} terms")
        if self.left.sort == Sort.VALUE:
            raise _sort_error("only addition is allowed on the value sort")

    @property
    def sort(self) -> Sort:
        return self.left.sort

    def render(self) -> str:
        return f"(* {self.left.canonical} {self.right.canonical})"


@dataclass(frozen=True, eq=False, repr=False)
class Neg(Term):
    arg: Term

    @property
    def sort(self) -> Sort:
        return self.arg.sort

    def render(self) -> str:
        return f"(- {self.arg.canonical})"


@dataclass(frozen=True, eq=False, repr=False)
class Ord(Term):
    arg: Term

    def __post_init__(self):
        if self.arg.sort != Sort.VALUED:
            raise _sort_error("ord takes a valued field term")

    @property
    def sort(self) -> Sort:
        return Sort.VALUE

    def render(self) -> str:
        return f"(ord {self.arg.canonical})"


@dataclass(frozen=True, eq=False, repr=False)
class Ac(Term):
    arg: Term

    def __post_init__(self):
        if self.arg.sort != Sort.VALUED:
            raise _sort_error("ac takes a valued field term")

    @property
    def sort(self) -> Sort:
        return Sort.RESIDUE

    def render(self) -> str:
        return f"(ac {self.arg.canonical})"


@dataclass(frozen=True, eq=False, repr=False)
class ValueInfinity(Term):

    @property
    def sort(self) -> Sort:
        return Sort.VALUE

    def render(self) -> str:
        return "inf"


@dataclass(frozen=True, eq=False, repr=False)
class Eq(Formula):
    left: Term
    right: Term

    def __post_init__(self):
        if self.left.sort != self.right.sort:
            raise _sort_error("equality between different sorts", 'atom')

    def render(self) -> str:
        return f"(= {self.left.canonical} {self.right.canonical})"


@dataclass(frozen=True, eq=False, repr=False)
class Neq(Formula):
    left: Term
    right: Term

    def __post_init__(self):
        if self.left.sort != self.right.sort:
            raise _sort_error("disequality between different sorts", 'atom')

    def render(self) -> str:
        return f"(!= {self.left.canonical} {self.right.canonical})"


@dataclass(frozen=True, eq=False, repr=False)
class Leq(Formula):
    left: Term
    right: Term

    def __post_init__(self):
        if self.left.sort != Sort.VALUE or self.right.sort != Sort.VALUE:
            raise _sort_error("<= compares value sort terms", 'atom')

    def render(self) -> str:
        return f"(<= {self.left.canonical} {self.right.canonical})"


@dataclass(frozen=True, eq=False, repr=False)
class CongMod(Formula):
    modulus: int
    left: Term
    right: Term

    def __post_init__(self):
        if self.modulus < 1:
            raise _sort_error(f"congruence modulus must be at least 1, got {self.modulus}", 'atom')
        if self.left.sort != Sort.VALUE or self.right.sort != Sort.VALUE:
            raise _sort_error("congruences relate value sort terms", 'atom')

    def render(self) -> str:
        return f"(cong {self.modulus} {self.left.canonical} {self.right.canonical})"


@dataclass(frozen=True, eq=False, repr=False)
class And(Formula):
    args: Tuple[Formula, ...]

    def render(self) -> str:
        return "(and " + " ".join(a.canonical for a in self.args) + ")"


@dataclass(frozen=True, eq=False, repr=False)
class Or(Formula):
    args: Tuple[Formula, ...]

    def render(self) -> str:
        return "(or " + " ".join(a.canonical for a in self.args) + ")"


@dataclass(frozen=True, eq=False, repr=False)
class Not(Formula):
    arg: Formula

    def render(self) -> str:
        return f"(not {self.arg.canonical})"


@dataclass(frozen=True, eq=False, repr=False)
class Forall(Formula):
    var: Var
    body: Formula

    def render(self) -> str:
        return f"(forall {self.var.canonical} {self.body.canonical})"


@dataclass(frozen=True, eq=False, repr=False)
class Exists(Formula):
    var: Var
    body: Formula

    def render(self) -> str:
        return f"(exists {self.var.canonical} {self.body.canonical})"


@dataclass(frozen=True, eq=False, repr=False)
class TrueFormula(Formula):

    def render(self) -> str:
        return "true"


@dataclass(frozen=True, eq=False, repr=False)
class FalseFormula(Formula):

    def render(self) -> str:
        return "false"


TRUE = TrueFormula()
FALSE = FalseFormula()

ATOMS = (Eq, Neq, Leq, CongMod)
QUANTIFIERS = (Forall, Exists)


def _free_pairs(node: Node) -> FrozenSet[Tuple[str, Sort]]:
    if isinstance(node, Var):
        return frozenset(((node.name, node.sort),))
    if isinstance(node, QUANTIFIERS):
        return frozenset(pair for pair in node.body.free_pairs if pair[0] != node.var.name)
    if isinstance(node, (And, Or)):
        return frozenset().union(*(a.free_pairs for a in node.args))
    if isinstance(node, (Add, Mul, Eq, Neq, Leq, CongMod)):
        return node.left.free_pairs | node.right.free_pairs
    if isinstance(node, (Neg, Ord, Ac, Not)):
        return node.arg.free_pairs
    return frozenset()


# ----------------------------------------------------------------------------
# Smart constructors used by the builders
# ----------------------------------------------------------------------------

def const(value: Union[int, Fraction], sort: Sort = Sort.VALUED) -> Term:
    if isinstance(value, Fraction) and value.denominator != 1:
        if sort != Sort.VALUED:
            raise _sort_error("rational constants live in the valued field")
        return RationalConst(value)
    return IntConst(int(value), sort)


def neg(t: Term) -> Term:
    if isinstance(t, IntConst):
        return IntConst(-t.value, t.sort)
    if isinstance(t, RationalConst):
        return RationalConst(-t.value)
    return Neg(t)


def add(*terms: Term) -> Term:
    terms = [t for t in terms if not (isinstance(t, IntConst) and t.value == 0)]
    if not terms:
        raise ValueError("add() needs at least one non-zero term; use const(0, sort)")
    result = terms[0]
    for t in terms[1:]:
        result = Add(result, t)
    return result


def sub(a: Term, b: Term) -> Term:
    return Add(a, neg(b))


def mul(*terms: Term) -> Term:
    result = terms[0]
    for t in terms[1:]:
        result = Mul(result, t)
    return result


def polynomial_term(monomials: Iterable[Tuple[Sequence[int], object]], variables: Sequence[Var]) -> Term:
    """Term of sum(c * prod(v_i^e_i)) from (exponents, coefficient) pairs.

    Coefficients may be anything Fraction(str(c)) understands, which covers
    ints and sympy rationals, so sympy's Poly.terms() can be passed as is.
    """
    sort = variables[0].sort if variables else Sort.VALUED
    summands: List[Term] = []
    for exponents, coeff in monomials:
        c = Fraction(str(coeff))
        if c == 0:
            continue
        factors: List[Term] = []
        for v, e in zip(variables, exponents):
            factors.extend([v] * int(e))
        if not factors:
            summands.append(const(c, sort))
        elif c == 1:
            summands.append(mul(*factors))
        elif c == -1:
            summands.append(Neg(mul(*factors)))
        else:
            summands.append(mul(const(c, sort), *factors))
    if not summands:
        return IntConst(0, sort)
    return add(*summands) if len(summands) > 1 else summands[0]


def conj(*formulas: Formula) -> Formula:
    args: List[Formula] = []
    for f in formulas:
        if isinstance(f, FalseFormula):
            return FALSE
        if isinstance(f, TrueFormula):
            continue
        if isinstance(f, And):
            args.extend(f.args)
        else:
            args.append(f)
    if not args:
        return TRUE
    if len(args) == 1:
        return args[0]
    return And(tuple(args))


def disj(*formulas: Formula) -> Formula:
    args: List[Formula] = []
    for f in formulas:
        if isinstance(f, TrueFormula):
            return TRUE
        if isinstance(f, FalseFormula):
            continue
        if isinstance(f, Or):
            args.extend(f.args)
        else:
            args.append(f)
    if not args:
        return FALSE
    if len(args) == 1:
        return args[0]
    return Or(tuple(args))


def negate(f: Formula) -> Formula:
    if isinstance(f, TrueFormula):
        return FALSE
    if isinstance(f, FalseFormula):
        return TRUE
    return Not(f)


def implies(a: Formula, b: Formula) -> Formula:
    return disj(negate(a), b)


def exists_many(variables: Sequence[Var], body: Formula) -> Formula:
    for v in reversed(variables):
        body = Exists(v, body)
    return body


def forall_many(variables: Sequence[Var], body: Formula) -> Formula:
    for v in reversed(variables):
        body = Forall(v, body)
    return body


# ----------------------------------------------------------------------------
# Lexer
# ----------------------------------------------------------------------------

class _PasLexerRules:
    reserved = {
        'ord': 'ORD', 'ac': 'AC', 'forall': 'FORALL', 'exists': 'EXISTS',
        'cong': 'CONG', 'true': 'TRUE', 'false': 'FALSE', 'inf': 'INF',
    }
    tokens = (
        'NAME', 'INT', 'LPAREN', 'RPAREN', 'PLUS', 'MINUS', 'STAR', 'SLASH',
        'EQ', 'NEQ', 'LEQ', 'GEQ', 'LT', 'GT', 'AND', 'OR', 'NOT',
        'COLON', 'SEMI', 'COMMA', 'DOT',
    ) + tuple(reserved.values())

    t_LPAREN = r'\('
    t_RPAREN = r'\)'
    t_PLUS = r'\+'
    t_MINUS = r'-'
    t_STAR = r'\*'
    t_SLASH = r'/'
    t_EQ = r'='
    t_NEQ = r'!='
    t_LEQ = r'<='
    t_GEQ = r'>='
    t_LT = r'<'
    t_GT = r'>'
    t_AND = r'/\\'
    t_OR = r'\\/'
    t_NOT = r'!'
    t_COLON = r':'
    t_SEMI = r';'
    t_COMMA = r','
    t_DOT = r'\.'
    t_ignore = ' \t\r'

    def t_NAME(self, t):
        r'[a-z][a-z0-9_]*'
        t.type = self.reserved.get(t.value, 'NAME')
        return t

    def t_INT(self, t):
        r'[0-9]+'
        t.value = int(t.value)
        return t

    def t_newline(self, t):
        r'\n+'
        t.lexer.lineno += len(t.value)

    def t_error(self, t):
        raise PasSyntaxError(f"unexpected character {t.value[0]!r}", t.lexer.lineno,
                             _column(t.lexer.lexdata, t.lexpos))


_LEXER = ply.lex.lex(object=_PasLexerRules())


def _column(text: str, pos: int) -> int:
    return pos - text.rfind('\n', 0, pos)


def tokenize(text: str) -> List[Token]:
    lexer = _LEXER.clone()
    lexer.lineno = 1
    lexer.input(text)
    return list(iter(lexer.token, None))


# ----------------------------------------------------------------------------
# Parser: tokens -> raw tree -> elaborated AST
# ----------------------------------------------------------------------------

# Raw tree nodes are tuples whose first entry is a tag and whose last entry
# is the (line, column) of the first token.

SORT_SUFFIXES = {'v': Sort.VALUED, 'r': Sort.RESIDUE, 'z': Sort.VALUE}
RELATIONS = ('EQ', 'NEQ', 'LEQ', 'GEQ', 'LT', 'GT')


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = tokenize(text)
        self.i = 0

    # token helpers
    def peek(self, offset: int = 0) -> Optional[Token]:
        j = self.i + offset
        return self.tokens[j] if j < len(self.tokens) else None

    def peek_type(self, offset: int = 0) -> str:
        tok = self.peek(offset)
        return tok.type if tok is not None else 'EOF'

    def pos(self) -> Tuple[int, int]:
        tok = self.peek()
        if tok is None:
            lines = self.text.split('\n')
            return len(lines), len(lines[-1]) + 1
        return tok.lineno, _column(self.text, tok.lexpos)

    def fail(self, message: str):
        line, col = self.pos()
        raise PasSyntaxError(message, line, col)

    def expect(self, kind: str) -> Token:
        tok = self.peek()
        if tok is None or tok.type != kind:
            found = tok.value if tok is not None else 'end of input'
            self.fail(f"expected {kind.lower()}, found {found!r}")
        self.i += 1
        return tok

    def accept(self, kind: str) -> Optional[Token]:
        if self.peek_type() == kind:
            tok = self.peek()
            self.i += 1
            return tok
        return None

    # grammar
    def parse(self):
        tree = self.formula()
        if self.peek() is not None:
            self.fail(f"unexpected {self.peek().value!r}")
        return tree

    def formula(self):
        start = self.pos()
        args = [self.conjunction()]
        while self.accept('OR'):
            args.append(self.conjunction())
        return args[0] if len(args) == 1 else ('or', args, start)

    def conjunction(self):
        start = self.pos()
        args = [self.unary()]
        while self.accept('AND'):
            args.append(self.unary())
        return args[0] if len(args) == 1 else ('and', args, start)

    def unary(self):
        start = self.pos()
        kind = self.peek_type()
        if kind == 'NOT':
            self.i += 1
            return ('not', self.unary(), start)
        if kind in ('FORALL', 'EXISTS'):
            self.i += 1
            name = self.expect('NAME').value
            sort = self.sort_suffix()
            self.expect('DOT')
            return (kind.lower(), name, sort, self.formula(), start)
        if kind == 'TRUE':
            self.i += 1
            return ('true', start)
        if kind == 'FALSE':
            self.i += 1
            return ('false', start)
        if kind == 'CONG':
            self.i += 1
            self.expect('LPAREN')
            modulus = self.expect('INT').value
            self.expect('SEMI')
            left = self.term()
            self.expect('COMMA')
            right = self.term()
            self.expect('RPAREN')
            return ('cong', modulus, left, right, start)
        if kind == 'LPAREN':
            saved = self.i
            try:
                self.i += 1
                inner = self.formula()
                self.expect('RPAREN')
                if self.peek_type() not in RELATIONS + ('PLUS', 'MINUS', 'STAR'):
                    return inner
            except PasSyntaxError:
                pass
            self.i = saved
        return self.atom()

    def atom(self):
        start = self.pos()
        left = self.term()
        kind = self.peek_type()
        if kind not in RELATIONS:
            self.fail("expected a relation (=, !=, <=, >=, <, >)")
        self.i += 1
        right = self.term()
        return (kind.lower(), left, right, start)

    def sort_suffix(self) -> Optional[Sort]:
        if self.peek_type() == 'COLON' and self.peek_type(1) == 'NAME' and self.peek(1).value in SORT_SUFFIXES:
            self.i += 2
            return SORT_SUFFIXES[self.tokens[self.i - 1].value]
        return None

    def term(self):
        start = self.pos()
        node = self.product()
        while self.peek_type() in ('PLUS', 'MINUS'):
            op = self.peek_type()
            self.i += 1
            right = self.product()
            if op == 'MINUS':
                right = _raw_negate(right, start)
            node = ('add', node, right, start)
        return node

    def product(self):
        start = self.pos()
        node = self.signed()
        while self.accept('STAR'):
            node = ('mul', node, self.signed(), start)
        return node

    def signed(self):
        start = self.pos()
        if self.accept('MINUS'):
            # -(t) stays a negation node even around a literal
            if self.peek_type() == 'LPAREN':
                return ('neg', self.signed(), start)
            return _raw_negate(self.signed(), start)
        return self.primary()

    def primary(self):
        start = self.pos()
        kind = self.peek_type()
        if kind == 'INT':
            value = self.expect('INT').value
            if self.peek_type() == 'SLASH' and self.peek_type(1) == 'INT':
                self.i += 1
                den = self.expect('INT').value
                if den == 0:
                    self.fail("zero denominator")
                return ('rat', Fraction(value, den), start)
            return ('int', value, self.sort_suffix(), start)
        if kind == 'NAME':
            name = self.expect('NAME').value
            return ('var', name, self.sort_suffix(), start)
        if kind in ('ORD', 'AC'):
            self.i += 1
            self.expect('LPAREN')
            arg = self.term()
            self.expect('RPAREN')
            return (kind.lower(), arg, start)
        if kind == 'INF':
            self.i += 1
            return ('inf', start)
        if kind == 'LPAREN':
            self.i += 1
            inner = self.term()
            self.expect('RPAREN')
            return inner
        self.fail("expected a term")


def _raw_negate(raw, start):
    if raw[0] == 'int':
        return ('int', -raw[1], raw[2], raw[3])
    if raw[0] == 'rat':
        return ('rat', -raw[1], raw[2])
    return ('neg', raw, start)


class _Elaborator:
    """Turns raw trees into sorted AST nodes, inferring literal sorts."""

    def __init__(self):
        self.errors: List[Tuple[str, str]] = []

    @staticmethod
    def where(pos) -> str:
        return f"line {pos[0]}, column {pos[1]}"

    def fail(self, message: str, pos):
        raise PasSortError(SortReport(False, [(self.where(pos), message)]))

    def infer(self, raw, scope: Mapping[str, Sort]) -> Optional[Sort]:
        tag = raw[0]
        if tag == 'var':
            return raw[2] or scope.get(raw[1], Sort.VALUED)
        if tag == 'int':
            return raw[2]
        if tag == 'rat':
            return Sort.VALUED
        if tag in ('add', 'mul'):
            return self.infer(raw[1], scope) or self.infer(raw[2], scope)
        if tag == 'neg':
            return self.infer(raw[1], scope)
        if tag in ('ord', 'inf'):
            return Sort.VALUE
        if tag == 'ac':
            return Sort.RESIDUE
        raise AssertionError(tag)

    def term(self, raw, sort: Sort, scope: Mapping[str, Sort]) -> Term:
        tag, pos = raw[0], raw[-1]
        try:
            if tag == 'var':
                actual = raw[2] or scope.get(raw[1], Sort.VALUED)
                if actual != sort:
                    self.fail(f"variable {raw[1]} has {SORT_NAMES[actual]} sort, expected {SORT_NAMES[sort]}", pos)
                return Var(raw[1], actual)
            if tag == 'int':
                if raw[2] is not None and raw[2] != sort:
                    self.fail(f"literal {raw[1]} has {SORT_NAMES[raw[2]]} sort, expected {SORT_NAMES[sort]}", pos)
                return IntConst(raw[1], sort)
            if tag == 'rat':
                if sort != Sort.VALUED:
                    self.fail("rational literals live in the valued field", pos)
                return RationalConst(raw[1])
            if tag == 'add':
                return Add(self.term(raw[1], sort, scope), self.term(raw[2], sort, scope))
            if tag == 'mul':
                return Mul(self.term(raw[1], sort, scope), self.term(raw[2], sort, scope))
            if tag == 'neg':
                return Neg(self.term(raw[1], sort, scope))
            if tag in ('ord', 'ac'):
                expected = Sort.VALUE if tag == 'ord' else Sort.RESIDUE
                if sort != expected:
                    self.fail(f"{tag}(...) has {SORT_NAMES[expected]} sort, expected {SORT_NAMES[sort]}", pos)
                arg = self.term(raw[1], Sort.VALUED, scope)
                return Ord(arg) if tag == 'ord' else Ac(arg)
            if tag == 'inf':
                if sort != Sort.VALUE:
                    self.fail("inf has value sort", pos)
                return ValueInfinity()
        except PasSortError as exc:
            if exc.report.errors and exc.report.errors[0][0] in ('term', 'atom'):
                self.fail(exc.report.errors[0][1], pos)
            raise
        raise AssertionError(tag)

    def formula(self, raw, scope: Mapping[str, Sort]) -> Formula:
        tag, pos = raw[0], raw[-1]
        if tag == 'true':
            return TRUE
        if tag == 'false':
            return FALSE
        if tag == 'not':
            return Not(self.formula(raw[1], scope))
        if tag == 'and':
            return And(tuple(self.formula(a, scope) for a in raw[1]))
        if tag == 'or':
            return Or(tuple(self.formula(a, scope) for a in raw[1]))
        if tag in ('forall', 'exists'):
            sort = raw[2] or Sort.VALUED
            inner = dict(scope)
            inner[raw[1]] = sort
            body = self.formula(raw[3], inner)
            return (Forall if tag == 'forall' else Exists)(Var(raw[1], sort), body)
        if tag == 'cong':
            left = self.term(raw[2], Sort.VALUE, scope)
            right = self.term(raw[3], Sort.VALUE, scope)
            if raw[1] < 1:
                self.fail("congruence modulus must be at least 1", pos)
            return CongMod(raw[1], left, right)
        # relations
        left_raw, right_raw = raw[1], raw[2]
        default = Sort.VALUE if tag in ('leq', 'geq', 'lt', 'gt') else Sort.VALUED
        sort = self.infer(left_raw, scope) or self.infer(right_raw, scope) or default
        left = self.term(left_raw, sort, scope)
        right = self.term(right_raw, sort, scope)
        if tag in ('leq', 'geq', 'lt', 'gt') and sort != Sort.VALUE:
            self.fail("order relations compare value sort terms", pos)
        if tag == 'eq':
            return Eq(left, right)
        if tag == 'neq':
            return Neq(left, right)
        if tag == 'leq':
            return Leq(left, right)
        if tag == 'geq':
            return Leq(right, left)
        if tag == 'lt':
            return Not(Leq(right, left))
        return Not(Leq(left, right))


def parse_formula(text: str) -> Formula:
    """Parse the surface syntax into a well-sorted formula.

    Raises PasSyntaxError (with line/column) or PasSortError.
    """
    raw = _Parser(text).parse()
    return _Elaborator().formula(raw, {})


def parse_term(text: str, sort: Optional[Sort] = None) -> Term:
    parser = _Parser(text)
    raw = parser.term()
    if parser.peek() is not None:
        parser.fail(f"unexpected {parser.peek().value!r}")
    elaborator = _Elaborator()
    return elaborator.term(raw, sort or elaborator.infer(raw, {}) or Sort.VALUED, {})


# ----------------------------------------------------------------------------
# Printers
# ----------------------------------------------------------------------------

def canonical(node: Node) -> str:
    """Fully parenthesised prefix form (cache-key preimage)."""
    return node.canonical


def pretty_term(t: Term) -> str:
    if isinstance(t, Var):
        return f"{t.name}:{t.sort.value}"
    if isinstance(t, IntConst):
        return str(t.value) if t.sort == Sort.VALUED else f"{t.value}:{t.sort.value}"
    if isinstance(t, RationalConst):
        return f"{t.value.numerator}/{t.value.denominator}"
    if isinstance(t, Add):
        return f"({pretty_term(t.left)} + {pretty_term(t.right)})"
    if isinstance(t, Mul):
        return f"({pretty_term(t.left)} * {pretty_term(t.right)})"
    if isinstance(t, Neg):
        return f"-({pretty_term(t.arg)})"
    if isinstance(t, Ord):
        return f"ord({pretty_term(t.arg)})"
    if isinstance(t, Ac):
        return f"ac({pretty_term(t.arg)})"
    if isinstance(t, ValueInfinity):
        return "inf"
    raise TypeError(t)


def pretty(f: Formula) -> str:
    """Fully parenthesised infix surface syntax; parse_formula inverts it."""
    if isinstance(f, TrueFormula):
        return "true"
    if isinstance(f, FalseFormula):
        return "false"
    if isinstance(f, Eq):
        return f"({pretty_term(f.left)} = {pretty_term(f.right)})"
    if isinstance(f, Neq):
        return f"({pretty_term(f.left)} != {pretty_term(f.right)})"
    if isinstance(f, Leq):
        return f"({pretty_term(f.left)} <= {pretty_term(f.right)})"
    if isinstance(f, CongMod):
        return f"cong({f.modulus}; {pretty_term(f.left)}, {pretty_term(f.right)})"
    if isinstance(f, And):
        return "(" + " /\\ ".join(pretty(a) for a in f.args) + ")"
    if isinstance(f, Or):
        return "(" + " \\/ ".join(pretty(a) for a in f.args) + ")"
    if isinstance(f, Not):
        return f"!{pretty(f.arg)}"
    if isinstance(f, Forall):
        return f"(forall {f.var.name}:{f.var.sort.value}. {pretty(f.body)})"
    if isinstance(f, Exists):
        return f"(exists {f.var.name}:{f.var.sort.value}. {pretty(f.body)})"
    raise TypeError(f)


# ----------------------------------------------------------------------------
# Traversals
# ----------------------------------------------------------------------------

def term_children(t: Term) -> Tuple[Term, ...]:
    if isinstance(t, (Add, Mul)):
        return (t.left, t.right)
    if isinstance(t, (Neg, Ord, Ac)):
        return (t.arg,)
    return ()


def _collect_free(node: Node, bound: Set[Tuple[str, Sort]], out: Dict[Tuple[str, Sort], None]):
    if isinstance(node, Var):
        key = (node.name, node.sort)
        if key not in bound:
            out.setdefault(key)
    elif isinstance(node, Term):
        for child in term_children(node):
            _collect_free(child, bound, out)
    elif isinstance(node, (Eq, Neq, Leq, CongMod)):
        _collect_free(node.left, bound, out)
        _collect_free(node.right, bound, out)
    elif isinstance(node, (And, Or)):
        for a in node.args:
            _collect_free(a, bound, out)
    elif isinstance(node, Not):
        _collect_free(node.arg, bound, out)
    elif isinstance(node, QUANTIFIERS):
        key = (node.var.name, node.var.sort)
        if key in bound:
            _collect_free(node.body, bound, out)
        else:
            bound.add(key)
            _collect_free(node.body, bound, out)
            bound.discard(key)


def free_vars(node: Node) -> List[Tuple[str, Sort]]:
    """Free variables with their sorts, in order of first occurrence."""
    out: Dict[Tuple[str, Sort], None] = {}
    _collect_free(node, set(), out)
    return list(out)


def free_var_names(node: Node) -> Set[str]:
    return {name for name, _ in free_vars(node)}


def _fresh_name(base: str, taken: Set[str]) -> str:
    for i in itertools.count(1):
        candidate = f"{base}_{i}"
        if candidate not in taken:
            return candidate
    raise AssertionError


def _subst_term(t: Term, binding: Mapping[str, Term]) -> Term:
    if isinstance(t, Var):
        if t.name in binding:
            replacement = binding[t.name]
            if replacement.sort != t.sort:
                raise _sort_error(
                    f"cannot substitute a {SORT_NAMES[replacement.sort]} term for {t.name}:{t.sort.value}",
                    'substitution')
            return replacement
        return t
    if isinstance(t, Add):
        return Add(_subst_term(t.left, binding), _subst_term(t.right, binding))
    if isinstance(t, Mul):
        return Mul(_subst_term(t.left, binding), _subst_term(t.right, binding))
    if isinstance(t, Neg):
        return neg(_subst_term(t.arg, binding))
    if isinstance(t, Ord):
        return Ord(_subst_term(t.arg, binding))
    if isinstance(t, Ac):
        return Ac(_subst_term(t.arg, binding))
    return t


def _subst_formula(f: Formula, binding: Mapping[str, Term]) -> Formula:
    if not binding:
        return f
    if isinstance(f, Eq):
        return Eq(_subst_term(f.left, binding), _subst_term(f.right, binding))
    if isinstance(f, Neq):
        return Neq(_subst_term(f.left, binding), _subst_term(f.right, binding))
    if isinstance(f, Leq):
        return Leq(_subst_term(f.left, binding), _subst_term(f.right, binding))
    if isinstance(f, CongMod):
        return CongMod(f.modulus, _subst_term(f.left, binding), _subst_term(f.right, binding))
    if isinstance(f, And):
        return And(tuple(_subst_formula(a, binding) for a in f.args))
    if isinstance(f, Or):
        return Or(tuple(_subst_formula(a, binding) for a in f.args))
    if isinstance(f, Not):
        return Not(_subst_formula(f.arg, binding))
    if isinstance(f, QUANTIFIERS):
        inner = {k: v for k, v in binding.items() if k != f.var.name}
        body_free = free_var_names(f.body)
        inner = {k: v for k, v in inner.items() if k in body_free}
        if not inner:
            return f
        captured: Set[str] = set()
        for replacement in inner.values():
            captured |= free_var_names(replacement)
        var, body = f.var, f.body
        if var.name in captured:
            taken = captured | body_free | set(inner)
            renamed = Var(_fresh_name(var.name, taken), var.sort)
            body = _subst_formula(body, {var.name: renamed})
            var = renamed
        return type(f)(var, _subst_formula(body, inner))
    return f


def substitute(f: Formula, binding: Mapping[str, Term]) -> Formula:
    """Capture-avoiding substitution of free variables by terms."""
    return _subst_formula(f, dict(binding))


def check_sorts(node: Node) -> SortReport:
    """Re-validate the sort discipline of an AST, reporting AST paths."""
    errors: List[Tuple[str, str]] = []

    def visit(n: Node, path: str) -> Optional[Sort]:
        if isinstance(n, Var):
            return n.sort
        if isinstance(n, (IntConst, RationalConst, ValueInfinity)):
            return n.sort
        if isinstance(n, (Add, Mul)):
            a, b = visit(n.left, path + "/left"), visit(n.right, path + "/right")
            if a != b:
                errors.append((path, "operands of different sorts"))
            if isinstance(n, Mul) and a == Sort.VALUE:
                errors.append((path, "only addition is allowed on the value sort"))
            return a
        if isinstance(n, Neg):
            return visit(n.arg, path + "/arg")
        if isinstance(n, (Ord, Ac)):
            if visit(n.arg, path + "/arg") != Sort.VALUED:
                errors.append((path, f"{type(n).__name__.lower()} takes a valued field term"))
            return n.sort
        if isinstance(n, (Eq, Neq)):
            if visit(n.left, path + "/left") != visit(n.right, path + "/right"):
                errors.append((path, "comparison between different sorts"))
            return None
        if isinstance(n, (Leq, CongMod)):
            a, b = visit(n.left, path + "/left"), visit(n.right, path + "/right")
            if a != Sort.VALUE or b != Sort.VALUE:
                errors.append((path, "value sort relation on non-value terms"))
            if isinstance(n, CongMod) and n.modulus < 1:
                errors.append((path, "congruence modulus must be at least 1"))
            return None
        if isinstance(n, (And, Or)):
            for i, a in enumerate(n.args):
                visit(a, f"{path}/{i}")
            return None
        if isinstance(n, Not):
            visit(n.arg, path + "/not")
            return None
        if isinstance(n, QUANTIFIERS):
            visit(n.body, f"{path}/{type(n).__name__.lower()} {n.var.name}")
            return None
        return None

    visit(node, "")
    return SortReport(ok=not errors, errors=errors)


def build_res_lowering(phi: Formula, x: Term, shift: int = 0, hole: Optional[str] = None) -> Formula:
    """Lower phi(Res(w^shift * x)) to a formula in ord and ac of x.

    phi must have exactly one free residue variable (the hole) unless the
    hole is named. With shift 0 the result is
    (ord(x) = 0 /\\ phi(ac(x))) \\/ (ord(x) > 0 /\\ phi(0)).
    """
    holes = [name for name, sort in free_vars(phi) if sort == Sort.RESIDUE]
    if hole is not None:
        if hole not in holes:
            raise ValueError(f"{hole} is not a free residue variable of the formula")
        holes = [hole]
    if len(holes) != 1:
        raise ValueError(f"expected exactly one residue hole, found {holes}")
    if x.sort != Sort.VALUED:
        raise _sort_error("residue lowering needs a valued field term")
    hole = holes[0]
    level = IntConst(-shift, Sort.VALUE)
    above = IntConst(1 - shift, Sort.VALUE)
    unit_case = conj(Eq(Ord(x), level), substitute(phi, {hole: Ac(x)}))
    deep_case = conj(Leq(above, Ord(x)), substitute(phi, {hole: IntConst(0, Sort.RESIDUE)}))
    return Or((unit_case, deep_case))
