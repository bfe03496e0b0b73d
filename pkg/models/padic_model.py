"""
Finite-precision models of Z_p and F_p[[t]] and bounded model checking.

Elements are stored in a common "raw" encoding: an integer whose base-p
digits are the p-adic digits (mixed characteristic) or the coefficients of
t^i (equal characteristic). Multiplying by the uniformizer is multiplying
the raw integer by p in both cases; only carries differ.

Volumes are computed by adaptive refinement of an ambient space made of
blocks (affine coordinates or points of a smooth group scheme). A cell is
a choice of a point mod w^j for every block; cells are partially evaluated
and only the blocks the still-undecided part of the formula talks about
get refined.
"""

from __future__ import annotations

import itertools
import logging
import math
import multiprocessing as mp
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Any, Dict, FrozenSet, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

from sympy import isprime

from models.pas_language import (
    Ac, Add, And, Eq, FALSE, FalseFormula, Forall, Formula, IntConst, Leq, Mul, Neg,
    Neq, Node, Not, Or, Ord, QUANTIFIERS, RationalConst, Sort, TRUE, Term, TrueFormula, ValueInfinity,
    Var, free_vars,
)

logger = logging.getLogger(__name__)

INF = math.inf


class ModelKind(Enum):
    MIXED = 'mixed'
    EQUAL = 'equal'


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    """Working precision: O is Z/p^k or F_p[t]/(t^k)."""
    prime: int
    depth: int = 1
    kind: ModelKind = ModelKind.MIXED
    value_bound: Optional[int] = None
    max_depth: int = 8
    max_nodes: int = 2_000_000

    def __post_init__(self):
        if self.prime == 2 or not isprime(self.prime):
            raise ValueError(f"prime must be an odd prime, got {self.prime}")
        if self.depth < 1:
            raise ValueError(f"depth must be at least 1, got {self.depth}")
        if self.value_bound is not None and self.value_bound < 0:
            raise ValueError("value bound must be non-negative")
        if self.max_depth < self.depth:
            raise ValueError(f"max depth {self.max_depth} is below the working depth {self.depth}")

    @property
    def bound(self) -> int:
        return self.depth if self.value_bound is None else self.value_bound

    def with_depth(self, depth: int) -> 'ModelSpec':
        return ModelSpec(self.prime, depth, self.kind, self.value_bound, max(self.max_depth, depth), self.max_nodes)

    def with_kind(self, kind: ModelKind) -> 'ModelSpec':
        return ModelSpec(self.prime, self.depth, kind, self.value_bound, self.max_depth, self.max_nodes)

    def with_prime(self, prime: int) -> 'ModelSpec':
        return ModelSpec(prime, self.depth, self.kind, self.value_bound, self.max_depth, self.max_nodes)


# ----------------------------------------------------------------------------
# Raw ring arithmetic
# ----------------------------------------------------------------------------

def _digits(a: int, p: int) -> List[int]:
    out = []
    while a:
        out.append(a % p)
        a //= p
    return out


def _undigits(ds: Sequence[int], p: int) -> int:
    a = 0
    for d in reversed(ds):
        a = a * p + d
    return a


def raw_valuation(a: int, p: int, cap: int) -> int:
    """Number of trailing zero digits, at most cap."""
    v = 0
    while v < cap and a % p == 0:
        a //= p
        v += 1
    return v


class ResidueRing:
    """O / w^n on raw encodings; n=None means no truncation (equal char only)."""

    def __init__(self, p: int, kind: ModelKind, n: Optional[int]):
        self.p = p
        self.kind = kind
        self.n = n
        self.modulus = p ** n if n is not None else None

    def reduce(self, a: int) -> int:
        if self.modulus is None:
            return a
        return a % self.modulus

    def from_int(self, c: int) -> int:
        if self.kind is ModelKind.MIXED:
            return c % self.modulus
        return c % self.p

    def add(self, a: int, b: int) -> int:
        if self.kind is ModelKind.MIXED:
            return (a + b) % self.modulus
        p = self.p
        out, place, i = 0, 1, 0
        while (a or b) and (self.n is None or i < self.n):
            out += ((a % p + b % p) % p) * place
            a //= p
            b //= p
            place *= p
            i += 1
        return out

    def neg(self, a: int) -> int:
        if self.kind is ModelKind.MIXED:
            return (-a) % self.modulus
        p = self.p
        out, place, i = 0, 1, 0
        while a and (self.n is None or i < self.n):
            out += ((-(a % p)) % p) * place
            a //= p
            place *= p
            i += 1
        return out

    def sub(self, a: int, b: int) -> int:
        return self.add(a, self.neg(b))

    def mul(self, a: int, b: int) -> int:
        if self.kind is ModelKind.MIXED:
            return (a * b) % self.modulus
        p = self.p
        da, db = _digits(a, p), _digits(b, p)
        if not da or not db:
            return 0
        size = len(da) + len(db) - 1
        if self.n is not None:
            size = min(size, self.n)
        out = [0] * size
        for i, x in enumerate(da):
            if not x or i >= size:
                continue
            for j, y in enumerate(db):
                if i + j >= size:
                    break
                out[i + j] = (out[i + j] + x * y) % p
        return _undigits(out, p)

    def shift(self, a: int, j: int) -> int:
        """Multiply by w^j (j >= 0)."""
        return self.reduce(a * self.p ** j)

    def inverse(self, u: int) -> int:
        """Inverse of a unit."""
        if u % self.p == 0:
            raise ZeroDivisionError("not a unit")
        if self.kind is ModelKind.MIXED:
            return pow(u, -1, self.modulus)
        p, n = self.p, self.n
        du = _digits(u, p) + [0] * n
        inv = [0] * n
        c0 = pow(du[0], -1, p)
        inv[0] = c0
        for k in range(1, n):
            s = sum(du[i] * inv[k - i] for i in range(1, k + 1)) % p
            inv[k] = (-s * c0) % p
        return _undigits(inv, p)

    def valuation(self, a: int) -> int:
        cap = self.n if self.n is not None else 10 ** 6
        if a == 0:
            return cap
        return raw_valuation(a, self.p, cap)

    def matmul(self, A: Sequence[Sequence[int]], B: Sequence[Sequence[int]]) -> List[List[int]]:
        rows, inner, cols = len(A), len(B), len(B[0])
        out = []
        for i in range(rows):
            row = []
            for j in range(cols):
                acc = 0
                for t in range(inner):
                    if A[i][t] and B[t][j]:
                        acc = self.add(acc, self.mul(A[i][t], B[t][j]))
                row.append(acc)
            out.append(row)
        return out


# ----------------------------------------------------------------------------
# Truncated elements
# ----------------------------------------------------------------------------

class TruncatedElement:
    """Element of the fraction field known to finite relative precision.

    valuation: exact ord (lower bound when exhausted; INF for exact zero)
    unit: raw digits of the unit part (Fraction for exact mixed rationals)
    precision: number of known unit digits, None when exact
    exhausted: all known digits are zero, ord >= valuation
    """

    __slots__ = ('p', 'kind', 'valuation', 'unit', 'precision', 'exhausted')

    def __init__(self, p: int, kind: ModelKind, valuation, unit, precision: Optional[int], exhausted: bool = False):
        self.p = p
        self.kind = kind
        self.valuation = valuation
        self.unit = unit
        self.precision = precision
        self.exhausted = exhausted

    # constructors ---------------------------------------------------------
    @classmethod
    def zero(cls, p: int, kind: ModelKind) -> 'TruncatedElement':
        return cls(p, kind, INF, 0, None)

    @classmethod
    def exhausted_at(cls, p: int, kind: ModelKind, n: int) -> 'TruncatedElement':
        return cls(p, kind, n, 0, 0, True)

    @classmethod
    def from_raw(cls, p: int, kind: ModelKind, raw: int, n: int) -> 'TruncatedElement':
        """Element of O known mod w^n from its raw encoding."""
        if raw == 0:
            return cls.exhausted_at(p, kind, n)
        v = raw_valuation(raw, p, n)
        return cls(p, kind, v, raw // p ** v, n - v)

    @classmethod
    def exact_raw(cls, p: int, kind: ModelKind, raw: int) -> 'TruncatedElement':
        """Exact element whose raw encoding is finite (a representative)."""
        if raw == 0:
            return cls.zero(p, kind)
        v = raw_valuation(raw, p, 10 ** 6)
        unit = raw // p ** v
        if kind is ModelKind.MIXED:
            unit = Fraction(unit)
        return cls(p, kind, v, unit, None)

    @classmethod
    def exact(cls, p: int, kind: ModelKind, value: Union[int, Fraction]) -> 'TruncatedElement':
        """Exact constant of Q (mixed) or of F_p (equal characteristic)."""
        value = Fraction(value)
        if value.denominator % p == 0:
            raise EvaluationError(f"constant {value} has a denominator divisible by {p}")
        if kind is ModelKind.EQUAL:
            c = value.numerator * pow(value.denominator, -1, p) % p
            return cls.zero(p, kind) if c == 0 else cls(p, kind, 0, c, None)
        return cls._from_fraction(p, value)

    @classmethod
    def uniformizer_power(cls, p: int, kind: ModelKind, j: int) -> 'TruncatedElement':
        unit = Fraction(1) if kind is ModelKind.MIXED else 1
        return cls(p, kind, j, unit, None)

    @classmethod
    def _from_fraction(cls, p: int, value: Fraction) -> 'TruncatedElement':
        if value == 0:
            return cls.zero(p, ModelKind.MIXED)
        num, den, v = value.numerator, value.denominator, 0
        while num % p == 0:
            num //= p
            v += 1
        while den % p == 0:
            den //= p
            v -= 1
        return cls(p, ModelKind.MIXED, v, Fraction(num, den), None)

    # queries --------------------------------------------------------------
    @property
    def is_exact(self) -> bool:
        return self.precision is None

    @property
    def is_zero(self) -> bool:
        return self.valuation == INF

    @property
    def absolute_precision(self):
        if self.exhausted:
            return self.valuation
        if self.precision is None:
            return INF
        return self.valuation + self.precision

    def unit_raw(self, m: int) -> int:
        """Unit digits mod p^m."""
        u = self.unit
        if isinstance(u, Fraction):
            mod = self.p ** m
            return u.numerator * pow(u.denominator, -1, mod) % mod
        return u % self.p ** m

    def ord_range(self) -> Tuple[Any, Any]:
        if self.exhausted:
            return (self.valuation, INF)
        return (self.valuation, self.valuation)

    def ac(self) -> Optional[int]:
        if self.is_zero:
            return 0
        if self.exhausted:
            return None
        return self.unit_raw(1)

    def raw(self, n: int) -> int:
        """Raw encoding mod w^n of an element of O."""
        if self.is_zero or (self.exhausted and self.valuation >= n):
            return 0
        if self.valuation < 0:
            raise EvaluationError("element is not integral")
        if self.exhausted:
            raise EvaluationError(f"element is only known mod w^{self.valuation}")
        if self.valuation >= n:
            return 0
        if self.precision is not None and self.valuation + self.precision < n:
            raise EvaluationError(f"element is only known mod w^{self.valuation + self.precision}")
        ring = ResidueRing(self.p, self.kind, n)
        return ring.shift(self.unit_raw(n - self.valuation), self.valuation)

    def digits(self, n: int) -> List[int]:
        ds = _digits(self.raw(n), self.p)
        return ds + [0] * (n - len(ds))

    # arithmetic -----------------------------------------------------------
    def _same(self, other: 'TruncatedElement'):
        if other.p != self.p or other.kind is not self.kind:
            raise EvaluationError("mixing elements of different models")

    def __neg__(self) -> 'TruncatedElement':
        if self.is_zero or self.exhausted:
            return self
        if self.precision is None:
            if self.kind is ModelKind.MIXED:
                return TruncatedElement(self.p, self.kind, self.valuation, -self.unit, None)
            return TruncatedElement(self.p, self.kind, self.valuation,
                                    ResidueRing(self.p, self.kind, None).neg(self.unit), None)
        ring = ResidueRing(self.p, self.kind, self.precision)
        return TruncatedElement(self.p, self.kind, self.valuation, ring.neg(self.unit), self.precision)

    def __add__(self, other: 'TruncatedElement') -> 'TruncatedElement':
        if self.is_zero:
            return other
        if other.is_zero:
            return self
        p, kind = self.p, self.kind
        if self.precision is None and other.precision is None:
            if kind is ModelKind.MIXED:
                return TruncatedElement._from_fraction(p, self._value() + other._value())
            m = min(self.valuation, other.valuation)
            ring = ResidueRing(p, kind, None)
            total = ring.add(ring.shift(self.unit, self.valuation - m), ring.shift(other.unit, other.valuation - m))
            if total == 0:
                return TruncatedElement.zero(p, kind)
            t = raw_valuation(total, p, 10 ** 6)
            return TruncatedElement(p, kind, m + t, total // p ** t, None)
        n = min(self.absolute_precision, other.absolute_precision)
        m = min(self.valuation, other.valuation)
        width = n - m
        if width <= 0:
            return TruncatedElement.exhausted_at(p, kind, n)
        ring = ResidueRing(p, kind, width)
        total = 0
        for x in (self, other):
            if x.exhausted:
                continue
            s = x.valuation - m
            if s >= width:
                continue
            total = ring.add(total, ring.shift(x.unit_raw(width - s), s))
        if total == 0:
            return TruncatedElement.exhausted_at(p, kind, n)
        t = raw_valuation(total, p, width)
        return TruncatedElement(p, kind, m + t, total // p ** t, width - t)

    def __sub__(self, other: 'TruncatedElement') -> 'TruncatedElement':
        return self + (-other)

    def __mul__(self, other: 'TruncatedElement') -> 'TruncatedElement':
        p, kind = self.p, self.kind
        if self.is_zero or other.is_zero:
            return TruncatedElement.zero(p, kind)
        v = self.valuation + other.valuation
        if self.exhausted or other.exhausted:
            return TruncatedElement.exhausted_at(p, kind, v)
        if self.precision is None and other.precision is None:
            if kind is ModelKind.MIXED:
                return TruncatedElement(p, kind, v, self.unit * other.unit, None)
            return TruncatedElement(p, kind, v, ResidueRing(p, kind, None).mul(self.unit, other.unit), None)
        prec = min(x.precision for x in (self, other) if x.precision is not None)
        ring = ResidueRing(p, kind, prec)
        return TruncatedElement(p, kind, v, ring.mul(self.unit_raw(prec), other.unit_raw(prec)), prec)

    def _value(self) -> Fraction:
        return self.unit * Fraction(self.p) ** self.valuation

    def __repr__(self) -> str:
        if self.is_zero:
            return "TruncatedElement(0)"
        if self.exhausted:
            return f"TruncatedElement(ord>={self.valuation})"
        prec = "exact" if self.precision is None else f"prec={self.precision}"
        return f"TruncatedElement(ord={self.valuation}, unit={self.unit}, {prec})"


# ----------------------------------------------------------------------------
# Three-valued evaluation
# ----------------------------------------------------------------------------

class TriBool(Enum):
    TRUE = 'true'
    FALSE = 'false'
    UNKNOWN = 'unknown'

    def __invert__(self) -> 'TriBool':
        if self is TriBool.TRUE:
            return TriBool.FALSE
        if self is TriBool.FALSE:
            return TriBool.TRUE
        return TriBool.UNKNOWN

    def __and__(self, other: 'TriBool') -> 'TriBool':
        if self is TriBool.FALSE or other is TriBool.FALSE:
            return TriBool.FALSE
        if self is TriBool.TRUE and other is TriBool.TRUE:
            return TriBool.TRUE
        return TriBool.UNKNOWN

    def __or__(self, other: 'TriBool') -> 'TriBool':
        if self is TriBool.TRUE or other is TriBool.TRUE:
            return TriBool.TRUE
        if self is TriBool.FALSE and other is TriBool.FALSE:
            return TriBool.FALSE
        return TriBool.UNKNOWN

    @staticmethod
    def of(flag: bool) -> 'TriBool':
        return TriBool.TRUE if flag else TriBool.FALSE


ValueRange = Tuple[Any, Any]


class FormulaEvaluator:
    """Kleene evaluation of formulas over a model.

    facts: canonical texts of atoms that hold on every point of the ambient
    (the defining equations of a group block).
    lazy: quantifiers give up with UNKNOWN at their first undecided instance.
    """

    def __init__(self, model: ModelSpec, facts: FrozenSet[str] = frozenset(), lazy: bool = False):
        self.model = model
        self.p = model.prime
        self.kind = model.kind
        self.facts = facts
        self.lazy = lazy
        self._quant_memo: Dict[Tuple[str, Tuple], TriBool] = {}
        self._const_cache: Dict[Tuple, Any] = {}
        self._valued_domain: Optional[List[TruncatedElement]] = None
        self._term_cache: Dict[str, Any] = {}
        self._quantified: FrozenSet[str] = frozenset()
        self.env: Dict[str, Any] = {}

    # entry points ---------------------------------------------------------
    def evaluate(self, f: Formula, env: Mapping[str, Any]) -> TriBool:
        self._start(f, env)
        return self._eval(f)

    def residual(self, f: Formula, env: Mapping[str, Any]) -> Formula:
        """Partially evaluate f: decided atoms fold into true/false."""
        self._start(f, env)
        return self._resid(f)

    def term(self, t: Term, env: Mapping[str, Any]):
        self._start(t, env)
        return self._term(t)

    def _start(self, node: Node, env: Mapping[str, Any]):
        self.env = dict(env)
        self._term_cache = {}
        self._quantified = node.bound_names

    # helpers --------------------------------------------------------------
    def names(self, node: Node) -> FrozenSet[str]:
        return node.free_names

    def _valued_constant(self, value) -> TruncatedElement:
        key = ('v', value)
        hit = self._const_cache.get(key)
        if hit is None:
            hit = TruncatedElement.exact(self.p, self.kind, value)
            self._const_cache[key] = hit
        return hit

    def valued_domain(self) -> List[TruncatedElement]:
        if self._valued_domain is None:
            size = self.p ** self.model.depth
            self._valued_domain = [TruncatedElement.exact_raw(self.p, self.kind, raw) for raw in range(size)]
        return self._valued_domain

    # terms ----------------------------------------------------------------
    def _term(self, t: Term):
        if isinstance(t, Var):
            try:
                return self.env[t.name]
            except KeyError:
                raise EvaluationError(f"variable {t.name} is not assigned") from None
        if isinstance(t, IntConst):
            if t.sort is Sort.VALUED:
                return self._valued_constant(t.value)
            if t.sort is Sort.RESIDUE:
                return t.value % self.p
            return (t.value, t.value)
        if isinstance(t, RationalConst):
            return self._valued_constant(t.value)
        if isinstance(t, ValueInfinity):
            return (INF, INF)
        cacheable = not (self.names(t) & self._quantified)
        if cacheable:
            key = t.canonical
            if key in self._term_cache:
                return self._term_cache[key]
        value = self._compound(t)
        if cacheable:
            self._term_cache[key] = value
        return value

    def _compound(self, t: Term):
        sort = t.sort
        if isinstance(t, Ord):
            return self._term(t.arg).ord_range()
        if isinstance(t, Ac):
            return self._term(t.arg).ac()
        if isinstance(t, Neg):
            a = self._term(t.arg)
            if sort is Sort.VALUED:
                return -a
            if sort is Sort.RESIDUE:
                return None if a is None else (-a) % self.p
            return (-a[1], -a[0])
        a = self._term(t.left)
        if isinstance(t, Mul) and sort is Sort.RESIDUE and a == 0:
            return 0
        b = self._term(t.right)
        if isinstance(t, Add):
            if sort is Sort.VALUED:
                return a + b
            if sort is Sort.RESIDUE:
                return None if a is None or b is None else (a + b) % self.p
            return (a[0] + b[0], a[1] + b[1])
        if sort is Sort.VALUED:
            return a * b
        if b == 0:
            return 0
        return None if a is None or b is None else (a * b) % self.p

    # atoms ----------------------------------------------------------------
    def _atom(self, f: Formula) -> TriBool:
        if f.canonical in self.facts:
            return TriBool.TRUE
        if isinstance(f, (Eq, Neq)):
            result = self._equal(f.left, f.right)
            return result if isinstance(f, Eq) else ~result
        a, b = self._term(f.left), self._term(f.right)
        if isinstance(f, Leq):
            if a[1] <= b[0]:
                return TriBool.TRUE
            if a[0] > b[1]:
                return TriBool.FALSE
            return TriBool.UNKNOWN
        # congruence
        if a[0] != a[1] or b[0] != b[1]:
            return TriBool.UNKNOWN
        x, y = a[0], b[0]
        if x == INF or y == INF:
            return TriBool.of(x == y)
        return TriBool.of((x - y) % f.modulus == 0)

    def _equal(self, left: Term, right: Term) -> TriBool:
        a, b = self._term(left), self._term(right)
        sort = left.sort
        if sort is Sort.VALUED:
            d = a - b
            if d.is_zero:
                return TriBool.TRUE
            if d.exhausted:
                return TriBool.UNKNOWN
            return TriBool.FALSE
        if sort is Sort.RESIDUE:
            if a is None or b is None:
                return TriBool.UNKNOWN
            return TriBool.of(a == b)
        if a[0] == a[1] == b[0] == b[1]:
            return TriBool.TRUE
        if a[1] < b[0] or b[1] < a[0]:
            return TriBool.FALSE
        return TriBool.UNKNOWN

    # formulas -------------------------------------------------------------
    def _eval(self, f: Formula) -> TriBool:
        if isinstance(f, TrueFormula):
            return TriBool.TRUE
        if isinstance(f, FalseFormula):
            return TriBool.FALSE
        if isinstance(f, And):
            result = TriBool.TRUE
            for a in f.args:
                v = self._eval(a)
                if v is TriBool.FALSE:
                    return v
                if v is TriBool.UNKNOWN:
                    result = v
            return result
        if isinstance(f, Or):
            result = TriBool.FALSE
            for a in f.args:
                v = self._eval(a)
                if v is TriBool.TRUE:
                    return v
                if v is TriBool.UNKNOWN:
                    result = v
            return result
        if isinstance(f, Not):
            return ~self._eval(f.arg)
        if isinstance(f, QUANTIFIERS):
            return self._quantifier(f)
        return self._atom(f)

    def _domain(self, var: Var):
        if var.sort is Sort.RESIDUE:
            return range(self.p)
        if var.sort is Sort.VALUE:
            b = self.model.bound
            return [(n, n) for n in range(-b, b + 1)]
        return self.valued_domain()

    def _quantifier(self, f: Formula) -> TriBool:
        key = None
        names = self.names(f)
        if not any(s is Sort.VALUED for _, s in f.free_pairs):
            key = (f.canonical, self.lazy, tuple(self.env.get(n) for n in sorted(names)))
            hit = self._quant_memo.get(key)
            if hit is not None:
                return hit
        is_forall = isinstance(f, Forall)
        stop = TriBool.FALSE if is_forall else TriBool.TRUE
        name = f.var.name
        saved = self.env.get(name, _MISSING)
        result = ~stop
        try:
            for value in self._domain(f.var):
                self.env[name] = value
                v = self._eval(f.body)
                if v is stop:
                    result = stop
                    break
                if v is TriBool.UNKNOWN:
                    result = v
                    if self.lazy:
                        break
        finally:
            if saved is _MISSING:
                self.env.pop(name, None)
            else:
                self.env[name] = saved
        if key is not None:
            self._quant_memo[key] = result
        return result

    def _resid(self, f: Formula) -> Formula:
        if isinstance(f, (TrueFormula, FalseFormula)):
            return f
        if isinstance(f, And):
            kept, changed = [], False
            for a in f.args:
                r = self._resid(a)
                if r is FALSE or isinstance(r, FalseFormula):
                    return FALSE
                if isinstance(r, TrueFormula):
                    changed = True
                    continue
                changed = changed or r is not a
                kept.append(r)
            if not kept:
                return TRUE
            if not changed:
                return f
            return kept[0] if len(kept) == 1 else And(tuple(kept))
        if isinstance(f, Or):
            kept, changed = [], False
            for a in f.args:
                r = self._resid(a)
                if isinstance(r, TrueFormula):
                    return TRUE
                if isinstance(r, FalseFormula):
                    changed = True
                    continue
                changed = changed or r is not a
                kept.append(r)
            if not kept:
                return FALSE
            if not changed:
                return f
            return kept[0] if len(kept) == 1 else Or(tuple(kept))
        if isinstance(f, Not):
            r = self._resid(f.arg)
            if isinstance(r, TrueFormula):
                return FALSE
            if isinstance(r, FalseFormula):
                return TRUE
            return f if r is f.arg else Not(r)
        if isinstance(f, QUANTIFIERS):
            v = self._quantifier(f)
        else:
            v = self._atom(f)
        if v is TriBool.TRUE:
            return TRUE
        if v is TriBool.FALSE:
            return FALSE
        return f


_MISSING = object()


def coerce_assignment(m: ModelSpec, node: Node, asg: Mapping[str, Any]) -> Dict[str, Any]:
    """Convert user-facing values to evaluator values and check coverage."""
    env: Dict[str, Any] = {}
    seen: Dict[str, Sort] = {}
    for name, sort in free_vars(node):
        if name in seen and seen[name] != sort:
            raise EvaluationError(f"variable name {name} is used with two sorts")
        seen[name] = sort
        if name not in asg:
            raise EvaluationError(f"variable {name} is not assigned")
        value = asg[name]
        if sort is Sort.VALUED:
            if not isinstance(value, TruncatedElement):
                value = TruncatedElement.exact(m.prime, m.kind, value)
        elif sort is Sort.RESIDUE:
            value = None if value is None else int(value) % m.prime
        else:
            if isinstance(value, tuple):
                lo, hi = value
            else:
                lo = hi = value
            for v in (lo, hi):
                if v != INF and abs(v) > m.bound:
                    raise EvaluationError(f"value {v} of {name} is outside [-{m.bound}, {m.bound}]")
            value = (lo, hi)
        env[name] = value
    return env


def eval_term(m: ModelSpec, t: Term, asg: Mapping[str, Any]):
    """Value of a term: TruncatedElement, residue (None if unknown) or ord range."""
    evaluator = FormulaEvaluator(m)
    return evaluator.term(t, coerce_assignment(m, t, asg))


def eval_formula(m: ModelSpec, f: Formula, asg: Mapping[str, Any],
                 facts: FrozenSet[str] = frozenset()) -> TriBool:
    evaluator = FormulaEvaluator(m, facts=facts)
    return evaluator.evaluate(f, coerce_assignment(m, f, asg))


# ----------------------------------------------------------------------------
# Ambient spaces
# ----------------------------------------------------------------------------

class AmbientBlock:
    """A smooth piece of the ambient space, refined one digit at a time.

    Points are tuples of raw encodings (one per variable) known mod w^depth.
    """
    variables: Tuple[str, ...] = ()
    dim: int = 0
    facts: FrozenSet[str] = frozenset()

    def ident(self) -> str:
        raise NotImplementedError

    def roots(self, m: ModelSpec) -> List[Tuple[int, ...]]:
        raise NotImplementedError

    def lifts(self, m: ModelSpec, point: Tuple[int, ...], depth: int) -> List[Tuple[int, ...]]:
        raise NotImplementedError

    def root_count(self, m: ModelSpec) -> int:
        return len(self.roots(m))


class AffineBlock(AmbientBlock):
    """Coordinates ranging independently over O."""

    def __init__(self, variables: Sequence[str]):
        self.variables = tuple(variables)
        self.dim = len(self.variables)
        self.facts = frozenset()

    def ident(self) -> str:
        return "affine(" + ",".join(self.variables) + ")"

    def roots(self, m: ModelSpec) -> List[Tuple[int, ...]]:
        return list(itertools.product(range(m.prime), repeat=self.dim))

    def root_count(self, m: ModelSpec) -> int:
        return m.prime ** self.dim

    def lifts(self, m: ModelSpec, point: Tuple[int, ...], depth: int) -> List[Tuple[int, ...]]:
        step = m.prime ** depth
        return [tuple(x + d * step for x, d in zip(point, ds))
                for ds in itertools.product(range(m.prime), repeat=self.dim)]


@dataclass(frozen=True)
class Ambient:
    blocks: Tuple[AmbientBlock, ...]

    @classmethod
    def affine(cls, variables: Sequence[str]) -> 'Ambient':
        return cls((AffineBlock(variables),))

    @classmethod
    def of(cls, *blocks: AmbientBlock) -> 'Ambient':
        return cls(tuple(blocks))

    @property
    def dim(self) -> int:
        return sum(b.dim for b in self.blocks)

    @property
    def variables(self) -> Tuple[str, ...]:
        return tuple(v for b in self.blocks for v in b.variables)

    @property
    def facts(self) -> FrozenSet[str]:
        return frozenset().union(*(b.facts for b in self.blocks))

    def ident(self) -> str:
        return "x".join(b.ident() for b in self.blocks)


def default_ambient(f: Formula) -> Ambient:
    names = [name for name, sort in free_vars(f) if sort is Sort.VALUED]
    return Ambient.affine(names)


def _block_values(m: ModelSpec, block: AmbientBlock, point, depth: int) -> Dict[str, TruncatedElement]:
    if depth == 0:
        zero = TruncatedElement.exhausted_at(m.prime, m.kind, 0)
        return {v: zero for v in block.variables}
    return {v: TruncatedElement.from_raw(m.prime, m.kind, raw, depth) for v, raw in zip(block.variables, point)}


@dataclass
class Cell:
    """A resolved cell: one point per block, each known mod w^depth."""
    points: Tuple[Any, ...]
    depths: Tuple[int, ...]
    measure: Fraction

    def values(self, m: ModelSpec, ambient: Ambient) -> Dict[str, TruncatedElement]:
        env: Dict[str, TruncatedElement] = {}
        for block, point, depth in zip(ambient.blocks, self.points, self.depths):
            env.update(_block_values(m, block, point, depth))
        return env


@dataclass(frozen=True)
class VolumeResult:
    value: Fraction
    depth_used: int
    stable: bool
    unknown_fraction: Fraction
    dimension: int
    prime: int
    nodes: int = 0

    @property
    def count(self) -> int:
        """Resolved point count mod w^depth_used on the ambient."""
        return int(self.value * self.prime ** (self.depth_used * self.dimension))

    def to_dict(self) -> Dict[str, Any]:
        return {
            'value': str(self.value),
            'depth_used': self.depth_used,
            'stable': self.stable,
            'unknown_fraction': str(self.unknown_fraction),
            'dimension': self.dimension,
            'prime': self.prime,
            'nodes': self.nodes,
        }

    @classmethod
    def from_dict(cls, record: Mapping[str, Any]) -> 'VolumeResult':
        return cls(Fraction(record['value']), int(record['depth_used']), bool(record['stable']),
                   Fraction(record['unknown_fraction']), int(record['dimension']), int(record['prime']),
                   int(record.get('nodes', 0)))


# ----------------------------------------------------------------------------
# Adaptive volume engine
# ----------------------------------------------------------------------------

State = Tuple[Tuple[Any, int], ...]


class VolumeEngine:
    """Measure of the set cut out by a formula on an ambient space.

    A cell is refined only in the blocks its residual formula mentions;
    cells still undecided at max_depth (or past the node budget) count as
    unknown mass.
    """

    def __init__(self, model: ModelSpec, formula: Formula, ambient: Ambient):
        self.model = model
        self.formula = formula
        self.ambient = ambient
        self.lazy = FormulaEvaluator(model, facts=ambient.facts, lazy=True)
        self.complete = FormulaEvaluator(model, facts=ambient.facts, lazy=False)
        self.block_of = {v: i for i, b in enumerate(ambient.blocks) for v in b.variables}
        self.memo: Dict[Tuple, Tuple[Fraction, Fraction]] = {}
        self.nodes = 0
        self.deepest = 0
        self.budget_hit = False
        self._root_weights = [Fraction(b.root_count(model), model.prime ** b.dim) for b in ambient.blocks]

    def initial_state(self) -> State:
        return tuple((None, 0) for _ in self.ambient.blocks)

    def weight(self, b: int, depth: int) -> Fraction:
        if depth == 0:
            return self._root_weights[b]
        return Fraction(1, self.model.prime ** (depth * self.ambient.blocks[b].dim))

    def state_weight(self, state: State) -> Fraction:
        w = Fraction(1)
        for b, (_, depth) in enumerate(state):
            w *= self.weight(b, depth)
        return w

    def assignment(self, state: State) -> Dict[str, TruncatedElement]:
        env: Dict[str, TruncatedElement] = {}
        for block, (point, depth) in zip(self.ambient.blocks, state):
            env.update(_block_values(self.model, block, point, depth))
        return env

    def children(self, state: State, b: int) -> List[State]:
        block = self.ambient.blocks[b]
        point, depth = state[b]
        nxt = block.roots(self.model) if depth == 0 else block.lifts(self.model, point, depth)
        return [state[:b] + ((child, depth + 1),) + state[b + 1:] for child in nxt]

    def _resolved(self, state: State):
        self.deepest = max(self.deepest, max(d for _, d in state))

    def blamed(self, residual: Formula) -> List[int]:
        return sorted({self.block_of[n] for n in self.lazy.names(residual) if n in self.block_of})

    def choose(self, residual: Formula, state: State) -> Optional[int]:
        """Block to refine next, or None when the cell must be settled as is."""
        refinable = [b for b in self.blamed(residual) if state[b][1] < self.model.max_depth]
        if not refinable:
            return None
        return min(refinable, key=lambda b: (state[b][1], b))

    def measure(self, residual: Formula, state: State) -> Tuple[Fraction, Fraction]:
        """(true mass, unknown mass) of the cell."""
        self.nodes += 1
        env = self.assignment(state)
        residual = self.lazy.residual(residual, env)
        w = self.state_weight(state)
        if isinstance(residual, TrueFormula):
            self._resolved(state)
            return w, Fraction(0)
        if isinstance(residual, FalseFormula):
            return Fraction(0), Fraction(0)
        b = self.choose(residual, state)
        if b is None or self.nodes > self.model.max_nodes:
            if self.nodes > self.model.max_nodes and not self.budget_hit:
                logger.warning(f"node budget {self.model.max_nodes} exhausted; remaining cells count as unknown")
                self.budget_hit = True
            self._resolved(state)
            verdict = self.complete.evaluate(residual, env)
            if verdict is TriBool.TRUE:
                return w, Fraction(0)
            if verdict is TriBool.FALSE:
                return Fraction(0), Fraction(0)
            return Fraction(0), w
        blamed = self.blamed(residual)
        if len(state) > 1 and blamed == [b]:
            # the residual only sees block b: the answer scales with the other blocks
            key = (residual.canonical, b, state[b])
            other = w / self.weight(b, state[b][1])
            hit = self.memo.get(key)
            if hit is not None:
                return hit[0] * other, hit[1] * other
            true_mass, unknown_mass = self._refine(residual, state, b)
            self.memo[key] = (true_mass / other, unknown_mass / other)
            return true_mass, unknown_mass
        return self._refine(residual, state, b)

    def _refine(self, residual: Formula, state: State, b: int) -> Tuple[Fraction, Fraction]:
        true_mass, unknown_mass = Fraction(0), Fraction(0)
        for child in self.children(state, b):
            t, u = self.measure(residual, child)
            true_mass += t
            unknown_mass += u
        return true_mass, unknown_mass

    def run(self, jobs: int = 1) -> VolumeResult:
        state = self.initial_state()
        residual = self.formula
        if jobs > 1:
            true_mass, unknown_mass = self._run_parallel(jobs)
        else:
            true_mass, unknown_mass = self.measure(residual, state)
        depth_used = max(self.model.depth, self.deepest)
        total = Fraction(1)
        for b in range(len(self.ambient.blocks)):
            total *= self._root_weights[b]
        unknown = unknown_mass / total if total else Fraction(0)
        return VolumeResult(true_mass, depth_used, unknown_mass == 0, unknown, self.ambient.dim,
                            self.model.prime, self.nodes)

    def _run_parallel(self, jobs: int) -> Tuple[Fraction, Fraction]:
        state = self.initial_state()
        self.nodes += 1
        env = self.assignment(state)
        residual = self.lazy.residual(self.formula, env)
        if isinstance(residual, (TrueFormula, FalseFormula)):
            return self.measure(residual, state)
        b = self.choose(residual, state)
        if b is None:
            return self.measure(residual, state)
        children = self.children(state, b)
        try:
            with mp.Pool(jobs, initializer=_init_worker, initargs=(self.model, self.formula, self.ambient)) as pool:
                results = pool.map(_measure_child, [(residual, child) for child in children])
        except (OSError, RuntimeError) as e:
            logger.warning(f"worker pool unavailable ({e}); falling back to a single process")
            return self._refine(residual, state, b)
        true_mass, unknown_mass = Fraction(0), Fraction(0)
        for t, u, nodes, deepest in results:
            true_mass += t
            unknown_mass += u
            self.nodes += nodes
            self.deepest = max(self.deepest, deepest)
        return true_mass, unknown_mass


_WORKER: Optional[VolumeEngine] = None


def _init_worker(model: ModelSpec, formula: Formula, ambient: Ambient):
    global _WORKER
    _WORKER = VolumeEngine(model, formula, ambient)


def _measure_child(task):
    residual, state = task
    before = _WORKER.nodes
    t, u = _WORKER.measure(residual, state)
    return t, u, _WORKER.nodes - before, _WORKER.deepest


def _check_closed(f: Formula, ambient: Ambient):
    names = set(ambient.variables)
    for name, sort in free_vars(f):
        if sort is not Sort.VALUED:
            raise ValueError(f"free {sort.name.lower()} variable {name}: volumes need closed residue and value parts")
        if name not in names:
            raise ValueError(f"free variable {name} is not a coordinate of the ambient space")


def count_and_volume(m: ModelSpec, f: Formula, dim: int, ambient: Optional[Ambient] = None,
                     cache=None, jobs: int = 1) -> VolumeResult:
    """Volume of the definable set {x : f(x)} normalized so vol(O^dim) = 1."""
    ambient = ambient or default_ambient(f)
    if dim != ambient.dim:
        raise ValueError(f"declared dimension {dim} differs from the ambient dimension {ambient.dim}")
    _check_closed(f, ambient)
    key = (f.canonical, m.prime, m.depth, m.max_depth, m.kind.value, ambient.ident())
    if cache is not None:
        record = cache.get(key)
        if record is not None:
            logger.debug(f"volume cache hit for {ambient.ident()} at p={m.prime}")
            return VolumeResult.from_dict(record)
    engine = VolumeEngine(m, f, ambient)
    result = engine.run(jobs=jobs)
    logger.info(f"volume at p={m.prime} ({m.kind.value}): {result.value} "
                f"[depth {result.depth_used}, {result.nodes} cells, unknown {result.unknown_fraction}]")
    if cache is not None:
        cache.put(key, result.to_dict())
    return result


# ----------------------------------------------------------------------------
# Points and cells
# ----------------------------------------------------------------------------

def _product_states(m: ModelSpec, ambient: Ambient, state: State) -> Iterator[State]:
    """All one-digit refinements of every block, in lexicographic order."""
    options = []
    for block, (point, depth) in zip(ambient.blocks, state):
        nxt = block.roots(m) if depth == 0 else block.lifts(m, point, depth)
        options.append([(child, depth + 1) for child in nxt])
    for combo in itertools.product(*options):
        yield tuple(combo)


def _walk_points(m: ModelSpec, ambient: Ambient, lazy: FormulaEvaluator, complete: FormulaEvaluator,
                 residual: Formula, state: State, depth: int, decided: bool) -> Iterator[Tuple[State, TriBool]]:
    env: Dict[str, TruncatedElement] = {}
    for block, (point, d) in zip(ambient.blocks, state):
        env.update(_block_values(m, block, point, d))
    if not decided:
        residual = lazy.residual(residual, env)
        if isinstance(residual, FalseFormula):
            if depth == m.depth:
                yield state, TriBool.FALSE
            else:
                for child in _product_states(m, ambient, state):
                    yield from _walk_points(m, ambient, lazy, complete, FALSE, child, depth + 1, True)
            return
        decided = isinstance(residual, TrueFormula)
    if depth == m.depth:
        if decided:
            yield state, TriBool.TRUE if isinstance(residual, TrueFormula) else TriBool.FALSE
        else:
            yield state, complete.evaluate(residual, env)
        return
    for child in _product_states(m, ambient, state):
        yield from _walk_points(m, ambient, lazy, complete, residual, child, depth + 1, decided)


def _walk(m: ModelSpec, f: Formula, ambient: Ambient) -> Iterator[Tuple[State, TriBool]]:
    lazy = FormulaEvaluator(m, facts=ambient.facts, lazy=True)
    complete = FormulaEvaluator(m, facts=ambient.facts, lazy=False)
    start = tuple((None, 0) for _ in ambient.blocks)
    for child in _product_states(m, ambient, start):
        yield from _walk_points(m, ambient, lazy, complete, f, child, 1, False)


def enumerate_points(m: ModelSpec, f: Formula, ambient: Optional[Ambient] = None) -> Iterator[Dict[str, TruncatedElement]]:
    """Points mod w^depth on which f evaluates to true, in lexicographic order."""
    ambient = ambient or default_ambient(f)
    _check_closed(f, ambient)
    for state, verdict in _walk(m, f, ambient):
        if verdict is TriBool.TRUE:
            env: Dict[str, TruncatedElement] = {}
            for block, (point, d) in zip(ambient.blocks, state):
                env.update(_block_values(m, block, point, d))
            yield env


def point_raws(m: ModelSpec, point: Mapping[str, TruncatedElement], variables: Sequence[str]) -> Tuple[int, ...]:
    return tuple(point[v].raw(m.depth) for v in variables)


def classify_points(m: ModelSpec, f: Formula, ambient: Optional[Ambient] = None) -> Dict[TriBool, int]:
    """How many points mod w^depth evaluate true, false or unknown."""
    ambient = ambient or default_ambient(f)
    _check_closed(f, ambient)
    counts = {v: 0 for v in TriBool}
    for _, verdict in _walk(m, f, ambient):
        counts[verdict] += 1
    return counts


@dataclass
class CellScan:
    cells: List[Cell] = field(default_factory=list)
    unknown_measure: Fraction = Fraction(0)

    @property
    def measure(self) -> Fraction:
        return sum((c.measure for c in self.cells), Fraction(0))


def _scan(engine: VolumeEngine, residual: Formula, state: State, min_depth: int, stop_at_first: bool,
          out: CellScan) -> bool:
    """Depth-first collection of true cells; returns True to stop early."""
    env = engine.assignment(state)
    residual = engine.lazy.residual(residual, env)
    if isinstance(residual, FalseFormula):
        return False
    if isinstance(residual, TrueFormula):
        shallow = [b for b, (_, d) in enumerate(state) if d < min_depth]
        if not shallow:
            out.cells.append(Cell(tuple(pt for pt, _ in state), tuple(d for _, d in state), engine.state_weight(state)))
            return stop_at_first
        for child in engine.children(state, shallow[0]):
            if _scan(engine, TRUE, child, min_depth, stop_at_first, out):
                return True
        return False
    engine.nodes += 1
    b = engine.choose(residual, state)
    if b is None or engine.nodes > engine.model.max_nodes:
        verdict = engine.complete.evaluate(residual, env)
        if verdict is TriBool.TRUE:
            return _scan(engine, TRUE, state, min_depth, stop_at_first, out)
        if verdict is TriBool.UNKNOWN:
            out.unknown_measure += engine.state_weight(state)
        return False
    for child in engine.children(state, b):
        if _scan(engine, residual, child, min_depth, stop_at_first, out):
            return True
    return False


def iter_cells(m: ModelSpec, f: Formula, ambient: Optional[Ambient] = None, min_depth: int = 0) -> CellScan:
    """True cells of f, each refined until every block is known mod w^min_depth."""
    ambient = ambient or default_ambient(f)
    _check_closed(f, ambient)
    engine = VolumeEngine(m, f, ambient)
    out = CellScan()
    _scan(engine, f, engine.initial_state(), min_depth, False, out)
    return out


def find_point(m: ModelSpec, f: Formula, ambient: Optional[Ambient] = None) -> CellScan:
    """First true cell of f if there is one; unknown_measure > 0 means the search was inconclusive."""
    ambient = ambient or default_ambient(f)
    _check_closed(f, ambient)
    engine = VolumeEngine(m, f, ambient)
    out = CellScan()
    _scan(engine, f, engine.initial_state(), 0, True, out)
    return out
