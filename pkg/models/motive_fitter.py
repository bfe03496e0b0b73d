"""
Exact fits of cross-prime value tables in the ring Q[L, L^-1, (L^i - 1)^-1].

A value table holds one exact rational per (p, model kind).  The fitter
searches ansatz shapes in a fixed order, solves for the numerator exactly on
as many rows as there are coefficients and keeps the shape only if every
remaining row matches.  L is the formal Lefschetz symbol; specialising it to
q is the trace of Frobenius.
"""

import itertools
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import pandas as pd
import sympy
from sympy import Poly, Symbol, cyclotomic_poly, factor_list, totient

from models.character_engine import AverageSpec, direct_average, volume_average
from models.padic_model import ModelKind

logger = logging.getLogger(__name__)

L = Symbol('L')


class NoAnsatzFitsError(ValueError):
    pass


class PoleError(ValueError):
    pass


class ValueTableError(ValueError):
    pass


# ----------------------------------------------------------------------------
# Expressions
# ----------------------------------------------------------------------------

def _to_rational(value) -> sympy.Rational:
    value = Fraction(value)
    return sympy.Rational(value.numerator, value.denominator)


@dataclass(frozen=True)
class MotiveExpression:
    """sum_k numerator[k] L^(low + k), divided by prod_i (L^i - 1) over factors."""
    numerator: Tuple[Fraction, ...]
    low: int = 0
    factors: Tuple[int, ...] = ()

    def __post_init__(self):
        if any(i < 1 for i in self.factors):
            raise ValueError(f"denominator factors must be L^i - 1 with i >= 1, got {self.factors}")
        object.__setattr__(self, 'numerator', tuple(Fraction(c) for c in self.numerator))
        object.__setattr__(self, 'factors', tuple(sorted(self.factors)))

    @classmethod
    def from_terms(cls, terms: Dict[int, Fraction], factors: Sequence[int] = ()) -> 'MotiveExpression':
        """Numerator given as {exponent: coefficient}."""
        terms = {e: Fraction(c) for e, c in terms.items() if c}
        if not terms:
            return cls((), 0, tuple(factors))
        low, high = min(terms), max(terms)
        return cls(tuple(terms.get(e, Fraction(0)) for e in range(low, high + 1)), low, tuple(factors))

    @property
    def is_zero(self) -> bool:
        return not any(self.numerator)

    def terms(self) -> Dict[int, Fraction]:
        return {self.low + k: c for k, c in enumerate(self.numerator) if c}

    def reduced(self) -> 'MotiveExpression':
        """Strip trailing zeros into the power of L and cancel every (L^i - 1) that divides the numerator."""
        if self.is_zero:
            return MotiveExpression((), 0, ())
        coeffs = list(self.numerator)
        low = self.low
        while coeffs and coeffs[0] == 0:
            coeffs.pop(0)
            low += 1
        while coeffs and coeffs[-1] == 0:
            coeffs.pop()
        num = Poly(sum((_to_rational(c) * L ** k for k, c in enumerate(coeffs)), sympy.Integer(0)), L, domain='QQ')
        remaining = []
        for i in sorted(self.factors, reverse=True):
            quotient, remainder = num.div(Poly(L ** i - 1, L, domain='QQ'))
            if remainder.is_zero:
                num = quotient
            else:
                remaining.append(i)
        coeffs = [Fraction(str(c)) for c in reversed(num.all_coeffs())]
        while coeffs and coeffs[0] == 0:
            coeffs.pop(0)
            low += 1
        return MotiveExpression(tuple(coeffs), low, tuple(remaining))

    def to_sympy(self):
        num = sum((_to_rational(c) * L ** (self.low + k) for k, c in enumerate(self.numerator)), sympy.Integer(0))
        den = sympy.Mul(*[L ** i - 1 for i in self.factors])
        return num / den

    def in_localized_ring(self) -> bool:
        return in_localized_ring(self.to_sympy())

    def __str__(self) -> str:
        return str(self.to_sympy())

    def to_dict(self) -> Dict:
        return {
            'expression': str(self),
            'numerator': {str(e): str(c) for e, c in sorted(self.terms().items())},
            'denominator_factors': list(self.factors),
        }


def _is_cyclotomic(f: Poly) -> bool:
    d = f.degree()
    for n in range(1, 4 * d * d + 7):
        if totient(n) == d and f.monic() == Poly(cyclotomic_poly(n, L), L, domain='QQ'):
            return True
    return False


def in_localized_ring(expr) -> bool:
    """True iff expr is a polynomial in L over Q divided by L^a times products of cyclotomic factors."""
    expr = sympy.cancel(sympy.together(sympy.sympify(expr)))
    num, den = sympy.fraction(expr)
    if not (Poly(num, L).domain.is_QQ or Poly(num, L).domain.is_ZZ):
        return False
    _, parts = factor_list(Poly(den, L, domain='QQ'))
    for f, _ in parts:
        if f.degree() == 1 and f.monic() == Poly(L, L, domain='QQ'):
            continue
        if not _is_cyclotomic(f):
            return False
    return True


def trace_frobenius(m: MotiveExpression, q: int) -> Fraction:
    """Specialise L to q exactly."""
    den = Fraction(1)
    for i in m.factors:
        den *= q ** i - 1
    if den == 0 or (q == 0 and m.low < 0 and not m.is_zero):
        raise PoleError(f"{m} has a pole at L = {q}")
    num = Fraction(0)
    for k, c in enumerate(m.numerator):
        if c:
            num += c * Fraction(q) ** (m.low + k)
    return num / den


# ----------------------------------------------------------------------------
# Value tables
# ----------------------------------------------------------------------------

@dataclass
class ValueTable:
    """One exact value per (p, kind); mixed and equal characteristic must agree at each p."""
    rows: Dict[Tuple[int, ModelKind], Fraction] = field(default_factory=dict)

    def add(self, p: int, kind: ModelKind, value) -> None:
        value = Fraction(value)
        key = (int(p), kind)
        if key in self.rows and self.rows[key] != value:
            raise ValueTableError(f"two values for p={p} ({kind.value}): {self.rows[key]} and {value}")
        for other_kind in ModelKind:
            other = self.rows.get((int(p), other_kind))
            if other_kind is not kind and other is not None and other != value:
                raise ValueTableError(
                    f"p={p}: {kind.value} value {value} differs from {other_kind.value} value {other}")
        self.rows[key] = value

    @classmethod
    def from_rows(cls, rows: Sequence[Tuple]) -> 'ValueTable':
        """Rows (p, value) or (p, kind, value)."""
        table = cls()
        for row in rows:
            if len(row) == 2:
                table.add(row[0], ModelKind.MIXED, row[1])
            else:
                kind = row[1] if isinstance(row[1], ModelKind) else ModelKind(row[1])
                table.add(row[0], kind, row[2])
        return table

    def by_prime(self) -> List[Tuple[int, Fraction]]:
        out: Dict[int, Fraction] = {}
        for (p, _), value in self.rows.items():
            out[p] = value
        return sorted(out.items())

    @property
    def primes(self) -> List[int]:
        return [p for p, _ in self.by_prime()]

    def __len__(self) -> int:
        return len(self.by_prime())

    def to_frame(self) -> pd.DataFrame:
        records = [{'prime': p, 'kind': kind.value, 'value': str(v)}
                   for (p, kind), v in sorted(self.rows.items(), key=lambda item: (item[0][0], item[0][1].value))]
        return pd.DataFrame(records, columns=['prime', 'kind', 'value'])


# ----------------------------------------------------------------------------
# Ansatz search
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class Ansatz:
    support: Tuple[int, ...]
    factors: Tuple[int, ...] = ()

    @property
    def size(self) -> int:
        return len(self.support)

    def sort_key(self) -> Tuple:
        degree = max(abs(e) for e in self.support)
        return (self.size + len(self.factors), degree, sum(self.factors), self.support, self.factors)


@dataclass(frozen=True)
class AnsatzBounds:
    """Numerator exponents lie in [-max_negative, max_degree]; at most max_factors denominators L^i - 1, i <= max_factor."""
    max_degree: int = 3
    max_negative: int = 8
    max_terms: int = 4
    max_factor: int = 2
    max_factors: int = 2

    def candidates(self, rows: int) -> List[Ansatz]:
        """Every shape with at least one held-out row, in search order."""
        exponents = range(-self.max_negative, self.max_degree + 1)
        factor_sets = [()]
        for k in range(1, self.max_factors + 1):
            factor_sets.extend(itertools.combinations_with_replacement(range(1, self.max_factor + 1), k))
        out = []
        for size in range(1, min(self.max_terms, rows - 1) + 1):
            for support in itertools.combinations(exponents, size):
                for factors in factor_sets:
                    out.append(Ansatz(support, tuple(factors)))
        out.sort(key=Ansatz.sort_key)
        return out


def _rational(x: Fraction) -> sympy.Rational:
    return sympy.Rational(x.numerator, x.denominator)


def solve_exact(A: List[List[Fraction]], b: List[Fraction]) -> Optional[List[Fraction]]:
    """Square system over Q; None if A is singular."""
    M = sympy.Matrix([[_rational(x) for x in row] for row in A])
    if M.det() == 0:
        return None
    try:
        x = M.LUsolve(sympy.Matrix([_rational(v) for v in b]))
    except ValueError:
        return None
    return [Fraction(int(v.p), int(v.q)) for v in x]


def _try_ansatz(ansatz: Ansatz, samples: List[Tuple[int, Fraction]]) -> Optional[MotiveExpression]:
    def scaled(p: int, value: Fraction) -> Fraction:
        for i in ansatz.factors:
            value *= p ** i - 1
        return value

    head, held_out = samples[:ansatz.size], samples[ansatz.size:]
    A = [[Fraction(p) ** e for e in ansatz.support] for p, _ in head]
    b = [scaled(p, v) for p, v in head]
    coeffs = solve_exact(A, b)
    if coeffs is None:
        return None
    candidate = MotiveExpression.from_terms(dict(zip(ansatz.support, coeffs)), ansatz.factors)
    for p, v in held_out:
        if trace_frobenius(candidate, p) != v:
            return None
    return candidate


def iter_fits(table: ValueTable, bounds: AnsatzBounds = AnsatzBounds()) -> Iterator[Tuple[Ansatz, MotiveExpression]]:
    samples = table.by_prime()
    for ansatz in bounds.candidates(len(samples)):
        found = _try_ansatz(ansatz, samples)
        if found is not None:
            yield ansatz, found


def fit(table: ValueTable, bounds: AnsatzBounds = AnsatzBounds()) -> MotiveExpression:
    """First ansatz in search order that reproduces every row exactly, reduced."""
    if len(table) < 2:
        raise NoAnsatzFitsError(f"need at least two primes to fit with a held-out row, got {len(table)}")
    for ansatz, found in iter_fits(table, bounds):
        expression = found.reduced()
        logger.info(f"fitted {expression} with support {ansatz.support} and factors {ansatz.factors} "
                    f"on primes {table.primes}")
        return expression
    raise NoAnsatzFitsError(
        f"no ansatz with exponents in [-{bounds.max_negative}, {bounds.max_degree}], at most {bounds.max_terms} "
        f"terms and factors up to L^{bounds.max_factor} - 1 fits primes {table.primes}; widen the bounds")


# ----------------------------------------------------------------------------
# Cross-validation
# ----------------------------------------------------------------------------

EXCLUDED_PRIME_BOUND = 5

MATCH, MISMATCH, EXCLUDED = 'match', 'mismatch', 'excluded'


@dataclass
class CrossValidationRow:
    prime: int
    kind: ModelKind
    predicted: Optional[Fraction]
    observed: Fraction
    status: str

    def to_dict(self) -> Dict[str, str]:
        return {
            'prime': str(self.prime),
            'kind': self.kind.value,
            'predicted': str(self.predicted) if self.predicted is not None else 'pole',
            'observed': str(self.observed),
            'status': self.status,
        }


@dataclass
class CrossValidationReport:
    expression: MotiveExpression
    rows: List[CrossValidationRow]

    @property
    def ok(self) -> bool:
        return all(row.status != MISMATCH for row in self.rows)

    @property
    def kinds_agree(self) -> bool:
        """Observed values coincide across model kinds at every prime."""
        seen: Dict[int, Fraction] = {}
        for row in self.rows:
            if seen.setdefault(row.prime, row.observed) != row.observed:
                return False
        return True

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([row.to_dict() for row in self.rows],
                            columns=['prime', 'kind', 'predicted', 'observed', 'status'])

    def to_dict(self) -> Dict:
        return {
            'expression': self.expression.to_dict(),
            'ok': self.ok,
            'kinds_agree': self.kinds_agree,
            'rows': [row.to_dict() for row in self.rows],
        }


Observer = Callable[[int, ModelKind], Fraction]


def _observer(spec, path: str) -> Observer:
    if not isinstance(spec, AverageSpec):
        return spec
    runner = {'direct': direct_average, 'volume': volume_average}[path]

    def observe(p: int, kind: ModelKind) -> Fraction:
        return runner(spec.with_model(spec.model.with_prime(p).with_kind(kind))).value
    return observe


def cross_validate(m: MotiveExpression, spec: Union[AverageSpec, Observer], primes: Sequence[int],
                   kinds: Sequence[ModelKind] = (ModelKind.MIXED, ModelKind.EQUAL),
                   path: str = 'direct') -> CrossValidationReport:
    """Compare the trace of Frobenius of m with fresh runs; spec is an AverageSpec or any (p, kind) -> value."""
    observe = _observer(spec, path)
    rows = []
    for p in primes:
        for kind in kinds:
            observed = Fraction(observe(p, kind))
            try:
                predicted = trace_frobenius(m, p)
            except PoleError:
                predicted = None
            if predicted == observed:
                status = MATCH
            elif p <= EXCLUDED_PRIME_BOUND:
                status = EXCLUDED
                logger.warning(f"p={p} ({kind.value}): predicted {predicted}, observed {observed}; "
                               f"treated as an excluded small prime")
            else:
                status = MISMATCH
                logger.warning(f"p={p} ({kind.value}): predicted {predicted}, observed {observed}")
            rows.append(CrossValidationRow(p, kind, predicted, observed, status))
    report = CrossValidationReport(m, rows)
    logger.info(f"cross-validation of {m}: {'ok' if report.ok else 'FAILED'} on {len(rows)} runs")
    return report
