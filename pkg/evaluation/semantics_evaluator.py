"""
Exhaustive-substitution oracle for formulas over O/w^k.

The oracle never touches the truncated arithmetic of the model: every
valued variable is replaced by each exact lift of its residue class one digit
further, terms are computed exactly (rationals in mixed characteristic,
polynomials over F_p in equal characteristic) and atoms are decided with
plain Python comparisons.  A verdict of the three-valued evaluator that is
TRUE or FALSE must hold on every lift.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from models.padic_model import ModelKind, ModelSpec, TriBool, TruncatedElement, eval_formula
from models.pas_language import (
    Ac, Add, And, CongMod, Eq, Exists, FalseFormula, Forall, Formula, IntConst, Leq, Mul, Neg, Neq, Not,
    Or, Ord, RationalConst, Sort, Term, TrueFormula, ValueInfinity, Var, free_vars, parse_formula,
)

logger = logging.getLogger(__name__)

INF = math.inf

# Formulas the full oracle run covers: every sort, both quantifiers, congruences, one and two variables
ORACLE_LIBRARY = (
    "ord(x) >= 0",
    "ord(x) >= 1",
    "ord(x) >= 2",
    "ord(x) = 1",
    "ord(x - 1) >= 2",
    "ord(x) = 0 /\\ ac(x) = 2",
    "ord(x) <= 1 /\\ ac(x) = 1",
    "exists a:r. ord(x) = 0 /\\ ac(x) = a*a",
    "ord(x) = 0 /\\ (forall a:r. ac(x) != a*a)",
    "ord(x*x - 1) >= 1",
    "ord(x) = 0 /\\ ord(x + 1) >= 1",
    "cong(2; ord(x), 0) /\\ ord(x) <= 2",
    "exists z:z. 0 <= z /\\ z <= 1 /\\ ord(x) = z + z",
    "cong(2; ord(x*x*x), 1)",
    "x = 0",
    "ac(x + 1) = 1",
    "ord(x*y) >= 2",
    "ord(x + y) <= ord(x)",
    "ord(x) >= 1 \\/ ord(y) >= 1",
    "ord(x) = 0 /\\ ord(y) = 0 /\\ ac(x*y) = 1",
    "ord(x) = 0 /\\ ord(x + y) >= 1",
    "ord(x*y - 1) >= 1 /\\ ord(x - y) >= 1",
)


class OracleError(ValueError):
    pass


class ExactField:
    """Exact elements: Fraction (mixed) or a tuple of F_p coefficients of t^0, t^1, ... (equal)."""

    def __init__(self, p: int, kind: ModelKind):
        self.p = p
        self.kind = kind

    def _trim(self, coeffs: List[int]) -> Tuple[int, ...]:
        while coeffs and coeffs[-1] == 0:
            coeffs.pop()
        return tuple(coeffs)

    def from_raw(self, raw: int):
        if self.kind is ModelKind.MIXED:
            return Fraction(raw)
        digits = []
        while raw:
            digits.append(raw % self.p)
            raw //= self.p
        return self._trim(digits)

    def constant(self, value) -> Any:
        value = Fraction(value)
        if value.denominator % self.p == 0:
            raise OracleError(f"constant {value} is not p-integral")
        if self.kind is ModelKind.MIXED:
            return value
        return self._trim([value.numerator * pow(value.denominator, -1, self.p) % self.p])

    def add(self, a, b):
        if self.kind is ModelKind.MIXED:
            return a + b
        n = max(len(a), len(b))
        return self._trim([((a[i] if i < len(a) else 0) + (b[i] if i < len(b) else 0)) % self.p for i in range(n)])

    def neg(self, a):
        if self.kind is ModelKind.MIXED:
            return -a
        return self._trim([(-c) % self.p for c in a])

    def mul(self, a, b):
        if self.kind is ModelKind.MIXED:
            return a * b
        if not a or not b:
            return ()
        out = [0] * (len(a) + len(b) - 1)
        for i, x in enumerate(a):
            for j, y in enumerate(b):
                out[i + j] = (out[i + j] + x * y) % self.p
        return self._trim(out)

    def is_zero(self, a) -> bool:
        return a == 0 if self.kind is ModelKind.MIXED else not a

    def ord(self, a):
        if self.is_zero(a):
            return INF
        if self.kind is ModelKind.EQUAL:
            return next(i for i, c in enumerate(a) if c)
        num, den, v = a.numerator, a.denominator, 0
        while num % self.p == 0:
            num //= self.p
            v += 1
        while den % self.p == 0:
            den //= self.p
            v -= 1
        return v

    def ac(self, a) -> int:
        if self.is_zero(a):
            return 0
        v = self.ord(a)
        if self.kind is ModelKind.EQUAL:
            return a[v]
        unit = a / Fraction(self.p) ** v
        return unit.numerator * pow(unit.denominator, -1, self.p) % self.p


class ExactEvaluator:
    """Two-valued semantics on exact assignments; quantifier domains match the model's."""

    def __init__(self, m: ModelSpec):
        self.m = m
        self.p = m.prime
        self.field = ExactField(m.prime, m.kind)

    def domain(self, var: Var):
        if var.sort is Sort.RESIDUE:
            return range(self.p)
        if var.sort is Sort.VALUE:
            return range(-self.m.bound, self.m.bound + 1)
        return [self.field.from_raw(raw) for raw in range(self.p ** self.m.depth)]

    def term(self, t: Term, env: Mapping[str, Any]):
        F = self.field
        if isinstance(t, Var):
            return env[t.name]
        if isinstance(t, IntConst):
            if t.sort is Sort.VALUED:
                return F.constant(t.value)
            if t.sort is Sort.RESIDUE:
                return t.value % self.p
            return t.value
        if isinstance(t, RationalConst):
            return F.constant(t.value)
        if isinstance(t, ValueInfinity):
            return INF
        if isinstance(t, Ord):
            return F.ord(self.term(t.arg, env))
        if isinstance(t, Ac):
            return F.ac(self.term(t.arg, env))
        if isinstance(t, Neg):
            a = self.term(t.arg, env)
            if t.sort is Sort.VALUED:
                return F.neg(a)
            return (-a) % self.p if t.sort is Sort.RESIDUE else -a
        a, b = self.term(t.left, env), self.term(t.right, env)
        if isinstance(t, Add):
            if t.sort is Sort.VALUED:
                return F.add(a, b)
            return (a + b) % self.p if t.sort is Sort.RESIDUE else a + b
        if isinstance(t, Mul):
            if t.sort is Sort.VALUED:
                return F.mul(a, b)
            return (a * b) % self.p
        raise OracleError(f"unsupported term {type(t).__name__}")

    def formula(self, f: Formula, env: Mapping[str, Any]) -> bool:
        if isinstance(f, TrueFormula):
            return True
        if isinstance(f, FalseFormula):
            return False
        if isinstance(f, And):
            return all(self.formula(a, env) for a in f.args)
        if isinstance(f, Or):
            return any(self.formula(a, env) for a in f.args)
        if isinstance(f, Not):
            return not self.formula(f.arg, env)
        if isinstance(f, (Exists, Forall)):
            values = (self.formula(f.body, {**env, f.var.name: v}) for v in self.domain(f.var))
            return any(values) if isinstance(f, Exists) else all(values)
        a, b = self.term(f.left, env), self.term(f.right, env)
        if isinstance(f, Eq):
            return a == b
        if isinstance(f, Neq):
            return a != b
        if isinstance(f, Leq):
            return a <= b
        if isinstance(f, CongMod):
            if a == INF or b == INF:
                return a == b
            return (a - b) % f.modulus == 0
        raise OracleError(f"unsupported formula {type(f).__name__}")


def lift_verdict(m: ModelSpec, f: Formula, point: Mapping[str, Any], extra_digits: int = 1) -> TriBool:
    """TRUE/FALSE if every lift of the valued coordinates one step deeper agrees, else UNKNOWN."""
    evaluator = ExactEvaluator(m)
    valued = [name for name, sort in free_vars(f) if sort is Sort.VALUED]
    step, width = m.prime ** m.depth, m.prime ** extra_digits
    seen = set()
    for offsets in itertools.product(range(width), repeat=len(valued)):
        env = dict(point)
        for name, k in zip(valued, offsets):
            env[name] = evaluator.field.from_raw(point[name] + k * step)
        seen.add(evaluator.formula(f, env))
        if len(seen) == 2:
            return TriBool.UNKNOWN
    return TriBool.of(seen.pop())


@dataclass
class OracleReport:
    formula: str
    prime: int
    depth: int
    kind: str
    points: int = 0
    resolved: int = 0
    agreed: int = 0
    mismatches: List[Dict[str, Any]] = field(default_factory=list)

    @property
    def agreement(self) -> float:
        return 1.0 if self.resolved == 0 else self.agreed / self.resolved

    def to_dict(self) -> Dict[str, Any]:
        return {
            'formula': self.formula, 'prime': self.prime, 'depth': self.depth, 'kind': self.kind,
            'points': self.points, 'resolved': self.resolved, 'agreed': self.agreed,
            'agreement': self.agreement, 'mismatches': self.mismatches[:5],
        }


def _points(m: ModelSpec, f: Formula, max_points: Optional[int], seed: int) -> List[Dict[str, int]]:
    pairs = free_vars(f)
    ranges = []
    for _, sort in pairs:
        if sort is Sort.VALUED:
            ranges.append(range(m.prime ** m.depth))
        elif sort is Sort.RESIDUE:
            ranges.append(range(m.prime))
        else:
            ranges.append(range(-m.bound, m.bound + 1))
    total = int(np.prod([len(r) for r in ranges])) if ranges else 1
    if max_points is None or total <= max_points:
        combos = list(itertools.product(*ranges))
    else:
        rng = np.random.default_rng(seed)
        combos = sorted({tuple(int(r[rng.integers(len(r))]) for r in ranges) for _ in range(max_points)})
    return [dict(zip((name for name, _ in pairs), c)) for c in combos]


def compare_with_oracle(m: ModelSpec, f: Formula, max_points: Optional[int] = 400, seed: int = 0) -> OracleReport:
    """Run eval_formula and the oracle on every (or a seeded sample of) point mod w^depth."""
    sorts = dict(free_vars(f))
    report = OracleReport(f.canonical, m.prime, m.depth, m.kind.value)
    for point in _points(m, f, max_points, seed):
        asg = {}
        for name, value in point.items():
            if sorts[name] is Sort.VALUED:
                asg[name] = TruncatedElement.from_raw(m.prime, m.kind, value, m.depth)
            else:
                asg[name] = value
        report.points += 1
        verdict = eval_formula(m, f, asg)
        if verdict is TriBool.UNKNOWN:
            continue
        report.resolved += 1
        expected = lift_verdict(m, f, point)
        if expected is verdict:
            report.agreed += 1
        else:
            report.mismatches.append({'point': point, 'evaluator': verdict.value, 'oracle': expected.value})
    if report.mismatches:
        logger.warning(f"{len(report.mismatches)} oracle mismatches for {f.canonical} at p={m.prime}, k={m.depth}")
    return report


def oracle_library() -> List[Formula]:
    return [parse_formula(text) for text in ORACLE_LIBRARY]


def run_oracle_suite(formulas: Sequence[Formula], primes: Sequence[int] = (3, 5, 7),
                     depths: Sequence[int] = (1, 2, 3), kinds: Sequence[ModelKind] = (ModelKind.MIXED,),
                     max_points: Optional[int] = 400) -> pd.DataFrame:
    rows = []
    for f in formulas:
        for p in primes:
            for k in depths:
                for kind in kinds:
                    rows.append(compare_with_oracle(ModelSpec(p, k, kind), f, max_points).to_dict())
    frame = pd.DataFrame(rows)
    logger.info(f"Oracle suite: {int(frame['resolved'].sum())} resolved points, "
                f"{int(frame['agreed'].sum())} in agreement")
    return frame
