"""
Run configuration: one flat JSON document, overridden by explicit flags.
"""

import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Union

from sympy import isprime

from models.character_engine import CERTIFICATION_DEPTH
from models.classical_groups import GroupDescriptor
from models.formula_builders import GAMMA_NAMES, gamma_library
from models.green_characters import TorusDatum
from models.padic_model import ModelKind, ModelSpec
from models.pas_language import Formula, parse_formula
from utils.point_cache import PointCache

logger = logging.getLogger(__name__)

FORMATS = ('json', 'csv')


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    group: str = 'sp'
    rank: int = 1
    w: str = '(1)'
    alpha: str = 'G2'
    gamma_bound: int = 1
    primes: List[int] = field(default_factory=lambda: [7])
    kinds: List[str] = field(default_factory=lambda: ['mixed'])
    depth: int = 1
    max_depth: int = 8
    lambda_bound: int = 2
    certify_depth: Optional[int] = None
    cache_dir: Optional[str] = None
    format: str = 'json'
    jobs: int = 1
    audit: bool = False

    @classmethod
    def from_json(cls, path: Union[str, Path]) -> 'RunConfig':
        with open(path, 'r', encoding='utf-8') as f:
            document = json.load(f)
        if not isinstance(document, dict):
            raise ConfigError(f"{path}: expected one flat JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(document) - known)
        if unknown:
            raise ConfigError(f"{path}: unknown keys {unknown}")
        logger.info(f"Loaded configuration from {path}")
        return cls(**document)

    @classmethod
    def load(cls, path: Optional[str] = None, overrides: Optional[Mapping[str, Any]] = None) -> 'RunConfig':
        config = cls.from_json(path) if path else cls()
        config = config.with_overrides(overrides or {})
        config.validate()
        return config

    def with_overrides(self, overrides: Mapping[str, Any]) -> 'RunConfig':
        """Flags left at None keep the file value."""
        known = {f.name for f in fields(self)}
        changes = {k: v for k, v in overrides.items() if k in known and v is not None}
        return replace(self, **changes)

    def validate(self) -> None:
        if self.group.lower() not in ('sp', 'so'):
            raise ConfigError(f"group must be 'sp' or 'so', got '{self.group}'")
        if self.rank < 1:
            raise ConfigError(f"rank must be at least 1, got {self.rank}")
        if not self.primes:
            raise ConfigError("at least one prime is required")
        for p in self.primes:
            if p == 2 or not isprime(p):
                raise ConfigError(f"primes must be odd primes, got {p}")
        for kind in self.kinds:
            if kind not in {k.value for k in ModelKind}:
                raise ConfigError(f"unknown model kind '{kind}', expected mixed or equal")
        if self.depth < 1:
            raise ConfigError(f"depth must be at least 1, got {self.depth}")
        if self.max_depth < self.depth:
            raise ConfigError(f"max_depth {self.max_depth} is below depth {self.depth}")
        if self.lambda_bound < 0:
            raise ConfigError(f"lambda_bound must be non-negative, got {self.lambda_bound}")
        if self.certify_depth is not None and self.certify_depth < 1:
            raise ConfigError(f"certify_depth must be at least 1, got {self.certify_depth}")
        if self.format not in FORMATS:
            raise ConfigError(f"unknown format '{self.format}', expected one of {FORMATS}")
        if self.jobs < 1:
            raise ConfigError(f"jobs must be at least 1, got {self.jobs}")
        torus = self.torus()
        if torus.rank != self.rank:
            raise ConfigError(f"w = {torus.w} is not a partition of the rank {self.rank}")

    def descriptor(self) -> GroupDescriptor:
        return GroupDescriptor.from_flag(self.group, self.rank)

    def torus(self) -> TorusDatum:
        return TorusDatum.parse(self.w)

    def certification_depth(self) -> int:
        """Refinement cap for the K^rtu check; G2 with bound B needs depth B + 1."""
        if self.certify_depth is not None:
            return self.certify_depth
        return max(CERTIFICATION_DEPTH, self.gamma_bound + 1)

    def model_kinds(self) -> List[ModelKind]:
        return [ModelKind(k) for k in self.kinds]

    def model(self, prime: Optional[int] = None, kind: Optional[ModelKind] = None) -> ModelSpec:
        return ModelSpec(prime or self.primes[0], self.depth, kind or self.model_kinds()[0],
                         max_depth=self.max_depth)

    def alpha_formula(self) -> Formula:
        """Gamma-library name, '@path' to a formula file, or inline formula text."""
        if self.alpha in GAMMA_NAMES:
            return gamma_library(self.descriptor(), self.alpha, self.gamma_bound)
        if self.alpha.startswith('@'):
            with open(self.alpha[1:], 'r', encoding='utf-8') as f:
                return parse_formula(f.read())
        return parse_formula(self.alpha)

    def cache(self) -> Optional[PointCache]:
        return PointCache.from_environment(self.cache_dir)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

