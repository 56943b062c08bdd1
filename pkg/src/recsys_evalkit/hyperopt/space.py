"""Typed hyperparameter domains and search spaces."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Iterator, Mapping, Sequence

import numpy as np

from ..errors import DomainError


class ParamDomain:
    kind: str

    def sample(self, rng: np.random.Generator):
        raise NotImplementedError

    def contains(self, value) -> bool:
        raise NotImplementedError

    def grid(self, size: int) -> list:
        raise NotImplementedError

    # unit-cube encoding used by the GP surrogate
    @property
    def width(self) -> int:
        return 1

    def encode(self, value) -> list[float]:
        raise NotImplementedError

    def decode(self, u: Sequence[float]):
        raise NotImplementedError

    def to_json(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Discrete(ParamDomain):
    lo: int
    hi: int
    kind = "Discrete"

    def __post_init__(self):
        if not self.lo < self.hi:
            raise DomainError(f"Discrete needs lo < hi, got ({self.lo}, {self.hi})")

    def sample(self, rng):
        return int(rng.integers(self.lo, self.hi + 1))

    def contains(self, value):
        return isinstance(value, (int, np.integer)) and not isinstance(value, bool) and self.lo <= value <= self.hi

    def grid(self, size):
        size = min(size, self.cardinality)
        if size == 1:
            return [(self.lo + self.hi) // 2]
        return [int(x) for x in np.floor(np.linspace(self.lo, self.hi, size) + 0.5)]

    @property
    def cardinality(self):
        return self.hi - self.lo + 1

    def encode(self, value):
        return [(value - self.lo) / (self.hi - self.lo)]

    def decode(self, u):
        return int(np.clip(math.floor(self.lo + float(u[0]) * (self.hi - self.lo) + 0.5), self.lo, self.hi))

    def to_json(self):
        return {"kind": self.kind, "lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class Continuous(ParamDomain):
    lo: float
    hi: float
    kind = "Continuous"

    def __post_init__(self):
        if not self.lo < self.hi:
            raise DomainError(f"Continuous needs lo < hi, got ({self.lo}, {self.hi})")

    def sample(self, rng):
        return float(rng.uniform(self.lo, self.hi))

    def contains(self, value):
        return isinstance(value, (int, float, np.floating, np.integer)) and not isinstance(value, bool) and self.lo <= value <= self.hi

    def grid(self, size):
        if size == 1:
            return [(self.lo + self.hi) / 2]
        return [float(x) for x in np.linspace(self.lo, self.hi, size)]

    def encode(self, value):
        return [(value - self.lo) / (self.hi - self.lo)]

    def decode(self, u):
        return float(np.clip(self.lo + float(u[0]) * (self.hi - self.lo), self.lo, self.hi))

    def to_json(self):
        return {"kind": self.kind, "lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class LogContinuous(ParamDomain):
    lo: float
    hi: float
    kind = "LogContinuous"

    def __post_init__(self):
        if not self.lo < self.hi:
            raise DomainError(f"LogContinuous needs lo < hi, got ({self.lo}, {self.hi})")
        if self.lo <= 0:
            raise DomainError("LogContinuous needs lo > 0")

    def sample(self, rng):
        return float(np.exp(rng.uniform(math.log(self.lo), math.log(self.hi))))

    def contains(self, value):
        return isinstance(value, (int, float, np.floating, np.integer)) and not isinstance(value, bool) and self.lo <= value <= self.hi * (1 + 1e-12)

    def grid(self, size):
        if size == 1:
            return [math.sqrt(self.lo * self.hi)]
        return [float(x) for x in np.geomspace(self.lo, self.hi, size)]

    def encode(self, value):
        return [(math.log(value) - math.log(self.lo)) / (math.log(self.hi) - math.log(self.lo))]

    def decode(self, u):
        lo, hi = math.log(self.lo), math.log(self.hi)
        return float(np.clip(math.exp(lo + float(u[0]) * (hi - lo)), self.lo, self.hi))

    def to_json(self):
        return {"kind": self.kind, "lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class Categorical(ParamDomain):
    values: tuple
    kind = "Categorical"

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))
        if not self.values:
            raise DomainError("Categorical needs at least one value")

    def sample(self, rng):
        return self.values[int(rng.integers(len(self.values)))]

    def contains(self, value):
        return any(value == v and type(value) is type(v) for v in self.values)

    def grid(self, size):
        return list(self.values)

    @property
    def cardinality(self):
        return len(self.values)

    @property
    def width(self):
        return len(self.values)

    def encode(self, value):
        return [1.0 if (value == v and type(value) is type(v)) else 0.0 for v in self.values]

    def decode(self, u):
        return self.values[int(np.argmax(u))]

    def to_json(self):
        return {"kind": self.kind, "values": list(self.values)}


def domain_from_json(d: Mapping[str, Any]) -> ParamDomain:
    kind = d["kind"]
    if kind == "Categorical":
        return Categorical(tuple(d["values"]))
    cls = {"Discrete": Discrete, "Continuous": Continuous, "LogContinuous": LogContinuous}.get(kind)
    if cls is None:
        raise DomainError(f"unknown domain kind {kind!r}")
    return cls(d["lo"], d["hi"])


class SearchSpace:
    """An ordered list of named domains."""

    def __init__(self, dims: Sequence[tuple[str, ParamDomain]] | Mapping[str, ParamDomain] = ()):
        items = list(dims.items()) if isinstance(dims, Mapping) else list(dims)
        names = [n for n, _ in items]
        if len(set(names)) != len(names):
            raise DomainError(f"duplicate parameter names in {names}")
        self._dims = tuple(items)

    def __iter__(self) -> Iterator[tuple[str, ParamDomain]]:
        return iter(self._dims)

    def __len__(self):
        return len(self._dims)

    def __getitem__(self, name):
        for n, d in self._dims:
            if n == name:
                return d
        raise KeyError(name)

    def __contains__(self, name):
        return any(n == name for n, _ in self._dims)

    def __eq__(self, other):
        return isinstance(other, SearchSpace) and self._dims == other._dims

    def __repr__(self):
        return f"SearchSpace({dict(self._dims)!r})"

    @property
    def names(self) -> list[str]:
        return [n for n, _ in self._dims]

    def validate(self, params: Mapping[str, Any]) -> None:
        if set(params) != set(self.names):
            raise DomainError(f"params {sorted(params)} do not match space {self.names}")
        for n, d in self._dims:
            if not d.contains(params[n]):
                raise DomainError(f"{n}={params[n]!r} outside {d}")

    def override(self, **domains: ParamDomain) -> SearchSpace:
        for n in domains:
            if n not in self:
                raise DomainError(f"unknown parameter {n!r} (space has {self.names})")
        return SearchSpace([(n, domains.get(n, d)) for n, d in self._dims])

    # encoding helpers
    @property
    def width(self) -> int:
        return sum(d.width for _, d in self._dims)

    def encode(self, params: Mapping[str, Any]) -> np.ndarray:
        out = []
        for n, d in self._dims:
            out.extend(d.encode(params[n]))
        return np.asarray(out, dtype=np.float64)

    def decode(self, u) -> dict[str, Any]:
        out = {}
        pos = 0
        for n, d in self._dims:
            out[n] = d.decode(u[pos : pos + d.width])
            pos += d.width
        return out

    def numeric_mask(self) -> np.ndarray:
        """True for encoded coordinates that are not one-hot categorical bits."""
        mask = []
        for _, d in self._dims:
            mask.extend([not isinstance(d, Categorical)] * d.width)
        return np.asarray(mask, bool)

    def to_json(self) -> dict:
        return {n: d.to_json() for n, d in self._dims}
