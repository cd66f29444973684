"""Code design parameters and their JSON form."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

import numpy as np

MODES = ("dense", "packet-level")
_MODE_ALIASES = {"dense": "dense", "dense-check": "dense", "packet-level": "packet-level", "packet": "packet-level"}


class SpecError(ValueError):
    pass


class DegreeDistribution:
    """Check-degree generating polynomial ``P(x) = sum_i p_i x^i`` with ``i >= 2``.

    Coefficients are kept as given.  Tabulated distributions are rounded and
    may miss 1 by a few units in the last place, so ``atol`` can be widened;
    ``probs`` is always renormalised for sampling while ``derivative`` and
    ``mean_degree`` use the coefficients as written.
    """

    def __init__(self, coeffs, normalize=False, atol=1e-9):
        coeffs = {int(k): float(v) for k, v in dict(coeffs).items() if float(v) != 0.0}
        if not coeffs:
            raise SpecError("empty degree distribution")
        if min(coeffs) < 2:
            raise SpecError("check degrees must be at least 2")
        if any(v < 0 for v in coeffs.values()):
            raise SpecError("negative degree probability")
        total = sum(coeffs.values())
        if normalize:
            coeffs = {k: v / total for k, v in coeffs.items()}
        elif abs(total - 1.0) > atol:
            raise SpecError(f"degree probabilities sum to {total!r}, not 1")
        self.coeffs = dict(sorted(coeffs.items()))

    @classmethod
    def from_array(cls, p, normalize=False):
        """``p[k]`` is the probability of degree ``k + 2``."""
        return cls({k + 2: v for k, v in enumerate(p)}, normalize=normalize)

    @property
    def max_degree(self):
        return max(self.coeffs)

    @property
    def degrees(self):
        return np.array(list(self.coeffs), dtype=np.int64)

    @property
    def weights(self):
        return np.array(list(self.coeffs.values()))

    @property
    def probs(self):
        w = self.weights
        return w / w.sum()

    def as_array(self, D=None):
        D = D or self.max_degree
        out = np.zeros(D - 1)
        for k, v in self.coeffs.items():
            out[k - 2] = v
        return out

    def mean_degree(self):
        return float(self.degrees @ self.weights)

    def derivative(self, x):
        """P'(x), vectorised over ``x``."""
        x = np.asarray(x, dtype=float)
        return np.power.outer(x, self.degrees - 1) @ (self.degrees * self.weights)

    def to_json(self):
        return {str(k): v for k, v in self.coeffs.items()}

    def __eq__(self, other):
        return isinstance(other, DegreeDistribution) and self.coeffs == other.coeffs

    def __repr__(self):
        return f"DegreeDistribution({self.coeffs})"


@dataclass
class Robust:
    delta0: float
    Delta: float


@dataclass
class CodeSpec:
    """Everything needed to rebuild a code: sizes, rates, P(x), mode and the shared seed.

    ``x0`` and ``delta`` are the asymptotic design point; they are only needed
    by the analysis commands.
    """

    g: int
    n: int
    q: int
    R: float
    R_prime: float
    P: DegreeDistribution
    mode: str = "dense"
    seed: int = 0
    robust: Optional[Robust] = None
    x0: Optional[float] = None
    delta: Optional[float] = None
    name: str = ""
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in _MODE_ALIASES:
            raise SpecError(f"unknown mode {self.mode!r}")
        self.mode = _MODE_ALIASES[self.mode]
        if self.q not in (2, 16, 256):
            raise SpecError(f"unsupported q={self.q}")
        if not (0 < self.R <= 1 and 0 < self.R_prime <= 1):
            raise SpecError("rates must lie in (0, 1]")
        if self.g < 1 or self.n < 1:
            raise SpecError("g and n must be positive")
        if self.K_info < 1:
            raise SpecError("no information packets at these rates")

    @property
    def N(self):
        return self.n * self.g

    @property
    def K(self):
        return int(round(self.R * self.N))

    @property
    def K_info(self):
        return int(round(self.R_prime * self.K))

    @property
    def m(self):
        return {2: 1, 16: 4, 256: 8}[self.q]

    def replace(self, **kw):
        d = dict(self.__dict__)
        d.update(kw)
        return CodeSpec(**d)

    def to_json(self):
        out = {
            "name": self.name,
            "g": self.g,
            "n": self.n,
            "q": self.q,
            "R": self.R,
            "R_prime": self.R_prime,
            "mode": self.mode,
            "P": self.P.to_json(),
            "seed": self.seed,
        }
        if self.robust:
            out["robust"] = {"delta0": self.robust.delta0, "Delta": self.robust.Delta}
        if self.x0 is not None:
            out["x0"] = self.x0
        if self.delta is not None:
            out["delta"] = self.delta
        out.update(self.extra)
        return out

    def dumps(self):
        return json.dumps(self.to_json(), indent=2)

    @classmethod
    def from_json(cls, d):
        d = dict(d)
        try:
            P = d.pop("P")
            robust = d.pop("robust", None)
            known = {"g", "n", "q", "R", "R_prime", "mode", "seed", "x0", "delta", "name"}
            extra = {k: d.pop(k) for k in list(d) if k not in known}
            return cls(
                # tabulated distributions are rounded to 4 decimals and may miss 1 by ~1e-4
                P=DegreeDistribution(P, atol=1e-3),
                robust=Robust(float(robust["delta0"]), float(robust["Delta"])) if robust else None,
                extra=extra,
                **d,
            )
        except (KeyError, TypeError) as e:
            raise SpecError(f"malformed code spec: {e}") from e

    @classmethod
    def loads(cls, text):
        try:
            return cls.from_json(json.loads(text))
        except json.JSONDecodeError as e:
            raise SpecError(f"malformed JSON: {e}") from e

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.loads(fh.read())


def builtin_names():
    files = resources.files("gammanet.specs").iterdir()
    return sorted(p.name[:-5] for p in files if p.name.endswith(".json"))


def builtin(name, **overrides):
    """Load one of the shipped design fixtures (``c1`` .. ``c10``, ``heuristic``, ``c4_1675`` ...)."""
    text = resources.files("gammanet.specs").joinpath(f"{name}.json").read_text()
    spec = CodeSpec.loads(text)
    return spec.replace(**overrides) if overrides else spec
