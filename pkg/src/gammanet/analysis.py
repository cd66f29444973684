"""Asymptotic analysis: rank distributions, density evolution, convergence and overhead.

Throughout, ``gamma_reg(g, x) = Pr[Poisson(x) <= g - 1]``, the regularized
upper incomplete Gamma function.  With ``r`` received packets per generation,
a random generation is full rank with probability ``1 - gamma_reg(g, r)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .codespec import DegreeDistribution, Robust, SpecError

_LOG_FACT = np.concatenate([[0.0], np.cumsum(np.log(np.arange(1, 4097)))])


def _log_fact(k):
    k = np.asarray(k)
    if k.size and k.max() < len(_LOG_FACT):
        return _LOG_FACT[k]
    return np.vectorize(math.lgamma)(k + 1.0)


def gamma_reg(g, x):
    """``e^-x sum_{i<g} x^i / i!``, vectorised over ``x`` and summed in log space."""
    x = np.asarray(x, dtype=float)
    if g < 1:
        raise ValueError("g must be >= 1")
    if np.any(x < 0):
        raise ValueError("x must be nonnegative")
    i = np.arange(g)
    with np.errstate(divide="ignore", invalid="ignore"):
        lx = np.log(x)[..., None]
        terms = np.where(i == 0, 0.0, i * lx) - _log_fact(i)
    top = terms.max(axis=-1, keepdims=True)
    lse = top[..., 0] + np.log(np.exp(terms - top).sum(axis=-1))
    out = np.exp(np.minimum(lse - x, 0.0))
    return out if out.ndim else float(out)


def gamma_reg_inv(g, y, tol=1e-13):
    """Solve ``gamma_reg(g, x) = y`` by bisection; vectorised over ``y``."""
    y = np.asarray(y, dtype=float)
    if np.any((y <= 0) | (y > 1)) or np.any(np.isnan(y)):
        raise ValueError("gamma_reg_inv needs y in (0, 1]")
    lo = np.zeros_like(y)
    hi = np.full_like(y, g + 10.0 * math.sqrt(g) + 20.0)
    while np.any(gamma_reg(g, hi) > y):
        hi = np.where(gamma_reg(g, hi) > y, 2 * hi, hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        above = gamma_reg(g, mid) > y
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
        if np.all(hi - lo <= tol * np.maximum(1.0, hi)):
            break
    out = np.where(y == 1, 0.0, 0.5 * (lo + hi))
    return out if out.ndim else float(out)


def rank_pmf_poisson(r, g):
    """Limit law of a generation's rank after ``r`` packets per generation, over ``{0..g}``."""
    if r < 0:
        raise ValueError("r must be nonnegative")
    i = np.arange(g)
    if r == 0:
        head = (i == 0).astype(float)
    else:
        head = np.exp(i * math.log(r) - r - _log_fact(i))
    return np.append(head, 1.0 - gamma_reg(g, r))


def rank_pmf_binomial(r, n, g):
    """Rank law with ``r n`` packets spread uniformly over ``n`` generations."""
    rn = r * n
    total = int(round(rn))
    if abs(rn - total) > 1e-9 or total < 0:
        raise ValueError("r * n must be a nonnegative integer")
    i = np.arange(min(g, total + 1))
    if n == 1:
        head = (i == total).astype(float)
    else:
        logc = _log_fact(total) - _log_fact(i) - _log_fact(total - i)
        head = np.exp(logc - i * math.log(n) + (total - i) * math.log1p(-1.0 / n))
    pmf = np.zeros(g + 1)
    pmf[: len(head)] = head
    pmf[g] = max(0.0, 1.0 - head.sum())
    return pmf


def expected_rank_counts(r, n, g):
    """Expected number of generations of each rank ``0..g``."""
    return n * rank_pmf_binomial(r, n, g)


def heuristic_px(D_star):
    if D_star < 2:
        raise ValueError("D* must be >= 2")
    coeffs = {i: 1.0 / (i * (i - 1)) for i in range(2, D_star + 1)}
    coeffs[D_star + 1] = 1.0 / D_star
    return DegreeDistribution(coeffs, normalize=True)


@dataclass
class DEParams:
    g: int
    R: float
    P: DegreeDistribution
    x0: float
    delta: Optional[float] = None
    robust: Optional[Robust] = None

    def __post_init__(self):
        if not 0 < self.x0 < 1:
            raise SpecError("x0 must lie in (0, 1)")
        if not 0 < self.R <= 1:
            raise SpecError("R must lie in (0, 1]")
        if self.delta is not None and not (0 <= self.delta < 1 - self.x0):
            raise SpecError("need 0 <= delta < 1 - x0")
        if self.robust is not None:
            upper = 1.0 if self.delta is None else 1 - self.delta
            if not self.x0 < 1 - self.robust.delta0 < upper:
                raise SpecError("robust design needs x0 < 1 - delta0 < 1 - delta'")

    @classmethod
    def from_spec(cls, spec, **kw):
        if spec.x0 is None:
            raise SpecError("spec has no x0 design point")
        d = dict(g=spec.g, R=spec.R, P=spec.P, x0=spec.x0, delta=spec.delta, robust=spec.robust)
        d.update(kw)
        return cls(**d)

    @property
    def r0(self):
        return gamma_reg_inv(self.g, 1.0 - self.x0)

    @property
    def upper(self):
        return 1.0 if self.delta is None else 1.0 - self.delta


def de_map(params, x, r0=None):
    r0 = params.r0 if r0 is None else r0
    x = np.asarray(x, dtype=float)
    return 1.0 - gamma_reg(params.g, r0 + params.g * (1 - params.R) * params.P.derivative(x))


def de_step(params, x_prev):
    """One density-evolution iteration: fraction of full-rank generations after the next round."""
    return float(de_map(params, x_prev))


class MarginProfile(NamedTuple):
    xs: np.ndarray
    f: np.ndarray

    def min(self, lo=None, hi=None):
        sel = np.ones(len(self.xs), dtype=bool)
        if lo is not None:
            sel &= self.xs > lo
        if hi is not None:
            sel &= self.xs <= hi
        return float(self.f[sel].min()) if sel.any() else math.inf


class Convergence(NamedTuple):
    ok: bool
    closing_point: float
    margin_profile: MarginProfile


def check_convergence(params, grid=10_000, tol=1e-10):
    """Is the evolution chart open on ``(x0, 1 - delta)``?

    ``f(x) = T(x) - x`` is sampled on ``grid`` points of ``(x0, 1 - delta]``; the first sign
    change is refined by bisection.  ``closing_point`` is that crossing, or
    ``1 - delta`` if the chart stays open.  In robust mode the chart must also
    clear the diagonal by ``Delta`` on ``(1 - delta0, 1 - delta')``.
    """
    r0 = params.r0
    lo, hi = params.x0, params.upper
    xs = np.linspace(lo, hi, grid + 1)[1:]
    f = de_map(params, xs, r0) - xs
    bad = np.flatnonzero(f <= 0)
    closing = hi
    if len(bad):
        j = bad[0]
        a = xs[j - 1] if j else lo
        b = xs[j]
        while b - a > tol:
            mid = 0.5 * (a + b)
            if de_map(params, mid, r0) - mid > 0:
                a = mid
            else:
                b = mid
        closing = b
    ok = not len(bad)
    if ok and params.robust is not None:
        ok = MarginProfile(xs, f).min(1 - params.robust.delta0, hi) > params.robust.Delta
    return Convergence(bool(ok), float(closing), MarginProfile(xs, f))


@dataclass
class DETrajectory:
    r0: float
    xs: np.ndarray
    converged: bool
    closing_point: float
    epsilon: float


def trajectory(params, max_iter=100_000, tol=1e-12):
    """Iterate the DE map from ``x = 0`` until it stalls at its first fixed point."""
    r0 = params.r0
    xs = [0.0]
    x = 0.0
    for _ in range(max_iter):
        nxt = float(de_map(params, x, r0))
        if nxt - x <= tol:
            break
        xs.append(nxt)
        x = nxt
    xs = np.array(xs[1:])
    fixed = float(xs[-1]) if len(xs) else 0.0
    target = params.upper
    converged = fixed >= target - 1e-9
    eps = r0 / (params.g * min(fixed, target) * params.R) - 1 if fixed > 0 else math.inf
    return DETrajectory(r0, xs, converged, fixed, eps)


def overhead_dense(params):
    """``r0 / (g (1 - delta) R) - 1``; ``delta`` defaults to 0."""
    return params.r0 / (params.g * params.upper * params.R) - 1.0


def improved_rate(params):
    """Pre-code rate when degree-one packet-level checks keep recovering packets past ``1 - delta``."""
    x = params.upper
    d = 1.0 - x
    dbar = params.P.mean_degree()
    if params.R < 1 and dbar >= 1.0 / (1.0 - params.R):
        raise SpecError(f"mean check degree {dbar:.4f} must be below 1/(1-R) = {1 / (1 - params.R):.4f}")
    return x + d * (1 - params.R) * float(params.P.derivative(x))


def overhead_improved(params):
    """Return ``(R', epsilon)`` for the packet-level outer code."""
    Rp = improved_rate(params)
    return Rp, params.r0 / (params.g * params.R * Rp) - 1.0


def overhead(params, mode="dense"):
    return overhead_improved(params)[1] if mode == "packet-level" else overhead_dense(params)


def evolution_chart(params, grid=1001, path=None):
    """Rows ``(x, T(x), x)`` on a uniform grid over ``[0, 1]``; written as CSV if ``path`` is given."""
    xs = np.linspace(0.0, 1.0, grid) if np.isscalar(grid) else np.asarray(grid, dtype=float)
    fx = de_map(params, xs)
    rows = list(zip(xs.tolist(), np.atleast_1d(fx).tolist(), xs.tolist()))
    if path is not None:
        write_chart(rows, path)
    return rows


def write_chart(rows, out):
    own = isinstance(out, (str, bytes)) or hasattr(out, "__fspath__")
    fh = open(out, "w", newline="") if own else out
    try:
        w = csv.writer(fh)
        w.writerow(["x", "f_x", "diag"])
        for x, fx, d in rows:
            w.writerow([f"{x:.6f}", f"{fx:.10f}", f"{d:.6f}"])
    finally:
        if own:
            fh.close()
