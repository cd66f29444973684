"""Choosing ``P(x)``, ``R``, ``x0`` and ``delta`` for minimum asymptotic overhead.

For fixed ``P`` and ``R`` write ``A(x) = gamma_reg_inv(g, 1 - x)`` and
``h(x) = A(x) - g (1 - R) P'(x)``.  The chart started from ``x0`` is open on
``(x0, X)`` exactly when ``r0 = A(x0)`` exceeds ``h`` on ``(0, X)``, so the
smallest usable ``r0`` for closing point ``X`` is the running maximum of
``h``.  The search over ``(x0, R)`` therefore reduces to a search over
``(R, X)`` in which ``x0`` follows from ``X``.  That makes the optimum a
continuous function of ``P`` and lets finite differences drive the outer
gradient descent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .analysis import DEParams, check_convergence, gamma_reg, gamma_reg_inv, improved_rate
from .codespec import CodeSpec, DegreeDistribution, Robust, SpecError


class InfeasibleError(ValueError):
    pass


@dataclass
class OptimizeConfig:
    g: int = 25
    D: int = 10
    mode: str = "dense"
    robust: Optional[Robust] = None
    x0_range: tuple = (0.01, 0.30)
    R_range: tuple = (0.50, 0.95)
    R_step: float = 0.002
    x_points: int = 4000
    min_closing_point: float = 0.5
    starts: int = 32
    max_iter: int = 150
    fd_step: float = 1e-4
    # temperatures for the smoothed running maximum, ending with the exact one
    taus: tuple = (0.03, 0.01, 0.003, 0.0)
    R_window: int = 12
    seed: int = 0
    n: int = 67
    q: int = 256

    def __post_init__(self):
        if self.D < 2:
            raise SpecError("D must be >= 2")
        if self.mode not in ("dense", "packet-level"):
            raise SpecError(f"unknown mode {self.mode!r}")
        if self.x_points < 100 or len(self.R_grid) < 100:
            raise SpecError("grids need at least 100 points")
        if self.robust is not None:
            if not self.robust.Delta > 0:
                raise SpecError("robust design needs Delta > 0")
            if not self.x0_range[1] < 1 - self.robust.delta0:
                raise SpecError("x0 range must stay below 1 - delta0")

    @property
    def R_grid(self):
        lo, hi = self.R_range
        return np.round(np.arange(lo, hi + self.R_step / 2, self.R_step), 10)


@dataclass
class InnerResult:
    epsilon: float
    x0: float
    R: float
    delta: float
    r0: float
    R_prime: float


class _Tables:
    """Grid quantities that do not depend on ``P``."""

    def __init__(self, cfg):
        self.cfg = cfg
        g = cfg.g
        self.xs = np.linspace(0.0, 1.0, cfg.x_points + 1)[1:-1]
        self.A = gamma_reg_inv(g, 1.0 - self.xs)
        self.Rs = cfg.R_grid
        self.r0_lo = gamma_reg_inv(g, 1.0 - cfg.x0_range[0])
        self.r0_hi = gamma_reg_inv(g, 1.0 - cfg.x0_range[1])
        if cfg.robust is not None:
            shifted = self.xs + cfg.robust.Delta
            need = np.full_like(self.xs, np.inf)
            ok = shifted < 1
            need[ok] = gamma_reg_inv(g, 1.0 - shifted[ok])
            upper = self.xs > 1 - cfg.robust.delta0
            self.A_req = np.where(upper, need, self.A)
            self.min_X = max(cfg.min_closing_point, 1 - cfg.robust.delta0)
        else:
            self.A_req = self.A
            self.min_X = cfg.min_closing_point


def _landscape(p, tab, tau=0.0, rows=None):
    cfg = tab.cfg
    Rs = tab.Rs if rows is None else tab.Rs[rows]
    P = p if isinstance(p, DegreeDistribution) else DegreeDistribution.from_array(p, normalize=True)
    B = P.derivative(tab.xs)
    h = tab.A_req[None, :] - cfg.g * (1 - Rs)[:, None] * B[None, :]
    if tau > 0:
        # log-sum-exp running maximum: an upper bound on the exact one, smooth in P
        run = tau * np.logaddexp.accumulate(h / tau, axis=1)
    else:
        run = np.maximum.accumulate(h, axis=1)
    r0 = np.maximum(run, tab.r0_lo)
    X = tab.xs[None, :]
    feasible = (r0 <= tab.r0_hi) & (r0 < tab.A[None, :]) & (X >= tab.min_X)
    if cfg.mode == "packet-level":
        Rp = X + (1 - X) * (1 - Rs)[:, None] * B[None, :]
        dbar = P.mean_degree()
        feasible &= (dbar < 1.0 / (1.0 - Rs))[:, None]
    else:
        Rp = np.broadcast_to(X, r0.shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        eps = np.where(feasible, r0 / (cfg.g * Rs[:, None] * Rp) - 1.0, np.inf)
    return P, eps, r0, Rp


def objective(p, tab, tau=0.0, rows=None):
    """Best overhead for weights ``p`` (``p[k]`` on degree ``k + 2``), ``inf`` if infeasible."""
    return float(_landscape(p, tab, tau, rows)[1].min())


def _best_row(p, tab, tau=0.0, rows=None):
    eps = _landscape(p, tab, tau, rows)[1]
    i = int(np.unravel_index(np.argmin(eps), eps.shape)[0])
    return i if rows is None else int(rows[i])


def inner_search(P, g=25, mode="dense", config=None, tables=None, verify=True):
    """Best ``(x0, R, delta)`` for a fixed distribution.

    The grid winner is re-checked with :func:`check_convergence` after the
    required ``r0`` is sharpened around the peaks of ``h``; a failing check
    nudges ``r0`` (and so ``x0``) upward until the chart is open.
    """
    cfg = config or OptimizeConfig(g=g, D=max(2, P.max_degree), mode=mode)
    tab = tables or _Tables(cfg)
    P, eps, r0, Rp = _landscape(P, tab)
    if not np.isfinite(eps).any():
        raise InfeasibleError("infeasible distribution: no (x0, R) opens the evolution chart")
    i, j = np.unravel_index(np.argmin(eps), eps.shape)
    R, X, r = float(tab.Rs[i]), float(tab.xs[j]), float(r0[i, j])
    if not verify:
        return InnerResult(float(eps[i, j]), 1 - gamma_reg(cfg.g, r), R, 1 - X, r, float(Rp[i, j]))
    return _verified(P, cfg, tab, R, X, r)


def _h(P, cfg, R, xs):
    """``h`` at arbitrary points, including the robust shift above ``1 - delta0``."""
    target = xs.copy()
    if cfg.robust is not None:
        target = np.where(xs > 1 - cfg.robust.delta0, xs + cfg.robust.Delta, xs)
    A = np.full_like(xs, np.inf)
    ok = target < 1
    A[ok] = gamma_reg_inv(cfg.g, 1.0 - target[ok])
    return A - cfg.g * (1 - R) * P.derivative(xs)


def _refine_r0(P, cfg, tab, R, X, r0, points=400):
    """Sharpen the running maximum of ``h`` by resampling around its near-maximal peaks."""
    xs = tab.xs[tab.xs < X]
    h = tab.A_req[: len(xs)] - cfg.g * (1 - R) * P.derivative(xs)
    peak = np.flatnonzero(
        (h >= np.roll(h, 1)) & (h >= np.roll(h, -1)) & (h > r0 - 0.05 * max(1.0, abs(r0)))
    )
    for j in peak:
        a = xs[j - 1] if j else 0.0
        b = xs[j + 1] if j + 1 < len(xs) else X
        fine = np.linspace(a, min(b, X), points)[1:]
        r0 = max(r0, float(_h(P, cfg, R, fine).max()))
    return r0


def _verified(P, cfg, tab, R, X, r0, attempts=40):
    r0 = _refine_r0(P, cfg, tab, R, X, r0)
    for _ in range(attempts):
        r0 = r0 * (1 + 1e-9)
        if r0 > tab.r0_hi:
            break
        x0 = 1.0 - gamma_reg(cfg.g, r0)
        params = DEParams(cfg.g, R, P, x0, 1.0 - X, cfg.robust)
        conv = check_convergence(params)
        if conv.ok:
            Rp = improved_rate(params) if cfg.mode == "packet-level" else X
            eps = r0 / (cfg.g * R * Rp) - 1.0
            return InnerResult(eps, x0, R, 1.0 - X, r0, Rp)
        r0 *= 1 + 1e-6
    raise InfeasibleError("grid optimum failed the fine convergence check")


def project_simplex(v):
    """Euclidean projection onto ``{p >= 0, sum p = 1}``."""
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("cannot project non-finite weights")
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, len(v) + 1)
    rho = np.flatnonzero(u - css / k > 0)[-1]
    return np.maximum(v - css[rho] / (rho + 1.0), 0.0)


def _fd_gradient(p, f0, h, evaluate):
    grad = np.zeros_like(p)
    for k in range(len(p)):
        e = p.copy()
        e[k] += h
        grad[k] = (evaluate(e / e.sum()) - f0) / h
    # a step into the infeasible region reads as a steep wall
    return np.nan_to_num(grad, nan=0.0, posinf=1e3, neginf=-1e3)


def _descend(p, tab, cfg):
    """Projected gradient descent, annealing the running-maximum temperature down to zero.

    Only a window of ``R`` rows around the current optimum is evaluated; the
    window follows the optimum when it reaches an edge.
    """
    nR = len(tab.Rs)
    vertex = np.zeros_like(p)
    vertex[0] = 1.0
    for _ in range(30):
        if np.isfinite(objective(p, tab)):
            break
        # the all-degree-2 code opens the chart; blend toward it until this start does too
        p = 0.5 * (p + vertex)
    else:
        return p, math.inf
    for tau in cfg.taus:
        center = _best_row(p, tab, tau)

        def window(c):
            return np.arange(max(0, c - cfg.R_window), min(nR, c + cfg.R_window + 1))

        rows = window(center)
        f = objective(p, tab, tau, rows)
        t = 0.05
        for _ in range(cfg.max_iter):
            evaluate = lambda w: objective(w, tab, tau, rows)  # noqa: E731
            grad = _fd_gradient(p, f, cfg.fd_step, evaluate)
            grad -= grad.mean()
            improved = False
            for _ in range(25):
                cand = project_simplex(p - t * grad)
                fc = evaluate(cand)
                if fc <= f + 1e-4 * grad @ (cand - p) and fc < f:
                    improved = True
                    break
                t *= 0.5
            if not improved:
                break
            gain = f - fc
            p, f = cand, fc
            t = min(t * 2.0, 1.0)
            best = _best_row(p, tab, tau, rows)
            if best in (rows[0], rows[-1]) and best not in (0, nR - 1):
                rows = window(_best_row(p, tab, tau))
                f = evaluate(p)
            if gain < 1e-7:
                break
    return p, objective(p, tab)


def _starts(cfg, rng):
    dim = cfg.D - 1
    base = np.zeros(dim)
    base[0] = 1.0
    out = [base]
    if dim == 1:
        return out
    for s in range(1, cfg.starts):
        if s % 2:
            w = rng.dirichlet(np.ones(dim))
        else:
            p2 = rng.uniform(0.75, 0.95)
            # sparse remainder: optimized tables put their residual mass on few degrees
            w = np.concatenate([[p2], (1 - p2) * rng.dirichlet(np.full(dim - 1, 0.2))])
        out.append(w)
    return out


@dataclass
class OptimizeResult:
    spec: CodeSpec
    epsilon: float
    x0: float
    R: float
    delta: float
    history: list = field(default_factory=list)


def optimize_distribution(config: OptimizeConfig, progress=None):
    """Multistart projected gradient descent over ``(p_2, ..., p_D)``.

    The all-degree-2 vertex is always one of the starts, so the result is
    never worse than that baseline.
    """
    cfg = config
    tab = _Tables(cfg)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x0D]))
    best_p, best_f = None, math.inf
    history = []
    for k, p in enumerate(_starts(cfg, rng)):
        p, f = _descend(p, tab, cfg)
        history.append(f)
        if progress:
            progress(k, f)
        if f < best_f:
            best_p, best_f = p, f
    if best_p is None or not np.isfinite(best_f):
        raise InfeasibleError("every start was infeasible")
    w = np.where(best_p < 1e-7, 0.0, best_p)
    P = DegreeDistribution.from_array(w, normalize=True)
    res = inner_search(P, config=cfg, tables=tab)
    spec = CodeSpec(
        g=cfg.g,
        n=cfg.n,
        q=cfg.q,
        R=res.R,
        R_prime=min(1.0, res.R_prime),
        P=P,
        mode=cfg.mode,
        seed=cfg.seed,
        robust=cfg.robust,
        x0=res.x0,
        delta=res.delta,
        name=f"optimized_D{cfg.D}",
        extra={"epsilon": res.epsilon},
    )
    return OptimizeResult(spec, res.epsilon, res.x0, res.R, res.delta, history)


@dataclass
class MarginReport:
    ok: bool
    closing_point: float
    min_margin: float
    min_upper_margin: Optional[float]


def margin_profile(spec, grid=10_000):
    """Smallest gap between the chart and the diagonal on ``(x0, 1 - delta)``.

    For robust specs ``min_upper_margin`` is the gap on ``(1 - delta0, 1 - delta')``.
    """
    params = DEParams.from_spec(spec)
    conv = check_convergence(params, grid=grid)
    upper = None
    if spec.robust is not None:
        upper = conv.margin_profile.min(1 - spec.robust.delta0, params.upper)
    return MarginReport(conv.ok, conv.closing_point, conv.margin_profile.min(), upper)
