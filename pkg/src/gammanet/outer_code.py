"""The random linear outer code: Tanner graph construction and encoding.

Packets of the outer-coded block are addressed by position ``gen * g + slot``.
Every check is stored as the exact linear equation it enforces,
``sum coeffs[k] * u[positions[k]] = 0``, with coefficient 1 on the parity
packet it generated (``target``).  In dense mode the equation covers the
packets that were available in the connected generations when the parity was
computed; in packet-level mode every coefficient is 1.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .codespec import SpecError


class ConstructionError(RuntimeError):
    """The sampled graph cannot host the requested layout; sample another."""


@dataclass
class OuterCheck:
    gens: np.ndarray  # generations the check is connected to
    positions: np.ndarray
    coeffs: np.ndarray
    target: int


@dataclass
class OuterGraph:
    mode: str
    n: int
    g: int
    checks: list
    m_counts: np.ndarray  # systematic packets per generation
    order: np.ndarray  # generation processing order (dense mode)
    systematic_positions: np.ndarray  # pre-coded packet k lives at this position
    mean_degree: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def N(self):
        return self.n * self.g

    @property
    def K(self):
        return len(self.systematic_positions)


def sample_check_degrees(P, num_checks, rng, n=None):
    """i.i.d. check degrees from ``P``; degrees above ``n`` are redrawn."""
    deg, prob = P.degrees, P.probs
    if n is not None:
        ok = deg <= n
        if not ok.any():
            raise SpecError(f"every degree of P exceeds the number of generations n={n}")
        if not ok.all():
            deg, prob = deg[ok], prob[ok] / prob[ok].sum()
    return rng.choice(deg, size=num_checks, p=prob)


def systematic_counts(gen_degrees, mean_degree, g, K, order):
    """Systematic packets per generation: ``g - round(d_G / d_bar)`` then fixed up to sum to ``K``.

    Surplus is removed one unit at a time walking the generations in
    ``order`` (highest degree first); a deficit is filled walking it in
    reverse.  A generation never gets more parity slots than incident checks.
    """
    gen_degrees = np.asarray(gen_degrees)
    if mean_degree > 0:
        m = g - np.round(gen_degrees / mean_degree).astype(np.int64)
    else:
        m = np.full(len(gen_degrees), g, dtype=np.int64)
    m = np.clip(m, g - np.minimum(gen_degrees, g), g)
    diff = int(m.sum()) - K
    walk = list(order) if diff > 0 else list(order)[::-1]
    while diff:
        moved = False
        for i in walk:
            if diff > 0 and m[i] > 0 and g - m[i] < gen_degrees[i]:
                m[i] -= 1
                diff -= 1
                moved = True
            elif diff < 0 and m[i] < g:
                m[i] += 1
                diff += 1
                moved = True
            if not diff:
                break
        if not moved:
            raise ConstructionError("cannot balance systematic counts for this graph")
    return m


def _assign_checks(check_gens, degrees, slots, order, n):
    """Give every check to exactly one of its generations, generation i taking ``slots[i]`` checks."""
    incident = [[] for _ in range(n)]
    for c, gens in enumerate(check_gens):
        for i in gens:
            incident[i].append(c)
    for i in range(n):
        # highest degree first, ties by check index
        incident[i].sort(key=lambda c: (-degrees[c], c))
    owner = np.full(len(check_gens), -1, dtype=np.int64)
    taken = np.zeros(n, dtype=np.int64)
    for i in order:
        for c in incident[i]:
            if taken[i] == slots[i]:
                break
            if owner[c] < 0:
                owner[c] = i
                taken[i] += 1
    for i in order:
        while taken[i] < slots[i]:
            if not _augment(i, incident, owner):
                raise ConstructionError(f"generation {i} cannot get {slots[i]} parity checks")
            taken[i] += 1
    return owner


def _augment(start, incident, owner):
    pred = {start: None}
    via = {}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for c in incident[u]:
            j = owner[c]
            if j < 0:
                owner[c] = u
                while pred[u] is not None:
                    prev_check = via[u]
                    owner[prev_check] = pred[u]
                    u = pred[u]
                return True
            if j not in pred:
                pred[j] = u
                via[j] = c
                queue.append(j)
    return False


def build_outer_graph(n, g, K, P, mode, ctx, rng):
    N = n * g
    num_checks = N - K
    if num_checks < 0:
        raise SpecError("K exceeds N")
    if mode == "packet-level":
        return _build_packet_level(n, g, K, P, rng)
    return _build_dense(n, g, K, P, ctx, rng)


def _build_dense(n, g, K, P, ctx, rng):
    num_checks = n * g - K
    if num_checks == 0:
        m = np.full(n, g, dtype=np.int64)
        return OuterGraph("dense", n, g, [], m, np.arange(n), np.arange(n * g), 0.0)
    degrees = sample_check_degrees(P, num_checks, rng, n)
    check_gens = [np.sort(rng.choice(n, size=int(d), replace=False)) for d in degrees]
    gen_deg = np.bincount(np.concatenate(check_gens), minlength=n)
    mean_deg = float(degrees.mean())
    order = np.argsort(-gen_deg, kind="stable")
    m = systematic_counts(gen_deg, mean_deg, g, K, order)
    owner = _assign_checks(check_gens, degrees, g - m, order, n)

    by_gen = [[] for _ in range(n)]
    for c in range(num_checks):
        by_gen[owner[c]].append(c)
    avail = m.copy()
    checks = []
    for i in order:
        for c in sorted(by_gen[i], key=lambda c: (-degrees[c], c)):
            pos = np.concatenate([k * g + np.arange(avail[k]) for k in check_gens[c]])
            target = i * g + avail[i]
            coeffs = ctx.random(rng, len(pos))
            checks.append(
                OuterCheck(
                    check_gens[c],
                    np.append(pos, target).astype(np.int64),
                    np.append(coeffs, 1).astype(np.uint8),
                    int(target),
                )
            )
            avail[i] += 1
    systematic = np.concatenate([i * g + np.arange(m[i]) for i in range(n)]).astype(np.int64)
    return OuterGraph("dense", n, g, checks, m, order, systematic, mean_deg)


def _build_packet_level(n, g, K, P, rng):
    N = n * g
    num_checks = N - K
    dbar = P.mean_degree()
    if num_checks and dbar >= N / num_checks:
        raise SpecError(f"mean check degree {dbar:.4f} must be below 1/(1-R) = {N / num_checks:.4f}")
    free = [list(rng.permutation(g)) for _ in range(n)]
    degrees = sample_check_degrees(P, num_checks, rng, n)
    is_parity = np.zeros(N, dtype=bool)
    checks = []
    for d in degrees:
        open_gens = np.array([i for i in range(n) if free[i]])
        if len(open_gens) < d:
            raise ConstructionError("ran out of free packets for packet-level checks")
        gens = rng.choice(open_gens, size=int(d), replace=False)
        pos = np.array([i * g + free[i].pop() for i in gens], dtype=np.int64)
        target = int(pos[0])
        is_parity[target] = True
        checks.append(OuterCheck(np.sort(gens), pos, np.ones(len(pos), dtype=np.uint8), target))
    m = g - np.bincount(np.flatnonzero(is_parity) // g, minlength=n)
    systematic = np.flatnonzero(~is_parity).astype(np.int64)
    return OuterGraph("packet-level", n, g, checks, m, np.arange(n), systematic, float(degrees.mean()) if len(degrees) else 0.0)


def encode_outer(pre_coded, graph, ctx):
    """Place the ``K`` pre-coded packets systematically and compute every parity."""
    pre_coded = np.asarray(pre_coded, dtype=np.uint8)
    if len(pre_coded) != graph.K:
        raise ValueError(f"expected {graph.K} pre-coded packets, got {len(pre_coded)}")
    out = np.zeros((graph.N,) + pre_coded.shape[1:], dtype=np.uint8)
    out[graph.systematic_positions] = pre_coded
    for chk in graph.checks:
        src = chk.positions != chk.target
        out[chk.target] = ctx.combine(chk.coeffs[src], out[chk.positions[src]])
    return out


def encode_outer_dense(pre_coded, graph, ctx):
    if graph.mode != "dense":
        raise ValueError("graph was not built in dense mode")
    return encode_outer(pre_coded, graph, ctx)


def encode_outer_packet_level(pre_coded, graph, ctx):
    if graph.mode != "packet-level":
        raise ValueError("graph was not built in packet-level mode")
    return encode_outer(pre_coded, graph, ctx)


def verify_checks(block, graph, ctx):
    block = np.asarray(block).reshape(graph.N, -1)
    for chk in graph.checks:
        if ctx.combine(chk.coeffs, block[chk.positions]).any():
            return False
    return True
