"""Binary right-regular LDPC pre-code with a staircase parity part.

Check ``j`` covers ``a - 2`` information packets (``a - 1`` for ``j = 0``)
plus parity packets ``j`` and ``j - 1``, so parities are computed one after
another in linear time.  Parities and information packets are interleaved by
a random permutation of the ``K`` coded positions so that losing one whole
generation does not wipe out a run of the staircase.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np


class PrecodeError(ValueError):
    pass


@dataclass
class PrecodeGraph:
    k_info: int
    k: int
    checks: list  # each an int array of coded positions
    info_positions: np.ndarray
    parity_positions: np.ndarray
    check_degree: int

    @property
    def num_checks(self):
        return len(self.checks)

    @property
    def rate(self):
        return self.k_info / self.k

    def incidence(self):
        """position -> list of check indices."""
        inc = [[] for _ in range(self.k)]
        for c, members in enumerate(self.checks):
            for p in members:
                inc[p].append(c)
        return inc


def build_precode(k_info, k, rng, left_degree=3):
    """Build a pre-code taking ``k_info`` information packets to ``k`` coded packets.

    Every check gets the same number of information edges; information nodes
    get ``left_degree`` edges on average (capped so a check never holds the
    same packet twice).
    """
    m = k - k_info
    if k_info < 1 or m < 1:
        raise PrecodeError(f"degenerate pre-code sizes K'={k_info}, K={k}")
    info_edges = min(k_info, max(1, int(round(left_degree * k_info / m))))
    # sockets: information node i appears deg_i times, degrees as even as possible
    total = info_edges * m
    base, extra = divmod(total, k_info)
    deg = np.full(k_info, base, dtype=np.int64)
    deg[rng.permutation(k_info)[:extra]] += 1
    sockets = np.repeat(np.arange(k_info), deg)
    rng.shuffle(sockets)
    groups = sockets.reshape(m, info_edges)
    _repair_duplicates(groups, rng)

    perm = rng.permutation(k)
    info_pos = perm[:k_info]
    par_pos = perm[k_info:]
    checks = []
    for j in range(m):
        members = list(info_pos[groups[j]])
        members.append(par_pos[j])
        if j:
            members.append(par_pos[j - 1])
        checks.append(np.array(members, dtype=np.int64))
    return PrecodeGraph(k_info, k, checks, info_pos, par_pos, info_edges + 2)


def _repair_duplicates(groups, rng, max_rounds=1000):
    """Swap repeated entries out of each row into a row that does not hold them yet."""
    m, a = groups.shape
    for _ in range(max_rounds):
        bad = [j for j in range(m) if len(set(groups[j].tolist())) < a]
        if not bad:
            return
        for j in bad:
            row = groups[j]
            seen = set()
            for t in range(a):
                v = int(row[t])
                if v in seen:
                    # a cell whose value row j lacks, in a row that lacks v
                    members = set(row.tolist())
                    ok = (~np.isin(groups, list(members))) & ~(groups == v).any(axis=1, keepdims=True)
                    cand = np.argwhere(ok)
                    if len(cand):
                        j2, t2 = cand[rng.integers(len(cand))]
                    else:
                        j2, t2 = int(rng.integers(m)), int(rng.integers(a))
                    row[t], groups[j2, t2] = groups[j2, t2], row[t]
                seen.add(int(row[t]))
    raise PrecodeError("could not build a pre-code without repeated edges")


def encode_precode(info, graph):
    """Systematic encoding: information payloads at ``info_positions``, parities by the staircase."""
    info = np.asarray(info, dtype=np.uint8)
    if len(info) != graph.k_info:
        raise PrecodeError(f"expected {graph.k_info} information packets, got {len(info)}")
    out = np.zeros((graph.k,) + info.shape[1:], dtype=np.uint8)
    out[graph.info_positions] = info
    prev = None
    for j, members in enumerate(graph.checks):
        n_info = len(members) - (2 if j else 1)
        acc = np.bitwise_xor.reduce(out[members[:n_info]], axis=0)
        if prev is not None:
            acc ^= prev
        out[graph.parity_positions[j]] = acc
        prev = acc
    return out


def verify_precode(block, graph):
    return all(not np.bitwise_xor.reduce(block[c], axis=0).any() for c in graph.checks)


def peel_step(graph, known, values):
    """Peel until no check has exactly one unknown packet.

    ``known`` (bool array) and ``values`` (payload rows) are updated in place.
    Returns the list of ``(position, payload)`` recovered by this call.
    """
    inc = graph.incidence()
    unknown = np.array([int((~known[c]).sum()) for c in graph.checks])
    queue = deque(np.flatnonzero(unknown <= 1).tolist())
    out = []
    while queue:
        c = queue.popleft()
        members = graph.checks[c]
        miss = members[~known[members]]
        if len(miss) == 0:
            if np.bitwise_xor.reduce(values[members], axis=0).any():
                raise PrecodeError("inconsistent pre-code state")
            continue
        if len(miss) > 1:
            continue
        p = int(miss[0])
        others = members[members != p]
        values[p] = np.bitwise_xor.reduce(values[others], axis=0)
        known[p] = True
        out.append((p, values[p].copy()))
        for c2 in inc[p]:
            unknown[c2] -= 1
            if unknown[c2] <= 1:
                queue.append(c2)
    return out
