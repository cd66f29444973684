"""Joint decoder: per-generation elimination, outer-check edge deletion and pre-code peeling.

Everything is driven by one event: a packet position becoming known.  Each
event is substituted into its generation's equation system, lowers the
residual degree of the outer checks and pre-code checks touching it, and may
trigger further events.  Because every step only grows the known set, the
order in which events are processed does not change the fixpoint.
"""

from __future__ import annotations

from collections import deque

import numpy as np

from .srlnc import Packet, PacketFormatError


class DecodeStalled(RuntimeError):
    pass


class Decoder:
    def __init__(self, code, s):
        self.code = code
        self.ctx = ctx = code.ctx
        g, n = code.spec.g, code.spec.n
        self.g, self.n, self.s = g, n, s
        N = n * g
        from .field import GenerationSystem

        self.systems = [GenerationSystem(ctx, g, s) for _ in range(n)]
        self.known = np.zeros(N, dtype=bool)
        self.values = np.zeros((N, s), dtype=np.uint8)
        self.gen_known = np.zeros(n, dtype=np.int64)
        self.received = 0
        self.rank_gains = 0
        self.rounds = 0  # iterate() calls that recovered something
        self._events = deque()

        checks = code.outer.checks
        self._pos_checks = [[] for _ in range(N)]
        self._check_unknown = []
        self._check_live_gens = np.zeros(len(checks), dtype=np.int64)
        self.consumed = np.zeros(len(checks), dtype=bool)
        # a zero coefficient leaves the packet out of the equation
        self._chk_pos, self._chk_coef = [], []
        for c, chk in enumerate(checks):
            nz = chk.coeffs != 0
            self._chk_pos.append(chk.positions[nz])
            self._chk_coef.append(chk.coeffs[nz])
            for p in self._chk_pos[c]:
                self._pos_checks[p].append(c)
            gens, counts = np.unique(self._chk_pos[c] // g, return_counts=True)
            self._check_unknown.append(dict(zip(gens.tolist(), counts.tolist())))
            self._check_live_gens[c] = len(gens)
        self._pending_checks = [c for c in range(len(checks)) if self._check_live_gens[c] <= 1]

        self._pre_members = []
        self._pos_prechecks = [[] for _ in range(N)]
        if code.precode is not None:
            to_outer = code.outer.systematic_positions
            for c, members in enumerate(code.precode.checks):
                outer_pos = to_outer[members]
                self._pre_members.append(outer_pos)
                for p in outer_pos:
                    self._pos_prechecks[p].append(c)
        self._pre_unknown = np.array([len(m) for m in self._pre_members], dtype=np.int64)

        self.info_positions = code.info_positions
        self.is_info = np.zeros(N, dtype=bool)
        self.is_info[self.info_positions] = True
        self.info_known = 0

    # -- state queries -------------------------------------------------

    @property
    def K_info(self):
        return len(self.info_positions)

    def success(self):
        return self.info_known == self.K_info

    def solved_generations(self):
        return int((self.gen_known == self.g).sum())

    def rank_profile(self):
        return [int(s.rank + s.num_known) for s in self.systems]

    def decoded(self):
        if not self.success():
            raise DecodeStalled("information packets not all recovered")
        return self.values[self.info_positions].copy()

    # -- decoding -----------------------------------------------------

    def ingest(self, pkt: Packet):
        """Add one received packet's equation; return True if its generation's rank grew."""
        if not 0 <= pkt.gen_index < self.n or len(pkt.coeff_vector) != self.g or len(pkt.payload) != self.s:
            raise PacketFormatError("packet does not match this code")
        self.received += 1
        sys = self.systems[pkt.gen_index]
        before = sys.rank + sys.num_known
        sys.add_equation(pkt.coeff_vector, pkt.payload)
        grew = sys.rank + sys.num_known > before
        self.rank_gains += grew
        self._drain_if_full(pkt.gen_index)
        return bool(grew)

    def iterate(self):
        """Run edge deletion, check recovery and peeling to a fixpoint; return newly solved generations."""
        before = self.solved_generations()
        pending, self._pending_checks = self._pending_checks, []
        for c in pending:
            self._fire(c)
        g, events = self.g, self._events
        if events:
            self.rounds += 1
        while events:
            pos, from_system = events.popleft()
            gen, slot = divmod(pos, g)
            if not from_system:
                sys = self.systems[gen]
                if not sys.known[slot]:
                    for col, val in sys.substitute_known(slot, self.values[pos]):
                        self._learn(gen * g + col, val, True)
            for c in self._pos_checks[pos]:
                if self.consumed[c]:
                    continue
                cnt = self._check_unknown[c]
                cnt[gen] -= 1
                if cnt[gen] == 0:
                    self._check_live_gens[c] -= 1
                    if self._check_live_gens[c] <= 1:
                        self._fire(c)
            for c in self._pos_prechecks[pos]:
                self._pre_unknown[c] -= 1
                if self._pre_unknown[c] == 1:
                    self._peel(c)
        return self.solved_generations() - before

    def _learn(self, pos, val, from_system):
        if self.known[pos]:
            return
        self.known[pos] = True
        self.values[pos] = val
        self.gen_known[pos // self.g] += 1
        if self.is_info[pos]:
            self.info_known += 1
        self._events.append((pos, from_system))

    def _drain_if_full(self, gen):
        sys = self.systems[gen]
        if sys.rank and sys.is_full_rank():
            base = gen * self.g
            for col, val in sys.take_solution():
                self._learn(base + col, val, True)

    def _fire(self, c):
        """Use an outer check whose unknowns all sit in one generation."""
        self.consumed[c] = True
        if self._check_live_gens[c] == 0:
            return
        positions, coeffs = self._chk_pos[c], self._chk_coef[c]
        ctx, g = self.ctx, self.g
        unk = ~self.known[positions]
        # counters lag behind known[] while events are queued
        if not unk.any():
            return
        if unk.sum() == 1:
            u = int(np.flatnonzero(unk)[0])
            rest = np.flatnonzero(~unk)
            acc = ctx.combine(coeffs[rest], self.values[positions[rest]])
            self._learn(int(positions[u]), ctx.mul[ctx.inv[coeffs[u]], acc], False)
            return
        gen = int(positions[np.flatnonzero(unk)[0]] // g)
        inside = positions // g == gen
        row = np.zeros(g, dtype=np.uint8)
        row[positions[inside] - gen * g] = coeffs[inside]
        outside = ~inside
        rhs = ctx.combine(coeffs[outside], self.values[positions[outside]])
        self.systems[gen].add_equation(row, rhs)
        self._drain_if_full(gen)

    def _peel(self, c):
        members = self._pre_members[c]
        unk = ~self.known[members]
        if unk.sum() != 1:
            return
        p = int(members[unk][0])
        self._learn(p, np.bitwise_xor.reduce(self.values[members[~unk]], axis=0), False)


def run_until_success(decoder, source, max_factor=10):
    """Alternate reception and decoding until every information packet is recovered.

    Returns ``(N_r, overhead)`` with ``overhead = (N_r - K') / K'``.
    """
    decoder.iterate()
    cap = max_factor * decoder.K_info
    while not decoder.success():
        if decoder.received >= cap:
            raise DecodeStalled(
                f"decode stalled after {decoder.received} packets "
                f"({decoder.solved_generations()}/{decoder.n} generations solved)"
            )
        decoder.ingest(next(source))
        decoder.iterate()
    n_r = decoder.received
    return n_r, (n_r - decoder.K_info) / decoder.K_info
