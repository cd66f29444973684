"""A concrete Gamma network code: pre-code + outer code + SRLNC, rebuilt from (spec, seed)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .codespec import CodeSpec
from .field import FieldContext, field_for_q
from .outer_code import ConstructionError, OuterGraph, build_outer_graph, encode_outer
from .precode import PrecodeGraph, build_precode, encode_precode
from .srlnc import Block, PacketSource, partition

# independent random streams derived from one seed
STREAM_PRECODE, STREAM_OUTER, STREAM_SOURCE, STREAM_DATA = 1, 2, 3, 4


def stream(seed, tag):
    return np.random.default_rng(np.random.SeedSequence([int(seed), tag]))


@dataclass
class GammaCode:
    spec: CodeSpec
    ctx: FieldContext
    precode: Optional[PrecodeGraph]
    outer: OuterGraph
    seed: int

    @classmethod
    def build(cls, spec, seed=None, max_attempts=100):
        """Sender and receiver call this with the same arguments and get identical graphs."""
        seed = spec.seed if seed is None else seed
        ctx = field_for_q(spec.q)
        pre = None
        if spec.K_info < spec.K:
            pre = build_precode(spec.K_info, spec.K, stream(seed, STREAM_PRECODE))
        rng = stream(seed, STREAM_OUTER)
        for attempt in range(max_attempts):
            try:
                outer = build_outer_graph(spec.n, spec.g, spec.K, spec.P, spec.mode, ctx, rng)
                break
            except ConstructionError:
                if attempt == max_attempts - 1:
                    raise
        return cls(spec, ctx, pre, outer, seed)

    @property
    def info_positions(self):
        """Outer-block position of each information packet, in order."""
        if self.precode is None:
            return self.outer.systematic_positions
        return self.outer.systematic_positions[self.precode.info_positions]

    def encode(self, info):
        info = np.asarray(info, dtype=np.uint8)
        pre = info if self.precode is None else encode_precode(info, self.precode)
        return partition(encode_outer(pre, self.outer, self.ctx), self.spec.g)

    def source(self, block: Block, seed=None):
        seed = self.seed if seed is None else seed
        return PacketSource(block, self.spec.q, stream(seed, STREAM_SOURCE))

    def random_info(self, s, seed=None):
        seed = self.seed if seed is None else seed
        return self.ctx.random(stream(seed, STREAM_DATA), (self.spec.K_info, s))
