"""Generations, the random-schedule packet source and the packet wire format.

Wire format (little-endian)::

    0      u8   magic 0x47
    1      u8   version 0x01
    2..3   u16  generation index
    4..5   u16  generation size g
    6      u8   field width m
    7      u8   reserved (0)
    8..    g coefficients, m bits each, LSB-first, padded to a byte boundary
    ...    payload bytes (symbols packed the same way)
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .field import field_for_q

MAGIC = 0x47
VERSION = 0x01
_HEADER = struct.Struct("<BBHHBB")


class PacketFormatError(ValueError):
    pass


def pack_symbols(symbols, m):
    """Pack field symbols (one per byte, ``< 2**m``) into bytes, LSB first."""
    symbols = np.asarray(symbols, dtype=np.uint8)
    if m == 8:
        return symbols.tobytes()
    bits = np.unpackbits(symbols[:, None], axis=1, bitorder="little")[:, :m]
    return np.packbits(bits.reshape(-1), bitorder="little").tobytes()


def unpack_symbols(data, m, count):
    buf = np.frombuffer(data, dtype=np.uint8)
    if m == 8:
        return buf[:count].copy()
    bits = np.unpackbits(buf, bitorder="little")[: count * m].reshape(count, m)
    return np.packbits(bits, axis=1, bitorder="little").reshape(-1)


def bytes_to_symbols(data, m):
    """Split a byte string into GF(2^m) symbols (8/m symbols per byte)."""
    return unpack_symbols(data, m, len(data) * 8 // m)


def symbols_to_bytes(symbols, m):
    return pack_symbols(symbols, m)


@dataclass
class Packet:
    gen_index: int
    coeff_vector: np.ndarray
    payload: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, Packet):
            return NotImplemented
        return (
            self.gen_index == other.gen_index
            and np.array_equal(self.coeff_vector, other.coeff_vector)
            and np.array_equal(self.payload, other.payload)
        )


@dataclass
class Block:
    """``n`` generations of ``g`` outer-coded packets, ``packets[i, j]`` is packet j of generation i."""

    packets: np.ndarray

    @property
    def n(self):
        return self.packets.shape[0]

    @property
    def g(self):
        return self.packets.shape[1]

    @property
    def s(self):
        return self.packets.shape[2]


def partition(outer_coded, g):
    outer_coded = np.asarray(outer_coded, dtype=np.uint8)
    N = len(outer_coded)
    if g < 1 or N % g:
        raise ValueError(f"block of {N} packets is not a multiple of the generation size {g}")
    return Block(outer_coded.reshape(N // g, g, -1))


class PacketSource:
    """Emits SRLNC packets: uniform generation, uniform coefficient vector over GF(q)^g."""

    def __init__(self, block, q, rng):
        self.block = block
        self.ctx = field_for_q(q)
        self.rng = rng

    def __iter__(self):
        return self

    def __next__(self):
        return emit_packet(self.block, self.ctx, self.rng)


def emit_packet(block, ctx, rng):
    j = int(rng.integers(block.n))
    beta = ctx.random(rng, block.g)
    return Packet(j, beta, ctx.combine(beta, block.packets[j]))


def header_length(g, m):
    return _HEADER.size + (g * m + 7) // 8


def serialize(pkt, m):
    g = len(pkt.coeff_vector)
    head = _HEADER.pack(MAGIC, VERSION, pkt.gen_index, g, m, 0)
    return head + pack_symbols(pkt.coeff_vector, m) + pack_symbols(pkt.payload, m)


def deserialize(buf):
    """Parse one packet; the payload is everything after the coefficient vector."""
    if len(buf) < _HEADER.size:
        raise PacketFormatError(f"buffer of {len(buf)} bytes is shorter than the packet header")
    magic, version, gen, g, m, _ = _HEADER.unpack_from(buf)
    if magic != MAGIC or version != VERSION:
        raise PacketFormatError(f"bad magic/version {magic:#x}/{version:#x}")
    if m not in (1, 4, 8):
        raise PacketFormatError(f"bad field width {m}")
    hlen = header_length(g, m)
    if len(buf) < hlen:
        raise PacketFormatError("truncated coefficient vector")
    coeffs = unpack_symbols(buf[_HEADER.size : hlen], m, g)
    body = buf[hlen:]
    payload = unpack_symbols(body, m, len(body) * 8 // m)
    return Packet(gen, coeffs, payload)
