"""Arithmetic over GF(2^m) and per-generation incremental Gaussian elimination.

Field elements are stored one per ``uint8``.  Payloads are vectors of field
symbols (``uint8`` arrays with values below ``q``); packing symbols into bytes
happens only at the wire boundary (see :mod:`gammanet.srlnc`).
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

# x^4+x+1 and x^8+x^4+x^3+x^2+1
PRIMITIVE_POLYS = {1: 0b11, 4: 0b10011, 8: 0x11D}


class FieldError(ValueError):
    pass


class InconsistentSystem(FieldError):
    pass


class NotFullRank(FieldError):
    pass


def _poly_mulmod(a, b, poly, m):
    """Carry-less multiply of a and b reduced modulo ``poly``."""
    r = 0
    while b:
        if b & 1:
            r ^= a
        b >>= 1
        a <<= 1
        if a >> m:
            a ^= poly
    return r


def _is_irreducible(poly, m):
    # no factor of degree <= m/2
    for d in range(1, m // 2 + 1):
        for f in range(1 << d, 1 << (d + 1)):
            if _poly_divmod(poly, f) == 0:
                return False
    return True


def _poly_divmod(a, b):
    db = b.bit_length() - 1
    while a and a.bit_length() - 1 >= db:
        a ^= b << (a.bit_length() - 1 - db)
    return a


class FieldContext:
    """GF(2^m) for m in {1, 4, 8} with log/antilog multiplication tables.

    The full ``q x q`` product table ``mul`` and the inverse table ``inv`` are
    exposed as numpy arrays so that callers can vectorise with fancy indexing:
    ``ctx.mul[a[:, None], B]`` multiplies row ``i`` of ``B`` by ``a[i]``.
    """

    def __init__(self, m=8, prim_poly=None):
        if m not in PRIMITIVE_POLYS:
            raise FieldError(f"unsupported field width m={m}; use 1, 4 or 8")
        self.m = m
        self.q = 1 << m
        self.prim_poly = PRIMITIVE_POLYS[m] if prim_poly is None else prim_poly
        if self.prim_poly.bit_length() - 1 != m or not _is_irreducible(self.prim_poly, m):
            raise FieldError(f"polynomial {self.prim_poly:#x} is not irreducible of degree {m}")

        q = self.q
        exp = np.zeros(2 * q, dtype=np.int64)
        log = np.zeros(q, dtype=np.int64)
        x = 1
        for i in range(q - 1):
            exp[i] = x
            log[x] = i
            x = _poly_mulmod(x, 2, self.prim_poly, m) if m > 1 else x
        exp[q - 1 : 2 * (q - 1)] = exp[: q - 1]
        if m > 1 and len(set(exp[: q - 1].tolist())) != q - 1:
            raise FieldError(f"polynomial {self.prim_poly:#x} is not primitive")
        self.exp = exp
        self.log = log

        a = np.arange(q)
        mul = exp[(log[a][:, None] + log[a][None, :]) % max(q - 1, 1)]
        mul[0, :] = 0
        mul[:, 0] = 0
        self.mul = mul.astype(np.uint8)
        inv = np.zeros(q, dtype=np.uint8)
        inv[1:] = exp[(-log[1:]) % max(q - 1, 1)]
        self.inv = inv

    def __repr__(self):
        return f"FieldContext(m={self.m}, prim_poly={self.prim_poly:#x})"

    def __reduce__(self):
        return (get_field, (self.m,))

    def random(self, rng, size):
        return rng.integers(0, self.q, size=size, dtype=np.uint8)

    def combine(self, coeffs, rows):
        """Return ``sum_i coeffs[i] * rows[i]`` over the field."""
        coeffs = np.asarray(coeffs, dtype=np.uint8)
        if len(coeffs) == 0:
            return np.zeros(rows.shape[1:], dtype=np.uint8)
        return np.bitwise_xor.reduce(self.mul[coeffs[:, None], rows], axis=0)


@lru_cache(maxsize=None)
def get_field(m):
    return FieldContext(m)


def field_for_q(q):
    widths = {2: 1, 16: 4, 256: 8}
    if q not in widths:
        raise FieldError(f"unsupported alphabet size q={q}; use 2, 16 or 256")
    return get_field(widths[q])


def ff_mul(ctx, a, b):
    return int(ctx.mul[a, b])


def ff_inv(ctx, a):
    if a == 0:
        raise FieldError("no inverse")
    return int(ctx.inv[a])


class GenerationSystem:
    """Linear equations over the ``g`` packets of one generation.

    Rows are kept in reduced row-echelon form over the still-unknown columns,
    with every pivot normalised to one.  Known packets are substituted out as
    soon as they are learned, so each stored row touches unknown columns only.
    """

    def __init__(self, ctx, g, s):
        self.ctx = ctx
        self.g = g
        self.s = s
        self._rows = np.zeros((g, g + s), dtype=np.uint8)
        self._pivot_cols = np.zeros(g, dtype=np.int64)
        self.rank = 0
        self.known = np.zeros(g, dtype=bool)
        self.known_values = np.zeros((g, s), dtype=np.uint8)

    @property
    def coeff_rows(self):
        return self._rows[: self.rank, : self.g]

    @property
    def rhs_rows(self):
        return self._rows[: self.rank, self.g :]

    @property
    def pivots(self):
        return {int(c): r for r, c in enumerate(self._pivot_cols[: self.rank])}

    @property
    def solved(self):
        return {int(i): self.known_values[i] for i in np.flatnonzero(self.known)}

    @property
    def num_known(self):
        return int(self.known.sum())

    def is_full_rank(self):
        return self.rank + self.num_known == self.g

    def _reduce(self, v):
        g, mul = self.g, self.ctx.mul
        kc = np.flatnonzero(self.known & (v[:g] != 0))
        if len(kc):
            v[g:] ^= np.bitwise_xor.reduce(mul[v[kc][:, None], self.known_values[kc]], axis=0)
            v[kc] = 0
        if self.rank:
            pc = self._pivot_cols[: self.rank]
            sel = np.flatnonzero(v[pc])
            if len(sel):
                v ^= np.bitwise_xor.reduce(mul[v[pc[sel]][:, None], self._rows[sel]], axis=0)
        return v

    def _insert(self, v):
        """Store an already reduced row; return 1 if it carried a new pivot."""
        g, ctx = self.g, self.ctx
        nz = np.flatnonzero(v[:g])
        if len(nz) == 0:
            if v[g:].any():
                raise InconsistentSystem("inconsistent system")
            return 0
        c = nz[0]
        if v[c] != 1:
            v = ctx.mul[ctx.inv[v[c]], v]
        if self.rank:
            rows = self._rows[: self.rank]
            hit = np.flatnonzero(rows[:, c])
            if len(hit):
                rows[hit] ^= ctx.mul[rows[hit, c][:, None], v[None, :]]
        self._rows[self.rank] = v
        self._pivot_cols[self.rank] = c
        self.rank += 1
        return 1

    def add_equation(self, coeffs, payload):
        """Add ``sum_j coeffs[j] u_j = payload``; return the rank increase (0 or 1)."""
        if len(coeffs) != self.g:
            raise FieldError(f"coefficient vector has length {len(coeffs)}, expected {self.g}")
        v = np.empty(self.g + self.s, dtype=np.uint8)
        v[: self.g] = coeffs
        v[self.g :] = payload
        return self._insert(self._reduce(v))

    def substitute_known(self, index, payload):
        """Eliminate packet ``index`` from the system.

        Returns the ``(index, payload)`` pairs of packets that became determined
        because the system reached full rank.
        """
        if self.known[index]:
            raise FieldError(f"packet {index} already solved")
        g, ctx = self.g, self.ctx
        self.known[index] = True
        self.known_values[index] = payload
        if self.rank:
            rows = self._rows[: self.rank]
            hit = np.flatnonzero(rows[:, index])
            if len(hit):
                rows[hit, g:] ^= ctx.mul[rows[hit, index][:, None], np.asarray(payload, dtype=np.uint8)[None, :]]
                rows[hit, index] = 0
            where = np.flatnonzero(self._pivot_cols[: self.rank] == index)
            if len(where):
                r = int(where[0])
                orphan = self._rows[r].copy()
                last = self.rank - 1
                self._rows[r] = self._rows[last]
                self._pivot_cols[r] = self._pivot_cols[last]
                self.rank -= 1
                # orphan is already zero in every remaining pivot column
                self._insert(orphan)
        if self.rank and self.is_full_rank():
            return self._drain()
        return []

    def _drain(self):
        out = []
        for r in range(self.rank):
            c = int(self._pivot_cols[r])
            val = self._rows[r, self.g :].copy()
            self.known[c] = True
            self.known_values[c] = val
            out.append((c, val))
        self.rank = 0
        return out

    def take_solution(self):
        """Mark every pivot packet known and return them (system must be full rank)."""
        if not self.is_full_rank():
            raise NotFullRank("not full rank")
        return self._drain()

    def solve_full_rank(self):
        """Return all ``g`` packet payloads as a ``(g, s)`` array."""
        if not self.is_full_rank():
            raise NotFullRank("not full rank")
        out = self.known_values.copy()
        for r in range(self.rank):
            out[self._pivot_cols[r]] = self._rows[r, self.g :]
        return out


def rank_oracle(ctx, matrix):
    """Rank by plain row reduction on Python lists (independent of GenerationSystem)."""
    rows = [list(map(int, r)) for r in np.asarray(matrix)]
    if not rows:
        return 0
    ncols = len(rows[0])
    rank = 0
    for col in range(ncols):
        piv = next((i for i in range(rank, len(rows)) if rows[i][col]), None)
        if piv is None:
            continue
        rows[rank], rows[piv] = rows[piv], rows[rank]
        inv = ff_inv(ctx, rows[rank][col])
        rows[rank] = [ff_mul(ctx, inv, x) for x in rows[rank]]
        for i in range(len(rows)):
            if i != rank and rows[i][col]:
                f = rows[i][col]
                rows[i] = [a ^ ff_mul(ctx, f, b) for a, b in zip(rows[i], rows[rank])]
        rank += 1
    return rank


def batch_rank(ctx, mats):
    """Ranks of a stack of matrices, shape ``(batch, rows, cols)``, eliminated in lockstep."""
    a = np.array(mats, dtype=np.uint8, copy=True)
    b, nr, nc = a.shape
    rank = np.zeros(b, dtype=np.int64)
    idx = np.arange(b)
    mul, inv = ctx.mul, ctx.inv
    for col in range(nc):
        live = rank < nr
        cand = a[:, :, col] != 0
        cand &= np.arange(nr)[None, :] >= rank[:, None]
        has = cand.any(axis=1) & live
        if not has.any():
            continue
        piv = np.argmax(cand, axis=1)
        hb = idx[has]
        r, p = rank[hb], piv[hb]
        tmp = a[hb, r].copy()
        a[hb, r] = a[hb, p]
        a[hb, p] = tmp
        prow = mul[inv[a[hb, r, col]][:, None], a[hb, r]]
        a[hb, r] = prow
        f = a[hb, :, col].copy()
        f[np.arange(len(hb)), r] = 0
        a[hb] ^= mul[f[:, :, None], prow[:, None, :]]
        rank[hb] += 1
    return rank
