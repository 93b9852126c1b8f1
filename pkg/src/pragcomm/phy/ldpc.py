"""Regular (3,6) LDPC code: construction, systematic encoding, BP decoding.

The parity-check matrix is grown edge by edge in the spirit of progressive
edge growth: every new edge of a variable node goes to the lowest-degree
check node that is more than two check hops away from the variable's
current neighbourhood (no 4- or 6-cycles), relaxing to one hop and then to
"any other check" only when nothing qualifies. After construction the
columns are permuted so that the last ``n - k`` columns form an invertible
block, which gives a systematic encoder with the information bits first.

LLR convention: ``log P(bit=0) / P(bit=1)``; positive means 0.
"""
from __future__ import annotations

import functools
import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

K_INFO = 3072
N_CODED = 6144
VAR_DEGREE = 3
CHECK_DEGREE = 6


class CodeConstructionError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class LdpcCode:
    k: int
    n: int
    seed: int
    check_vars: np.ndarray   # (n - k, dc) variable index of each check's edges
    parity_map: np.ndarray   # (n - k, k) float32 0/1; parity = parity_map @ info mod 2

    @property
    def m(self) -> int:
        return self.n - self.k

    @property
    def rate(self) -> float:
        return self.k / self.n

    @functools.cached_property
    def var_edges(self) -> np.ndarray:
        """(n, dv) flat edge indices (check * dc + slot) touching each variable."""
        flat = self.check_vars.ravel()
        order = np.argsort(flat, kind="stable")
        return order.reshape(self.n, -1)

    def dense_h(self) -> np.ndarray:
        h = np.zeros((self.m, self.n), dtype=np.uint8)
        rows = np.repeat(np.arange(self.m), self.check_vars.shape[1])
        h[rows, self.check_vars.ravel()] = 1
        return h

    def syndrome(self, words: np.ndarray) -> np.ndarray:
        """Per-check parity of hard words, shape (..., n - k)."""
        words = np.asarray(words, dtype=np.uint8)
        return np.bitwise_xor.reduce(words[..., self.check_vars], axis=-1)


# ---------------------------------------------------------------- construction

class _Buckets:
    """Check nodes grouped by current degree, with O(1) move and random pick."""

    def __init__(self, m: int, max_degree: int):
        self.lists = [list(range(m))] + [[] for _ in range(max_degree)]
        self.pos = np.arange(m)
        self.deg = np.zeros(m, dtype=np.int64)
        self.max_degree = max_degree

    def bump(self, c: int) -> None:
        d = self.deg[c]
        lst = self.lists[d]
        i = self.pos[c]
        last = lst[-1]
        lst[i] = last
        self.pos[last] = i
        lst.pop()
        self.deg[c] = d + 1
        if d + 1 < self.max_degree:
            self.pos[c] = len(self.lists[d + 1])
            self.lists[d + 1].append(c)

    def pick(self, forbidden: set, rng: np.random.Generator):
        for d in range(self.max_degree):
            lst = self.lists[d]
            if not lst:
                continue
            if len(lst) > 4 * len(forbidden) + 8:
                while True:
                    c = lst[rng.integers(len(lst))]
                    if c not in forbidden:
                        return c
            allowed = [c for c in lst if c not in forbidden]
            if allowed:
                return allowed[rng.integers(len(allowed))]
        return None


def _grow_edges(n: int, m: int, dv: int, dc: int, rng: np.random.Generator) -> list[list[int]]:
    var_checks: list[list[int]] = [[] for _ in range(n)]
    check_vars: list[list[int]] = [[] for _ in range(m)]
    buckets = _Buckets(m, dc)
    for v in range(n):
        for _ in range(dv):
            own = set(var_checks[v])
            # checks within one hop (4-cycles) and two hops (6-cycles)
            near1 = {c2 for c in own for u in check_vars[c] for c2 in var_checks[u]}
            near2 = {c3 for c2 in near1 for u in check_vars[c2] for c3 in var_checks[u]}
            c = None
            for forbidden in (own | near1 | near2, own | near1, own):
                c = buckets.pick(forbidden, rng)
                if c is not None:
                    break
            if c is None:
                raise CodeConstructionError(f"no admissible check for variable {v}")
            var_checks[v].append(c)
            check_vars[c].append(v)
            buckets.bump(c)
    return check_vars


def _gf2_rref(h: np.ndarray):
    """Gauss-Jordan over GF(2) scanning columns right to left.

    Returns (reduced packed rows, pivot column per row); the pivot list is
    shorter than the row count when ``h`` is rank deficient.
    """
    m, n = h.shape
    packed = np.packbits(h, axis=1)
    pad = (-packed.shape[1]) % 8
    if pad:
        packed = np.pad(packed, ((0, 0), (0, pad)))
    words = packed.view(np.uint64)
    pivots = []
    row = 0
    for col in range(n - 1, -1, -1):
        byte, bit = col >> 3, np.uint8(0x80 >> (col & 7))
        cand = np.flatnonzero(packed[row:, byte] & bit)
        if cand.size == 0:
            continue
        p = row + cand[0]
        if p != row:
            words[[row, p]] = words[[p, row]]
        hits = np.flatnonzero(packed[:, byte] & bit)
        hits = hits[hits != row]
        if hits.size:
            words[hits] ^= words[row]
        pivots.append(col)
        row += 1
        if row == m:
            break
    return packed, pivots


def _assemble(check_vars: list[list[int]], n: int, m: int, seed: int) -> LdpcCode:
    cv = np.asarray(check_vars, dtype=np.int64)
    h = np.zeros((m, n), dtype=np.uint8)
    h[np.repeat(np.arange(m), cv.shape[1]), cv.ravel()] = 1
    packed, pivots = _gf2_rref(h)
    if len(pivots) < m:
        raise CodeConstructionError(f"parity-check rank {len(pivots)} < {m}")
    k = n - m
    pivot_set = set(pivots)
    info_cols = [c for c in range(n) if c not in pivot_set]
    perm = np.asarray(info_cols + pivots, dtype=np.int64)
    new_index = np.empty(n, dtype=np.int64)
    new_index[perm] = np.arange(n)
    bits = np.unpackbits(packed, axis=1)[:, :n]
    parity_map = bits[:, info_cols].astype(np.float32)
    return LdpcCode(k=k, n=n, seed=seed, check_vars=new_index[cv], parity_map=parity_map)


@functools.lru_cache(maxsize=4)
def build_code(seed: int = 0, n: int = N_CODED, k: int = K_INFO,
               dv: int = VAR_DEGREE, dc: int = CHECK_DEGREE, retries: int = 8) -> LdpcCode:
    """Seeded regular (dv, dc) code; re-seeds when the matrix is rank deficient."""
    m = n - k
    if n * dv != m * dc:
        raise ValueError("degrees inconsistent with (n, k)")
    last = None
    for attempt in range(retries):
        rng = np.random.default_rng([seed, attempt])
        try:
            code = _assemble(_grow_edges(n, m, dv, dc, rng), n, m, seed)
        except CodeConstructionError as exc:
            log.info("LDPC construction attempt %d failed: %s", attempt, exc)
            last = exc
            continue
        return code
    raise CodeConstructionError(f"gave up after {retries} attempts: {last}")


# ---------------------------------------------------------------- encoding

def encode(code: LdpcCode, info: np.ndarray) -> np.ndarray:
    """Systematic encoding of one (k,) or a batch (B, k) of info words."""
    info = np.asarray(info)
    if info.shape[-1] != code.k:
        raise ValueError(f"expected {code.k} info bits, got {info.shape[-1]}")
    u = info.astype(np.float32)
    parity = np.mod(u @ code.parity_map.T, 2.0)
    return np.concatenate([info.astype(np.uint8), parity.astype(np.uint8)], axis=-1)


# ---------------------------------------------------------------- decoding

@dataclass
class DecodeResult:
    info: np.ndarray        # (B, k) uint8
    converged: np.ndarray   # (B,) bool
    iterations: np.ndarray  # (B,) int


def _valid(code: LdpcCode, total: np.ndarray) -> np.ndarray:
    hard = (total < 0).astype(np.uint8)
    ok = ~code.syndrome(hard).any(axis=-1)
    # a zero posterior is an undecided bit, never a decision
    return ok & ~(total == 0).any(axis=-1)


def _check_update_sp(t: np.ndarray) -> np.ndarray:
    """Leave-one-out tanh products along the last axis (exact with zeros)."""
    th = np.tanh(0.5 * t)
    left = np.ones_like(th)
    right = np.ones_like(th)
    dc = th.shape[-1]
    for i in range(1, dc):
        left[..., i] = left[..., i - 1] * th[..., i - 1]
        right[..., dc - 1 - i] = right[..., dc - i] * th[..., dc - i]
    ext = np.clip(left * right, -0.999999999999, 0.999999999999)
    return 2.0 * np.arctanh(ext)


def _check_update_ms(t: np.ndarray, offset: float) -> np.ndarray:
    mag = np.abs(t)
    sign = np.where(t < 0, -1.0, 1.0)
    sign_all = np.prod(sign, axis=-1, keepdims=True)
    order = np.argsort(mag, axis=-1)
    min1 = np.take_along_axis(mag, order[..., :1], axis=-1)
    min2 = np.take_along_axis(mag, order[..., 1:2], axis=-1)
    is_min = np.arange(t.shape[-1]) == order[..., :1]
    other_min = np.where(is_min, min2, min1)
    return sign_all * sign * np.maximum(other_min - offset, 0.0)


def decode(code: LdpcCode, llrs: np.ndarray, max_iter: int = 50,
           algorithm: str = "sum-product", offset: float = 0.5,
           llr_clip: float = 60.0) -> DecodeResult:
    """Belief propagation with syndrome early stop, batched over codewords."""
    llrs = np.atleast_2d(np.asarray(llrs, dtype=np.float64))
    if llrs.shape[-1] != code.n:
        raise ValueError(f"expected {code.n} LLRs, got {llrs.shape[-1]}")
    if algorithm not in ("sum-product", "min-sum"):
        raise ValueError(f"unknown algorithm {algorithm!r}")
    llrs = np.clip(llrs, -llr_clip, llr_clip)
    batch = llrs.shape[0]
    cv, ve = code.check_vars, code.var_edges
    m, dc = cv.shape

    total = llrs.copy()
    converged = _valid(code, total)
    iterations = np.zeros(batch, dtype=np.int64)
    active = np.flatnonzero(~converged)
    if active.size:
        chan = llrs[active]
        v2c = chan[:, cv]
        for it in range(1, max_iter + 1):
            if algorithm == "sum-product":
                c2v = _check_update_sp(v2c)
            else:
                c2v = _check_update_ms(v2c, offset)
            flat = c2v.reshape(len(active), m * dc)
            post = chan + flat[:, ve].sum(axis=-1)
            total[active] = post
            iterations[active] = it
            done = _valid(code, post)
            converged[active] = done
            keep = ~done
            if not keep.any():
                break
            active, chan, post, c2v = active[keep], chan[keep], post[keep], c2v[keep]
            v2c = post[:, cv] - c2v
    info = (total[:, :code.k] < 0).astype(np.uint8)
    return DecodeResult(info=info, converged=converged, iterations=iterations)
