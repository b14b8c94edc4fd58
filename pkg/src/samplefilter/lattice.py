"""Permutohedral lattice for fast high-dimensional Gaussian filtering.

Points are lifted onto the hyperplane ``sum(x) == 0`` of R^(D+1), each point is
splatted onto the D+1 vertices of its enclosing simplex with barycentric
weights, vertex values are blurred with a ``[1, 2, 1] / 4`` stencil along each
of the D+1 lattice directions, and values are read back at arbitrary query
positions by barycentric interpolation.

Inputs are expected to be pre-scaled so that the target kernel is
``exp(-|x_i - x_j|^2 / 2)``.  The result approximates that kernel sum up to a
global positive constant; no density normalization is performed here.

Vertices live in an open-addressing hash table keyed on the first D integer
coordinates of the lattice point (the last one is implied by the zero sum).
"""

from __future__ import annotations

import builtins

import numpy as np
from numba import njit

__all__ = ["PermutohedralLattice", "splat", "blur", "slice", "filter"]

_HASH_MULT = 2531011


@njit(cache=True, inline="always")
def _canonical(remainder, rank, d):
    if rank <= d - remainder:
        return remainder
    return remainder - (d + 1)


@njit(cache=True)
def _locate(pos, scale, elevated, rem0, rank, bary):
    """Find the enclosing simplex of one point.

    Fills ``rem0`` (the nearest remainder-0 lattice point), ``rank`` (the
    ordering of the residual) and ``bary`` (D+1 barycentric weights, plus one
    scratch slot).
    """
    d = pos.shape[0]
    # elevate onto the hyperplane
    sm = 0.0
    for j in range(d, 0, -1):
        cf = pos[j - 1] * scale[j - 1]
        elevated[j] = sm - j * cf
        sm += cf
    elevated[0] = sm

    down = 1.0 / (d + 1)
    up = d + 1
    total = 0
    for i in range(d + 1):
        v = elevated[i] * down
        hi = np.ceil(v) * up
        lo = np.floor(v) * up
        if hi - elevated[i] < elevated[i] - lo:
            rem0[i] = int(hi)
        else:
            rem0[i] = int(lo)
        total += rem0[i]
    total //= d + 1

    for i in range(d + 1):
        rank[i] = 0
    for i in range(d):
        for j in range(i + 1, d + 1):
            if elevated[i] - rem0[i] < elevated[j] - rem0[j]:
                rank[i] += 1
            else:
                rank[j] += 1

    if total > 0:
        for i in range(d + 1):
            if rank[i] >= d + 1 - total:
                rem0[i] -= d + 1
                rank[i] += total - (d + 1)
            else:
                rank[i] += total
    elif total < 0:
        for i in range(d + 1):
            if rank[i] < -total:
                rem0[i] += d + 1
                rank[i] += d + 1 + total
            else:
                rank[i] += total

    for i in range(d + 2):
        bary[i] = 0.0
    for i in range(d + 1):
        v = (elevated[i] - rem0[i]) * down
        bary[d - rank[i]] += v
        bary[d + 1 - rank[i]] -= v
    bary[0] += 1.0 + bary[d + 1]


@njit(cache=True, inline="always")
def _hash(key):
    h = np.uint64(0)
    for k in range(key.shape[0]):
        h = (h + np.uint64(np.int64(key[k]) & 0xFFFFFFFF)) * np.uint64(_HASH_MULT)
    # murmur3 finalizer; the multiply alone leaves the low bits poorly mixed
    h ^= h >> np.uint64(33)
    h *= np.uint64(0xFF51AFD7ED558CCD)
    h ^= h >> np.uint64(33)
    return np.int64(h >> np.uint64(1))


@njit(cache=True)
def _find(table, keys, key):
    mask = table.shape[0] - 1
    slot = _hash(key) & mask
    d = key.shape[0]
    while True:
        idx = table[slot]
        if idx < 0:
            return -1, slot
        same = True
        for k in range(d):
            if keys[idx, k] != key[k]:
                same = False
                break
        if same:
            return idx, slot
        slot = (slot + 1) & mask


@njit(cache=True)
def _rehash(keys, count, size):
    table = np.full(size, -1, dtype=np.int32)
    mask = size - 1
    for idx in range(count):
        slot = _hash(keys[idx]) & mask
        while table[slot] >= 0:
            slot = (slot + 1) & mask
        table[slot] = idx
    return table


@njit(cache=True)
def _build(points, scale):
    n, d = points.shape
    offsets = np.empty((n, d + 1), dtype=np.int32)
    weights = np.empty((n, d + 1), dtype=np.float64)

    cap = 64
    while cap < n:
        cap *= 2
    keys = np.empty((cap, d), dtype=np.int32)
    table = np.full(4 * cap, -1, dtype=np.int32)
    count = 0

    elevated = np.empty(d + 1)
    rem0 = np.empty(d + 1, dtype=np.int64)
    rank = np.empty(d + 1, dtype=np.int64)
    bary = np.empty(d + 2)
    key = np.empty(d, dtype=np.int32)

    for i in range(n):
        _locate(points[i], scale, elevated, rem0, rank, bary)
        for r in range(d + 1):
            for k in range(d):
                key[k] = rem0[k] + _canonical(r, rank[k], d)
            idx, slot = _find(table, keys, key)
            if idx < 0:
                if count == keys.shape[0]:
                    grown = np.empty((2 * keys.shape[0], d), dtype=np.int32)
                    grown[:count] = keys[:count]
                    keys = grown
                idx = count
                keys[idx] = key
                count += 1
                if 2 * count > table.shape[0]:
                    table = _rehash(keys, count, 2 * table.shape[0])
                else:
                    table[slot] = idx
            offsets[i, r] = idx
            weights[i, r] = bary[r]
    return offsets, weights, keys[:count].copy(), table


@njit(cache=True)
def _neighbours(keys, table):
    m, d = keys.shape
    nb = np.empty((d + 1, m, 2), dtype=np.int32)
    k1 = np.empty(d, dtype=np.int32)
    k2 = np.empty(d, dtype=np.int32)
    for j in range(d + 1):
        for v in range(m):
            for k in range(d):
                k1[k] = keys[v, k] - 1
                k2[k] = keys[v, k] + 1
            if j < d:
                k1[j] += d + 1
                k2[j] -= d + 1
            nb[j, v, 0] = _find(table, keys, k1)[0]
            nb[j, v, 1] = _find(table, keys, k2)[0]
    return nb


@njit(cache=True)
def _splat_values(offsets, weights, values, m, out):
    n, n1 = offsets.shape
    nv = values.shape[1]
    out[:] = 0.0
    for i in range(n):
        for r in range(n1):
            w = weights[i, r]
            o = offsets[i, r]
            for c in range(nv):
                out[o, c] += w * values[i, c]


@njit(cache=True)
def _blur(nb, values, scratch):
    n_dir, m, _ = nb.shape
    nv = values.shape[1]
    src = values
    dst = scratch
    for j in range(n_dir):
        for v in range(m):
            a = nb[j, v, 0]
            b = nb[j, v, 1]
            for c in range(nv):
                acc = 0.5 * src[v, c]
                if a >= 0:
                    acc += 0.25 * src[a, c]
                if b >= 0:
                    acc += 0.25 * src[b, c]
                dst[v, c] = acc
        src, dst = dst, src
    return src


@njit(cache=True)
def _slice_at(queries, scale, keys, table, values, out):
    nq, d = queries.shape
    nv = values.shape[1]
    elevated = np.empty(d + 1)
    rem0 = np.empty(d + 1, dtype=np.int64)
    rank = np.empty(d + 1, dtype=np.int64)
    bary = np.empty(d + 2)
    key = np.empty(d, dtype=np.int32)
    for i in range(nq):
        _locate(queries[i], scale, elevated, rem0, rank, bary)
        for c in range(nv):
            out[i, c] = 0.0
        for r in range(d + 1):
            for k in range(d):
                key[k] = rem0[k] + _canonical(r, rank[k], d)
            idx = _find(table, keys, key)[0]
            if idx < 0:
                continue
            w = bary[r]
            for c in range(nv):
                out[i, c] += w * values[idx, c]


@njit(cache=True)
def _slice_splatted(offsets, weights, values, out):
    n, n1 = offsets.shape
    nv = values.shape[1]
    for i in range(n):
        for c in range(nv):
            out[i, c] = 0.0
        for r in range(n1):
            w = weights[i, r]
            o = offsets[i, r]
            for c in range(nv):
                out[i, c] += w * values[o, c]


@njit(cache=True)
def _self_weights(offsets, weights, keys, table):
    """Exact response of each splatted point to its own unit mass.

    Along direction j the blur moves mass by s_j in {-1, 0, +1} steps of
    u_j = (D+1) e_j - 1 with weights 1/4, 1/2, 1/4, and mass landing on a
    vertex missing from the table is dropped.  Since sum_j u_j = 0 the step
    pattern between two vertices is fixed up to a common shift, leaving at
    most three admissible paths per vertex pair; each one is walked.
    """
    n, n1 = offsets.shape
    d = n1 - 1
    out = np.zeros(n)
    cur = np.empty(d, dtype=np.int32)
    delta = np.empty(n1, dtype=np.int64)
    rel = np.empty(n1, dtype=np.int64)
    for i in range(n):
        total = 0.0
        for a in range(n1):
            va = offsets[i, a]
            for b in range(n1):
                vb = offsets[i, b]
                last = 0
                for k in range(d):
                    delta[k] = keys[vb, k] - keys[va, k]
                    last -= delta[k]
                delta[d] = last
                lo = 0
                hi = 0
                rsum = 0
                for k in range(n1):
                    rel[k] = (delta[k] - delta[0]) // n1
                    rsum += rel[k]
                    lo = min(lo, rel[k])
                    hi = max(hi, rel[k])
                consistent = True
                for k in range(n1):
                    if n1 * rel[k] - rsum != delta[k]:
                        consistent = False
                if not consistent:
                    continue
                paths = 0.0
                for shift in range(-1 - lo, 2 - hi):
                    for k in range(d):
                        cur[k] = keys[va, k]
                    w = 1.0
                    for j in range(n1):
                        s = rel[j] + shift
                        if s == 0:
                            w *= 0.5
                            continue
                        w *= 0.25
                        for k in range(d):
                            cur[k] -= s
                        if j < d:
                            cur[j] += s * n1
                        if _find(table, keys, cur)[0] < 0:
                            w = 0.0
                            break
                    paths += w
                total += weights[i, a] * weights[i, b] * paths
        out[i] = total
    return out


def _scale_factors(d: int) -> np.ndarray:
    i = np.arange(d, dtype=np.float64)
    return np.sqrt(2.0 / 3.0) * (d + 1) / np.sqrt((i + 1) * (i + 2))


class PermutohedralLattice:
    """Lattice built over a fixed set of splat positions.

    The structure (simplex vertices and barycentric weights per point) is
    computed once; :meth:`splat`, :meth:`blur` and :meth:`slice` can then be
    run for any number of value arrays, which is what mean-field inference
    relies on.
    """

    def __init__(self, points, dtype=np.float32):
        points = np.ascontiguousarray(points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] < 1:
            raise ValueError(f"points must be (N, D), got shape {points.shape}")
        if not np.all(np.isfinite(points)):
            raise ValueError("points contain non-finite values")
        self.dim = points.shape[1]
        self.num_points = points.shape[0]
        self.dtype = np.dtype(dtype)
        self._scale = _scale_factors(self.dim)
        self.offsets, weights, self.keys, self._table = _build(points, self._scale)
        self.weights = weights.astype(self.dtype)
        self._nb = None
        self.values = None

    @property
    def num_vertices(self) -> int:
        return self.keys.shape[0]

    def neighbours(self) -> np.ndarray:
        if self._nb is None:
            self._nb = _neighbours(self.keys, self._table)
        return self._nb

    def splat(self, values) -> "PermutohedralLattice":
        values = self._check_values(values, self.num_points)
        out = np.empty((self.num_vertices, values.shape[1]), dtype=self.dtype)
        _splat_values(self.offsets, self.weights, values, self.num_vertices, out)
        self.values = out
        return self

    def blur(self) -> "PermutohedralLattice":
        if self.values is None:
            raise RuntimeError("blur() called before splat()")
        scratch = np.empty_like(self.values)
        self.values = _blur(self.neighbours(), self.values, scratch)
        return self

    def slice(self, queries=None) -> np.ndarray:
        """Interpolate vertex values at ``queries`` (defaults to the splat points)."""
        if self.values is None:
            raise RuntimeError("slice() called before splat()")
        nv = self.values.shape[1]
        if queries is None:
            out = np.empty((self.num_points, nv), dtype=self.dtype)
            _slice_splatted(self.offsets, self.weights, self.values, out)
            return out
        queries = np.ascontiguousarray(queries, dtype=np.float64)
        if queries.ndim != 2 or queries.shape[1] != self.dim:
            raise ValueError(
                f"query dimension {queries.shape[-1]} does not match lattice dimension {self.dim}"
            )
        if not np.all(np.isfinite(queries)):
            raise ValueError("queries contain non-finite values")
        out = np.empty((queries.shape[0], nv), dtype=self.dtype)
        if self.num_vertices:
            _slice_at(queries, self._scale, self.keys, self._table, self.values, out)
        else:
            out[:] = 0
        return out

    def slice_points(self, start: int, stop: int | None = None) -> np.ndarray:
        """Slice at splat points ``start:stop`` through their stored simplices."""
        if self.values is None:
            raise RuntimeError("slice_points() called before splat()")
        lo, hi, _ = builtins.slice(start, stop).indices(self.num_points)
        hi = max(lo, hi)
        out = np.empty((hi - lo, self.values.shape[1]), dtype=self.dtype)
        _slice_splatted(self.offsets[lo:hi], self.weights[lo:hi], self.values, out)
        return out

    def self_weights(self) -> np.ndarray:
        """Per-point weight of its own contribution in ``splat -> blur -> slice``."""
        return _self_weights(self.offsets, self.weights.astype(np.float64), self.keys, self._table)

    def _check_values(self, values, n):
        values = np.asarray(values)
        if values.ndim == 1:
            values = values[:, None]
        if values.shape[0] != n:
            raise ValueError(f"expected {n} value rows, got {values.shape[0]}")
        if not np.all(np.isfinite(values)):
            raise ValueError("values contain non-finite entries")
        return np.ascontiguousarray(values, dtype=self.dtype)


def kernel_scale(d: int) -> float:
    """Mass of ``exp(-|x|^2 / 2)`` over R^d divided by the volume per lattice vertex.

    Splatting and blurring conserve mass and slicing integrates each vertex
    over its cell, so multiplying sliced values by this factor puts the result
    on the scale of the exact kernel sum (up to truncation at the edge of the
    occupied lattice).
    """
    return float(np.sqrt(d + 1) * (4.0 * np.pi / 3.0) ** (d / 2.0))


def splat(points, values, dtype=np.float32) -> PermutohedralLattice:
    return PermutohedralLattice(points, dtype=dtype).splat(values)


def blur(lattice: PermutohedralLattice) -> PermutohedralLattice:
    return lattice.blur()


def slice(lattice: PermutohedralLattice, queries) -> np.ndarray:  # noqa: A001
    return lattice.slice(queries)


def filter(train_points, train_values, query_points, dtype=np.float32) -> np.ndarray:  # noqa: A001
    """Approximate ``sum_j exp(-|q_i - x_j|^2 / 2) * v_j`` for every query ``q_i``.

    The lattice is built over training and query positions together (queries
    carry zero mass) so that blurred mass can reach vertices around queries
    that no training point touches.  Output is rescaled by
    :func:`kernel_scale`.
    """
    train_points = np.asarray(train_points, dtype=np.float64)
    query_points = np.asarray(query_points, dtype=np.float64)
    train_values = np.asarray(train_values)
    if train_values.ndim == 1:
        train_values = train_values[:, None]
    if query_points.ndim != 2 or (train_points.size and query_points.shape[1] != train_points.shape[1]):
        raise ValueError("query dimension does not match training dimension")
    ns, nq = train_points.shape[0], query_points.shape[0]
    nv = train_values.shape[1]
    if ns == 0:
        return np.zeros((nq, nv), dtype=dtype)
    lat = PermutohedralLattice(np.vstack([train_points, query_points]), dtype=dtype)
    values = np.zeros((ns + nq, nv), dtype=dtype)
    values[:ns] = train_values
    lat.splat(values).blur()
    out = lat.slice_points(ns)
    out *= kernel_scale(lat.dim)
    return out
