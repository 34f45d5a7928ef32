"""Bounding volume hierarchy over triangles plus the ray queries that use it."""
from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np

LEAF_SIZE = 4
STACK_SIZE = 64
RAY_EPS = 1e-10
JIT = dict(cache=True, error_model="numpy", fastmath=False)


@dataclass(frozen=True)
class Bvh:
    """Flat BVH. ``left[i] < 0`` marks a leaf covering ``order[start[i]:start[i] + count[i]]``."""
    bmin: np.ndarray
    bmax: np.ndarray
    left: np.ndarray
    right: np.ndarray
    start: np.ndarray
    count: np.ndarray
    order: np.ndarray
    v0: np.ndarray
    e1: np.ndarray
    e2: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.left)

    def arrays(self):
        return (self.bmin, self.bmax, self.left, self.right, self.start, self.count, self.order,
                self.v0, self.e1, self.e2)


@nb.njit(**JIT)
def _build(tmin, tmax, cent, leaf_size):
    n = tmin.shape[0]
    cap = 2 * n + 1
    bmin = np.empty((cap, 3))
    bmax = np.empty((cap, 3))
    left = np.full(cap, -1, np.int32)
    right = np.full(cap, -1, np.int32)
    start = np.zeros(cap, np.int32)
    count = np.zeros(cap, np.int32)
    order = np.arange(n).astype(np.int32)
    stack_node = np.empty(cap, np.int32)
    stack_lo = np.empty(cap, np.int32)
    stack_hi = np.empty(cap, np.int32)
    n_nodes = 1
    sp = 0
    stack_node[0] = 0
    stack_lo[0] = 0
    stack_hi[0] = n
    sp = 1
    while sp > 0:
        sp -= 1
        node = stack_node[sp]
        lo = stack_lo[sp]
        hi = stack_hi[sp]
        for a in range(3):
            mn = np.inf
            mx = -np.inf
            for k in range(lo, hi):
                t = order[k]
                if tmin[t, a] < mn:
                    mn = tmin[t, a]
                if tmax[t, a] > mx:
                    mx = tmax[t, a]
            bmin[node, a] = mn
            bmax[node, a] = mx
        if hi - lo <= leaf_size:
            start[node] = lo
            count[node] = hi - lo
            continue
        axis = 0
        ext = bmax[node, 0] - bmin[node, 0]
        for a in range(1, 3):
            if bmax[node, a] - bmin[node, a] > ext:
                ext = bmax[node, a] - bmin[node, a]
                axis = a
        keys = np.empty(hi - lo)
        for k in range(lo, hi):
            keys[k - lo] = cent[order[k], axis]
        perm = np.argsort(keys, kind="mergesort")
        seg = order[lo:hi].copy()
        for k in range(hi - lo):
            order[lo + k] = seg[perm[k]]
        mid = (lo + hi) // 2
        l = n_nodes
        r = n_nodes + 1
        n_nodes += 2
        left[node] = l
        right[node] = r
        stack_node[sp] = r
        stack_lo[sp] = mid
        stack_hi[sp] = hi
        sp += 1
        stack_node[sp] = l
        stack_lo[sp] = lo
        stack_hi[sp] = mid
        sp += 1
    return bmin[:n_nodes], bmax[:n_nodes], left[:n_nodes], right[:n_nodes], start[:n_nodes], count[:n_nodes], order


def build_bvh(triangles: np.ndarray, leaf_size: int = LEAF_SIZE) -> Bvh:
    """Median split on the longest axis of each node's bounds."""
    tri = np.ascontiguousarray(triangles, dtype=np.float64).reshape(-1, 3, 3)
    if len(tri) == 0:
        z3 = np.zeros((0, 3))
        zi = np.zeros(0, np.int32)
        return Bvh(np.full((1, 3), np.inf), np.full((1, 3), -np.inf), np.full(1, -1, np.int32),
                   np.full(1, -1, np.int32), np.zeros(1, np.int32), np.zeros(1, np.int32), zi, z3, z3, z3)
    parts = _build(tri.min(axis=1), tri.max(axis=1), tri.mean(axis=1), leaf_size)
    v0 = np.ascontiguousarray(tri[:, 0])
    e1 = np.ascontiguousarray(tri[:, 1] - tri[:, 0])
    e2 = np.ascontiguousarray(tri[:, 2] - tri[:, 0])
    return Bvh(*(np.ascontiguousarray(p) for p in parts), v0, e1, e2)


@nb.njit(**JIT)
def _hit_box(bmin, bmax, node, ox, oy, oz, ix, iy, iz, tmax):
    t0 = (bmin[node, 0] - ox) * ix
    t1 = (bmax[node, 0] - ox) * ix
    lo = min(t0, t1)
    hi = max(t0, t1)
    t0 = (bmin[node, 1] - oy) * iy
    t1 = (bmax[node, 1] - oy) * iy
    lo = max(lo, min(t0, t1))
    hi = min(hi, max(t0, t1))
    t0 = (bmin[node, 2] - oz) * iz
    t1 = (bmax[node, 2] - oz) * iz
    lo = max(lo, min(t0, t1))
    hi = min(hi, max(t0, t1))
    return hi >= max(lo, 0.0) and lo <= tmax


@nb.njit(**JIT)
def _hit_tri(v0, e1, e2, t, ox, oy, oz, dx, dy, dz):
    """Moller-Trumbore; returns (distance, b1, b2) or distance = inf."""
    px = dy * e2[t, 2] - dz * e2[t, 1]
    py = dz * e2[t, 0] - dx * e2[t, 2]
    pz = dx * e2[t, 1] - dy * e2[t, 0]
    det = e1[t, 0] * px + e1[t, 1] * py + e1[t, 2] * pz
    if abs(det) < 1e-300:
        return np.inf, 0.0, 0.0
    inv = 1.0 / det
    sx = ox - v0[t, 0]
    sy = oy - v0[t, 1]
    sz = oz - v0[t, 2]
    b1 = (sx * px + sy * py + sz * pz) * inv
    if b1 < -RAY_EPS or b1 > 1.0 + RAY_EPS:
        return np.inf, 0.0, 0.0
    qx = sy * e1[t, 2] - sz * e1[t, 1]
    qy = sz * e1[t, 0] - sx * e1[t, 2]
    qz = sx * e1[t, 1] - sy * e1[t, 0]
    b2 = (dx * qx + dy * qy + dz * qz) * inv
    if b2 < -RAY_EPS or b1 + b2 > 1.0 + RAY_EPS:
        return np.inf, 0.0, 0.0
    d = (e2[t, 0] * qx + e2[t, 1] * qy + e2[t, 2] * qz) * inv
    if d <= 0.0:
        return np.inf, 0.0, 0.0
    return d, b1, b2


@nb.njit(**JIT)
def trace(bmin, bmax, left, right, start, count, order, v0, e1, e2, stack,
          ox, oy, oz, dx, dy, dz, tmin, tmax, any_hit):
    """Nearest (or any) hit with tmin < t < tmax. Returns (triangle, t, b1, b2); triangle -1 on miss."""
    best_t = tmax
    best = -1
    bb1 = 0.0
    bb2 = 0.0
    if order.shape[0] == 0:
        return best, best_t, bb1, bb2
    ix = 1.0 / dx
    iy = 1.0 / dy
    iz = 1.0 / dz
    sp = 0
    stack[0] = 0
    sp = 1
    while sp > 0:
        sp -= 1
        node = stack[sp]
        if not _hit_box(bmin, bmax, node, ox, oy, oz, ix, iy, iz, best_t):
            continue
        if left[node] < 0:
            for k in range(start[node], start[node] + count[node]):
                t = order[k]
                d, b1, b2 = _hit_tri(v0, e1, e2, t, ox, oy, oz, dx, dy, dz)
                # ties go to the lower triangle index so results do not depend on traversal order
                if d > tmin and (d < best_t or (d == best_t and best >= 0 and t < best)):
                    best_t = d
                    best = t
                    bb1 = b1
                    bb2 = b2
                    if any_hit:
                        return best, best_t, bb1, bb2
            continue
        stack[sp] = right[node]
        stack[sp + 1] = left[node]
        sp += 2
    return best, best_t, bb1, bb2
