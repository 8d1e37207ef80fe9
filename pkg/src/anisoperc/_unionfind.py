"""Numba union-find kernels shared by cluster labeling and wrap detection.

All kernels take flat edge arrays (tail, head) plus a boolean open mask and
work on int32 vertex indices.  Path compression plus union by size keeps
every pass effectively linear.  The displacement variant carries an integer
potential per vertex (offset to its root in the universal cover along one
axis) so that a cycle with nonzero winding, i.e. a cluster wrapping a
periodic axis, is detected the moment a closing edge disagrees with the
stored potentials.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _find(parent, x):
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        nxt = parent[x]
        parent[x] = root
        x = nxt
    return root


@njit(cache=True)
def label_components(n, eu, ev, open_mask):
    """Flattened root per vertex; roots satisfy parent[r] == r."""
    parent = np.arange(n, dtype=np.int32)
    size = np.ones(n, dtype=np.int64)
    for k in range(eu.size):
        if not open_mask[k]:
            continue
        ra = _find(parent, eu[k])
        rb = _find(parent, ev[k])
        if ra != rb:
            if size[ra] < size[rb]:
                ra, rb = rb, ra
            parent[rb] = ra
            size[ra] += size[rb]
    for v in range(n):
        parent[v] = _find(parent, v)
    return parent


@njit(cache=True)
def _find_pot(parent, pot, x):
    """Root of x and its potential relative to the root, with compression."""
    root = x
    total = np.int64(0)
    while parent[root] != root:
        total += pot[root]
        root = parent[root]
    cur = x
    acc = total
    while cur != root:
        nxt = parent[cur]
        old = pot[cur]
        parent[cur] = root
        pot[cur] = acc
        acc -= old
        cur = nxt
    return root, total


@njit(cache=True)
def wraps_axis(n, eu, ev, steps, open_mask):
    """True iff some open cluster winds the periodic axis of ``steps``.

    ``steps[k]`` is the signed displacement of edge k along the axis in the
    universal cover (tail + step = head before wrapping).
    """
    parent = np.arange(n, dtype=np.int32)
    size = np.ones(n, dtype=np.int64)
    pot = np.zeros(n, dtype=np.int64)
    for k in range(eu.size):
        if not open_mask[k]:
            continue
        a = eu[k]
        b = ev[k]
        d = np.int64(steps[k])
        ra, pa = _find_pot(parent, pot, a)
        rb, pb = _find_pot(parent, pot, b)
        if ra == rb:
            if pa + d != pb:
                return True
        else:
            if size[ra] < size[rb]:
                parent[ra] = rb
                pot[ra] = pb - d - pa
                size[rb] += size[ra]
            else:
                parent[rb] = ra
                pot[rb] = pa + d - pb
                size[ra] += size[rb]
    return False


@njit(cache=True)
def spans_free_axis(n, eu, ev, open_mask, face_lo, face_hi):
    """True iff one open cluster meets both opposing faces of an axis."""
    parent = np.arange(n, dtype=np.int32)
    size = np.ones(n, dtype=np.int64)
    for k in range(eu.size):
        if not open_mask[k]:
            continue
        ra = _find(parent, eu[k])
        rb = _find(parent, ev[k])
        if ra != rb:
            if size[ra] < size[rb]:
                ra, rb = rb, ra
            parent[rb] = ra
            size[ra] += size[rb]
    touched = np.zeros(n, dtype=np.uint8)
    for i in range(face_lo.size):
        touched[_find(parent, face_lo[i])] = 1
    for i in range(face_hi.size):
        if touched[_find(parent, face_hi[i])] == 1:
            return True
    return False


@njit(cache=True)
def origin_component_size(n, eu, ev, open_mask, origin):
    """|C(origin)| for a single configuration."""
    parent = np.arange(n, dtype=np.int32)
    size = np.ones(n, dtype=np.int64)
    for k in range(eu.size):
        if not open_mask[k]:
            continue
        ra = _find(parent, eu[k])
        rb = _find(parent, ev[k])
        if ra != rb:
            if size[ra] < size[rb]:
                ra, rb = rb, ra
            parent[rb] = ra
            size[ra] += size[rb]
    return size[_find(parent, origin)]


@njit(cache=True)
def origin_sizes_all_masks(n, eu, ev, origin):
    """|C(origin)| for every one of the 2^m edge subsets (m = eu.size).

    Exhaustive-enumeration backend for exact small-box laws; callers guard
    m <= 20.
    """
    m = eu.size
    total = np.int64(1) << m
    out = np.empty(total, dtype=np.int32)
    parent = np.empty(n, dtype=np.int32)
    size = np.empty(n, dtype=np.int32)
    for mask in range(total):
        for v in range(n):
            parent[v] = v
            size[v] = 1
        for k in range(m):
            if (mask >> k) & 1:
                ra = _find(parent, eu[k])
                rb = _find(parent, ev[k])
                if ra != rb:
                    if size[ra] < size[rb]:
                        ra, rb = rb, ra
                    parent[rb] = ra
                    size[ra] += size[rb]
        out[mask] = size[_find(parent, origin)]
    return out
