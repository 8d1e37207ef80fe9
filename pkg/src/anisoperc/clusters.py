"""Cluster identification and observables on sampled configurations.

The production path is union-find (path compression + union by size, with a
displacement payload for periodic wrap detection).  A deliberately separate
breadth-first flood fill over adjacency lists provides the reference answer
for tests; the two never share traversal code.

Spanning semantics by boundary:

* free along the axis -- some open cluster intersects both opposing faces;
* periodic along the axis -- some open cluster wraps, i.e. contains a cycle
  with nonzero winding number, detected via relative displacements.
"""

from __future__ import annotations

from collections import Counter, deque
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from . import _unionfind as uf
from .lattice import LatticeSpec, build_lattice
from .sampling import Configuration, Params, edge_thresholds

EXACT_ENUM_MAX_EDGES = 20


@dataclass
class ClusterLabeling:
    """Union-find forest flattened to one root per vertex."""

    parent: np.ndarray      # parent[v] is the root of v (fully compressed)
    size: np.ndarray        # size[r] is the component size for roots r
    n_components: int

    def find(self, v: int) -> int:
        return int(self.parent[v])

    def connected(self, a: int, b: int) -> bool:
        return self.parent[a] == self.parent[b]

    def roots(self) -> np.ndarray:
        return np.unique(self.parent)

    def members(self, v: int) -> np.ndarray:
        return np.nonzero(self.parent == self.parent[v])[0]

    def component_sizes(self) -> np.ndarray:
        return self.size[self.roots()]


@dataclass
class ClusterStats:
    """Per-configuration observables used by the estimators."""

    origin_size: int
    max_size: int
    spanning: tuple          # one flag per axis
    histogram: dict          # component size -> number of components

    @property
    def spans_any(self) -> bool:
        return any(self.spanning)


class OriginCluster(NamedTuple):
    size: int
    members: np.ndarray


def label_clusters(config: Configuration) -> ClusterLabeling:
    """Label open-edge components; connectivity equals the transitive closure."""
    lat = build_lattice(config.spec)
    parent = uf.label_components(
        lat.n_vertices, lat.edges_u, lat.edges_v, config.states
    )
    size = np.bincount(parent, minlength=lat.n_vertices).astype(np.int64)
    n_comp = int((size > 0).sum())
    return ClusterLabeling(parent=parent, size=size, n_components=n_comp)


def bfs_components(config: Configuration) -> list:
    """Reference flood fill: list of components as frozensets of vertices.

    Kept independent of the union-find path on purpose; tests compare the
    two for exact set equality.
    """
    lat = build_lattice(config.spec)
    adj = lat.adjacency()
    seen = np.zeros(lat.n_vertices, dtype=bool)
    comps = []
    for start in range(lat.n_vertices):
        if seen[start]:
            continue
        comp = {start}
        seen[start] = True
        queue = deque([start])
        while queue:
            v = queue.popleft()
            for k, w in adj[v]:
                if config.states[k] and not seen[w]:
                    seen[w] = True
                    comp.add(w)
                    queue.append(w)
        comps.append(frozenset(comp))
    return comps


def cluster_of_origin(config: Configuration) -> OriginCluster:
    """Size and membership of the open cluster containing the center vertex."""
    lat = build_lattice(config.spec)
    labeling = label_clusters(config)
    members = labeling.members(lat.origin)
    return OriginCluster(size=int(members.size), members=members)


def origin_size(config: Configuration) -> int:
    lat = build_lattice(config.spec)
    return int(
        uf.origin_component_size(
            lat.n_vertices, lat.edges_u, lat.edges_v, config.states, lat.origin
        )
    )


def spans(config: Configuration, axis: int) -> bool:
    """Axis-spanning indicator under the axis's own boundary rule.

    Note the side-2 periodic degeneracy: the doubled edge between a vertex
    pair is collapsed at enumeration time, so winding there needs a longer
    cycle.
    """
    lat = build_lattice(config.spec)
    spec = config.spec
    if not 0 <= axis < spec.n_axes:
        raise ValueError(f"axis {axis} outside 0..{spec.n_axes - 1}")
    if spec.boundary(axis) == "periodic":
        steps = lat.edge_steps(axis)
        return bool(
            uf.wraps_axis(lat.n_vertices, lat.edges_u, lat.edges_v,
                          steps, config.states)
        )
    return bool(
        uf.spans_free_axis(
            lat.n_vertices, lat.edges_u, lat.edges_v, config.states,
            lat.face_vertices(axis, 0), lat.face_vertices(axis, 1),
        )
    )


def cluster_stats(config: Configuration) -> ClusterStats:
    lat = build_lattice(config.spec)
    labeling = label_clusters(config)
    comp_sizes = labeling.component_sizes()
    spanning = tuple(spans(config, a) for a in range(config.spec.n_axes))
    hist = Counter(int(s) for s in comp_sizes)
    return ClusterStats(
        origin_size=int(labeling.size[labeling.find(lat.origin)]),
        max_size=int(comp_sizes.max()),
        spanning=spanning,
        histogram=dict(sorted(hist.items())),
    )


def size_distribution(configs) -> dict:
    """Histogram of |C(0)| over an iterable of configurations."""
    hist = Counter()
    for cfg in configs:
        hist[origin_size(cfg)] += 1
    return dict(sorted(hist.items()))


def exact_origin_size_law(spec: LatticeSpec, params: Params,
                          max_edges: int = EXACT_ENUM_MAX_EDGES) -> dict:
    """Exact law of |C(0)| by exhaustive enumeration of edge states.

    Sums P(state) * 1{|C(0)| = k} over all 2^m states, so it is the ground
    truth any sampler must match.  Refuses boxes with more than ``max_edges``
    edges (2^20 states is the practical ceiling).
    """
    lat = build_lattice(spec)
    m = lat.n_edges
    if m > max_edges:
        raise ValueError(
            f"exact enumeration limited to {max_edges} edges, box has {m}"
        )
    sizes = uf.origin_sizes_all_masks(
        lat.n_vertices, lat.edges_u, lat.edges_v, lat.origin
    )
    thr = edge_thresholds(spec, params)
    masks = np.arange(1 << m, dtype=np.int64)
    log_w = np.zeros(masks.size, dtype=np.float64)
    # accumulate log-weights edge by edge to keep memory at one row
    for k in range(m):
        bit = (masks >> k) & 1
        pk = thr[k]
        with np.errstate(divide="ignore"):
            log_w += np.where(bit == 1, np.log(pk), np.log1p(-pk))
    w = np.exp(log_w)
    law = np.bincount(sizes, weights=w, minlength=lat.n_vertices + 1)
    total = law.sum()
    if not np.isclose(total, 1.0, atol=1e-9):
        raise AssertionError(f"enumeration weights sum to {total}, not 1")
    return {k: float(v) for k, v in enumerate(law) if v > 0.0}
