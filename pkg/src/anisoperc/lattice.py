"""Finite-box lattices for Z^d x Z^s and their edge sets.

A box has side L along each of the d horizontal axes and side H along each
of the s vertical axes.  Edges joining vertices that differ in a horizontal
coordinate are "d-edges", those differing in a vertical coordinate are
"s-edges".  Three variants are supported:

* ``nearest_neighbor`` -- the plain product lattice.
* ``layered`` -- s = 1 with the vertical coordinate taken modulo l+1
  (l = 1 is the bilayer); vertical arithmetic wraps.
* ``spread_out`` -- the horizontal edge set is widened to every vector of
  sup-norm at most k (k = 1 already includes the diagonals).

Additionally any s = 1 spec can be promoted to a multigraph in which every
vertical edge is replaced by |U| parallel copies, one per horizontal
direction vector; see :func:`build_multigraph`.

Vertices are linearized row-major with the vertical coordinates slowest, so
same-layer vertices (and hence same-layer edges) are contiguous.  Edges are
enumerated d-edges first, vertex-major and direction-minor, which also fixes
the total order used by the coupled exploration: the rank of a d-edge is
simply its position in the enumeration.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import NamedTuple, Optional

import numpy as np

BOUNDARIES = ("free", "periodic")
VARIANTS = ("nearest_neighbor", "layered", "spread_out")

D_EDGE = 0
S_EDGE = 1

# guard for the int32 vertex/edge index space
MAX_VERTICES = 2**31 - 1


class Vertex(NamedTuple):
    u: tuple  # Z^d coordinates
    t: tuple  # Z^s coordinates


class Edge(NamedTuple):
    a: Vertex
    b: Vertex
    kind: int                       # D_EDGE or S_EDGE
    parallel_index: Optional[tuple]  # indexing vector v in U, multigraph verticals only


@dataclass(frozen=True)
class LatticeSpec:
    """Immutable description of a finite box of Z^d x Z^s."""

    d: int
    s: int
    side_d: int
    side_s: int = 2
    boundary_d: str = "periodic"
    boundary_s: str = "periodic"
    variant: str = "nearest_neighbor"
    layers: Optional[int] = None    # l for the layered variant (side_s == l+1)
    range_k: Optional[int] = None   # sup-norm range for spread_out
    multigraph: bool = False

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"d must be >= 1, got {self.d}")
        if self.s < 0:
            raise ValueError(f"s must be >= 0, got {self.s}")
        if self.side_d < 2:
            raise ValueError(f"side_d must be >= 2, got {self.side_d}")
        if self.s > 0 and self.side_s < 2:
            raise ValueError(f"side_s must be >= 2, got {self.side_s}")
        if self.boundary_d not in BOUNDARIES or self.boundary_s not in BOUNDARIES:
            raise ValueError(f"boundary must be one of {BOUNDARIES}")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.variant == "layered":
            if self.s != 1:
                raise ValueError("layered variant requires s = 1")
            if self.layers is None or self.layers < 1:
                raise ValueError("layered variant requires layers >= 1")
            if self.side_s != self.layers + 1:
                raise ValueError(
                    f"layered({self.layers}) requires side_s = {self.layers + 1}, "
                    f"got {self.side_s}"
                )
        elif self.layers is not None:
            raise ValueError("layers is only valid for the layered variant")
        if self.variant == "spread_out":
            if self.range_k is None or self.range_k < 1:
                raise ValueError("spread_out variant requires range_k >= 1")
            if self.boundary_d == "periodic" and 2 * self.range_k >= self.side_d:
                raise ValueError(
                    "periodic spread_out needs 2*range_k < side_d to keep edges simple"
                )
            if self.boundary_d == "free" and self.range_k >= self.side_d:
                raise ValueError("spread_out range_k must be < side_d")
        elif self.range_k is not None:
            raise ValueError("range_k is only valid for the spread_out variant")
        if self.multigraph and self.s != 1:
            raise ValueError("multigraph mode requires s = 1")
        n = self.side_d**self.d * (self.side_s**self.s if self.s else 1)
        if n > MAX_VERTICES:
            raise ValueError(f"box with {n} vertices exceeds the index space")

    @property
    def shape(self) -> tuple:
        return (self.side_d,) * self.d + (self.side_s,) * self.s

    @property
    def n_axes(self) -> int:
        return self.d + self.s

    def boundary(self, axis: int) -> str:
        if axis < self.d:
            return self.boundary_d
        # layered wrap is vertical-periodic by construction
        return "periodic" if self.variant == "layered" else self.boundary_s

    def to_config(self) -> dict:
        """Serialize to the flat key set used in manifests."""
        if self.boundary_d == self.boundary_s:
            boundary = self.boundary_d
        else:
            boundary = f"{self.boundary_d},{self.boundary_s}"
        cfg = {
            "d": self.d,
            "s": self.s,
            "side_d": self.side_d,
            "side_s": self.side_s,
            "boundary": boundary,
            "variant": self.variant,
        }
        if self.layers is not None:
            cfg["layers"] = self.layers
        if self.range_k is not None:
            cfg["range"] = self.range_k
        if self.multigraph:
            cfg["multigraph"] = True
        return cfg

    @classmethod
    def from_config(cls, cfg: dict) -> "LatticeSpec":
        cfg = dict(cfg)
        boundary = cfg.pop("boundary", "periodic")
        parts = [b.strip() for b in str(boundary).split(",")]
        if len(parts) == 1:
            bd = bs = parts[0]
        elif len(parts) == 2:
            bd, bs = parts
        else:
            raise ValueError(f"boundary must be 'bd' or 'bd,bs', got {boundary!r}")
        known = {"d", "s", "side_d", "side_s", "variant", "layers", "range", "multigraph"}
        unknown = set(cfg) - known
        if unknown:
            raise ValueError(f"unknown lattice keys: {sorted(unknown)}")
        return cls(
            d=int(cfg["d"]),
            s=int(cfg.get("s", 0)),
            side_d=int(cfg["side_d"]),
            side_s=int(cfg.get("side_s", 2)),
            boundary_d=bd,
            boundary_s=bs,
            variant=cfg.get("variant", "nearest_neighbor"),
            layers=None if cfg.get("layers") is None else int(cfg["layers"]),
            range_k=None if cfg.get("range") is None else int(cfg["range"]),
            multigraph=bool(cfg.get("multigraph", False)),
        )


def unit_vectors(d: int) -> list:
    """The 2d unit vectors of Z^d, positive axes first: +e_0..+e_{d-1}, -e_0..."""
    if d < 1:
        raise ValueError("d must be >= 1")
    plus = [tuple(1 if j == i else 0 for j in range(d)) for i in range(d)]
    minus = [tuple(-c for c in v) for v in plus]
    return plus + minus


def spread_out_vectors(d: int, k: int) -> list:
    """All nonzero vectors of Z^d with sup-norm <= k, in lexicographic order."""
    if k < 1:
        raise ValueError("range k must be >= 1")
    vs = [v for v in itertools.product(range(-k, k + 1), repeat=d) if any(v)]
    return sorted(vs)


def direction_set(spec: LatticeSpec) -> list:
    """The full horizontal direction set U of the spec (|U| = 2d for NN)."""
    if spec.variant == "spread_out":
        return spread_out_vectors(spec.d, spec.range_k)
    return unit_vectors(spec.d)


def _positive_half(vectors):
    zero = (0,) * len(vectors[0])
    return [v for v in vectors if v > zero]


class Lattice:
    """Materialized edge arrays and index helpers for a LatticeSpec.

    Construction is deterministic: two builds from equal specs produce
    identical arrays.  All arrays are read-only after construction.
    """

    def __init__(self, spec: LatticeSpec):
        self.spec = spec
        self.shape = spec.shape
        sizes = np.array(self.shape, dtype=np.int64)
        self.strides = np.concatenate(([1], np.cumprod(sizes[:-1])))
        self.n_vertices = int(sizes.prod())

        idx = np.arange(self.n_vertices, dtype=np.int64)
        coords = np.empty((self.n_vertices, spec.n_axes), dtype=np.int32)
        for a in range(spec.n_axes):
            coords[:, a] = (idx // self.strides[a]) % sizes[a]
        self.coords = coords

        # direction table: horizontal positive-half block, then vertical axes
        d_dirs = _positive_half(direction_set(spec))
        s_dirs = [
            tuple(1 if j == spec.d + a else 0 for j in range(spec.n_axes))
            for a in range(spec.s)
        ]
        d_dirs = [v + (0,) * spec.s for v in d_dirs]
        self.dir_table = np.array(d_dirs + s_dirs, dtype=np.int32).reshape(
            len(d_dirs) + len(s_dirs), spec.n_axes
        )
        self._n_d_dirs = len(d_dirs)

        eu_d, ev_d, dir_d = self._enumerate_block(range(len(d_dirs)))
        eu_s, ev_s, dir_s = self._enumerate_block(
            range(len(d_dirs), len(d_dirs) + len(s_dirs))
        )

        self.n_d_edges = eu_d.size
        par_s = np.full(eu_s.size, -1, dtype=np.int32)
        if spec.multigraph:
            m = len(direction_set(spec))
            eu_s = np.repeat(eu_s, m)
            ev_s = np.repeat(ev_s, m)
            dir_s = np.repeat(dir_s, m)
            par_s = np.tile(np.arange(m, dtype=np.int32), self.n_s_base_edges(eu_s, m))
        self.edges_u = np.concatenate([eu_d, eu_s])
        self.edges_v = np.concatenate([ev_d, ev_s])
        self.edge_dir = np.concatenate([dir_d, dir_s])
        self.edge_parallel = np.concatenate(
            [np.full(eu_d.size, -1, dtype=np.int32), par_s]
        )
        self.edge_class = np.concatenate(
            [
                np.zeros(eu_d.size, dtype=np.uint8),
                np.ones(eu_s.size, dtype=np.uint8),
            ]
        )
        self.n_edges = self.edges_u.size
        for arr in (self.edges_u, self.edges_v, self.edge_dir,
                    self.edge_parallel, self.edge_class, self.coords):
            arr.setflags(write=False)

        self.origin = int(
            sum(int(sz // 2) * int(st) for sz, st in zip(sizes, self.strides))
        )
        self._faces = {}
        self._steps = {}
        self._lookup = None
        self._adjacency = None

    @staticmethod
    def n_s_base_edges(expanded_eu, m):
        return expanded_eu.size // m if m else 0

    def _enumerate_block(self, dir_indices):
        """Edges for a block of directions, vertex-major and direction-minor."""
        spec = self.spec
        sizes = np.array(self.shape, dtype=np.int64)
        n = self.n_vertices
        dir_indices = list(dir_indices)
        heads = np.zeros((n, len(dir_indices)), dtype=np.int64)
        valid = np.zeros((n, len(dir_indices)), dtype=bool)
        tails = np.arange(n, dtype=np.int64)
        for col, j in enumerate(dir_indices):
            vec = self.dir_table[j]
            nb = self.coords.astype(np.int64) + vec[None, :]
            ok = np.ones(n, dtype=bool)
            dup = True
            for a in range(spec.n_axes):
                c = int(vec[a])
                if c == 0:
                    continue
                if spec.boundary(a) == "periodic":
                    nb[:, a] %= sizes[a]
                    dup = dup and (2 * c) % int(sizes[a]) == 0
                else:
                    ok &= (nb[:, a] >= 0) & (nb[:, a] < sizes[a])
                    dup = False
            h = nb @ self.strides
            if dup:
                # symmetric wrap (e.g. side 2): keep one copy per vertex pair
                ok &= tails < h
            heads[:, col] = h
            valid[:, col] = ok
        flat = valid.ravel()
        eu = np.repeat(tails, len(dir_indices))[flat].astype(np.int32)
        ev = heads.ravel()[flat].astype(np.int32)
        dirs = np.tile(np.array(dir_indices, dtype=np.int32), n)[flat]
        return eu, ev, dirs

    # -- index helpers ----------------------------------------------------

    def vertex_index(self, coords) -> int:
        c = np.asarray(coords, dtype=np.int64)
        if c.shape != (self.spec.n_axes,):
            raise ValueError(f"expected {self.spec.n_axes} coordinates")
        if np.any(c < 0) or np.any(c >= np.array(self.shape)):
            raise ValueError(f"coordinates {tuple(c)} outside box {self.shape}")
        return int(c @ self.strides)

    def vertex_at(self, index: int) -> Vertex:
        c = tuple(int(x) for x in self.coords[index])
        return Vertex(u=c[: self.spec.d], t=c[self.spec.d :])

    def index_of(self, vertex: Vertex) -> int:
        return self.vertex_index(vertex.u + vertex.t)

    def edge_at(self, k: int) -> Edge:
        par = int(self.edge_parallel[k])
        pvec = None
        if par >= 0:
            pvec = direction_set(self.spec)[par]
        return Edge(
            a=self.vertex_at(int(self.edges_u[k])),
            b=self.vertex_at(int(self.edges_v[k])),
            kind=int(self.edge_class[k]),
            parallel_index=pvec,
        )

    def face_vertices(self, axis: int, side: int) -> np.ndarray:
        """Vertex indices on the axis face (side 0 = low, 1 = high)."""
        key = (axis, side)
        if key not in self._faces:
            v = 0 if side == 0 else self.shape[axis] - 1
            self._faces[key] = np.nonzero(self.coords[:, axis] == v)[0].astype(np.int32)
        return self._faces[key]

    def edge_steps(self, axis: int) -> np.ndarray:
        """Per-edge displacement along an axis (canonical tail->head step)."""
        if axis not in self._steps:
            st = self.dir_table[self.edge_dir, axis].astype(np.int8)
            st.setflags(write=False)
            self._steps[axis] = st
        return self._steps[axis]

    def edge_lookup(self) -> dict:
        """Map (min_vertex, max_vertex, parallel) -> edge index."""
        if self._lookup is None:
            lo = np.minimum(self.edges_u, self.edges_v)
            hi = np.maximum(self.edges_u, self.edges_v)
            self._lookup = {
                (int(a), int(b), int(p)): k
                for k, (a, b, p) in enumerate(zip(lo, hi, self.edge_parallel))
            }
        return self._lookup

    def find_edge(self, va: int, vb: int, parallel: int = -1) -> int:
        key = (min(va, vb), max(va, vb), parallel)
        try:
            return self.edge_lookup()[key]
        except KeyError:
            raise KeyError(f"no edge between vertices {va} and {vb} "
                           f"(parallel={parallel})") from None

    def adjacency(self) -> list:
        """Per-vertex incidence lists [(edge_index, other_vertex), ...]."""
        if self._adjacency is None:
            adj = [[] for _ in range(self.n_vertices)]
            for k in range(self.n_edges):
                a = int(self.edges_u[k])
                b = int(self.edges_v[k])
                adj[a].append((k, b))
                if b != a:
                    adj[b].append((k, a))
            self._adjacency = adj
        return self._adjacency


@lru_cache(maxsize=64)
def build_lattice(spec: LatticeSpec) -> Lattice:
    """Build (or fetch the cached) materialized lattice for a spec."""
    return Lattice(spec)


def enumerate_edges(spec: LatticeSpec) -> list:
    """All edges of the box as Edge objects, in enumeration order."""
    lat = build_lattice(spec)
    return [lat.edge_at(k) for k in range(lat.n_edges)]


def build_multigraph(spec: LatticeSpec) -> LatticeSpec:
    """Replace every vertical edge by |U| parallel copies indexed by U."""
    if spec.s != 1:
        raise ValueError("multigraph construction requires s = 1")
    return replace(spec, multigraph=True)


def collapse_multigraph(spec: LatticeSpec) -> LatticeSpec:
    return replace(spec, multigraph=False)


def neighbors(spec: LatticeSpec, vertex) -> list:
    """Incident edges of a vertex with their far endpoints.

    ``vertex`` may be a Vertex, a coordinate tuple, or a linear index.
    Multigraph verticals are listed once per parallel copy.
    """
    lat = build_lattice(spec)
    if isinstance(vertex, Vertex):
        vi = lat.index_of(vertex)
    elif isinstance(vertex, (tuple, list)):
        vi = lat.vertex_index(vertex)
    else:
        vi = int(vertex)
    out = []
    for k, other in lat.adjacency()[vi]:
        out.append((lat.edge_at(k), lat.vertex_at(other)))
    return out


class EdgeOrdering:
    """The fixed total order on the d-edge set of a spec.

    The rank of a d-edge equals its position in the lattice enumeration
    (vertex-major, direction-minor), so ranks are a bijection onto
    0..n_d_edges-1 and identical across rebuilds from equal specs.
    """

    def __init__(self, spec: LatticeSpec):
        self.spec = spec
        lat = build_lattice(spec)
        self.n = lat.n_d_edges
        self.tails = lat.edges_u[: self.n]
        self.heads = lat.edges_v[: self.n]
        self._rank = {}
        for k in range(self.n):
            a, b = int(self.tails[k]), int(self.heads[k])
            self._rank[(min(a, b), max(a, b))] = k

    def rank(self, va: int, vb: int) -> int:
        try:
            return self._rank[(min(va, vb), max(va, vb))]
        except KeyError:
            raise KeyError(f"({va},{vb}) is not a d-edge of the spec") from None

    def edge(self, rank: int) -> tuple:
        return int(self.tails[rank]), int(self.heads[rank])

    def __len__(self):
        return self.n
