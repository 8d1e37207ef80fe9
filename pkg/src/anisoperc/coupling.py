"""Dynamical coupling: adaptive exploration of the origin's cluster.

The exploration walks the multigraph ``Z^d x Z`` (or its layered quotient)
one d-edge at a time.  At step n it takes f_n, the earliest undecided d-edge
at the outer boundary of the explored column set S^pi, looks at the state of
the horizontal copy of f_n in the layer of its base column, and on failure
attempts a v-hook: the vertical parallel copy indexed by the direction of
f_n followed by the horizontal copy one layer up.  Either success emits
eta(f_n) = 1 and admits a new column; both failing emits eta(f_n) = 0.  The
emitted field is iid Bernoulli(r) with r = p + q_bar p (1-p), and the
eta = 1 edge set dominates an independent percolation at r.

Edge states are sampled lazily on first probe (deferred decisions).  Probe
keys are physical edge identities, and the structure of the walk guarantees
no key is ever probed twice; the ledger turns that proof fact into a runtime
assertion.  Exploration stops when the frontier dies, the step budget runs
out, a column reaches the box face, or (non-layered mode with an explicit
window) a hook would climb past the height window.
"""

from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import NamedTuple, Optional

import numpy as np

from . import _unionfind as uf
from .clusters import exact_origin_size_law
from .estimators import Estimate, wilson_ci
from .lattice import (EdgeOrdering, LatticeSpec, build_lattice,
                      build_multigraph, direction_set)
from .sampling import Configuration, Params, edge_thresholds, stream_rng, \
    theorem_threshold

OUTCOMES = ("died", "reached_boundary", "budget_exhausted", "window_exhausted")


class WindowExhausted(Exception):
    """A vertical step would leave the allocated height window."""


class FreshnessError(AssertionError):
    """The same physical edge was probed twice (must never happen)."""


class HookProbe(NamedTuple):
    """One v-hook attempt at a base vertex."""

    base: tuple                      # (column index, layer)
    v: tuple                         # direction vector in U
    vertical_open: bool
    horizontal_open: Optional[bool]  # None if short-circuited by the vertical

    @property
    def present(self) -> bool:
        return bool(self.vertical_open) and bool(self.horizontal_open)


class StepRecord(NamedTuple):
    step: int
    rank: int                   # d-edge index in the fixed ordering
    base: int                   # column in S^pi the edge grows from
    head: int                   # column outside S^pi
    t: int                      # layer of the base's S vertex
    condition: str              # "a", "b", "none", or "window"
    eta: Optional[int]
    added: Optional[tuple]      # (column, layer) admitted to S, if any
    hook: Optional[HookProbe]


@dataclass
class CouplingState:
    """Full state of one exploration, including the realized lazy omega."""

    spec: LatticeSpec
    params: Params
    seed: int
    stream_id: int
    origin: int
    height_window: Optional[int]    # None in layered mode
    layers: Optional[int]           # l for mod-(l+1) wrap, None otherwise
    n: int = 0
    A: set = field(default_factory=set)          # eta = 1 ranks
    B: set = field(default_factory=set)          # eta = 0 ranks
    heights: dict = field(default_factory=dict)  # column -> layer of S vertex
    eta: dict = field(default_factory=dict)      # rank -> 0/1
    omega: dict = field(default_factory=dict)    # probe key -> open?
    probe_order: list = field(default_factory=list)
    trace: list = field(default_factory=list)

    @property
    def S(self) -> frozenset:
        return frozenset(self.heights.items())

    @property
    def S_pi(self) -> frozenset:
        return frozenset(self.heights)

    @property
    def tau(self) -> dict:
        return {(u, t): u for u, t in self.heights.items()}

    @property
    def probe_ledger(self) -> frozenset:
        return frozenset(self.omega)

    def layer_up(self, t: int) -> int:
        """Layer above t; wraps in layered mode, guards the window otherwise."""
        if self.layers is not None:
            return (t + 1) % (self.layers + 1)
        if self.height_window is not None and t + 1 >= self.height_window:
            raise WindowExhausted(f"layer {t + 1} outside window "
                                  f"[0, {self.height_window})")
        return t + 1

    def assert_invariants(self):
        if len(self.A) != len(self.heights) - 1:
            raise AssertionError(
                f"|A|={len(self.A)} != |S|-1={len(self.heights) - 1}"
            )
        if self.A & self.B:
            raise AssertionError(f"A and B overlap: {sorted(self.A & self.B)[:5]}")


@dataclass
class ExplorationResult:
    state: CouplingState
    outcome: str

    @property
    def n_steps(self) -> int:
        return self.state.n

    @property
    def trace(self) -> list:
        return self.state.trace


@lru_cache(maxsize=32)
def _projection(spec: LatticeSpec):
    """Projected d-lattice with ordering, incidence and boundary data."""
    kwargs = dict(d=spec.d, s=0, side_d=spec.side_d,
                  boundary_d="free", boundary_s="free")
    if spec.variant == "spread_out":
        proj = LatticeSpec(variant="spread_out", range_k=spec.range_k, **kwargs)
    else:
        proj = LatticeSpec(**kwargs)
    lat = build_lattice(proj)
    ordering = EdgeOrdering(proj)
    incident = tuple(
        tuple(int(k) for k in np.nonzero(
            (lat.edges_u == v) | (lat.edges_v == v))[0])
        for v in range(lat.n_vertices)
    )
    sizes = np.array(proj.shape)
    on_boundary = ((lat.coords == 0) | (lat.coords == sizes - 1)).any(axis=1)
    vecs = direction_set(proj)
    v_index = {v: i for i, v in enumerate(vecs)}
    return proj, lat, ordering, incident, on_boundary, v_index


def _exploration_params(spec: LatticeSpec, params: Params) -> Params:
    m = len(direction_set(spec))
    if params.m is None:
        return Params(p=params.p, q=params.q, m=m)
    if params.m != m:
        raise ValueError(f"Params.m={params.m} disagrees with |U|={m}")
    return params


class _Explorer:
    def __init__(self, spec: LatticeSpec, params: Params, seed: int,
                 stream_id: int, step_budget: int,
                 height_window: Optional[int], check_every: int):
        if spec.s != 1:
            raise ValueError("exploration requires s = 1")
        if spec.boundary_d != "free":
            raise ValueError("exploration requires a free horizontal boundary "
                             "(it grows from the center and stops at the face)")
        if step_budget < 1:
            raise ValueError("step_budget must be >= 1")
        params = _exploration_params(spec, params)
        self.proj, self.lat, self.ordering, self.incident, \
            self.on_boundary, self.v_index = _projection(spec)
        layers = spec.layers if spec.variant == "layered" else None
        window = None
        if layers is None:
            window = step_budget + 1 if height_window is None else height_window
            if window < 1:
                raise ValueError("height_window must be >= 1")
        self.state = CouplingState(
            spec=spec, params=params, seed=seed, stream_id=stream_id,
            origin=self.lat.origin, height_window=window, layers=layers,
        )
        self.rng = stream_rng(seed, stream_id)
        self.p = params.p
        self.qbar = params.qbar
        self.check_every = max(1, check_every)
        self.heap = []
        self.state.heights[self.lat.origin] = 0
        self._push_candidates(self.lat.origin)

    def _push_candidates(self, column: int):
        st = self.state
        for rank in self.incident[column]:
            if rank not in st.A and rank not in st.B:
                heapq.heappush(self.heap, rank)

    def _pop_frontier(self):
        """Earliest undecided d-edge at the outer boundary of S^pi."""
        st = self.state
        while self.heap:
            rank = heapq.heappop(self.heap)
            if rank in st.A or rank in st.B:
                continue
            a, b = self.ordering.edge(rank)
            in_a = a in st.heights
            in_b = b in st.heights
            if in_a and in_b:
                continue    # became interior; the walk never probes it
            if not in_a and not in_b:
                continue    # stale entry; cannot arise, skipped defensively
            return (rank, a, b) if in_a else (rank, b, a)
        return None

    def _probe(self, key: tuple, prob: float) -> bool:
        st = self.state
        if key in st.omega:
            raise FreshnessError(f"edge {key} probed twice")
        val = bool(self.rng.random() < prob)
        st.omega[key] = val
        st.probe_order.append(key)
        return val

    def _direction(self, base: int, head: int) -> tuple:
        cb = self.lat.coords[base]
        ch = self.lat.coords[head]
        return tuple(int(x) for x in (ch - cb))

    def _decide(self, rank: int, value: int):
        st = self.state
        st.eta[rank] = value
        (st.A if value else st.B).add(rank)

    def run(self, step_budget: int) -> ExplorationResult:
        st = self.state
        outcome = None
        while outcome is None:
            nxt = self._pop_frontier()
            if nxt is None:
                outcome = "died"
                break
            if st.n >= step_budget:
                heapq.heappush(self.heap, nxt[0])
                outcome = "budget_exhausted"
                break
            rank, base, head = nxt
            st.n += 1
            t = st.heights[base]
            hook = None
            added = None
            open_a = self._probe(("h", rank, t), self.p)
            if open_a:
                cond = "a"
                self._decide(rank, 1)
                added = (head, t)
            else:
                v = self._direction(base, head)
                try:
                    t_up = st.layer_up(t)
                except WindowExhausted:
                    st.trace.append(StepRecord(
                        step=st.n, rank=rank, base=base, head=head, t=t,
                        condition="window", eta=None, added=None, hook=None))
                    outcome = "window_exhausted"
                    break
                open_v = self._probe(("v", base, t, self.v_index[v]), self.qbar)
                open_b = None
                if open_v:
                    open_b = self._probe(("h", rank, t_up), self.p)
                hook = HookProbe(base=(base, t), v=v,
                                 vertical_open=open_v, horizontal_open=open_b)
                if open_v and open_b:
                    cond = "b"
                    self._decide(rank, 1)
                    added = (head, t_up)
                else:
                    cond = "none"
                    self._decide(rank, 0)
            if added is not None:
                st.heights[added[0]] = added[1]
                self._push_candidates(added[0])
            st.trace.append(StepRecord(
                step=st.n, rank=rank, base=base, head=head, t=t,
                condition=cond, eta=st.eta.get(rank), added=added, hook=hook))
            if st.n % self.check_every == 0:
                st.assert_invariants()
            if added is not None and self.on_boundary[added[0]]:
                outcome = "reached_boundary"
        st.assert_invariants()
        return ExplorationResult(state=st, outcome=outcome)


def explore_coupled(spec: LatticeSpec, params: Params, seed: int,
                    step_budget: int, stream_id: int = 0,
                    height_window: Optional[int] = None,
                    check_every: int = 1024) -> ExplorationResult:
    """Run one coupled exploration from the center column.

    ``height_window`` bounds the climb in non-layered mode; the default
    step_budget + 1 can never be hit (each step climbs at most one layer), so
    passing a smaller window is the only way to see the window_exhausted
    outcome.  Layered specs wrap modulo layers + 1 instead.
    """
    ex = _Explorer(spec, params, seed, stream_id, step_budget,
                   height_window, check_every)
    return ex.run(step_budget)


def vhook_present(config: Configuration, vertex, v: tuple,
                  ledger: Optional[set] = None) -> bool:
    """v-hook indicator at a vertex of a sampled multigraph configuration.

    True iff the vertical copy indexed v at the vertex and the horizontal
    edge in direction v one layer up are both open.  Both edge indices are
    added to ``ledger`` when given.  Raises WindowExhausted if the layer
    above does not exist (free vertical boundary, non-layered).
    """
    spec = config.spec
    if not spec.multigraph:
        raise ValueError("vhook_present needs a multigraph configuration")
    lat = build_lattice(spec)
    if isinstance(vertex, (tuple, list)):
        vi = lat.vertex_index(tuple(vertex))
    elif hasattr(vertex, "u"):
        vi = lat.index_of(vertex)
    else:
        vi = int(vertex)
    vecs = direction_set(spec)
    try:
        v_idx = vecs.index(tuple(v))
    except ValueError:
        raise ValueError(f"{v} is not a direction of the spec") from None
    coords = lat.coords[vi]
    t = int(coords[-1])
    if spec.variant == "layered":
        t_up = (t + 1) % (spec.layers + 1)
    else:
        t_up = t + 1
        if t_up >= spec.side_s:
            raise WindowExhausted(f"no layer above t={t} in a box of height "
                                  f"{spec.side_s}")
    up = list(coords)
    up[-1] = t_up
    vi_up = lat.vertex_index(up)
    head = list(coords)
    for a in range(spec.d):
        head[a] += v[a]
        if not 0 <= head[a] < spec.side_d:
            if spec.boundary_d == "periodic":
                head[a] %= spec.side_d
            else:
                raise ValueError(f"v-translate {tuple(head[:spec.d])} outside box")
    head[-1] = t_up
    vi_head = lat.vertex_index(head)
    k_vert = lat.find_edge(vi, vi_up, parallel=v_idx)
    k_horz = lat.find_edge(vi_up, vi_head)
    if ledger is not None:
        for k in (k_vert, k_horz):
            if k in ledger:
                raise FreshnessError(f"edge {k} already probed")
            ledger.add(k)
    return bool(config.states[k_vert]) and bool(config.states[k_horz])


def eta_marginal_estimate(spec: LatticeSpec, params: Params, n_probes: int,
                          seed: int = 0, ci_level: float = 0.95) -> Estimate:
    """Empirical eta(f_1) frequency over independent first-step probes.

    Each probe runs a fresh one-step exploration on its own stream.  The
    returned notes compare against the closed-form r = p + q_bar p (1-p).
    """
    if n_probes < 1000:
        raise ValueError("n_probes must be >= 1000")
    params = _exploration_params(spec, params)
    fires = 0
    for i in range(n_probes):
        res = explore_coupled(spec, params, seed, step_budget=1, stream_id=i)
        rec = res.state.trace[0]
        if rec.eta is None:
            raise AssertionError("first step cannot exhaust the window")
        fires += rec.eta
    phat = fires / n_probes
    lo, hi = wilson_ci(fires, n_probes, ci_level)
    se = (max(phat * (1 - phat), 1e-300) / n_probes) ** 0.5
    r = params.r
    return Estimate(
        value=phat, se=se, n=n_probes, ci_level=ci_level, ci_lo=lo, ci_hi=hi,
        tag="eta_marginal",
        notes={"reference_r": r, "abs_error": abs(phat - r),
               "z_score": 0.0 if se == 0 else (phat - r) / se},
    )


@dataclass
class VerifyReport:
    ok: bool
    checks: dict            # name -> {"ok": bool, "detail": str}
    counterexamples: list


def _check(checks, counterexamples, name, ok, detail=""):
    checks[name] = {"ok": bool(ok), "detail": detail}
    if not ok:
        counterexamples.append({"check": name, "detail": detail})


def verify_trace(state: CouplingState, config=None) -> VerifyReport:
    """Re-derive every structural invariant from the recorded trace.

    ``config`` optionally overrides the probe record (a mapping from probe
    key to state); by default the state's own realized omega is used.
    """
    omega = dict(config) if config is not None else state.omega
    checks = {}
    cx = []
    st = state
    _, lat, ordering, _, _, v_index = _projection(st.spec)

    # cardinality: the bijection between A and S minus the origin vertex
    _check(checks, cx, "size_bijection",
           len(st.A) == len(st.heights) - 1,
           f"|A|={len(st.A)}, |S|={len(st.heights)}")
    _check(checks, cx, "disjoint", not (st.A & st.B),
           f"overlap={sorted(st.A & st.B)[:5]}")
    _check(checks, cx, "eta_partition",
           set(st.eta) == st.A | st.B
           and all(st.eta[k] == 1 for k in st.A)
           and all(st.eta[k] == 0 for k in st.B),
           "eta keys or values disagree with A/B membership")

    # tau bijection: one S vertex per column, tau((u,t)) = u
    tau = st.tau
    _check(checks, cx, "tau_bijection",
           len(tau) == len(st.heights)
           and set(tau.values()) == set(st.heights)
           and all(tau[(u, t)] == u for u, t in st.heights.items()),
           "tau is not a bijection onto S^pi")

    # replay the trace: monotone growth, outer-boundary bases, omega accord
    seen_heights = {st.origin: 0}
    a_run, b_run = set(), set()
    replay_ok = True
    detail = ""
    for rec in st.trace:
        if rec.base not in seen_heights:
            replay_ok, detail = False, f"step {rec.step}: base {rec.base} not in S^pi"
            break
        if seen_heights[rec.base] != rec.t:
            replay_ok, detail = False, f"step {rec.step}: base layer mismatch"
            break
        if rec.head in seen_heights:
            replay_ok, detail = False, \
                f"step {rec.step}: head {rec.head} already in S^pi (not outer)"
            break
        if rec.rank in a_run or rec.rank in b_run:
            replay_ok, detail = False, f"step {rec.step}: rank {rec.rank} re-fired"
            break
        t = rec.t
        key_a = ("h", rec.rank, t)
        if rec.condition == "a":
            if not omega.get(key_a, False):
                replay_ok, detail = False, f"step {rec.step}: (a) fired on closed edge"
                break
            if rec.eta != 1 or rec.added != (rec.head, t):
                replay_ok, detail = False, f"step {rec.step}: (a) bookkeeping wrong"
                break
            a_run.add(rec.rank)
            seen_heights[rec.head] = t
        elif rec.condition == "b":
            hook = rec.hook
            t_up = rec.added[1] if rec.added else None
            key_v = ("v", rec.base, t, v_index[hook.v])
            if omega.get(key_a, True):
                replay_ok, detail = False, f"step {rec.step}: (b) fired but (a) open"
                break
            if not (omega.get(key_v, False)
                    and omega.get(("h", rec.rank, t_up), False)):
                replay_ok, detail = False, f"step {rec.step}: hook edges not open"
                break
            if rec.eta != 1 or rec.added is None or rec.added[0] != rec.head:
                replay_ok, detail = False, f"step {rec.step}: (b) bookkeeping wrong"
                break
            a_run.add(rec.rank)
            seen_heights[rec.head] = t_up
        elif rec.condition == "none":
            if omega.get(key_a, False):
                replay_ok, detail = False, f"step {rec.step}: eta=0 but (a) open"
                break
            hook = rec.hook
            key_v = ("v", rec.base, t, v_index[hook.v])
            vert = omega.get(key_v, False)
            if vert and omega.get(("h", rec.rank, hook_layer_up(st, t)), False):
                replay_ok, detail = False, f"step {rec.step}: eta=0 but hook present"
                break
            if rec.eta != 0 or rec.added is not None:
                replay_ok, detail = False, f"step {rec.step}: eta=0 bookkeeping wrong"
                break
            b_run.add(rec.rank)
        elif rec.condition == "window":
            if rec.eta is not None or rec.rank in st.A or rec.rank in st.B:
                replay_ok, detail = False, f"step {rec.step}: window step decided eta"
                break
        else:
            replay_ok, detail = False, f"step {rec.step}: unknown condition"
            break
    if replay_ok and (a_run != st.A or b_run != st.B):
        replay_ok, detail = False, "replayed A/B differ from state"
    if replay_ok and seen_heights != st.heights:
        replay_ok, detail = False, "replayed S differs from state"
    _check(checks, cx, "replay", replay_ok, detail)

    # A-edges form a connected subgraph of the projection containing origin
    cols = {st.origin}
    pairs = [ordering.edge(rank) for rank in st.A]
    frontier_ok = True
    if pairs:
        adj = {}
        for a, b in pairs:
            adj.setdefault(a, []).append(b)
            adj.setdefault(b, []).append(a)
        seen = {st.origin}
        dq = deque([st.origin])
        while dq:
            x = dq.popleft()
            for y in adj.get(x, ()):
                if y not in seen:
                    seen.add(y)
                    dq.append(y)
        touched = set(adj)
        frontier_ok = touched <= seen
        cols = seen
    _check(checks, cx, "a_connected", frontier_ok,
           "A-edge endpoints not all reachable from the origin over A")
    _check(checks, cx, "a_covers_spi", cols == set(st.heights),
           f"A endpoints {len(cols)} vs S^pi {len(st.heights)}")

    # every S vertex is reachable from (origin, 0) over probed-open edges
    lift_adj = {}
    for key, openq in omega.items():
        if not openq:
            continue
        if key[0] == "h":
            _, rank, t = key
            a, b = ordering.edge(rank)
            lift_adj.setdefault((a, t), []).append((b, t))
            lift_adj.setdefault((b, t), []).append((a, t))
        else:
            _, col, t, _vi = key
            t_up = hook_layer_up(st, t)
            lift_adj.setdefault((col, t), []).append((col, t_up))
            lift_adj.setdefault((col, t_up), []).append((col, t))
    seen = {(st.origin, 0)}
    dq = deque([(st.origin, 0)])
    while dq:
        x = dq.popleft()
        for y in lift_adj.get(x, ()):
            if y not in seen:
                seen.add(y)
                dq.append(y)
    missing = [su for su in st.S if su not in seen]
    _check(checks, cx, "s_connected", not missing,
           f"S vertices unreachable over open probes: {missing[:5]}")

    # freshness: no key probed twice, ledger matches the order log
    _check(checks, cx, "freshness",
           len(st.probe_order) == len(set(st.probe_order)) == len(st.omega),
           f"{len(st.probe_order)} probes, {len(set(st.probe_order))} distinct")

    # layers stay inside the window (or the layered quotient)
    if st.layers is not None:
        in_range = all(0 <= t <= st.layers for t in st.heights.values())
    else:
        in_range = all(0 <= t < st.height_window for t in st.heights.values())
    _check(checks, cx, "heights_in_window", in_range, "layer outside window")

    return VerifyReport(ok=all(c["ok"] for c in checks.values()),
                        checks=checks, counterexamples=cx)


def hook_layer_up(state: CouplingState, t: int) -> int:
    """Layer above t under the state's vertical arithmetic (no window guard)."""
    if state.layers is not None:
        return (t + 1) % (state.layers + 1)
    return t + 1


@dataclass
class EquivalenceReport:
    mode: str               # "exact" or "two_sample"
    n_samples: int
    tv: float
    chi2: float
    dof: int
    noise_floor: float      # expected TV under the null, multinomial CLT
    law_exact: dict         # |C(0)| -> probability (exact mode only)
    hist_mc: dict           # |C(0)| -> empirical frequency
    flags: list = field(default_factory=list)


def _mc_origin_hist(spec_mg: LatticeSpec, plain_lat, params: Params,
                    n_samples: int, seed: int, sizes_table: np.ndarray,
                    chunk: int = 4096) -> np.ndarray:
    """Histogram of |C(0)| from multigraph samples collapsed to the plain box."""
    lat_mg = build_lattice(spec_mg)
    thr = edge_thresholds(spec_mg, params)
    nd = plain_lat.n_d_edges
    n_vert = plain_lat.n_edges - nd
    m = (lat_mg.n_edges - nd) // max(n_vert, 1) if n_vert else 0
    weights = (np.int64(1) << np.arange(plain_lat.n_edges, dtype=np.int64))
    hist = np.zeros(plain_lat.n_vertices + 1, dtype=np.int64)
    done = 0
    stream = 0
    while done < n_samples:
        c = min(chunk, n_samples - done)
        rng = stream_rng(seed, stream)
        u = rng.random((c, lat_mg.n_edges))
        states = u < thr[None, :]
        if n_vert:
            collapsed = np.concatenate(
                [states[:, :nd],
                 states[:, nd:].reshape(c, n_vert, m).any(axis=2)], axis=1)
        else:
            collapsed = states
        ints = (collapsed.astype(np.int64) * weights[None, :]).sum(axis=1)
        sizes = sizes_table[ints]
        hist += np.bincount(sizes, minlength=plain_lat.n_vertices + 1)
        done += c
        stream += 1
    return hist


def equivalence_check(spec: LatticeSpec, params: Params, n_samples: int,
                      seed: int = 0) -> EquivalenceReport:
    """Compare the plain-graph law of |C(0)| with the collapsed multigraph.

    Exact mode (plain edge count <= 20): exhaustive enumeration gives the
    plain law; multigraph samples at q_bar are collapsed copy-block by
    copy-block and histogrammed.  Larger boxes fall back to a flagged
    two-sample comparison.  Reports total-variation distance, a chi-square
    statistic, and the multinomial noise floor E[TV] under the null.
    """
    if spec.s != 1:
        raise ValueError("equivalence to the multigraph needs s = 1")
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    plain = replace(spec, multigraph=False)
    mg = build_multigraph(plain)
    params = _exploration_params(plain, params)
    plain_lat = build_lattice(plain)
    nv = plain_lat.n_vertices

    if plain_lat.n_edges <= 20:
        law = exact_origin_size_law(plain, params)
        exact_vec = np.zeros(nv + 1)
        for k, v in law.items():
            exact_vec[k] = v
        sizes_table = uf.origin_sizes_all_masks(
            nv, plain_lat.edges_u, plain_lat.edges_v, plain_lat.origin)
        hist = _mc_origin_hist(mg, plain_lat, params, n_samples, seed,
                               sizes_table)
        emp = hist / n_samples
        tv = 0.5 * float(np.abs(emp - exact_vec).sum())
        support = exact_vec > 0
        chi2 = float((((hist[support] - n_samples * exact_vec[support]) ** 2)
                      / (n_samples * exact_vec[support])).sum())
        dof = int(support.sum()) - 1
        floor = 0.5 * float(
            np.sqrt(2.0 / np.pi)
            * np.sqrt(exact_vec[support] * (1 - exact_vec[support])
                      / n_samples).sum())
        return EquivalenceReport(
            mode="exact", n_samples=n_samples, tv=tv, chi2=chi2, dof=dof,
            noise_floor=floor,
            law_exact={k: float(v) for k, v in law.items()},
            hist_mc={int(k): float(emp[k]) for k in np.nonzero(hist)[0]},
        )

    # two-sample fallback: MC on the plain box vs collapsed multigraph MC
    thr_plain = edge_thresholds(plain, params)
    hist_plain = np.zeros(nv + 1, dtype=np.int64)
    done = 0
    stream = 10_000_000   # disjoint from the multigraph sampler's streams
    while done < n_samples:
        c = min(4096, n_samples - done)
        rng = stream_rng(seed, stream)
        u = rng.random((c, plain_lat.n_edges))
        states = u < thr_plain[None, :]
        for row in states:
            s = uf.origin_component_size(
                nv, plain_lat.edges_u, plain_lat.edges_v, row,
                plain_lat.origin)
            hist_plain[s] += 1
        done += c
        stream += 1
    lat_mg = build_lattice(mg)
    thr_mg = edge_thresholds(mg, params)
    nd = plain_lat.n_d_edges
    n_vert = plain_lat.n_edges - nd
    m = (lat_mg.n_edges - nd) // max(n_vert, 1) if n_vert else 0
    hist_mg = np.zeros(nv + 1, dtype=np.int64)
    done = 0
    stream = 0
    while done < n_samples:
        c = min(4096, n_samples - done)
        rng = stream_rng(seed, stream)
        u = rng.random((c, lat_mg.n_edges))
        states = u < thr_mg[None, :]
        if n_vert:
            collapsed = np.concatenate(
                [states[:, :nd],
                 states[:, nd:].reshape(c, n_vert, m).any(axis=2)], axis=1)
        else:
            collapsed = states
        for row in collapsed:
            s = uf.origin_component_size(
                nv, plain_lat.edges_u, plain_lat.edges_v, row,
                plain_lat.origin)
            hist_mg[s] += 1
        done += c
        stream += 1
    a = hist_plain / n_samples
    b = hist_mg / n_samples
    tv = 0.5 * float(np.abs(a - b).sum())
    both = (hist_plain + hist_mg) > 0
    chi2 = float((((hist_plain[both] - hist_mg[both]) ** 2)
                  / (hist_plain[both] + hist_mg[both])).sum())
    dof = int(both.sum()) - 1
    pooled = (hist_plain + hist_mg) / (2 * n_samples)
    floor = 0.5 * float(
        np.sqrt(2.0 / np.pi)
        * np.sqrt(2.0 * pooled[both] * (1 - pooled[both]) / n_samples).sum())
    return EquivalenceReport(
        mode="two_sample", n_samples=n_samples, tv=tv, chi2=chi2, dof=dof,
        noise_floor=floor, law_exact={},
        hist_mc={int(k): float(b[k]) for k in np.nonzero(hist_mg)[0]},
        flags=["two_sample_fallback"],
    )


@dataclass
class DominationReport:
    n_runs: int
    r: float
    frac_coupled: float
    frac_plain_p: float
    frac_plain_r: float
    ci_coupled: tuple
    ci_plain_p: tuple
    ci_plain_r: tuple
    dominates_plain_p: bool
    consistent_with_plain_r: bool
    meets_threshold: Optional[bool]
    threshold_value: Optional[float]
    outcome_counts: dict
    flags: list = field(default_factory=list)


def domination_experiment(spec: LatticeSpec, params: Params, n_runs: int,
                          seed: int = 0, p_c: Optional[float] = None,
                          step_budget: Optional[int] = None,
                          z: float = 4.0) -> DominationReport:
    """Coupled explorations vs plain explorations at p and at r.

    Reports the reached_boundary fraction of the coupled walk next to plain
    walks (q = 0) at parameter p and at parameter r, with the domination
    comparison (coupled >= plain-at-p up to z standard errors) and the
    consistency z-test against plain-at-r.  A vacuous threshold
    (8 d^2 (p_c - p) > 1) is refused; q below a non-vacuous threshold is
    allowed and reported via meets_threshold.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    if p_c is None:
        from .constants import pc_default
        p_c = pc_default(spec.d)
    params = _exploration_params(spec, params)
    flags = []
    threshold_value = None
    meets = None
    if params.p < p_c:
        thr = theorem_threshold(spec.d, params.p, p_c)
        if thr.vacuous:
            raise ValueError(
                f"vacuous threshold 8d^2(p_c-p)={thr.raw:.4f} > 1: "
                "no admissible q; move p closer to p_c")
        threshold_value = thr.value
        # 1e-12 slack: "q at threshold" must not fail on float rounding
        meets = params.q >= thr.value - 1e-12
    else:
        flags.append("p_at_or_above_pc")
    proj, lat, _, _, _, _ = _projection(spec)
    if step_budget is None:
        step_budget = lat.n_d_edges + 1   # every rank decided at most once
    variants = {
        "coupled": (params, 0),
        "plain_p": (Params(params.p, 0.0, m=params.m), n_runs),
        "plain_r": (Params(params.r, 0.0, m=params.m), 2 * n_runs),
    }
    fracs = {}
    cis = {}
    counts = {}
    for name, (pp, offset) in variants.items():
        tally = {o: 0 for o in OUTCOMES}
        for i in range(n_runs):
            res = explore_coupled(spec, pp, seed, step_budget,
                                  stream_id=offset + i)
            tally[res.outcome] += 1
        counts[name] = tally
        k = tally["reached_boundary"]
        fracs[name] = k / n_runs
        cis[name] = wilson_ci(k, n_runs)
    def se(f):
        return (max(f * (1 - f), 1e-300) / n_runs) ** 0.5

    se_cp = (se(fracs["coupled"]) ** 2 + se(fracs["plain_p"]) ** 2) ** 0.5
    se_cr = (se(fracs["coupled"]) ** 2 + se(fracs["plain_r"]) ** 2) ** 0.5
    dominates = fracs["coupled"] >= fracs["plain_p"] - z * se_cp
    consistent = abs(fracs["coupled"] - fracs["plain_r"]) <= z * max(se_cr, 1e-12)
    return DominationReport(
        n_runs=n_runs, r=params.r,
        frac_coupled=fracs["coupled"], frac_plain_p=fracs["plain_p"],
        frac_plain_r=fracs["plain_r"], ci_coupled=cis["coupled"],
        ci_plain_p=cis["plain_p"], ci_plain_r=cis["plain_r"],
        dominates_plain_p=dominates, consistent_with_plain_r=consistent,
        meets_threshold=meets, threshold_value=threshold_value,
        outcome_counts=counts, flags=flags,
    )
