"""Seeded configuration sampling and the effective-parameter arithmetic.

Two edge classes carry two open probabilities: d-edges open with probability
p, s-edges with probability q.  In multigraph mode every vertical edge has
been split into m = |U| parallel copies, each of which opens with the
effective probability q_bar solving (1-q) = (1-q_bar)^m, so the collapsed
connectivity law is unchanged.

The module also houses the deterministic arithmetic behind the domination
argument: r = p + q_bar * p * (1-p) and the threshold 8 d^2 (p_c - p), with a
verifier for the inequality chain r > p + q/(8 d^2) >= p_c that holds for
p in (1/(2d), p_c) once q reaches the threshold.

All randomness is counter-based: a master seed plus an integer stream id
yield an independent Philox stream, so replicas never need coordination and
any draw is reproducible from (seed, stream_id) alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .lattice import LatticeSpec, build_lattice, direction_set


def stream_rng(seed: int, stream_id: int = 0) -> np.random.Generator:
    """Independent counter-based generator for (seed, stream_id).

    Distinct stream ids give provably distinct Philox key blocks via the
    SeedSequence spawn-key mechanism; derivation is deterministic.
    """
    if stream_id < 0:
        raise ValueError("stream_id must be >= 0")
    ss = np.random.SeedSequence(seed, spawn_key=(stream_id,))
    return np.random.Generator(np.random.Philox(ss))


def effective_qbar(q: float, m: int) -> float:
    """Per-copy probability q_bar with (1-q) = (1-q_bar)^m.

    Uses log1p/expm1 so small q does not cancel: for q -> 0 the result
    approaches q/m with full relative precision.
    """
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must be in [0,1], got {q}")
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    if q == 1.0:
        return 1.0
    return -math.expm1(math.log1p(-q) / m)


def effective_r(p: float, qbar: float) -> float:
    """Bernoulli parameter r = p + q_bar * p * (1-p) of the emitted field."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must be in [0,1], got {p}")
    if not 0.0 <= qbar <= 1.0:
        raise ValueError(f"qbar must be in [0,1], got {qbar}")
    return p + qbar * p * (1.0 - p)


class ThresholdResult(NamedTuple):
    value: float   # min(8 d^2 (p_c - p), 1)
    raw: float     # 8 d^2 (p_c - p) unclamped
    vacuous: bool  # raw > 1: no q in [0,1] meets the hypothesis


def theorem_threshold(d: int, p: float, p_c: float) -> ThresholdResult:
    """Threshold 8 d^2 (p_c - p) above which q guarantees domination.

    Returns the clamped value together with the raw product and a vacuous
    flag (raw > 1 means no admissible q exists; callers must not silently
    treat the clamp as usable).
    """
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    if not 0.0 <= p <= 1.0 or not 0.0 < p_c <= 1.0:
        raise ValueError("p and p_c must be probabilities")
    if p >= p_c:
        raise ValueError(f"threshold needs p < p_c, got p={p}, p_c={p_c}")
    raw = 8.0 * d * d * (p_c - p)
    return ThresholdResult(value=min(raw, 1.0), raw=raw, vacuous=raw > 1.0)


class ChainReport(NamedTuple):
    d: int
    p: float
    q: float
    qbar: float
    r: float
    lower_bound: float   # p + q / (8 d^2)
    p_c_input: float
    holds: bool          # r > lower_bound and r >= p_c
    outside_window: bool  # p outside (1/(2d), p_c)
    note: str


def verify_domination_chain(d: int, p: float, q: float,
                            p_c: Optional[float] = None) -> ChainReport:
    """Numerically check the chain r > p + q/(8 d^2) >= p_c.

    Computes r = p + [1-(1-q)^(1/2d)] p (1-p) and both comparisons, returning
    every intermediate value.  p outside the window (1/(2d), p_c) is reported,
    not raised: the chain is only claimed there, but the arithmetic is always
    well defined.
    """
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    if p_c is None:
        from .constants import pc_default
        p_c = pc_default(d)
    qbar = effective_qbar(q, 2 * d)
    r = effective_r(p, qbar)
    lower = p + q / (8.0 * d * d)
    note = ""
    outside = False
    if p <= 1.0 / (2 * d):
        outside = True
        note = f"outside theorem window: p={p} <= 1/(2d)={1.0/(2*d)}"
    elif p >= p_c:
        outside = True
        note = f"outside theorem window: p={p} >= p_c={p_c}"
    holds = (r > lower) and (r >= p_c)
    return ChainReport(d=d, p=p, q=q, qbar=qbar, r=r, lower_bound=lower,
                       p_c_input=p_c, holds=holds, outside_window=outside,
                       note=note)


@dataclass(frozen=True)
class Params:
    """Open probabilities (p, q) plus derived multigraph quantities.

    m is the parallel multiplicity |U|; when given, qbar and r are filled in
    so that (1-q) = (1-qbar)^m and r = p + qbar p (1-p).  Without m the
    derived fields stay None and the Params only supports plain sampling.
    """

    p: float
    q: float
    m: Optional[int] = None
    qbar: Optional[float] = field(init=False, default=None)
    r: Optional[float] = field(init=False, default=None)

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must be in [0,1], got {self.p}")
        if not 0.0 <= self.q <= 1.0:
            raise ValueError(f"q must be in [0,1], got {self.q}")
        if self.m is not None:
            if self.m < 1:
                raise ValueError(f"m must be >= 1, got {self.m}")
            qb = effective_qbar(self.q, self.m)
            object.__setattr__(self, "qbar", qb)
            object.__setattr__(self, "r", effective_r(self.p, qb))

    @classmethod
    def from_pq(cls, p: float, q: float, m: Optional[int] = None) -> "Params":
        return cls(p=p, q=q, m=m)

    @classmethod
    def for_spec(cls, p: float, q: float, spec: LatticeSpec) -> "Params":
        """Params with m taken from the spec's direction set (s=1 only)."""
        m = len(direction_set(spec)) if spec.s == 1 else None
        return cls(p=p, q=q, m=m)

    def to_config(self) -> dict:
        cfg = {"p": self.p, "q": self.q}
        if self.m is not None:
            cfg["m"] = self.m
        return cfg

    @classmethod
    def from_config(cls, cfg: dict) -> "Params":
        return cls(p=float(cfg["p"]), q=float(cfg["q"]),
                   m=None if cfg.get("m") is None else int(cfg["m"]))

    def __le__(self, other: "Params") -> bool:
        return self.p <= other.p and self.q <= other.q


@dataclass(frozen=True)
class SeedPlan:
    """Master seed and the deterministic per-replica stream derivation."""

    master_seed: int
    replicas: int = 1

    def __post_init__(self):
        if self.replicas < 1:
            raise ValueError("replicas must be >= 1")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must fit in 64 bits")

    @property
    def streams(self) -> range:
        return range(self.replicas)

    def rng(self, stream_id: int) -> np.random.Generator:
        if stream_id >= self.replicas:
            raise ValueError(f"stream {stream_id} outside plan of {self.replicas}")
        return stream_rng(self.master_seed, stream_id)

    def to_config(self) -> dict:
        return {"master_seed": self.master_seed, "replicas": self.replicas}

    @classmethod
    def from_config(cls, cfg: dict) -> "SeedPlan":
        return cls(master_seed=int(cfg["master_seed"]),
                   replicas=int(cfg.get("replicas", 1)))


@dataclass
class Configuration:
    """One sampled open/closed state per edge of a lattice spec."""

    spec: LatticeSpec
    states: np.ndarray
    params: Params
    seed: int
    stream_id: int = 0

    def __post_init__(self):
        lat = build_lattice(self.spec)
        self.states = np.asarray(self.states, dtype=np.bool_)
        if self.states.shape != (lat.n_edges,):
            raise ValueError(
                f"states length {self.states.shape} != edge count {lat.n_edges}"
            )

    @property
    def n_open(self) -> int:
        return int(self.states.sum())


def edge_thresholds(spec: LatticeSpec, params: Params) -> np.ndarray:
    """Per-edge open probability vector in enumeration order."""
    lat = build_lattice(spec)
    if spec.multigraph:
        if params.m is None:
            raise ValueError("multigraph sampling requires Params with m set")
        m_spec = len(direction_set(spec))
        if params.m != m_spec:
            raise ValueError(
                f"Params.m={params.m} disagrees with |U|={m_spec} of the spec"
            )
        s_prob = params.qbar
    else:
        s_prob = params.q
    thr = np.empty(lat.n_edges, dtype=np.float64)
    thr[: lat.n_d_edges] = params.p
    thr[lat.n_d_edges :] = s_prob
    return thr


def sample_configuration(spec: LatticeSpec, params: Params, seed: int,
                         stream_id: int = 0) -> Configuration:
    """Sample each edge independently; deterministic given (seed, stream_id)."""
    lat = build_lattice(spec)
    thr = edge_thresholds(spec, params)
    rng = stream_rng(seed, stream_id)
    states = rng.random(lat.n_edges) < thr
    return Configuration(spec=spec, states=states, params=params,
                         seed=seed, stream_id=stream_id)


def sample_monotone_pair(spec: LatticeSpec, params1: Params, params2: Params,
                         seed: int, stream_id: int = 0):
    """Couple two parameter points on shared uniforms.

    Requires params1 <= params2 coordinatewise; then the open set of the
    first configuration is a subset of the second's on every sample, edge by
    edge, with no statistical slack.
    """
    if not params1 <= params2:
        if params2 <= params1:
            raise ValueError("params must be given in increasing order")
        raise ValueError(
            f"params not comparable: (p,q)=({params1.p},{params1.q}) vs "
            f"({params2.p},{params2.q})"
        )
    lat = build_lattice(spec)
    thr1 = edge_thresholds(spec, params1)
    thr2 = edge_thresholds(spec, params2)
    rng = stream_rng(seed, stream_id)
    u = rng.random(lat.n_edges)
    c1 = Configuration(spec=spec, states=u < thr1, params=params1,
                       seed=seed, stream_id=stream_id)
    c2 = Configuration(spec=spec, states=u < thr2, params=params2,
                       seed=seed, stream_id=stream_id)
    return c1, c2
