"""Monte Carlo estimators: theta proxies, chi, the critical curve, the fit.

Finite-volume surrogates stand in for the infinite-volume order parameter:

* ``spanning``   -- some cluster joins the two opposing faces of an axis
                    (free boundary) or wraps it (periodic boundary);
* ``wrapping``   -- wrap only; refuses non-periodic axes;
* ``origin_face``-- the center vertex connects to the box boundary.

The critical curve q_c(p) is located by certified bisection on the median of
the chosen surrogate: a probe at q is accepted only once its Wilson interval
excludes 1/2, doubling the sample size up to a cap before declaring the probe
ambiguous.  Every probe draws fresh streams, so no noise realization can lock
the bisection in.

All estimators are replica-parallel: sample i of a call uses Philox stream
(seed, stream_id = base + i), which makes results independent of the worker
count and bit-reproducible.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from statistics import NormalDist

import numpy as np

from . import _unionfind as uf
from .lattice import LatticeSpec, build_lattice
from .sampling import Params, edge_thresholds, stream_rng

SURROGATES = ("spanning", "wrapping", "origin_face")


def wilson_ci(successes: int, n: int, level: float = 0.95) -> tuple:
    """Wilson score interval for a binomial proportion."""
    if n <= 0:
        raise ValueError("n must be positive")
    if not 0 <= successes <= n:
        raise ValueError("successes must lie in [0, n]")
    z = NormalDist().inv_cdf(0.5 + level / 2.0)
    phat = successes / n
    denom = 1.0 + z * z / n
    center = (phat + z * z / (2 * n)) / denom
    half = z * math.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n)) / denom
    # At the extremes the bound is exactly 0 (or 1); do not leak rounding residue.
    lo = 0.0 if successes == 0 else max(0.0, center - half)
    hi = 1.0 if successes == n else min(1.0, center + half)
    return lo, hi


@dataclass
class Estimate:
    """Point estimate with its sampling uncertainty and provenance tag."""

    value: float
    se: float
    n: int
    ci_level: float
    ci_lo: float
    ci_hi: float
    tag: str
    notes: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.se < 0:
            raise ValueError("standard error must be >= 0")
        if not self.ci_lo <= self.value <= self.ci_hi:
            raise ValueError(
                f"estimate {self.value} outside its CI [{self.ci_lo}, {self.ci_hi}]"
            )


@dataclass
class CurvePoint:
    """One point of the estimated critical curve q_c(p)."""

    p: float
    qc: float
    ci_lo: float
    ci_hi: float
    L: int
    n_total: int
    trace: list
    surrogate: str
    axis: int
    seed: int
    ci_level: float
    flags: list = field(default_factory=list)
    spec_config: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.qc <= 1.0:
            raise ValueError("qc must be in [0,1]")
        if not 0.0 <= self.ci_lo <= self.ci_hi <= 1.0:
            raise ValueError("CI must be within [0,1]")


@dataclass
class ExponentFit:
    """Weighted log-log fit of q_c against the distance to criticality."""

    psi_hat: float
    intercept: float
    cov: list             # 2x2 covariance of (slope, intercept)
    residuals: list
    p_grid: list          # p values actually used
    n_used: int
    refused: list         # (p, reason) pairs dropped before fitting
    notes: dict = field(default_factory=dict)


def _surrogate_fires(lat, spec, open_states, surrogate, axis) -> bool:
    if surrogate == "spanning":
        if spec.boundary(axis) == "periodic":
            return bool(uf.wraps_axis(lat.n_vertices, lat.edges_u, lat.edges_v,
                                      lat.edge_steps(axis), open_states))
        return bool(uf.spans_free_axis(lat.n_vertices, lat.edges_u, lat.edges_v,
                                       open_states,
                                       lat.face_vertices(axis, 0),
                                       lat.face_vertices(axis, 1)))
    if surrogate == "wrapping":
        if spec.boundary(axis) != "periodic":
            raise ValueError("wrapping surrogate needs a periodic axis")
        return bool(uf.wraps_axis(lat.n_vertices, lat.edges_u, lat.edges_v,
                                  lat.edge_steps(axis), open_states))
    if surrogate == "origin_face":
        boundary = _free_boundary_vertices(lat, spec)
        parent = uf.label_components(lat.n_vertices, lat.edges_u, lat.edges_v,
                                     open_states)
        return bool((parent[boundary] == parent[lat.origin]).any())
    raise ValueError(f"unknown surrogate {surrogate!r}; choose from {SURROGATES}")


def _free_boundary_vertices(lat, spec) -> np.ndarray:
    free_axes = [a for a in range(spec.n_axes) if spec.boundary(a) == "free"]
    if not free_axes:
        raise ValueError("origin_face surrogate needs at least one free axis")
    mask = np.zeros(lat.n_vertices, dtype=bool)
    for a in free_axes:
        mask[lat.face_vertices(a, 0)] = True
        mask[lat.face_vertices(a, 1)] = True
    return np.nonzero(mask)[0]


def _count_fires(spec: LatticeSpec, params: Params, seed: int, stream_lo: int,
                 count: int, surrogate: str, axis: int) -> int:
    """Fires of the surrogate over streams [stream_lo, stream_lo + count)."""
    lat = build_lattice(spec)
    thr = edge_thresholds(spec, params)
    fires = 0
    for i in range(count):
        rng = stream_rng(seed, stream_lo + i)
        open_states = rng.random(lat.n_edges) < thr
        if _surrogate_fires(lat, spec, open_states, surrogate, axis):
            fires += 1
    return fires


def _parallel_fires(spec, params, seed, stream_lo, n, surrogate, axis,
                    workers) -> int:
    if workers <= 1 or n < 2 * workers:
        return _count_fires(spec, params, seed, stream_lo, n, surrogate, axis)
    chunk = (n + workers - 1) // workers
    jobs = []
    with ProcessPoolExecutor(max_workers=workers) as pool:
        off = 0
        while off < n:
            c = min(chunk, n - off)
            jobs.append(pool.submit(_count_fires, spec, params, seed,
                                    stream_lo + off, c, surrogate, axis))
            off += c
        return sum(j.result() for j in jobs)


def estimate_theta_proxy(spec: LatticeSpec, params: Params, n: int,
                         surrogate: str = "spanning", axis: int = 0,
                         seed: int = 0, workers: int = 1,
                         ci_level: float = 0.95) -> Estimate:
    """Fraction of samples on which the surrogate fires, with Wilson CI."""
    if n < 1:
        raise ValueError("n must be >= 1")
    fires = _parallel_fires(spec, params, seed, 0, n, surrogate, axis, workers)
    phat = fires / n
    lo, hi = wilson_ci(fires, n, ci_level)
    se = math.sqrt(max(phat * (1 - phat), 1e-300) / n)
    return Estimate(value=phat, se=se, n=n, ci_level=ci_level,
                    ci_lo=lo, ci_hi=hi, tag=f"{surrogate}[axis={axis}]",
                    notes={"fires": fires})


def _chi_chunk(spec, params, seed, stream_lo, count):
    lat = build_lattice(spec)
    thr = edge_thresholds(spec, params)
    free_axes = [a for a in range(spec.n_axes) if spec.boundary(a) == "free"]
    boundary = None
    if free_axes:
        mask = np.zeros(lat.n_vertices, dtype=bool)
        for a in free_axes:
            mask[lat.face_vertices(a, 0)] = True
            mask[lat.face_vertices(a, 1)] = True
        boundary = np.nonzero(mask)[0]
    total = 0.0
    total_sq = 0.0
    touches = 0
    for i in range(count):
        rng = stream_rng(seed, stream_lo + i)
        open_states = rng.random(lat.n_edges) < thr
        parent = uf.label_components(lat.n_vertices, lat.edges_u, lat.edges_v,
                                     open_states)
        counts = np.bincount(parent, minlength=lat.n_vertices)
        size0 = int(counts[parent[lat.origin]])
        total += size0
        total_sq += size0 * size0
        if boundary is not None:
            max_root = int(np.argmax(counts))
            if (parent[boundary] == max_root).any():
                touches += 1
    return total, total_sq, touches


def estimate_chi(spec: LatticeSpec, params: Params, n: int, seed: int = 0,
                 workers: int = 1, ci_level: float = 0.95) -> Estimate:
    """Sample mean of |C(0)| with a normal CI and a truncation note.

    Finite volume truncates large clusters; when the largest cluster touches
    the box face in more than 1% of samples the bias is flagged in notes
    (boxes with fully periodic boundary skip the check).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if workers <= 1 or n < 2 * workers:
        total, total_sq, touches = _chi_chunk(spec, params, seed, 0, n)
    else:
        chunk = (n + workers - 1) // workers
        total = total_sq = 0.0
        touches = 0
        with ProcessPoolExecutor(max_workers=workers) as pool:
            jobs = []
            off = 0
            while off < n:
                c = min(chunk, n - off)
                jobs.append(pool.submit(_chi_chunk, spec, params, seed, off, c))
                off += c
            for j in jobs:
                t, t2, tc = j.result()
                total += t
                total_sq += t2
                touches += tc
    mean = total / n
    var = max(total_sq / n - mean * mean, 0.0)
    se = math.sqrt(var / n)
    z = NormalDist().inv_cdf(0.5 + ci_level / 2.0)
    notes = {}
    free_axes = any(spec.boundary(a) == "free" for a in range(spec.n_axes))
    if free_axes:
        frac = touches / n
        notes["boundary_touch_fraction"] = frac
        if frac > 0.01:
            notes["truncation_bias_likely"] = True
    else:
        notes["boundary_touch_check"] = "skipped (no free axis)"
    return Estimate(value=mean, se=se, n=n, ci_level=ci_level,
                    ci_lo=mean - z * se, ci_hi=mean + z * se,
                    tag="chi", notes=notes)


def _certify_probe(spec, params_of_q, q, seed, probe_index, stream_block,
                   n0, n_cap, level, surrogate, axis, workers):
    """Grow a probe at q until its Wilson CI excludes 1/2 or the cap hits.

    Streams for this probe live in [probe_index*stream_block, ...), disjoint
    from every other probe, so repeated doubling extends the same iid pool.
    """
    params = params_of_q(q)
    base = probe_index * stream_block
    n = 0
    fires = 0
    target = n0
    trace = []
    status = "ambiguous"
    while n < n_cap:
        add = min(target, n_cap) - n
        fires += _parallel_fires(spec, params, seed, base + n, add,
                                 surrogate, axis, workers)
        n += add
        lo, hi = wilson_ci(fires, n, level)
        trace.append({"q": q, "n": n, "fires": fires,
                      "phat": fires / n, "ci_lo": lo, "ci_hi": hi})
        if hi < 0.5:
            status = "below"
            break
        if lo > 0.5:
            status = "above"
            break
        target = min(2 * target, n_cap)
        if n >= n_cap:
            break
    trace[-1]["status"] = status
    return status, n, trace


def estimate_qc_bisect(spec: LatticeSpec, p: float, L: int = None,
                       n_per_probe: int = 400, tol: float = 1e-3,
                       seed: int = 0, surrogate: str = "spanning",
                       axis: int = 0, n_cap_factor: int = 16,
                       ci_level: float = 0.95, workers: int = 1,
                       max_probes: int = 64) -> CurvePoint:
    """Certified bisection of q on the surrogate median (probability 1/2).

    The returned CI is the final certified bracket [lo, hi]: both endpoints
    carry a probe-level Wilson certificate that the response is on the stated
    side of 1/2.  Degenerate responses short-circuit: saturation at q=0
    (response already above 1/2 with no vertical edges open beyond chance)
    returns q_c = 0 flagged; no response at q=1 returns q_c = 1 flagged.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must be in [0,1]")
    if tol < 1e-3:
        raise ValueError("tol must be >= 1e-3")
    if L is not None and L != spec.side_d:
        spec = replace(spec, side_d=L)

    def params_of_q(q):
        return Params.for_spec(p, q, spec)

    n_cap = n_per_probe * n_cap_factor
    stream_block = n_cap
    common = dict(L=spec.side_d, surrogate=surrogate, axis=axis, seed=seed,
                  ci_level=ci_level, spec_config=spec.to_config())
    trace = []
    n_total = 0
    probe_index = 0

    def probe(q):
        nonlocal n_total, probe_index
        status, used, t = _certify_probe(
            spec, params_of_q, q, seed, probe_index, stream_block,
            n_per_probe, n_cap, ci_level, surrogate, axis, workers)
        probe_index += 1
        n_total += used
        trace.extend(t)
        return status

    s0 = probe(0.0)
    if s0 == "above":
        return CurvePoint(p=p, qc=0.0, ci_lo=0.0, ci_hi=tol, n_total=n_total,
                          trace=trace, flags=["saturated_at_q0"], **common)
    if s0 == "ambiguous":
        return CurvePoint(p=p, qc=0.0, ci_lo=0.0, ci_hi=tol, n_total=n_total,
                          trace=trace, flags=["ambiguous_at_q0"], **common)
    s1 = probe(1.0)
    if s1 == "below":
        return CurvePoint(p=p, qc=1.0, ci_lo=1.0 - tol, ci_hi=1.0,
                          n_total=n_total, trace=trace,
                          flags=["no_span_at_q1"], **common)
    if s1 == "ambiguous":
        return CurvePoint(p=p, qc=1.0, ci_lo=1.0 - tol, ci_hi=1.0,
                          n_total=n_total, trace=trace,
                          flags=["ambiguous_at_q1"], **common)

    lo, hi = 0.0, 1.0
    flags = []
    while hi - lo > tol and probe_index < max_probes:
        mid = 0.5 * (lo + hi)
        st = probe(mid)
        if st == "below":
            lo = mid
        elif st == "above":
            hi = mid
        else:
            # response at mid statistically indistinguishable from 1/2:
            # mid is our best q_c at this sampling budget
            flags.append("probe_ambiguous")
            break
    if hi - lo > tol and "probe_ambiguous" not in flags:
        flags.append("probe_budget_exhausted")
    return CurvePoint(p=p, qc=0.5 * (lo + hi), ci_lo=lo, ci_hi=hi,
                      n_total=n_total, trace=trace, flags=flags, **common)


def fit_crossover_exponent(points: list, p_c: float,
                           ci_level: float = 0.95) -> ExponentFit:
    """Weighted least squares of log q_c on log(p_c - p).

    Points whose CI reaches 0 (saturated or unresolved) carry no information
    about the power law and are refused; fewer than 3 usable points is an
    error.  Weights are inverse variances of log q_c via the delta method;
    noise-free inputs (zero-width CIs) fall back to equal weights and are
    reproduced exactly.
    """
    usable = []
    refused = []
    for pt in points:
        if pt.p >= p_c:
            refused.append((pt.p, "p >= p_c"))
        elif pt.ci_lo <= 0.0 or pt.qc <= 0.0:
            refused.append((pt.p, "CI includes 0"))
        else:
            usable.append(pt)
    if len(usable) < 3:
        raise ValueError(
            f"need >= 3 usable points, have {len(usable)} "
            f"(refused: {refused})"
        )
    if len({pt.p for pt in usable}) < len(usable):
        raise ValueError("points must have distinct p")
    x = np.array([math.log(p_c - pt.p) for pt in usable])
    y = np.array([math.log(pt.qc) for pt in usable])
    z = NormalDist().inv_cdf(0.5 + ci_level / 2.0)
    sig = np.array([(pt.ci_hi - pt.ci_lo) / (2.0 * z * pt.qc) for pt in usable])
    notes = {}
    if np.all(sig < 1e-12):
        w = np.ones_like(sig)
        notes["weights"] = "equal (zero-width CIs)"
    else:
        w = 1.0 / np.maximum(sig, 1e-12)
        notes["weights"] = "inverse variance of log qc (delta method)"
    coeffs, cov = np.polyfit(x, y, 1, w=w, cov="unscaled")
    resid = (y - np.polyval(coeffs, x)).tolist()
    return ExponentFit(psi_hat=float(coeffs[0]), intercept=float(coeffs[1]),
                       cov=cov.tolist(), residuals=resid,
                       p_grid=[pt.p for pt in usable], n_used=len(usable),
                       refused=refused, notes=notes)


@dataclass
class BoundReport:
    p: float
    d: int
    p_c: float
    bound: float          # min(8 d^2 (p_c - p), 1)
    raw_bound: float
    vacuous: bool
    qc: float
    qc_ci_hi: float
    holds: bool           # upper CI of qc within the bound
    ratio: float          # qc / (p_c - p)
    note: str = ""


def bound_check(point: CurvePoint, d: int, p_c: float) -> BoundReport:
    """Compare an estimated curve point against the line 8 d^2 (p_c - p)."""
    if point.p >= p_c:
        raise ValueError("bound applies to p < p_c only")
    raw = 8.0 * d * d * (p_c - point.p)
    bound = min(raw, 1.0)
    holds = point.ci_hi <= bound
    note = "vacuous bound (>= 1): holds trivially" if raw > 1.0 else ""
    return BoundReport(p=point.p, d=d, p_c=p_c, bound=bound, raw_bound=raw,
                       vacuous=raw > 1.0, qc=point.qc, qc_ci_hi=point.ci_hi,
                       holds=holds, ratio=point.qc / (p_c - point.p),
                       note=note)


def conjecture_diagnostic(p_grid, spec: LatticeSpec, n_chi: int = 2000,
                          seed: int = 0, workers: int = 1,
                          **bisect_kwargs) -> list:
    """Exploratory table of (p, qc, chi at q=0, product qc*chi).

    No pass/fail: the table lets a reader eyeball whether the product
    stabilizes across the grid.  chi is measured at q=0, i.e. on the
    decoupled horizontal layer of the origin.
    """
    rows = []
    for i, p in enumerate(p_grid):
        point = estimate_qc_bisect(spec, p, seed=seed + i, workers=workers,
                                   **bisect_kwargs)
        chi = estimate_chi(spec, Params.for_spec(p, 0.0, spec), n_chi,
                           seed=seed + 10_000 + i, workers=workers)
        rows.append({
            "p": p,
            "qc": point.qc,
            "qc_ci": (point.ci_lo, point.ci_hi),
            "chi": chi.value,
            "chi_se": chi.se,
            "product": point.qc * chi.value,
            "flags": list(point.flags),
        })
    return rows


def default_workers() -> int:
    return max(1, os.cpu_count() or 1)
