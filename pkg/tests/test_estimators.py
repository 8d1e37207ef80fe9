"""Estimators: Wilson CIs, theta/chi proxies, certified bisection, fits."""

import math

import numpy as np
import pytest

import anisoperc.estimators as est
from anisoperc.clusters import exact_origin_size_law
from anisoperc.estimators import (
    BoundReport,
    CurvePoint,
    bound_check,
    conjecture_diagnostic,
    estimate_chi,
    estimate_qc_bisect,
    estimate_theta_proxy,
    fit_crossover_exponent,
    wilson_ci,
)
from anisoperc.lattice import LatticeSpec, build_lattice
from anisoperc.sampling import Params


# ---------------------------------------------------------------------------
# Wilson interval


def test_wilson_exact_endpoints():
    assert wilson_ci(0, 10) == (0.0, wilson_ci(0, 10)[1])
    assert wilson_ci(0, 10)[0] == 0.0
    assert wilson_ci(10, 10)[1] == 1.0
    lo, hi = wilson_ci(5, 10)
    assert 0.0 < lo < 0.5 < hi < 1.0


def test_wilson_contains_phat_and_shrinks():
    lo1, hi1 = wilson_ci(30, 100)
    lo2, hi2 = wilson_ci(300, 1000)
    assert lo1 < 0.3 < hi1
    assert lo2 < 0.3 < hi2
    assert hi2 - lo2 < hi1 - lo1


def test_wilson_rejects_bad_args():
    with pytest.raises(ValueError):
        wilson_ci(1, 0)
    with pytest.raises(ValueError):
        wilson_ci(-1, 10)
    with pytest.raises(ValueError):
        wilson_ci(11, 10)


@pytest.mark.parametrize("p_true", [0.3, 0.5])
def test_wilson_coverage(p_true):
    # frequentist coverage of the nominal 95% interval at n = 50
    n = 50
    intervals = [wilson_ci(k, n) for k in range(n + 1)]
    rng = np.random.default_rng(12345)
    ks = rng.binomial(n, p_true, size=10_000)
    covered = sum(1 for k in ks
                  if intervals[k][0] <= p_true <= intervals[k][1])
    assert 0.93 <= covered / 10_000 <= 0.97


# ---------------------------------------------------------------------------
# theta proxy


FREE_BOX = LatticeSpec(d=2, s=1, side_d=8, side_s=2, boundary_d="free",
                       boundary_s="free")


def test_theta_proxy_trivial_extremes():
    one = estimate_theta_proxy(FREE_BOX, Params.for_spec(1.0, 1.0, FREE_BOX),
                               50, surrogate="spanning", axis=0)
    assert one.value == 1.0 and one.ci_hi == 1.0
    # interior origin: with every edge closed it cannot touch any face
    interior = LatticeSpec(d=2, s=1, side_d=5, side_s=3, boundary_d="free",
                           boundary_s="free")
    zero = estimate_theta_proxy(interior,
                                Params.for_spec(0.0, 0.0, interior),
                                50, surrogate="origin_face", axis=0)
    assert zero.value == 0.0 and zero.ci_lo == 0.0


def test_theta_proxy_planar_self_dual_point():
    # (n+1) x n free rectangle at p = 1/2: crossing probability exactly 1/2
    spec = LatticeSpec(d=1, s=1, side_d=17, side_s=16, boundary_d="free",
                       boundary_s="free")
    params = Params.for_spec(0.5, 0.5, spec)
    res = estimate_theta_proxy(spec, params, 4000, surrogate="spanning",
                               axis=0, seed=77)
    se = math.sqrt(0.25 / 4000)
    assert abs(res.value - 0.5) <= 4 * se
    assert res.ci_lo < 0.5 < res.ci_hi


def test_theta_proxy_surrogate_validation():
    periodic = LatticeSpec(d=2, s=1, side_d=8, side_s=4)
    with pytest.raises(ValueError):
        estimate_theta_proxy(periodic, Params.for_spec(0.5, 0.5, periodic),
                             10, surrogate="origin_face")
    with pytest.raises(ValueError):
        estimate_theta_proxy(FREE_BOX, Params.for_spec(0.5, 0.5, FREE_BOX),
                             10, surrogate="wrapping", axis=0)
    with pytest.raises(ValueError):
        estimate_theta_proxy(FREE_BOX, Params.for_spec(0.5, 0.5, FREE_BOX),
                             10, surrogate="nonsense")
    with pytest.raises(ValueError):
        estimate_theta_proxy(FREE_BOX, Params.for_spec(0.5, 0.5, FREE_BOX), 0)


# ---------------------------------------------------------------------------
# chi


def test_chi_closed_box_is_one():
    res = estimate_chi(FREE_BOX, Params.for_spec(0.0, 0.0, FREE_BOX), 25)
    assert res.value == 1.0 and res.se == 0.0


def test_chi_open_box_is_volume():
    res = estimate_chi(FREE_BOX, Params.for_spec(1.0, 1.0, FREE_BOX), 25)
    assert res.value == float(build_lattice(FREE_BOX).n_vertices)


def test_chi_d1_chain_matches_finite_formula():
    # centered origin on a free path: E|C(0)| = 1 + 2 * sum_{k<=32} p^k
    spec = LatticeSpec(d=1, s=0, side_d=65, boundary_d="free")
    p = 0.5
    exact = 1.0 + 2.0 * sum(p**k for k in range(1, 33))
    res = estimate_chi(spec, Params(p, 0.0), 3000, seed=4)
    assert abs(res.value - exact) <= 4 * res.se
    assert res.se > 0


def test_chi_small_box_matches_exact_law():
    spec = LatticeSpec(d=1, s=1, side_d=2, side_s=2, boundary_d="free",
                       boundary_s="free")
    params = Params.for_spec(0.45, 0.3, spec)
    law = exact_origin_size_law(spec, params)
    exact_mean = sum(k * v for k, v in law.items())
    res = estimate_chi(spec, params, 5000, seed=5)
    assert abs(res.value - exact_mean) <= 4 * res.se


def test_chi_truncation_note():
    near_full = estimate_chi(FREE_BOX, Params.for_spec(0.9, 0.9, FREE_BOX), 50)
    assert near_full.notes.get("truncation_bias_likely") is True
    periodic = LatticeSpec(d=2, s=1, side_d=8, side_s=4)
    res = estimate_chi(periodic, Params.for_spec(0.3, 0.3, periodic), 20)
    assert "skipped" in res.notes["boundary_touch_check"]


def test_chi_worker_count_invariance():
    params = Params.for_spec(0.4, 0.3, FREE_BOX)
    a = estimate_chi(FREE_BOX, params, 64, seed=9, workers=1)
    b = estimate_chi(FREE_BOX, params, 64, seed=9, workers=2)
    assert (a.value, a.se) == (b.value, b.se)


# ---------------------------------------------------------------------------
# certified bisection


def test_qc_bisect_argument_validation():
    with pytest.raises(ValueError):
        estimate_qc_bisect(FREE_BOX, p=1.2)
    with pytest.raises(ValueError):
        estimate_qc_bisect(FREE_BOX, p=0.4, tol=1e-4)


def test_qc_bisect_saturated_at_q0():
    point = estimate_qc_bisect(FREE_BOX, p=0.95, n_per_probe=100,
                               surrogate="spanning", axis=0, seed=1)
    assert point.qc == 0.0
    assert "saturated_at_q0" in point.flags
    assert point.ci_lo == 0.0


def test_qc_bisect_no_span_at_q1():
    point = estimate_qc_bisect(FREE_BOX, p=0.05, n_per_probe=100,
                               surrogate="spanning", axis=0, seed=2)
    assert point.qc == 1.0
    assert "no_span_at_q1" in point.flags
    assert point.ci_hi == 1.0


def _logistic_fires(qstar, width=1e-4):
    """Synthetic surrogate: fire probability sigmoid((q - qstar)/width)."""

    def fake(spec, params, seed, stream_lo, n, surrogate, axis, workers):
        x = max(min((params.q - qstar) / width, 36.0), -36.0)
        prob = 1.0 / (1.0 + math.exp(-x))
        rng = np.random.default_rng((seed * 1_000_003 + stream_lo) % 2**63)
        return int(rng.binomial(n, prob))

    return fake


def test_qc_bisect_synthetic_recovery(monkeypatch):
    # steep logistic response with a known median: the certified bracket
    # must land on it within tol, trial after trial
    master = np.random.default_rng(2024)
    failures = []
    for trial in range(100):
        qstar = float(master.uniform(0.2, 0.8))
        monkeypatch.setattr(est, "_parallel_fires", _logistic_fires(qstar))
        point = estimate_qc_bisect(FREE_BOX, p=0.3, n_per_probe=400,
                                   n_cap_factor=64, tol=1e-3, seed=trial)
        if abs(point.qc - qstar) > 1e-3:
            failures.append((trial, qstar, point.qc, point.flags))
    assert not failures, failures[:3]


def test_qc_bisect_bracket_is_certified(monkeypatch):
    qstar = 0.3777
    monkeypatch.setattr(est, "_parallel_fires", _logistic_fires(qstar))
    point = estimate_qc_bisect(FREE_BOX, p=0.3, n_per_probe=400,
                               n_cap_factor=64, tol=1e-3, seed=0)
    assert point.ci_lo <= qstar <= point.ci_hi
    assert point.ci_hi - point.ci_lo <= 1e-3 or "probe_ambiguous" in point.flags
    assert point.ci_lo <= point.qc <= point.ci_hi
    statuses = [t["status"] for t in point.trace if "status" in t]
    assert set(statuses) <= {"above", "below", "ambiguous"}
    assert point.n_total == sum(
        t["n"] for t in point.trace if "status" in t)


def test_qc_bisect_monotone_in_p():
    spec = LatticeSpec(d=2, s=1, side_d=16, side_s=4, boundary_d="periodic",
                       boundary_s="periodic")
    points = {}
    for p in (0.35, 0.45):
        points[p] = estimate_qc_bisect(spec, p, n_per_probe=100,
                                       n_cap_factor=8, tol=1e-3, seed=3,
                                       surrogate="wrapping", axis=2)
    assert points[0.45].qc < points[0.35].qc
    assert points[0.35].ci_lo > 0.0


def test_qc_bisect_worker_count_invariance(monkeypatch):
    monkeypatch.setattr(est, "_parallel_fires", _logistic_fires(0.44))
    a = estimate_qc_bisect(FREE_BOX, p=0.3, n_per_probe=200, tol=1e-3,
                           seed=6, workers=1)
    b = estimate_qc_bisect(FREE_BOX, p=0.3, n_per_probe=200, tol=1e-3,
                           seed=6, workers=4)
    assert (a.qc, a.ci_lo, a.ci_hi, a.n_total) == \
        (b.qc, b.ci_lo, b.ci_hi, b.n_total)


# ---------------------------------------------------------------------------
# exponent fit


def exact_points(p_c, psi, coef, p_values):
    pts = []
    for p in p_values:
        qc = coef * (p_c - p) ** psi
        pts.append(CurvePoint(p=p, qc=qc, ci_lo=qc, ci_hi=qc, L=0, n_total=0,
                              trace=[], surrogate="synthetic", axis=0,
                              seed=0, ci_level=0.95))
    return pts


def test_fit_recovers_quadratic_exactly():
    pts = exact_points(0.5, 2.0, 0.8, [0.40, 0.42, 0.44, 0.46, 0.48])
    fit = fit_crossover_exponent(pts, p_c=0.5)
    assert abs(fit.psi_hat - 2.0) < 1e-9
    assert abs(fit.intercept - math.log(0.8)) < 1e-9
    assert max(abs(r) for r in fit.residuals) < 1e-12
    assert fit.n_used == 5 and not fit.refused


def test_fit_recovers_linear_exactly():
    pts = exact_points(0.5, 1.0, 0.3, [0.40, 0.44, 0.48])
    fit = fit_crossover_exponent(pts, p_c=0.5)
    assert abs(fit.psi_hat - 1.0) < 1e-9


def test_fit_weighted_noisy_recovery():
    rng = np.random.default_rng(7)
    p_c, psi, coef = 0.5, 2.3, 0.9
    pts = []
    for p in np.linspace(0.38, 0.48, 9):
        qc = coef * (p_c - p) ** psi * math.exp(rng.normal(0.0, 0.01))
        half = qc * 0.02
        pts.append(CurvePoint(p=float(p), qc=qc, ci_lo=qc - half,
                              ci_hi=qc + half, L=0, n_total=0, trace=[],
                              surrogate="synthetic", axis=0, seed=0,
                              ci_level=0.95))
    fit = fit_crossover_exponent(pts, p_c=p_c)
    assert abs(fit.psi_hat - psi) < 0.15
    assert fit.notes["weights"].startswith("inverse variance")


def test_fit_refuses_uninformative_points():
    pts = exact_points(0.5, 2.0, 0.8, [0.40, 0.44])
    dead = CurvePoint(p=0.46, qc=0.001, ci_lo=0.0, ci_hi=0.01, L=0, n_total=0,
                      trace=[], surrogate="synthetic", axis=0, seed=0,
                      ci_level=0.95)
    above = CurvePoint(p=0.55, qc=0.0, ci_lo=0.0, ci_hi=0.001, L=0, n_total=0,
                       trace=[], surrogate="synthetic", axis=0, seed=0,
                       ci_level=0.95)
    with pytest.raises(ValueError, match="usable points"):
        fit_crossover_exponent(pts + [dead, above], p_c=0.5)
    fit = fit_crossover_exponent(
        pts + [dead, above] + exact_points(0.5, 2.0, 0.8, [0.48]), p_c=0.5)
    assert {reason for _, reason in fit.refused} == \
        {"CI includes 0", "p >= p_c"}
    assert abs(fit.psi_hat - 2.0) < 1e-9


def test_fit_rejects_duplicate_p():
    pts = exact_points(0.5, 2.0, 0.8, [0.40, 0.44, 0.48])
    with pytest.raises(ValueError, match="distinct"):
        fit_crossover_exponent(pts + exact_points(0.5, 2.0, 0.8, [0.44]),
                               p_c=0.5)


def test_curve_point_validation():
    with pytest.raises(ValueError):
        CurvePoint(p=0.4, qc=1.2, ci_lo=0.0, ci_hi=1.0, L=0, n_total=0,
                   trace=[], surrogate="s", axis=0, seed=0, ci_level=0.95)
    with pytest.raises(ValueError):
        CurvePoint(p=0.4, qc=0.5, ci_lo=0.6, ci_hi=0.4, L=0, n_total=0,
                   trace=[], surrogate="s", axis=0, seed=0, ci_level=0.95)


# ---------------------------------------------------------------------------
# theorem bound comparison


def make_point(p, qc, half):
    return CurvePoint(p=p, qc=qc, ci_lo=max(qc - half, 0.0), ci_hi=qc + half,
                      L=0, n_total=0, trace=[], surrogate="synthetic",
                      axis=0, seed=0, ci_level=0.95)


def test_bound_check_vacuous():
    report = bound_check(make_point(0.45, 0.02, 0.005), d=2, p_c=0.5)
    assert report.raw_bound == pytest.approx(1.6)
    assert report.bound == 1.0
    assert report.vacuous and report.holds
    assert "vacuous" in report.note


def test_bound_check_tight_window():
    report = bound_check(make_point(0.49, 0.01, 0.002), d=2, p_c=0.5)
    assert report.raw_bound == pytest.approx(0.32)
    assert not report.vacuous
    assert report.holds                      # 0.012 <= 0.32
    assert report.ratio == pytest.approx(1.0)
    failing = bound_check(make_point(0.499, 0.05, 0.001), d=2, p_c=0.5)
    assert failing.raw_bound == pytest.approx(0.032)
    assert not failing.holds                 # 0.051 > 0.032


def test_bound_check_rejects_supercritical_p():
    with pytest.raises(ValueError):
        bound_check(make_point(0.55, 0.0, 0.0), d=2, p_c=0.5)


# ---------------------------------------------------------------------------
# conjecture table


def test_conjecture_diagnostic_empty_grid():
    assert conjecture_diagnostic([], FREE_BOX) == []


def test_conjecture_diagnostic_row_schema():
    spec = LatticeSpec(d=2, s=1, side_d=12, side_s=4, boundary_d="periodic",
                       boundary_s="periodic")
    rows = conjecture_diagnostic([0.40, 0.45], spec, n_chi=300,
                                 n_per_probe=60, n_cap_factor=4, tol=5e-3,
                                 surrogate="wrapping", axis=2, seed=8)
    assert [r["p"] for r in rows] == [0.40, 0.45]
    for r in rows:
        assert set(r) == {"p", "qc", "qc_ci", "chi", "chi_se", "product",
                          "flags"}
        assert r["product"] == pytest.approx(r["qc"] * r["chi"])
        assert r["chi"] >= 1.0
