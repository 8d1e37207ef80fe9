"""Cluster labeling vs independent oracles, spanning/wrapping, size laws."""

import math

import numpy as np
import pytest

from anisoperc.lattice import LatticeSpec, build_lattice
from anisoperc.sampling import (Configuration, Params, sample_configuration,
                                sample_monotone_pair)
from anisoperc.clusters import (
    ClusterStats,
    bfs_components,
    cluster_of_origin,
    cluster_stats,
    exact_origin_size_law,
    label_clusters,
    origin_size,
    size_distribution,
    spans,
)


def components_from_labeling(config):
    lab = label_clusters(config)
    lat = build_lattice(config.spec)
    comps = {}
    for v in range(lat.n_vertices):
        comps.setdefault(lab.find(v), set()).add(v)
    return set(frozenset(c) for c in comps.values())


MIXED_SPECS = [
    LatticeSpec(d=2, s=1, side_d=6, side_s=6),
    LatticeSpec(d=2, s=1, side_d=6, side_s=3, boundary_d="free",
                boundary_s="free"),
    LatticeSpec(d=3, s=0, side_d=4),
    LatticeSpec(d=1, s=1, side_d=8, side_s=4, boundary_d="free"),
    LatticeSpec(d=1, s=1, side_d=4, side_s=2, variant="layered", layers=1,
                boundary_d="free"),
    LatticeSpec(d=2, s=1, side_d=5, side_s=2, multigraph=True,
                boundary_d="free"),
    LatticeSpec(d=2, s=1, side_d=6, side_s=2, variant="spread_out", range_k=2,
                boundary_d="free", boundary_s="free"),
]


# ---------------------------------------------------------------------------
# labeling vs BFS oracle


def test_all_closed_every_vertex_isolated():
    spec = LatticeSpec(d=2, s=1, side_d=4, side_s=3)
    config = sample_configuration(spec, Params(0.0, 0.0), seed=0)
    lab = label_clusters(config)
    assert lab.n_components == build_lattice(spec).n_vertices


def test_all_open_periodic_single_component():
    spec = LatticeSpec(d=2, s=1, side_d=4, side_s=3)
    config = sample_configuration(spec, Params(1.0, 1.0), seed=0)
    lab = label_clusters(config)
    assert lab.n_components == 1


def test_labeling_matches_bfs_on_6x6x6():
    spec = LatticeSpec(d=2, s=1, side_d=6, side_s=6)
    params = Params(0.45, 0.25)
    for seed in range(10):
        config = sample_configuration(spec, params, seed=seed)
        assert components_from_labeling(config) == set(bfs_components(config))


def test_labeling_matches_bfs_across_mixed_specs():
    count = 0
    for spec in MIXED_SPECS:
        params = Params.for_spec(0.4, 0.3, spec)
        for seed in range(6):
            config = sample_configuration(spec, params, seed=seed)
            assert components_from_labeling(config) == \
                set(bfs_components(config)), (spec, seed)
            count += 1
    assert count == 42


def test_component_sizes_sum_to_vertex_count():
    spec = LatticeSpec(d=2, s=1, side_d=6, side_s=4)
    config = sample_configuration(spec, Params(0.5, 0.2), seed=3)
    lab = label_clusters(config)
    assert sum(lab.component_sizes()) == build_lattice(spec).n_vertices


# ---------------------------------------------------------------------------
# cluster of the origin


def test_single_open_edge_at_origin():
    spec = LatticeSpec(d=2, s=1, side_d=4, side_s=3, boundary_d="free",
                       boundary_s="free")
    lat = build_lattice(spec)
    states = np.zeros(lat.n_edges, dtype=bool)
    # open exactly the +axis0 edge at the origin
    c = [int(x) for x in lat.coords[lat.origin]]
    c[0] += 1
    k = lat.find_edge(lat.origin, lat.vertex_index(c))
    states[k] = True
    config = Configuration(spec, states, Params(0.0, 0.0), seed=0)
    oc = cluster_of_origin(config)
    assert oc.size == 2
    assert origin_size(config) == 2


def test_origin_cluster_full_box():
    spec = LatticeSpec(d=2, s=1, side_d=3, side_s=3, boundary_d="free",
                       boundary_s="free")
    config = sample_configuration(spec, Params(1.0, 1.0), seed=0)
    assert cluster_of_origin(config).size == 27


def test_origin_size_one_iff_all_incident_closed():
    spec = LatticeSpec(d=2, s=1, side_d=4, side_s=2)
    config = sample_configuration(spec, Params(0.0, 0.0), seed=0)
    assert origin_size(config) == 1


def test_mean_origin_size_matches_exact_enumeration():
    # 3x3 horizontal box (12 edges): exact law by full enumeration, then a
    # Monte Carlo mean at the same parameters must land inside 4 sigma
    spec = LatticeSpec(d=2, s=0, side_d=3, boundary_d="free")
    params = Params(0.3, 0.0)
    law = exact_origin_size_law(spec, params)
    exact_mean = sum(k * w for k, w in law.items())
    exact_var = sum(k * k * w for k, w in law.items()) - exact_mean**2
    n = 20_000
    sizes = [origin_size(sample_configuration(spec, params, seed=77,
                                              stream_id=i))
             for i in range(n)]
    mc_mean = float(np.mean(sizes))
    se = math.sqrt(exact_var / n)
    assert abs(mc_mean - exact_mean) <= 4 * se


def test_exact_law_guard_rejects_large_boxes():
    spec = LatticeSpec(d=2, s=0, side_d=4, boundary_d="free")  # 24 edges
    with pytest.raises(ValueError):
        exact_origin_size_law(spec, Params(0.3, 0.0))


# ---------------------------------------------------------------------------
# spanning and wrapping


def test_spans_all_open_every_axis():
    for spec in (LatticeSpec(d=2, s=1, side_d=4, side_s=3),
                 LatticeSpec(d=2, s=1, side_d=4, side_s=3,
                             boundary_d="free", boundary_s="free")):
        config = sample_configuration(spec, Params(1.0, 1.0), seed=0)
        for axis in range(3):
            assert spans(config, axis)


def test_spans_all_closed_no_axis():
    spec = LatticeSpec(d=2, s=1, side_d=4, side_s=3)
    config = sample_configuration(spec, Params(0.0, 0.0), seed=0)
    for axis in range(3):
        assert not spans(config, axis)


def unrolled_spans(config, axis):
    """Wrapping oracle: unroll the periodic box 3x along the axis and ask
    whether any cluster straddles a full period."""
    spec = config.spec
    lat = build_lattice(spec)
    shape = spec.shape
    L = shape[axis]
    reps = 3
    big_shape = list(shape)
    big_shape[axis] = reps * L

    def big_index(coords):
        idx = 0
        for n, c in zip(big_shape, coords):
            idx = idx * n + c
        return idx

    parent = list(range(int(np.prod(big_shape))))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb

    steps = lat.edge_steps(axis)
    for k in np.nonzero(config.states)[0]:
        a = [int(c) for c in lat.coords[int(lat.edges_u[k])]]
        b = [int(c) for c in lat.coords[int(lat.edges_v[k])]]
        step = int(steps[k])
        for rep in range(reps):
            ca = list(a)
            cb = list(b)
            ca[axis] += rep * L
            # head position follows the tail by the canonical displacement,
            # which may leave the unrolled block
            cb[axis] = ca[axis] + step if step != 0 else cb[axis] + rep * L
            if not 0 <= cb[axis] < reps * L:
                continue
            union(big_index(ca), big_index(cb))
    # wrap iff some (coords, coords + L e_axis) pair is connected
    for v in range(lat.n_vertices):
        c = [int(x) for x in lat.coords[v]]
        c2 = list(c)
        c2[axis] += L
        if find(big_index(c)) == find(big_index(c2)):
            return True
    return False


def test_wrapping_agrees_with_unroll_oracle():
    spec = LatticeSpec(d=2, s=1, side_d=4, side_s=3)
    cases = 0
    hits = 0
    for seed in range(40):
        config = sample_configuration(spec, Params(0.45, 0.3), seed=seed)
        for axis in range(3):
            got = spans(config, axis)
            want = unrolled_spans(config, axis)
            assert got == want, (seed, axis)
            cases += 1
            hits += got
    assert cases == 120
    assert 0 < hits < cases  # the sweep saw both outcomes


def test_free_spanning_touches_both_faces():
    spec = LatticeSpec(d=1, s=0, side_d=5, boundary_d="free")
    lat = build_lattice(spec)
    states = np.zeros(lat.n_edges, dtype=bool)
    states[:] = True
    config = Configuration(spec, states, Params(1.0, 0.0), seed=0)
    assert spans(config, 0)
    states2 = states.copy()
    states2[0] = False  # break the chain
    config2 = Configuration(spec, states2, Params(1.0, 0.0), seed=0)
    assert not spans(config2, 0)


def test_planar_crossing_probability_module_scale():
    # (L+1) x L free rectangle at p = q = 1/2 crosses horizontally with
    # probability exactly 1/2 (self-duality); modest n here, the acceptance
    # suite runs the full-size version
    L = 16
    spec = LatticeSpec(d=1, s=1, side_d=L + 1, side_s=L, boundary_d="free",
                       boundary_s="free")
    params = Params(0.5, 0.5)
    n = 4000
    hits = sum(
        spans(sample_configuration(spec, params, seed=2024, stream_id=i), 0)
        for i in range(n)
    )
    frac = hits / n
    se = math.sqrt(0.25 / n)
    assert abs(frac - 0.5) <= 4 * se


# ---------------------------------------------------------------------------
# size distribution


def test_size_distribution_point_masses():
    spec = LatticeSpec(d=2, s=1, side_d=3, side_s=3, boundary_d="free",
                       boundary_s="free")
    zero = [sample_configuration(spec, Params(0.0, 0.0), seed=0, stream_id=i)
            for i in range(5)]
    assert size_distribution(zero) == {1: 5}
    ones = [sample_configuration(spec, Params(1.0, 1.0), seed=0, stream_id=i)
            for i in range(5)]
    assert size_distribution(ones) == {27: 5}


def test_size_distribution_matches_exact_enumeration_2x2x2():
    spec = LatticeSpec(d=2, s=1, side_d=2, side_s=2, boundary_d="free",
                       boundary_s="free")
    params = Params(0.4, 0.3)
    law = exact_origin_size_law(spec, params)
    assert abs(sum(law.values()) - 1.0) < 1e-12
    n = 40_000
    configs = (sample_configuration(spec, params, seed=55, stream_id=i)
               for i in range(n))
    hist = size_distribution(configs)
    assert sum(hist.values()) == n
    for k, prob in law.items():
        frac = hist.get(k, 0) / n
        se = math.sqrt(prob * (1 - prob) / n)
        assert abs(frac - prob) <= 5 * se, (k, frac, prob)


def test_exact_law_2x2_hand_values():
    # 2x2 box, one horizontal + one vertical axis, p=0.5, q=0.3: the origin
    # is a corner with one p-edge and one q-edge; P(|C|=1) = (1-p)(1-q)
    spec = LatticeSpec(d=1, s=1, side_d=2, side_s=2, boundary_d="free",
                       boundary_s="free")
    law = exact_origin_size_law(spec, Params(0.5, 0.3))
    assert abs(law[1] - 0.35) < 1e-12
    assert abs(law[2] - 0.32) < 1e-12
    assert abs(law[3] - 0.1575) < 1e-12
    assert abs(law[4] - 0.1725) < 1e-12


# ---------------------------------------------------------------------------
# transported monotonicity and stats


def test_monotone_pair_transported_to_clusters():
    spec = LatticeSpec(d=2, s=1, side_d=8, side_s=4)
    lo_params, hi_params = Params(0.3, 0.1), Params(0.45, 0.25)
    for seed in range(15):
        lo, hi = sample_monotone_pair(spec, lo_params, hi_params, seed=seed)
        assert origin_size(lo) <= origin_size(hi)
        for axis in range(3):
            if spans(lo, axis):
                assert spans(hi, axis)


def test_cluster_stats_fields_consistent():
    spec = LatticeSpec(d=2, s=1, side_d=6, side_s=4)
    config = sample_configuration(spec, Params(0.5, 0.2), seed=8)
    stats = cluster_stats(config)
    assert isinstance(stats, ClusterStats)
    assert 1 <= stats.origin_size <= stats.max_size
    assert stats.max_size == max(stats.histogram)
    assert sum(k * v for k, v in stats.histogram.items()) == \
        build_lattice(spec).n_vertices
    assert stats.spanning == tuple(spans(config, ax) for ax in range(3))
