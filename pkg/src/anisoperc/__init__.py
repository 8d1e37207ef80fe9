"""Monte Carlo toolkit for anisotropic bond percolation on Z^d x Z^s.

Horizontal edges (those parallel to the Z^d factor) open with probability p,
vertical edges (parallel to the Z^s factor) with probability q.  The package
provides finite-box lattices with several variants (multigraph, layered,
spread-out), seeded configuration sampling, union-find cluster analysis, a
coupled cluster-exploration process that emits an i.i.d. Bernoulli(r) edge
field on Z^d, and estimators for the critical curve q_c(p) and its crossover
exponent.
"""

__version__ = "0.1.0"

from .constants import PC_BOND, pc_default
from .lattice import (
    LatticeSpec,
    Vertex,
    Edge,
    EdgeOrdering,
    build_lattice,
    build_multigraph,
    enumerate_edges,
    neighbors,
    unit_vectors,
    spread_out_vectors,
)
from .sampling import (
    Params,
    Configuration,
    SeedPlan,
    effective_qbar,
    effective_r,
    theorem_threshold,
    verify_domination_chain,
    sample_configuration,
    sample_monotone_pair,
)
from .clusters import (
    ClusterLabeling,
    ClusterStats,
    label_clusters,
    cluster_of_origin,
    cluster_stats,
    spans,
    size_distribution,
)
from .coupling import (
    CouplingState,
    ExplorationResult,
    explore_coupled,
    vhook_present,
    eta_marginal_estimate,
    verify_trace,
    equivalence_check,
    domination_experiment,
)
from .estimators import (
    Estimate,
    CurvePoint,
    ExponentFit,
    estimate_theta_proxy,
    estimate_chi,
    estimate_qc_bisect,
    fit_crossover_exponent,
    bound_check,
    conjecture_diagnostic,
)
