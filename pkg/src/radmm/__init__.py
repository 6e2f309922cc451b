"""Asynchronous, packet-loss-tolerant relaxed consensus ADMM with spectral
rate analysis and a Monte Carlo experiment harness."""

from radmm.core import (
    LagrangianState,
    Params,
    SolverState,
    apply_packet,
    async_step,
    fixed_point_residual,
    lagrangian_step,
    make_packet,
    matched_z0,
    primal_update,
    run_async,
    run_sync,
    sync_step,
)
from radmm.costs import (
    LocalCost,
    QuadraticCost,
    QuarticCost,
    centralized_solve,
    random_quadratic,
)
from radmm.events import EventStream, LossModel, draw_events, effective_beta_probability
from radmm.rates import (
    build_L,
    build_rate_model,
    check_lemma2,
    expected_B,
    expected_B_kron,
    fixed_point_z,
)
from radmm.topology import (
    Graph,
    TopologyMatrices,
    build_graph,
    build_matrices,
    complete_graph,
    random_geometric_graph,
)

__version__ = "0.1.0"
