"""Distributed sampling-and-reconstruction systems over graphs.

Build agent/position topologies, assemble banded sensing matrices, certify
stability through local quasi-main submatrices, reconstruct signals with an
exponentially convergent patched iteration, and replay the whole pipeline
as a synchronous multi-agent simulation with bounded per-agent storage.
"""

from .graphs import (
    Graph,
    GraphError,
    GrowthReport,
    ball,
    covering_multiplicity,
    cycle_graph,
    doubling_constant,
    geodesic_distance,
    grid_graph,
    growth_fit,
    maximal_disjoint_subset,
    path_graph,
    two_stage_tree,
)
from .topology import (
    AssumptionReport,
    DsrsTopology,
    TopologyError,
    build_topology,
    innovation_stats,
    read_topology,
    validate_assumptions,
    write_topology,
)
from .sensing import (
    EntryTable,
    GaussianKernel,
    SensingError,
    SensingMatrix,
    apply,
    apply_transpose,
    assemble,
    band_truncate,
    gram,
    jaffard_norm,
    signal_jaffard_norm,
)
from .stability import (
    ConvergenceError,
    StabilityCertificate,
    StabilityError,
    difference_truncation,
    global_l2_bounds,
    local_certificate,
    smallest_singular_value,
    stability_threshold,
    truncate_domain,
    verify_lp_transfer,
    wiener_decay_check,
)
from .reconstruction import (
    ConstantsReport,
    DivergenceError,
    IterationLog,
    PatchOperator,
    ReconstructionError,
    build_patch_operator,
    constants_report,
    iterate,
    least_squares_oracle,
    local_solve,
    local_w,
    patch,
)
from .simulate import (
    AgentState,
    ProvisioningError,
    RunStats,
    SimSystem,
    estimate_amplitudes,
    impair,
    provision,
    run_rounds,
)
from .experiments import (
    ExperimentConfig,
    error_metric,
    gen_cycle_scenario,
    gen_prism_scenario,
    run_table1,
    sample_with_noise,
)

__version__ = "0.1.0"
