"""Fokker-Planck gradient flows and Wasserstein-type geometry on weighted graphs."""
from ._version import __version__
from .analysis import (
    ConvergenceTable,
    ExhaustionReport,
    ExhaustionScenario,
    PartitionReport,
    convergence_diagnostics,
    exhaustion_study,
    lyapunov_partition,
)
from .density import (
    Density,
    Potential,
    gibbs_density,
    log_gibbs_normalizer,
    lr_norm,
    make_density,
    make_potential,
    potential_from_distance,
    second_moment,
    zero_potential,
)
from .energy import EnergyReport, free_energy, free_energy_derivative
from .errors import *  # noqa: F401,F403
from .fpe import (
    IntegratorConfig,
    Trajectory,
    dissipation,
    fpe_rhs,
    fpe_rhs_two_term,
    gradient_flow_rhs,
    heat_semigroup,
    integrate,
)
from .graph import (
    TruncationMode,
    WeightedGraph,
    binary_tree,
    build_graph,
    cycle_graph,
    generate_family,
    graph_distance,
    lattice_window,
    path_graph,
    random_sparse,
    truncation_deficit,
)
from .metric import (
    DensityPath,
    TangentVector,
    W2Options,
    W2Result,
    action,
    hodge_decompose,
    inner_g,
    w2_distance,
)
from .operators import (
    BSolver,
    EdgeField,
    apply_B,
    divergence,
    gradient,
    inner_pi,
    inner_rho,
    laplacian,
    laplacian_logform,
    log_mean,
    solve_B_inverse,
    weighted_divergence,
)
from .scenario import RunManifest, Scenario, emit_scenario, parse_scenario, run_scenario
