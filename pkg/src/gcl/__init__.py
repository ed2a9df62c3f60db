"""Gibbs cluster point processes: sampling, cluster lifting and projection,
differential calculus on configurations, Monte Carlo identity verification,
and in-cluster Langevin dynamics.
"""

from .calculus import (
    SUP_ABS_BUMP_DERIV,
    CylinderFunction,
    Diffeomorphism,
    ProductTanh,
    SmoothBump,
    TanhPoly,
    VectorField,
    apply_diffeo,
    beta_eta,
    beta_v,
    bump_profile,
    bump_profile_deriv,
    eval_cylinder,
    grad_cylinder,
    hat_phi,
    invert_diffeo,
    jacobian_det,
    log_rho_phi,
    rho_phi,
    rnd_density_R,
)
from .clusters import (
    ClusterLaw,
    DiagnosticsReport,
    FixedSize,
    PoissonSize,
    diagnose,
    droplet_theta_measure,
    lift,
    project_px,
    project_q,
    sample_cluster,
    sample_cluster_process,
    sample_marked_ensemble,
)
from .configurations import (
    Ball,
    ClusterVector,
    GroundConfiguration,
    MarkedConfiguration,
    MarkedPoint,
    Window,
    count_in,
    restrict,
    sum_over,
)
from .dynamics import (
    BLOWUP_LIMIT,
    DynamicsParams,
    TrajectorySummary,
    check_invariance,
    langevin_step,
    mann_kendall_p,
    run_dynamics,
)
from .fileio import (
    read_ensemble_csv,
    read_json,
    read_marked_csv,
    read_marked_ensemble_csv,
    read_pattern_csv,
    write_ensemble_csv,
    write_json,
    write_marked_csv,
    write_marked_ensemble_csv,
    write_pattern_csv,
    write_trajectory_csv,
)
from .identities import (
    FirstOffsetWithin,
    GNZFunctional,
    IdentityReport,
    IndicatorBox,
    SizeEquals,
    check_correlation_projection,
    check_gnz,
    check_ibp,
    check_laplace_projection,
    check_quasi_invariance,
    laplace_closed_form,
    params_digest,
)
from .potentials import (
    INF,
    CellIndex,
    HardCore,
    LennardJonesType,
    LJ612,
    SoftRepulsive,
    ZeroPotential,
    energy,
    exp_neg,
    interaction_energy,
    local_energy,
    phi_pair,
)
from .runconfig import ConfigError, RunConfig, load_config
from .sampler import (
    ChainState,
    GibbsRunParams,
    ReferenceMeasure,
    bdm_step,
    estimate_kappa1,
    estimate_kappa2,
    initial_state,
    sample_gibbs,
    sample_poisson,
)

__version__ = "0.1.0"
