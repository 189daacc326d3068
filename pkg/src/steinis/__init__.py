"""Particle-transport importance sampling with exact density tracking.

Leader particles build a sequence of kernel-smoothed transport maps toward an
unnormalized target; follower particles ride the maps while their proposal
log-density is updated through the maps' Jacobian determinants, yielding
importance weights, consistent expectation estimates, and an unbiased
partition-function estimate.  Discrepancy diagnostics, a path-integration
partition estimator, and annealed importance-sampling baselines round out the
toolkit, all verified against closed-form oracles.
"""

from .baselines import (
    AisResult,
    AnnealingPath,
    HmcParams,
    LangevinParams,
    ais_run,
    hmc_step,
    leapfrog,
    mala_step,
    plain_is,
)
from .config import ConfigError, RunConfig, load_config
from .discrepancy import PathIntegrationResult, ksd_vstat, path_integration
from .kernels import (
    DegenerateParticlesWarning,
    KernelSpec,
    median_bandwidth,
    rbf_eval,
    rbf_grad_first,
    stein_kernel,
    stein_kernel_matrix,
)
from .results import RunResult, TraceRow
from .sampler import (
    EnsembleState,
    WeightedSample,
    compute_weights,
    effective_sample_size,
    estimate_expectation,
    estimate_partition,
    init_ensemble,
    run_steinis,
    run_svgd,
    steinis_iterate,
)
from .targets import (
    Coordinate,
    CosineMoment,
    DiagonalGaussian,
    GenericTarget,
    GmmTarget,
    RbmTarget,
    SquaredCoordinate,
    TransformedGmmTarget,
    random_gmm,
    random_rbm,
    rbm_from_file,
    scaled_target,
    target_from_distribution,
)
from .transport import (
    DeterminantApproxError,
    SingularMapError,
    StepSchedule,
    VelocityField,
    apply_step,
    log_det_approx,
    log_det_exact,
)

__version__ = "0.1.0"
