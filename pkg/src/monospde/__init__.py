"""Spectral-Galerkin simulation of monotone stochastic evolution equations."""

from .blmetric import DblResult, EmpiricalMeasure, dbl_exact, dbl_lower_bound, dbl_transport, wasserstein1
from .coefficients import (
    Additive,
    AlmostAutomorphic,
    Constant,
    Coupling,
    LinearMultiplicative,
    Periodic,
    PorousMedia,
    QuasiPeriodic,
    ReactionDiffusion,
    eval_diffusion_increment,
    eval_drift,
    hs_norm_sq,
    translate,
)
from .errors import (
    ConfigurationError,
    MonoSPDEError,
    NumericalError,
    ProbeError,
    SimulationError,
    SizeGuardError,
    StepError,
)
from .gelfand import Field, Pivot, SpectralGrid, make_grid, norm, pairing, to_physical, to_spectral
from .hypotheses import (
    HypothesisConstants,
    ProbeReport,
    reference_constants,
    probe_all,
    probe_boundedness,
    probe_coercivity,
    probe_dissipation_intercept,
    probe_h5,
    probe_hemicontinuity,
    probe_lipschitz_diffusion,
    probe_monotonicity,
)
from .recurrence import (
    DecayFit,
    ExperimentPlan,
    run_almost_period_scan,
    run_continuous_dependence,
    run_experiment,
    run_moment_envelope,
    run_periodicity,
    run_pullback_cauchy,
    run_s_bound,
    run_stability,
    run_stationarity,
)

__version__ = "0.1.0"
