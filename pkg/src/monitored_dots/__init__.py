"""Random-matrix models of monitored quantum dots.

Simulation of Kraus-operator products for Haar-random dots under projective
and weak monitoring, together with the exact and asymptotic theory of their
singular values: Lyapunov spectra, purification, Born probabilities, Renyi
entropies and the Fokker-Planck description of weak monitoring.
"""

__version__ = "0.1.0"

from .numerics import DomainError, NumericalError, RngStream
from .circuits import (
    CircuitConfig,
    Model,
    SingularSpectrum,
    StabilizedProduct,
    TrajectoryRecord,
    ginibre_product_log_spectrum,
    rank_collapse_time_mc,
    run_trajectory,
    step_projective,
    step_weak,
)
from .spectral import (
    GridDensity,
    LyapunovEstimate,
    PurificationStats,
    empirical_density,
    lyapunov_exact_projective,
    lyapunov_fit,
    purification_fit,
    purification_time_exact,
)
from .born import (
    BetaLaw,
    LogBornLaw,
    born_ks_test,
    log_born_cdf,
    log_born_clt_params,
    log_born_pdf_exact,
)
from .entropy import (
    renyi2_closed_form,
    renyi_from_spectrum,
    renyi_integer_moment_exact,
    renyi_nonfluctuating,
    renyi_series,
    renyi_short_time_prediction,
)
from .weak import (
    FPSample,
    IEDensity,
    TwoLevelLaw,
    WeakParams,
    ZState,
    compute_gamma,
    fp_exact_logpdf,
    fp_exact_sample,
    langevin_ensemble,
    langevin_step,
    lyapunov_exact_weak,
    solve_integral_equation,
    two_level_stats,
    vst_renyi,
    vst_semicircle_density,
)

__all__ = [name for name in dir() if not name.startswith("_")]
