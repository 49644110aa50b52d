"""Two-power nonlinear SDEs with q-Gaussian statistics and 1/f^beta spectra."""

__version__ = "0.1.0"

from .qgaussian import (
    DomainError,
    QGaussianParams,
    exp_q,
    fit_scale_mle,
    params_from_q,
    params_to_q,
    qgaussian_cdf,
    qgaussian_pdf,
    sample_qgaussian,
)
from .returns import (
    ReturnModelParams,
    aggregate_ticks,
    decompose_empirical,
    fit_modulation,
    generate,
    generate_returns,
    modulator_series,
    normalize_returns,
)
from .sde import (
    DivergenceError,
    SdeParams,
    SolverConfig,
    Trajectory,
    diffusion,
    drift,
    integrate_window,
    iter_chunks,
    simulate,
    simulate_windowed,
    stationary_pdf,
    step,
    time_step,
)
from .series import ReturnSeries
from .spectral import (
    InsufficientDataError,
    SpectrumEstimate,
    estimate_pdf,
    estimate_psd,
    fit_broken_power_law,
    fit_power_law,
    hill_tail_exponent,
    moving_average,
    theoretical_spectrum,
)
