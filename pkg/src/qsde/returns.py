"""Double-stochastic return model and the empirical decomposition that calibrates it.

A hidden long-memory signal ``X_m = r0_bar * (window mean of x over tau)``,
with x from the two-power SDE, sets the scale of per-minute q-Gaussian
fluctuations: ``r_m ~ xi{r0(X_m), lambda2}``, ``r0(X) = c0 + c1 |X|``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .qgaussian import DomainError, QGaussianParams, fit_scale_mle, sample_qgaussian
from .sde import SdeParams, SolverConfig, simulate_windowed
from .series import ReturnSeries
from .spectral import moving_average


class UnderpopulatedBinWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ReturnModelParams:
    sde: SdeParams = field(default_factory=lambda: SdeParams(eta=2.5, lam=3.6, epsilon=0.01))
    lambda2: float = 5.0
    r0_bar: float = 0.2
    tau: float = 1e-4
    ma_window: int = 60
    modulation: tuple[float, float] = (1.0, 2.5)

    def __post_init__(self):
        if not self.lambda2 > 3.0:
            raise DomainError(f"lambda2 must be > 3, got {self.lambda2}")
        if not self.r0_bar >= 0.0:
            raise DomainError(f"r0_bar must be >= 0, got {self.r0_bar}")
        if not self.tau > 0.0:
            raise DomainError(f"tau must be > 0, got {self.tau}")
        if self.ma_window < 2 or self.ma_window % 2:
            raise DomainError(f"ma_window must be an even count >= 2, got {self.ma_window}")
        c0, c1 = self.modulation
        if not c0 > 0.0 or c1 < 0.0:
            raise DomainError(f"modulation needs intercept > 0 and slope >= 0, got {self.modulation}")

    @classmethod
    def paper_defaults(cls) -> "ReturnModelParams":
        return cls()


def modulation_scale(ma_value, params: ReturnModelParams):
    c0, c1 = params.modulation
    out = c0 + c1 * np.abs(np.asarray(ma_value, dtype=float))
    return out[()] if out.ndim == 0 else out


def _child_seeds(seed: int) -> tuple[int, int]:
    s = np.random.SeedSequence(seed).generate_state(2)
    return int(s[0]), int(s[1])


def modulator_series(
    params: ReturnModelParams, n_minutes: int, seed: int, solver: SolverConfig | None = None
) -> ReturnSeries:
    """Per-minute background ``X_m``; identically zero when ``r0_bar == 0``."""
    if n_minutes < 1:
        raise DomainError("n_minutes must be >= 1")
    sde_seed, _ = _child_seeds(seed)
    if params.r0_bar == 0.0:
        x = np.zeros(n_minutes)
    else:
        cfg = replace(solver or SolverConfig(), seed=sde_seed)
        x = params.r0_bar * simulate_windowed(params.sde, cfg, params.tau, n_minutes).values
    return ReturnSeries(x, dt=1.0, unit="min", meta={"seed": seed, "kind": "modulator"})


def compose_returns(
    modulator: ReturnSeries, params: ReturnModelParams, rng: np.random.Generator
) -> ReturnSeries:
    """Draw one q-Gaussian return per minute with scale ``r0(X_m)``."""
    unit = sample_qgaussian(QGaussianParams(params.lambda2, 1.0), rng, len(modulator))
    r = unit * modulation_scale(modulator.values, params)
    return modulator.with_values(r, kind="returns")


def generate(
    params: ReturnModelParams, n_minutes: int, seed: int, solver: SolverConfig | None = None
) -> tuple[ReturnSeries, ReturnSeries]:
    """Returns and the modulating background, both deterministic in ``seed``."""
    x = modulator_series(params, n_minutes, seed, solver)
    _, xi_seed = _child_seeds(seed)
    r = compose_returns(x, params, np.random.default_rng(xi_seed))
    return r, x


def generate_returns(
    params: ReturnModelParams, n_minutes: int, seed: int, solver: SolverConfig | None = None
) -> ReturnSeries:
    return generate(params, n_minutes, seed, solver)[0]


def normalize_returns(series: ReturnSeries) -> ReturnSeries:
    sd = float(np.std(series.values))
    if not sd > 0.0:
        raise ValueError("zero-variance series cannot be normalized")
    return series.with_values(series.values / sd, normalized=True)


@dataclass(frozen=True)
class DecompositionBin:
    ma_lo: float
    ma_hi: float
    ma_center: float
    r0: float
    count: int
    underpopulated: bool


def decompose_empirical(
    series: ReturnSeries,
    ma_window: int,
    lambda2: float,
    n_bins: int = 20,
    modulator: ReturnSeries | np.ndarray | None = None,
    min_count: int = 1000,
) -> list[DecompositionBin]:
    """Fit the q-Gaussian scale r0 of returns grouped by |modulating average|.

    By default the modulating series is the centered moving average of
    ``series`` with window ``ma_window`` and returns are aligned to the window
    centers. A known modulator (e.g. the model's X) can be supplied instead;
    it must have the same length as ``series`` and ``ma_window`` is unused.
    Bins are equal-population quantiles of |modulator|.
    """
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    if modulator is None:
        ma = moving_average(series, ma_window).values
        half = ma_window // 2
        r = series.values[half : half + ma.size]
    else:
        ma = np.asarray(getattr(modulator, "values", modulator), dtype=float)
        r = series.values
        if ma.size != r.size:
            raise ValueError("modulator and series lengths differ")
    key = np.abs(ma)
    edges = np.unique(np.quantile(key, np.linspace(0.0, 1.0, n_bins + 1)))
    idx = np.clip(np.searchsorted(edges, key, side="right") - 1, 0, edges.size - 2)
    out = []
    for b in range(edges.size - 1):
        sel = idx == b
        n = int(sel.sum())
        if n == 0:
            continue
        under = n < min_count
        if under:
            warnings.warn(
                f"bin {b} has {n} points (< {min_count})", UnderpopulatedBinWarning, stacklevel=2
            )
        out.append(
            DecompositionBin(
                ma_lo=float(edges[b]),
                ma_hi=float(edges[b + 1]),
                ma_center=float(key[sel].mean()),
                r0=fit_scale_mle(r[sel], lambda2),
                count=n,
                underpopulated=under,
            )
        )
    return out


def fit_modulation(bins: list[DecompositionBin], drop_top: bool = True) -> tuple[float, float]:
    """Weighted line r0 = c0 + c1 |MA| through the per-bin scale fits.

    Weights are ``count / r0^2``, the inverse of the asymptotic MLE variance
    up to a constant. The last bin runs up to the sample maximum of a
    heavy-tailed key, so its mean is not a usable location and by default it
    is left out of the line.
    """
    if drop_top:
        bins = bins[:-1]
    if len(bins) < 2:
        raise ValueError("need at least two bins")
    m = np.array([b.ma_center for b in bins])
    r0 = np.array([b.r0 for b in bins])
    w = np.array([b.count for b in bins]) / r0**2
    slope, intercept = np.polyfit(m, r0, 1, w=np.sqrt(w))
    return float(intercept), float(slope)


def aggregate_ticks(
    timestamps, prices, bar: float = 60.0
) -> tuple[ReturnSeries, ReturnSeries]:
    """Bar returns and trade counts from tick data.

    The return of a bar is the sum of log-price differences between
    consecutive trades inside it (log of last over first price); bars without
    trades get return 0 and count 0. Bars are aligned to multiples of ``bar``.
    """
    t = np.asarray(timestamps, dtype=float)
    p = np.asarray(prices, dtype=float)
    if t.shape != p.shape or t.ndim != 1 or t.size == 0:
        raise ValueError("timestamps and prices must be non-empty 1-D arrays of equal length")
    if not bar > 0:
        raise ValueError("bar must be > 0")
    if np.any(np.diff(t) < 0):
        k = int(np.argmax(np.diff(t) < 0)) + 1
        raise ValueError(f"timestamps decrease at tick {k}")
    if np.any(~(p > 0)):
        raise ValueError("prices must be positive")
    start = math.floor(t[0] / bar) * bar
    idx = np.floor((t - start) / bar).astype(np.int64)
    nbars = int(idx[-1]) + 1
    lp = np.log(p)
    same = idx[1:] == idx[:-1]
    r = np.bincount(idx[1:][same], weights=np.diff(lp)[same], minlength=nbars)
    counts = np.bincount(idx, minlength=nbars).astype(float)
    meta = {"start": start, "bar": bar}
    returns = ReturnSeries(r, dt=bar, unit="s", meta={**meta, "kind": "returns"})
    activity = ReturnSeries(counts, dt=bar, unit="s", meta={**meta, "kind": "activity"})
    return returns, activity
