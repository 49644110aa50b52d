"""Spectral and distributional estimates for uniformly sampled series."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import signal, special

from .qgaussian import DomainError
from .sde import SdeParams
from .series import ReturnSeries

TAPERS = {"hann": "hann", "rect": "boxcar", "rectangular": "boxcar", "boxcar": "boxcar"}


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class SpectrumEstimate:
    freqs: np.ndarray
    power: np.ndarray
    n_segments: int
    window_label: str

    def __post_init__(self):
        if self.freqs.shape != self.power.shape:
            raise ValueError("freqs and power must have equal length")

    @property
    def df(self) -> float:
        return float(self.freqs[1] - self.freqs[0]) if self.freqs.size > 1 else math.nan

    def total_power(self) -> float:
        return float(np.sum(self.power) * self.df)


@dataclass(frozen=True)
class PowerLawFit:
    exponent: float
    amplitude: float
    f_range: tuple[float, float]
    residual: float
    n_points: int

    def __call__(self, f):
        return self.amplitude / np.asarray(f, dtype=float) ** self.exponent


@dataclass(frozen=True)
class BrokenPowerLawFit:
    low: PowerLawFit
    high: PowerLawFit
    crossover: float


@dataclass(frozen=True)
class PdfEstimate:
    centers: np.ndarray
    density: np.ndarray
    counts: np.ndarray
    edges: np.ndarray


def estimate_psd(series: ReturnSeries, n_segments: int = 8, taper: str = "hann") -> SpectrumEstimate:
    """One-sided averaged periodogram over ``n_segments`` half-overlapping segments.

    Each segment is mean-removed and tapered; the DC bin is dropped. The
    density is normalized so that ``sum(power) * df`` approximates the variance.
    """
    if taper not in TAPERS:
        raise ValueError(f"unknown taper {taper!r}; choose from {sorted(TAPERS)}")
    if n_segments < 1:
        raise ValueError("n_segments must be >= 1")
    x = series.values
    if x.size < max(2 * n_segments, 4):
        raise InsufficientDataError(
            f"series of length {x.size} too short for {n_segments} segments"
        )
    nperseg = (2 * x.size) // (n_segments + 1) if n_segments > 1 else x.size
    f, p = signal.welch(
        x,
        fs=1.0 / series.dt,
        window=TAPERS[taper],
        nperseg=nperseg,
        noverlap=nperseg // 2 if n_segments > 1 else 0,
        detrend="constant",
        scaling="density",
        return_onesided=True,
    )
    return SpectrumEstimate(f[1:], p[1:], n_segments, taper)


def average_spectra(spectra: list[SpectrumEstimate]) -> SpectrumEstimate:
    """Bin-wise mean of spectra sharing one frequency grid."""
    if not spectra:
        raise ValueError("no spectra to average")
    f0 = spectra[0].freqs
    for s in spectra[1:]:
        if s.freqs.shape != f0.shape or not np.allclose(s.freqs, f0):
            raise ValueError("spectra have different frequency grids")
    power = np.mean([s.power for s in spectra], axis=0)
    return SpectrumEstimate(f0, power, sum(s.n_segments for s in spectra), spectra[0].window_label)


def log_rebin(freqs, power, bins_per_decade: int = 20):
    """Average ``log f`` and ``log S`` inside equal-width log-frequency bins.

    Returns (log_f, log_S, counts) for the non-empty bins. A pure power law
    maps onto an exact line.
    """
    lf = np.log10(freqs)
    lo = math.floor(lf.min() * bins_per_decade) / bins_per_decade
    idx = np.floor((lf - lo) * bins_per_decade + 1e-9).astype(int)
    counts = np.bincount(idx)
    keep = counts > 0
    mean_lf = np.bincount(idx, weights=lf)[keep] / counts[keep]
    mean_ls = np.bincount(idx, weights=np.log10(power))[keep] / counts[keep]
    return mean_lf, mean_ls, counts[keep]


def fit_power_law(
    spec: SpectrumEstimate, f_lo: float, f_hi: float, bins_per_decade: int = 20
) -> PowerLawFit:
    """Least-squares line through log-rebinned (log f, log S) within [f_lo, f_hi]."""
    if not 0.0 < f_lo < f_hi:
        raise ValueError("need 0 < f_lo < f_hi")
    sel = (spec.freqs >= f_lo) & (spec.freqs <= f_hi) & (spec.power > 0)
    if sel.sum() < 10:
        raise InsufficientDataError(
            f"only {int(sel.sum())} frequency bins inside [{f_lo:g}, {f_hi:g}]; need >= 10"
        )
    lf, ls, _ = log_rebin(spec.freqs[sel], spec.power[sel], bins_per_decade)
    if lf.size < 2:
        raise InsufficientDataError("fewer than two log bins in the fit range")
    slope, intercept = np.polyfit(lf, ls, 1)
    resid = ls - (slope * lf + intercept)
    return PowerLawFit(
        exponent=float(-slope),
        amplitude=float(10.0**intercept),
        f_range=(float(f_lo), float(f_hi)),
        residual=float(np.sqrt(np.mean(resid**2))),
        n_points=int(lf.size),
    )


def fit_broken_power_law(
    spec: SpectrumEstimate, f_lo: float, f_hi: float, bins_per_decade: int = 20,
    min_decades: float = 0.5,
) -> BrokenPowerLawFit:
    """Continuous two-segment line in log-log space with the best breakpoint.

    The breakpoint is scanned over the log bins, keeping at least
    ``min_decades`` on each side.
    """
    sel = (spec.freqs >= f_lo) & (spec.freqs <= f_hi) & (spec.power > 0)
    if sel.sum() < 20:
        raise InsufficientDataError("need >= 20 frequency bins for a broken fit")
    lf, ls, _ = log_rebin(spec.freqs[sel], spec.power[sel], bins_per_decade)
    best = None
    for lb in lf:
        if lb - lf[0] < min_decades or lf[-1] - lb < min_decades:
            continue
        # hinge basis keeps the two lines joined at the break
        design = np.column_stack([np.ones_like(lf), lf - lb, np.maximum(lf - lb, 0.0)])
        coef, *_ = np.linalg.lstsq(design, ls, rcond=None)
        sse = float(np.sum((design @ coef - ls) ** 2))
        if best is None or sse < best[0]:
            best = (sse, lb, coef)
    if best is None:
        raise InsufficientDataError("fit range too narrow for a broken power law")
    sse, lb, (c0, s1, ds) = best
    s2 = s1 + ds
    rms = math.sqrt(sse / lf.size)
    fb = 10.0**lb
    low = PowerLawFit(-s1, 10.0 ** (c0 - s1 * lb), (float(f_lo), fb), rms, int(np.sum(lf <= lb)))
    high = PowerLawFit(-s2, 10.0 ** (c0 - s2 * lb), (fb, float(f_hi)), rms, int(np.sum(lf >= lb)))
    return BrokenPowerLawFit(low, high, fb)


def theoretical_spectrum(p: SdeParams, f=None):
    """Exponent and amplitude of the closed-form ``S(f) = A / f^beta``.

    Returns ``(beta, A)`` or, when ``f`` is given, ``(beta, A / f^beta)``.
    Valid for eta > 1, 4 - eta < lambda < 1 + 2 eta; away from beta = 1 the
    amplitude additionally needs lambda > 2 eta - 2.
    """
    p.check_spectrum_regime()
    beta = p.beta
    if not 0.5 < beta < 2.0:
        raise DomainError(f"beta={beta:g} outside (0.5, 2)")
    eta, lam = p.eta, p.lam
    base = (2.0 + lam - 2.0 * eta) / (2.0 * math.pi)
    if beta == 1.0:
        tail = 0.0
    elif base > 0.0:
        tail = (beta - 1.0) * math.log(base)
    else:
        # a non-positive base to a non-integer power has no real value
        raise DomainError(f"amplitude undefined for lambda={lam:g} <= 2 eta - 2 = {2 * eta - 2:g}")
    log_a = (
        math.log(lam - 1.0)
        + special.gammaln(beta - 0.5)
        - math.log(2.0 * math.sqrt(math.pi) * (eta - 1.0) * math.sin(math.pi * beta / 2.0))
        + tail
    )
    amp = math.exp(log_a)
    if f is None:
        return beta, amp
    return beta, amp / np.asarray(f, dtype=float) ** beta


def estimate_pdf(
    series,
    bins: int | np.ndarray = 50,
    log: bool = True,
    absolute: bool = True,
    weights=None,
    range: tuple[float, float] | None = None,
) -> PdfEstimate:
    """Normalized histogram density (``sum(density * width) == 1`` over the bins).

    ``log`` uses geometric bin edges (values must be positive, so it is
    normally combined with ``absolute``). ``weights`` allows time-weighted
    occupation densities for unevenly sampled paths.
    """
    x = np.asarray(series.values if isinstance(series, ReturnSeries) else series, dtype=float)
    if x.size == 0:
        raise InsufficientDataError("empty input")
    if absolute:
        x = np.abs(x)
    w = None if weights is None else np.asarray(weights, dtype=float)
    if np.ndim(bins) == 0:
        if range is None:
            pos = x[x > 0] if log else x
            if pos.size == 0:
                raise InsufficientDataError("no positive values for log bins")
            range = (float(pos.min()), float(pos.max()))
            if range[0] == range[1]:
                # degenerate sample: widen like np.histogram does
                range = (range[0] / 2, range[1] * 2) if log else (range[0] - 0.5, range[1] + 0.5)
        if log:
            if range[0] <= 0:
                raise ValueError("log bins need a positive lower edge")
            edges = np.geomspace(range[0], range[1], int(bins) + 1)
        else:
            edges = np.linspace(range[0], range[1], int(bins) + 1)
    else:
        edges = np.asarray(bins, dtype=float)
    counts, _ = np.histogram(x, edges)
    mass, _ = np.histogram(x, edges, weights=w)
    total = mass.sum()
    if total <= 0:
        raise InsufficientDataError("no samples fall inside the bins")
    density = mass / total / np.diff(edges)
    centers = np.sqrt(edges[:-1] * edges[1:]) if log else 0.5 * (edges[:-1] + edges[1:])
    return PdfEstimate(centers, density, counts, edges)


def moving_average(series: ReturnSeries, n: int) -> ReturnSeries:
    """Centered mean over ``r_{t-n/2} .. r_{t+n/2-1}``; edges without a full window are trimmed.

    Output element ``i`` corresponds to input index ``t = i + n/2``.
    """
    if n < 2 or n % 2:
        raise ValueError(f"window must be an even count >= 2, got {n}")
    if len(series) < n:
        raise InsufficientDataError(f"window {n} exceeds series length {len(series)}")
    ma = np.convolve(series.values, np.full(n, 1.0 / n), mode="valid")
    return series.with_values(ma, ma_window=n)


def correlate(a: ReturnSeries | np.ndarray, b: ReturnSeries | np.ndarray) -> float:
    """Pearson correlation coefficient."""
    x = np.asarray(getattr(a, "values", a), dtype=float)
    y = np.asarray(getattr(b, "values", b), dtype=float)
    if x.size != y.size or x.size < 2:
        raise ValueError("series must have equal length >= 2")
    x = x - x.mean()
    y = y - y.mean()
    sx, sy = math.sqrt(float(x @ x)), math.sqrt(float(y @ y))
    if sx == 0.0 or sy == 0.0:
        raise ValueError("zero-variance series")
    return float(np.clip((x @ y) / (sx * sy), -1.0, 1.0))


def hill_tail_exponent(values, fraction: float = 1e-3) -> float:
    """Density tail exponent ``1 + alpha`` from the Hill estimator on the largest |values|.

    ``alpha`` is the survival-function exponent estimated from the top
    ``fraction`` of order statistics; a q-Gaussian with exponent lambda gives
    ``1 + alpha -> lambda``.
    """
    a = np.sort(np.abs(np.asarray(values, dtype=float)))[::-1]
    k = int(fraction * a.size)
    if k < 10:
        raise InsufficientDataError(f"only {k} tail points; need >= 10")
    if a[k] <= 0:
        raise InsufficientDataError("threshold order statistic is zero")
    alpha = k / float(np.sum(np.log(a[:k] / a[k])))
    return 1.0 + alpha
