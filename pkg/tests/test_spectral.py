import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import signal

from qsde.qgaussian import DomainError, QGaussianParams, qgaussian_pdf, sample_qgaussian
from qsde.sde import SdeParams, SolverConfig, simulate_windowed
from qsde.series import ReturnSeries
from qsde.spectral import (
    InsufficientDataError,
    SpectrumEstimate,
    average_spectra,
    correlate,
    estimate_pdf,
    estimate_psd,
    fit_broken_power_law,
    fit_power_law,
    hill_tail_exponent,
    log_rebin,
    moving_average,
    theoretical_spectrum,
)


def _grid_spectrum(power_fn, f_lo=1e-3, f_hi=1e3, n=5000):
    f = np.geomspace(f_lo, f_hi, n)
    return SpectrumEstimate(f, power_fn(f), 1, "exact")


@pytest.fixture(scope="module")
def bursty_windows():
    p = SdeParams(2.5, 3.6, 0.01)
    return simulate_windowed(p, SolverConfig(burn_in=10**5, seed=4), 1e-3, 2**16)


def test_white_noise_flat(rng):
    x = ReturnSeries(rng.standard_normal(2**20))
    spec = estimate_psd(x, 8)
    # one-sided density of unit white noise at unit sampling rate is 2
    assert np.mean(spec.power) == pytest.approx(2.0, rel=0.05)
    lo, hi = spec.power[: spec.power.size // 2], spec.power[spec.power.size // 2 :]
    assert np.mean(lo) == pytest.approx(np.mean(hi), rel=0.05)
    assert spec.n_segments == 8 and spec.window_label == "hann"


@pytest.mark.parametrize("taper", ["hann", "rect"])
def test_sinusoid_peak(taper):
    dt, f0 = 0.01, 3.7
    t = np.arange(2**14) * dt
    spec = estimate_psd(ReturnSeries(np.sin(2 * np.pi * f0 * t), dt=dt), 4, taper)
    assert abs(spec.freqs[np.argmax(spec.power)] - f0) <= spec.df


@pytest.mark.parametrize("taper", ["hann", "rect"])
@pytest.mark.parametrize("n_segments", [1, 8])
def test_parseval_white_noise(rng, taper, n_segments):
    x = rng.standard_normal(2**18) * 1.7 + 4.0
    spec = estimate_psd(ReturnSeries(x, dt=0.5), n_segments, taper)
    assert spec.total_power() == pytest.approx(np.var(x), rel=0.03)


def test_parseval_sde_output_rectangular(bursty_windows):
    v = np.abs(bursty_windows.values)
    spec = estimate_psd(bursty_windows.with_values(v), 1, "rect")
    assert spec.total_power() == pytest.approx(np.var(v), rel=0.03)


@pytest.mark.parametrize("taper", ["hann", "rect"])
def test_parseval_sde_output_weighted_variance(bursty_windows, taper):
    # with a taper the periodogram integrates to the taper-weighted variance
    x = np.abs(bursty_windows.values)
    w = signal.get_window({"hann": "hann", "rect": "boxcar"}[taper], x.size)
    y = (x - x.mean()) * w
    expect = (np.sum(y * y) - np.sum(y) ** 2 / x.size) / np.sum(w * w)
    spec = estimate_psd(bursty_windows.with_values(x), 1, taper)
    assert spec.total_power() == pytest.approx(expect, rel=1e-9)


def test_psd_too_short():
    with pytest.raises(InsufficientDataError):
        estimate_psd(ReturnSeries(np.arange(10.0)), 8)
    with pytest.raises(ValueError):
        estimate_psd(ReturnSeries(np.arange(100.0)), 2, "kaiser")


def test_psd_frequency_units():
    spec = estimate_psd(ReturnSeries(np.random.default_rng(0).standard_normal(1000), dt=1e-4), 1)
    assert spec.freqs[0] == pytest.approx(1e4 / 1000)
    assert spec.freqs[-1] == pytest.approx(5e3)


def test_average_spectra():
    f = np.linspace(1, 10, 10)
    a = SpectrumEstimate(f, np.ones(10), 4, "hann")
    b = SpectrumEstimate(f, 3 * np.ones(10), 4, "hann")
    avg = average_spectra([a, b])
    np.testing.assert_array_equal(avg.power, 2 * np.ones(10))
    assert avg.n_segments == 8
    with pytest.raises(ValueError):
        average_spectra([a, SpectrumEstimate(f * 2, np.ones(10), 4, "hann")])


def test_fit_exact_power_laws():
    fit = fit_power_law(_grid_spectrum(lambda f: f**-1.5), 0.01, 100)
    assert fit.exponent == pytest.approx(1.5, abs=1e-10)
    fit = fit_power_law(_grid_spectrum(lambda f: 3.0 / f), 0.01, 100)
    assert fit.exponent == pytest.approx(1.0, abs=1e-10)
    assert fit.amplitude == pytest.approx(3.0, rel=1e-10)
    assert fit.f_range == (0.01, 100)
    assert fit(2.0) == pytest.approx(1.5, rel=1e-10)


@given(st.floats(1.02, 4.0), st.floats(1.0, 7.0))
@settings(max_examples=40)
def test_fit_recovers_theoretical_spectrum(eta, lam):
    p = SdeParams(eta, lam)
    try:
        beta, amp = theoretical_spectrum(p)
    except DomainError:
        return
    fit = fit_power_law(_grid_spectrum(lambda f: theoretical_spectrum(p, f)[1]), 0.01, 500)
    assert fit.exponent == pytest.approx(beta, abs=1e-8)
    assert fit.amplitude == pytest.approx(amp, rel=1e-8)


def test_fit_uses_only_bins_in_range():
    spec = _grid_spectrum(lambda f: np.where(f < 1, f**-2.0, f**-0.5))
    assert fit_power_law(spec, 1.0, 100).exponent == pytest.approx(0.5, abs=1e-10)
    assert fit_power_law(spec, 0.01, 0.99).exponent == pytest.approx(2.0, abs=1e-10)


def test_fit_insufficient_bins():
    spec = _grid_spectrum(lambda f: 1 / f, n=100)
    with pytest.raises(InsufficientDataError):
        fit_power_law(spec, 1.0, 3.0)
    with pytest.raises(ValueError):
        fit_power_law(spec, 5.0, 1.0)


def test_log_rebin_equalizes_decades():
    f = np.arange(1, 10001, dtype=float)
    lf, ls, counts = log_rebin(f, f**-1.0, 10)
    assert lf.size <= 41
    np.testing.assert_allclose(ls, -lf, atol=1e-12)
    assert counts.sum() == f.size


def test_broken_power_law_exact():
    fb = 20.0
    spec = _grid_spectrum(lambda f: np.where(f < fb, (f / fb) ** -1.1, (f / fb) ** -0.45), 0.1, 3000, 200_000)
    b = fit_broken_power_law(spec, 0.3, 3000)
    assert b.low.exponent == pytest.approx(1.1, abs=0.02)
    assert b.high.exponent == pytest.approx(0.45, abs=0.02)
    assert b.crossover == pytest.approx(fb, rel=0.15)


def test_theoretical_spectrum_examples():
    beta, amp = theoretical_spectrum(SdeParams(2.5, 3.6))
    assert beta == pytest.approx(1.2, abs=1e-14)
    mp = mpmath.mp
    mp.dps = 30
    b, lam, eta = mpmath.mpf("1.2"), mpmath.mpf("3.6"), mpmath.mpf("2.5")
    oracle = (lam - 1) * mpmath.gamma(b - mpmath.mpf("0.5")) / (
        2 * mpmath.sqrt(mpmath.pi) * (eta - 1) * mpmath.sin(mpmath.pi * b / 2)
    ) * ((2 + lam - 2 * eta) / (2 * mpmath.pi)) ** (b - 1)
    assert amp == pytest.approx(float(oracle), rel=1e-12)
    assert amp == pytest.approx(0.42, abs=0.005)
    for eta in (1.5, 2.0, 3.7):
        assert theoretical_spectrum(SdeParams(eta, 3.0))[0] == pytest.approx(1.0)
    f = np.array([0.5, 2.0])
    np.testing.assert_allclose(theoretical_spectrum(SdeParams(2.5, 3.6), f)[1], amp / f**1.2)


@pytest.mark.parametrize("eta, lam", [(2.5, 6.5), (2.5, 1.4), (3.7, 3.2)])
def test_theoretical_spectrum_domain(eta, lam):
    with pytest.raises(DomainError):
        theoretical_spectrum(SdeParams(eta, lam))


def test_pdf_uniform(rng):
    pdf = estimate_pdf(rng.uniform(0, 1, 10**6), bins=10, log=False, range=(0.0, 1.0))
    np.testing.assert_allclose(pdf.density, 1.0, rtol=0.02)


def test_pdf_qgaussian_samples(rng):
    p = QGaussianParams(5.0, 1.0)
    x = sample_qgaussian(p, rng, 10**6)
    pdf = estimate_pdf(x, bins=30, log=True, range=(0.05, 5.0))
    # absolute values follow 2 P(x); compare bins with plenty of counts, up to the truncation
    inside = np.mean((np.abs(x) >= 0.05) & (np.abs(x) <= 5.0))
    expect = 2 * qgaussian_pdf(pdf.centers, p) / inside
    ok = pdf.counts > 2000
    np.testing.assert_allclose(pdf.density[ok], expect[ok], rtol=0.08)


@given(arrays(float, st.integers(1, 200), elements=st.floats(-1e3, 1e3)), st.booleans())
def test_pdf_normalized(x, log):
    if log and not np.any(np.abs(x) > 0):
        return
    if np.ptp(np.abs(x)) == 0:
        return
    pdf = estimate_pdf(x, bins=7, log=log)
    assert np.sum(pdf.density * np.diff(pdf.edges)) == pytest.approx(1.0, rel=1e-12)


def test_pdf_weighted_and_signed():
    pdf = estimate_pdf(np.array([-1.0, 1.0]), bins=2, log=False, absolute=False,
                       weights=np.array([3.0, 1.0]), range=(-2.0, 2.0))
    np.testing.assert_allclose(pdf.density, [0.375, 0.125])
    with pytest.raises(InsufficientDataError):
        estimate_pdf(np.array([]))


def test_pdf_tail_slope_of_bursty_windows(bursty_windows):
    pdf = estimate_pdf(bursty_windows, bins=40, log=True)
    ok = (pdf.centers > 3) & (pdf.counts > 30)
    slope = np.polyfit(np.log(pdf.centers[ok]), np.log(pdf.density[ok]), 1)[0]
    assert slope == pytest.approx(-3.6, abs=0.8)


def test_moving_average_examples():
    ma = moving_average(ReturnSeries(np.array([1.0, 2.0, 3.0, 4.0])), 2)
    np.testing.assert_array_equal(ma.values, [1.5, 2.5, 3.5])
    ma = moving_average(ReturnSeries(np.full(100, 2.5)), 60)
    np.testing.assert_allclose(ma.values, 2.5, rtol=1e-15)
    assert len(ma) == 41


@pytest.mark.parametrize("n", [0, 1, 3])
def test_moving_average_odd_window(n):
    with pytest.raises(ValueError):
        moving_average(ReturnSeries(np.arange(10.0)), n)


def test_moving_average_too_long():
    with pytest.raises(InsufficientDataError):
        moving_average(ReturnSeries(np.arange(10.0)), 12)


def test_moving_average_index_convention():
    r = np.arange(20, dtype=float) ** 2
    n = 6
    ma = moving_average(ReturnSeries(r), n).values
    for i in range(ma.size):
        t = i + n // 2
        assert ma[i] == pytest.approx(np.mean(r[t - n // 2 : t + n // 2]), rel=1e-14)


@given(
    arrays(float, 50, elements=st.floats(-1e3, 1e3)),
    arrays(float, 50, elements=st.floats(-1e3, 1e3)),
    st.floats(-100, 100),
    st.sampled_from([2, 4, 10]),
)
def test_moving_average_linear(a, b, alpha, n):
    lhs = moving_average(ReturnSeries(alpha * a + b), n).values
    rhs = alpha * moving_average(ReturnSeries(a), n).values + moving_average(ReturnSeries(b), n).values
    np.testing.assert_allclose(lhs, rhs, rtol=1e-9, atol=1e-9)


def test_correlate_examples(rng):
    a = rng.standard_normal(1000)
    assert correlate(a, a) == pytest.approx(1.0)
    assert correlate(a, -a) == pytest.approx(-1.0)
    assert abs(correlate(rng.standard_normal(10**4), rng.standard_normal(10**4))) < 0.05
    with pytest.raises(ValueError):
        correlate(np.ones(5), a[:5])
    with pytest.raises(ValueError):
        correlate(a[:5], a[:6])


@given(arrays(float, st.integers(2, 50), elements=st.floats(-1e3, 1e3)))
def test_correlate_bounded(a):
    b = a[::-1].copy()
    try:
        rho = correlate(a, b)
    except ValueError:
        return
    assert -1.0 <= rho <= 1.0


def test_hill_recovers_density_exponent(rng):
    for lam in (3.0, 4.0, 5.0):
        x = sample_qgaussian(QGaussianParams(lam, 1.0), rng, 2 * 10**6)
        assert hill_tail_exponent(x, 1e-3) == pytest.approx(lam, abs=0.25)


def test_hill_scale_invariant(rng):
    x = sample_qgaussian(QGaussianParams(4.0, 1.0), rng, 10**5)
    assert hill_tail_exponent(7.5 * x) == pytest.approx(hill_tail_exponent(x), rel=1e-12)
    with pytest.raises(InsufficientDataError):
        hill_tail_exponent(x[:5000])


def test_integrated_signal_keeps_low_frequency_slope():
    # window means over tau and over 10 tau come from the same path
    p = SdeParams(2.5, 3.6, 0.01)
    cfg = SolverConfig(burn_in=10**5, seed=2)
    t_total = 20.0
    fine = simulate_windowed(p, cfg, 1e-4, int(t_total / 1e-4))
    coarse = simulate_windowed(p, cfg, 1e-3, int(t_total / 1e-3))
    np.testing.assert_allclose(coarse.values[:50], fine.values[:500].reshape(50, 10).mean(axis=1), rtol=1e-9)
    s_fine = fit_power_law(estimate_psd(fine.with_values(np.abs(fine.values)), 8), 0.5, 50)
    s_coarse = fit_power_law(estimate_psd(coarse.with_values(np.abs(coarse.values)), 8), 0.5, 50)
    assert s_fine.exponent == pytest.approx(s_coarse.exponent, abs=0.05)
