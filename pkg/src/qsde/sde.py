"""Multiplicative SDEs with q-Gaussian stationary law and their variable-step solver.

Scaled two-power equation (epsilon = 0 gives the simple power form)::

    dx = (eta - lam/2 - (x eps^eta)^2) (1+x^2)^(eta-1) / (sqrt(1+x^2) eps + 1)^2 x dt_s
         + (1+x^2)^(eta/2) / (sqrt(1+x^2) eps + 1) dW_s

The solver takes the Euler-Maruyama step with the state-dependent increment

    h_k = kappa^2 (sqrt(1+x_k^2) eps + 1)^2 / (1+x_k^2)^(eta-1)

so that each step changes x by roughly ``kappa * sqrt(1+x^2)``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace
from typing import Callable, Iterator

import numba
import numpy as np

from .qgaussian import DomainError, QGaussianParams, qgaussian_pdf
from .series import ReturnSeries

OVERFLOW_GUARD = 1e12
DEFAULT_CHUNK = 1 << 20


class DivergenceError(RuntimeError):
    """|x| left the overflow guard; the parameters are almost surely wrong."""


@dataclass(frozen=True)
class SdeParams:
    eta: float
    lam: float
    epsilon: float = 0.0
    r0: float = 1.0
    sigma: float = 1.0

    def __post_init__(self):
        for name in ("eta", "lam", "epsilon", "r0", "sigma"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"{name} must be finite")
        if not self.eta > 1.0:
            raise DomainError(f"eta must be > 1, got {self.eta}")
        if self.epsilon < 0.0:
            raise DomainError(f"epsilon must be >= 0, got {self.epsilon}")
        if not self.r0 > 0.0:
            raise DomainError(f"r0 must be > 0, got {self.r0}")
        if not self.sigma > 0.0:
            raise DomainError(f"sigma must be > 0, got {self.sigma}")

    def check_spectrum_regime(self) -> None:
        """Raise DomainError unless 4 - eta < lambda < 1 + 2 eta."""
        lo, hi = 4.0 - self.eta, 1.0 + 2.0 * self.eta
        if not lo < self.lam < hi:
            raise DomainError(
                f"lambda={self.lam} outside (4-eta, 1+2eta) = ({lo:g}, {hi:g})"
            )

    @property
    def beta(self) -> float:
        return 1.0 + (self.lam - 3.0) / (2.0 * (self.eta - 1.0))


@dataclass(frozen=True)
class SolverConfig:
    kappa: float = 0.01
    burn_in: int = 1_000_000
    x_init: float = 0.0
    seed: int = 0
    max_steps: int | None = None
    t_end: float | None = None
    # reflecting bound on |x|; None leaves the state unbounded
    x_max: float | None = None
    chunk: int = DEFAULT_CHUNK

    def __post_init__(self):
        if not 0.0 < self.kappa < 1.0:
            raise DomainError(f"kappa must lie in (0, 1), got {self.kappa}")
        if self.burn_in < 0:
            raise DomainError("burn_in must be >= 0")
        if not math.isfinite(self.x_init):
            raise DomainError("x_init must be finite")
        if self.max_steps is not None and self.max_steps < 1:
            raise DomainError("max_steps must be >= 1")
        if self.t_end is not None and not self.t_end > 0.0:
            raise DomainError("t_end must be > 0")
        if self.x_max is not None and not self.x_max > 0.0:
            raise DomainError("x_max must be > 0")
        if self.chunk < 1:
            raise DomainError("chunk must be >= 1")

    @property
    def bound(self) -> float:
        return math.inf if self.x_max is None else float(self.x_max)


@dataclass(frozen=True)
class Trajectory:
    """Simulated path.

    ``values[k]`` is held over ``[times[k], times[k+1])``; the final point only
    marks where the path ends.
    """

    times: np.ndarray
    values: np.ndarray
    seed: int | None = None
    params: SdeParams | None = None
    config: SolverConfig | None = None

    def __post_init__(self):
        t = np.ascontiguousarray(self.times, dtype=float)
        v = np.ascontiguousarray(self.values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape:
            raise ValueError("times and values must be 1-D arrays of equal length")
        if t.size == 0:
            raise ValueError("empty trajectory")
        if np.any(np.diff(t) <= 0.0):
            raise ValueError("times must be strictly increasing")
        if not np.all(np.isfinite(v)):
            raise ValueError("values must be finite")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size

    @property
    def span(self) -> float:
        return float(self.times[-1] - self.times[0])

    @property
    def durations(self) -> np.ndarray:
        return np.diff(self.times)


# -- coefficients -------------------------------------------------------------


def drift(x, p: SdeParams):
    x = np.asarray(x, dtype=float)
    s2 = 1.0 + x * x
    d = np.sqrt(s2) * p.epsilon + 1.0
    out = (p.eta - p.lam / 2.0 - (x * p.epsilon**p.eta) ** 2) * s2 ** (p.eta - 1.0) / (d * d) * x
    return out[()] if out.ndim == 0 else out


def diffusion(x, p: SdeParams):
    x = np.asarray(x, dtype=float)
    s2 = 1.0 + x * x
    out = s2 ** (p.eta / 2.0) / (np.sqrt(s2) * p.epsilon + 1.0)
    return out[()] if out.ndim == 0 else out


def time_step(x, p: SdeParams, kappa: float):
    x = np.asarray(x, dtype=float)
    s2 = 1.0 + x * x
    d = np.sqrt(s2) * p.epsilon + 1.0
    out = kappa * kappa * (d * d) / s2 ** (p.eta - 1.0)
    return out[()] if out.ndim == 0 else out


def step(x: float, z: float, p: SdeParams, kappa: float) -> tuple[float, float]:
    """One step of the difference scheme for unit noise ``z``; returns (x_next, h)."""
    k2 = kappa * kappa
    s = math.sqrt(x * x + 1.0)
    x_next = x + k2 * (p.eta - p.lam / 2.0 - (x * p.epsilon**p.eta) ** 2) * x + kappa * s * z
    return x_next, float(time_step(x, p, kappa))


def drift_unscaled(r, p: SdeParams):
    """Relaxation term sigma^2 (eta - lam/2) (r0^2 + r^2)^(eta-1) r."""
    r = np.asarray(r, dtype=float)
    out = p.sigma**2 * (p.eta - p.lam / 2.0) * (p.r0**2 + r * r) ** (p.eta - 1.0) * r
    return out[()] if out.ndim == 0 else out


def diffusion_unscaled(r, p: SdeParams):
    r = np.asarray(r, dtype=float)
    out = p.sigma * (p.r0**2 + r * r) ** (p.eta / 2.0)
    return out[()] if out.ndim == 0 else out


def diffusion_unscaled_prime(r, p: SdeParams):
    r = np.asarray(r, dtype=float)
    out = p.sigma * p.eta * r * (p.r0**2 + r * r) ** (p.eta / 2.0 - 1.0)
    return out[()] if out.ndim == 0 else out


def drift_from_diffusion(
    b: Callable[[float], float],
    lam: float,
    r0: float,
    x: float,
    db: Callable[[float], float] | None = None,
    rel_step: float = 1e-5,
) -> float:
    """Drift that makes the q-Gaussian(lam, r0) stationary for diffusion ``b``.

    ``a(x) = -(lam/2) x / (r0^2 + x^2) b(x)^2 + b(x) b'(x)``. Without ``db`` the
    derivative is a central difference.
    """
    bx = b(x)
    if db is None:
        h = rel_step * max(1.0, abs(x))
        dbx = (b(x + h) - b(x - h)) / (2.0 * h)
    else:
        dbx = db(x)
    return -(lam / 2.0) * x / (r0 * r0 + x * x) * bx * bx + bx * dbx


def stationary_pdf(x, lam: float):
    """Stationary density of the simple scaled equation (unit-scale q-Gaussian)."""
    return qgaussian_pdf(x, QGaussianParams(lam, 1.0))


def stationary_flux(x, p: SdeParams, rel_step: float = 1e-3):
    """Probability flux ``-a P + (1/2) d(b^2 P)/dx`` under the q-Gaussian P.

    Returns ``(flux, scale)`` where ``scale = |a P| + |(1/2) d(b^2 P)/dx|``;
    the flux vanishes identically for epsilon = 0.
    """
    x = np.asarray(x, dtype=float)
    h = rel_step * np.maximum(1.0, np.abs(x))

    def g(u):
        return diffusion(u, p) ** 2 * stationary_pdf(u, p.lam)

    dg = (g(x + h) - g(x - h)) / (2.0 * h)
    ap = drift(x, p) * stationary_pdf(x, p.lam)
    return -ap + 0.5 * dg, np.abs(ap) + np.abs(0.5 * dg)


# -- compiled kernels -----------------------------------------------------------


@numba.njit(cache=True)
def _reflect(x, bound):
    ax = abs(x)
    if ax > bound:
        ax = 2.0 * bound - ax
        if ax < 0.0:
            ax = 0.0
        x = ax if x > 0.0 else -ax
    return x


@numba.njit(cache=True)
def _run(x, t, tc, noise, kappa, eta, lam, eps, bound, t_stop, out_t, out_x, record):
    """Advance through ``noise``; time is Kahan-summed in (t, tc).

    Returns (x, t, tc, n_used, status); status 1 means the guard tripped.
    """
    k2 = kappa * kappa
    c = eta - lam / 2.0
    e_eta = eps**eta
    n = noise.shape[0]
    for i in range(n):
        s2 = x * x + 1.0
        s = math.sqrt(s2)
        d = s * eps + 1.0
        h = k2 * (d * d) / s2 ** (eta - 1.0)
        xe = x * e_eta
        x = x + k2 * (c - xe * xe) * x + kappa * s * noise[i]
        y = h - tc
        tn = t + y
        tc = (tn - t) - y
        t = tn
        x = _reflect(x, bound)
        if not abs(x) <= 1e12:
            return x, t, tc, i + 1, 1
        if record:
            out_t[i] = t
            out_x[i] = x
        if t >= t_stop:
            return x, t, tc, i + 1, 0
    return x, t, tc, n, 0


@numba.njit(cache=True)
def _run_simple(x, t, tc, noise, kappa, eta, lam, bound, t_stop, out_t, out_x):
    """The epsilon = 0 equation coded without the epsilon terms."""
    k2 = kappa * kappa
    c = eta - lam / 2.0
    n = noise.shape[0]
    for i in range(n):
        s2 = x * x + 1.0
        s = math.sqrt(s2)
        h = k2 / s2 ** (eta - 1.0)
        x = x + k2 * c * x + kappa * s * noise[i]
        y = h - tc
        tn = t + y
        tc = (tn - t) - y
        t = tn
        x = _reflect(x, bound)
        if not abs(x) <= 1e12:
            return x, t, tc, i + 1, 1
        out_t[i] = t
        out_x[i] = x
        if t >= t_stop:
            return x, t, tc, i + 1, 0
    return x, t, tc, n, 0


@numba.njit(cache=True)
def _run_windowed(x, m, s, acc, noise, kappa, eta, lam, eps, bound, tau, out, n_out):
    """Advance while accumulating window means of x into ``out``.

    Window m covers [m tau, (m+1) tau); ``s`` is the offset inside it and
    ``acc`` the running integral. Returns (x, m, s, acc, n_written, status).
    """
    k2 = kappa * kappa
    c = eta - lam / 2.0
    e_eta = eps**eta
    j = 0
    for i in range(noise.shape[0]):
        s2 = x * x + 1.0
        sq = math.sqrt(s2)
        d = sq * eps + 1.0
        h = k2 * (d * d) / s2 ** (eta - 1.0)
        xe = x * e_eta
        x_next = x + k2 * (c - xe * xe) * x + kappa * sq * noise[i]
        # x is held over [s, s + h)
        while s + h >= tau:
            part = tau - s
            acc += x * part
            h -= part
            out[j] = acc / tau
            j += 1
            acc = 0.0
            s = 0.0
            m += 1
            if j == n_out:
                return x, m, s, acc, j, 0
        acc += x * h
        s += h
        x = _reflect(x_next, bound)
        if not abs(x) <= 1e12:
            return x, m, s, acc, j, 1
    return x, m, s, acc, j, 0


# -- drivers --------------------------------------------------------------------


def _noise_chunks(rng: np.random.Generator, n: int, chunk: int) -> Iterator[np.ndarray]:
    while n > 0:
        k = min(n, chunk)
        yield rng.standard_normal(k)
        n -= k


def _burn_in(p: SdeParams, cfg: SolverConfig, rng: np.random.Generator) -> float:
    x, t, tc = float(cfg.x_init), 0.0, 0.0
    dummy = np.empty(0)
    eps = float(p.epsilon)
    for z in _noise_chunks(rng, cfg.burn_in, cfg.chunk):
        x, t, tc, _, status = _run(
            x, t, tc, z, cfg.kappa, p.eta, p.lam, eps, cfg.bound, math.inf, dummy, dummy, False
        )
        if status:
            raise DivergenceError(f"|x| exceeded {OVERFLOW_GUARD:g} during burn-in")
    return x


def iter_chunks(
    p: SdeParams, cfg: SolverConfig, simple: bool = False
) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Yield successive ``(times, values)`` blocks of a trajectory.

    The first block starts with the post-burn-in state at t = 0. Stops after
    ``cfg.max_steps`` steps or once ``t >= cfg.t_end``, whichever comes first.
    ``simple=True`` runs the epsilon-free kernel (requires epsilon = 0).
    """
    if cfg.max_steps is None and cfg.t_end is None:
        raise DomainError("either max_steps or t_end is required")
    if simple and p.epsilon != 0.0:
        raise DomainError("simple kernel requires epsilon = 0")
    rng = np.random.default_rng(cfg.seed)
    x = _burn_in(p, cfg, rng)
    t, tc = 0.0, 0.0
    yield np.array([0.0]), np.array([x])
    remaining = cfg.max_steps if cfg.max_steps is not None else math.inf
    t_stop = cfg.t_end if cfg.t_end is not None else math.inf
    while remaining > 0 and t < t_stop:
        k = int(min(remaining, cfg.chunk))
        z = rng.standard_normal(k)
        out_t = np.empty(k)
        out_x = np.empty(k)
        if simple:
            x, t, tc, used, status = _run_simple(
                x, t, tc, z, cfg.kappa, p.eta, p.lam, cfg.bound, t_stop, out_t, out_x
            )
        else:
            x, t, tc, used, status = _run(
                x, t, tc, z, cfg.kappa, p.eta, p.lam, float(p.epsilon), cfg.bound,
                t_stop, out_t, out_x, True,
            )
        if status:
            raise DivergenceError(f"|x| exceeded {OVERFLOW_GUARD:g}")
        remaining -= used
        yield out_t[:used], out_x[:used]


def simulate(p: SdeParams, cfg: SolverConfig, simple: bool = False) -> Trajectory:
    """Run the difference scheme and keep every step after burn-in."""
    ts, xs = zip(*iter_chunks(p, cfg, simple=simple))
    return Trajectory(np.concatenate(ts), np.concatenate(xs), cfg.seed, p, cfg)


def simulate_windowed(
    p: SdeParams, cfg: SolverConfig, tau: float, n_windows: int
) -> ReturnSeries:
    """Window means ``X_m = (1/tau) int_{m tau}^{(m+1) tau} x dt_s`` without storing the path.

    Equivalent to ``integrate_window(simulate(...), tau)`` but runs in constant
    memory; ``cfg.max_steps`` and ``cfg.t_end`` are ignored.
    """
    if not tau > 0.0:
        raise DomainError("tau must be > 0")
    if n_windows < 1:
        raise DomainError("n_windows must be >= 1")
    rng = np.random.default_rng(cfg.seed)
    x = _burn_in(p, cfg, rng)
    out = np.empty(n_windows)
    m, s, acc, done = 0, 0.0, 0.0, 0
    while done < n_windows:
        z = rng.standard_normal(cfg.chunk)
        x, m, s, acc, j, status = _run_windowed(
            x, m, s, acc, z, cfg.kappa, p.eta, p.lam, float(p.epsilon), cfg.bound,
            tau, out[done:], n_windows - done,
        )
        if status:
            raise DivergenceError(f"|x| exceeded {OVERFLOW_GUARD:g}")
        done += j
    return ReturnSeries(out, dt=tau, unit="t_s", meta={"seed": cfg.seed, "kind": "window_mean"})


def integrate_window(traj: Trajectory, tau: float) -> ReturnSeries:
    """Non-overlapping window means of a piecewise-constant (left-hold) path.

    Windows start at ``traj.times[0]``; a trailing partial window is dropped.
    """
    if not tau > 0.0:
        raise DomainError("tau must be > 0")
    if len(traj) < 2:
        raise ValueError("trajectory needs at least one step")
    t = traj.times - traj.times[0]
    n = int(math.floor(t[-1] / tau + 1e-12))
    if n < 1:
        raise ValueError(f"trajectory span {t[-1]:g} shorter than tau={tau:g}")
    cum = np.concatenate(([0.0], np.cumsum(traj.values[:-1] * np.diff(t))))
    edges = np.arange(n + 1) * tau
    integral = np.interp(edges, t, cum)
    meta = {"seed": traj.seed, "kind": "window_mean"}
    return ReturnSeries(np.diff(integral) / tau, dt=tau, unit="t_s", meta=meta)


def rescale(traj: Trajectory, r0: float, sigma: float, eta: float) -> Trajectory:
    """Map scaled (x, t_s) to physical (r, t): r = r0 x, t = t_s / (sigma^2 r0^(2(eta-1)))."""
    if not (r0 > 0.0 and sigma > 0.0):
        raise DomainError("r0 and sigma must be > 0")
    factor = sigma**2 * r0 ** (2.0 * (eta - 1.0))
    return replace(traj, times=traj.times / factor, values=traj.values * r0)


def unscale(traj: Trajectory, r0: float, sigma: float, eta: float) -> Trajectory:
    if not (r0 > 0.0 and sigma > 0.0):
        raise DomainError("r0 and sigma must be > 0")
    factor = sigma**2 * r0 ** (2.0 * (eta - 1.0))
    return replace(traj, times=traj.times * factor, values=traj.values / r0)


def params_dict(p: SdeParams, cfg: SolverConfig | None = None) -> dict:
    d = {f"sde.{k}": v for k, v in asdict(p).items()}
    if cfg is not None:
        d.update({f"solver.{k}": v for k, v in asdict(cfg).items()})
    return d
