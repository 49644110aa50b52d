"""q-Gaussian distribution with zero q-mean.

The canonical parameterization is the tail exponent ``lam`` and scale ``r0``;
the density is

    P(r) = Gamma(lam/2) / (sqrt(pi) r0 Gamma(lam/2 - 1/2)) * (r0^2 / (r0^2 + r^2))^(lam/2)

which equals the Tsallis form ``A_q exp_q(-r^2 / ((3 - q) sigma_q^2))`` with
``q = 1 + 2/lam`` and ``r0 = sigma_q sqrt((3 - q)/(q - 1))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special
from scipy.optimize import brentq

Q_ONE_TOL = 1e-12


class DomainError(ValueError):
    """Argument outside the domain of a transform or function."""


@dataclass(frozen=True)
class QGaussianParams:
    lam: float
    r0: float = 1.0

    def __post_init__(self):
        if not (self.lam > 1.0 and math.isfinite(self.lam)):
            raise DomainError(f"lambda must be finite and > 1, got {self.lam}")
        if not (self.r0 > 0.0 and math.isfinite(self.r0)):
            raise DomainError(f"r0 must be finite and > 0, got {self.r0}")

    @property
    def q(self) -> float:
        return 1.0 + 2.0 / self.lam

    @property
    def sigma_q(self) -> float:
        q = self.q
        return self.r0 / math.sqrt((3.0 - q) / (q - 1.0))

    @property
    def log_norm(self) -> float:
        """log of the density prefactor, including the 1/r0 factor."""
        return (
            special.gammaln(self.lam / 2.0)
            - special.gammaln(self.lam / 2.0 - 0.5)
            - 0.5 * math.log(math.pi)
            - math.log(self.r0)
        )

    @property
    def variance(self) -> float:
        if self.lam <= 3.0:
            return math.inf
        return self.r0**2 / (self.lam - 3.0)


def exp_q(x, q: float):
    """Tsallis q-exponential ``(1 + (1-q) x)^(1/(1-q))``.

    Falls back to ``exp`` when ``|q - 1| < 1e-12``. Raises DomainError when
    the base ``1 + (1-q) x`` is not positive.
    """
    x = np.asarray(x, dtype=float)
    if abs(q - 1.0) < Q_ONE_TOL:
        out = np.exp(x)
    else:
        u = (1.0 - q) * x
        if np.any(1.0 + u <= 0.0):
            raise DomainError(f"1 + (1-q)x must be > 0 (q={q})")
        # log1p keeps the q -> 1 limit accurate
        out = np.exp(np.log1p(u) / (1.0 - q))
    return out[()] if out.ndim == 0 else out


def params_from_q(q: float, sigma_q: float) -> QGaussianParams:
    if not 1.0 < q < 3.0:
        raise DomainError(f"q must lie in (1, 3), got {q}")
    if not sigma_q > 0.0:
        raise DomainError(f"sigma_q must be > 0, got {sigma_q}")
    lam = 2.0 / (q - 1.0)
    r0 = sigma_q * math.sqrt((3.0 - q) / (q - 1.0))
    return QGaussianParams(lam, r0)


def params_to_q(p: QGaussianParams) -> tuple[float, float]:
    return p.q, p.sigma_q


def qgaussian_pdf(x, p: QGaussianParams):
    x = np.asarray(x, dtype=float)
    z2 = (x / p.r0) ** 2
    out = np.exp(p.log_norm - 0.5 * p.lam * np.log1p(z2))
    return out[()] if out.ndim == 0 else out


def qgaussian_cdf(x, p: QGaussianParams):
    """CDF through the Student-t identity (nu = lam - 1)."""
    nu = p.lam - 1.0
    t = np.asarray(x, dtype=float) * math.sqrt(nu) / p.r0
    out = special.stdtr(nu, t)
    return out[()] if np.ndim(out) == 0 else out


def sample_qgaussian(p: QGaussianParams, rng: np.random.Generator, n: int) -> np.ndarray:
    """Draw ``n`` i.i.d. q-Gaussian variates.

    Uses a Student-t draw with ``nu = lam - 1`` degrees of freedom scaled by
    ``r0 / sqrt(nu)``; the two densities coincide.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    nu = p.lam - 1.0
    return rng.standard_t(nu, size=n) * (p.r0 / math.sqrt(nu))


def fit_scale_mle(samples: np.ndarray, lam: float) -> float:
    """Maximum-likelihood r0 for a q-Gaussian with fixed exponent ``lam``.

    The score equation reduces to ``mean(r0^2 / (r0^2 + x^2)) = (lam - 1)/lam``,
    whose left side increases monotonically in r0.
    """
    x2 = np.asarray(samples, dtype=float) ** 2
    if x2.size == 0:
        raise ValueError("no samples")
    target = (lam - 1.0) / lam

    def score(log_r0):
        r2 = math.exp(2.0 * log_r0)
        return float(np.mean(r2 / (r2 + x2))) - target

    scale = math.sqrt(float(np.median(x2))) or 1.0
    lo, hi = math.log(scale) - 5.0, math.log(scale) + 5.0
    while score(lo) > 0.0:
        lo -= 5.0
    while score(hi) < 0.0:
        hi += 5.0
    return math.exp(brentq(score, lo, hi, xtol=1e-13))
