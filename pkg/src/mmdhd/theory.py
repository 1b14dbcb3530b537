"""Closed-form predictions for the linear-time Gaussian-kernel MMD test under a
mean shift, the per-coordinate Taylor expansions they rest on, and independent
oracles (exact Gaussian integrals, nested quadrature, Monte Carlo) used to
check them.

Notation: ``sigma2, mu3, mu4`` are the central moments of one coordinate,
``delta = mu_p - mu_q``, ``gamma`` the Gaussian bandwidth.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import integrate

from .errors import QuadratureNonConvergence
from .stat import normal_cdf, normal_quantile

BERRY_ESSEEN_CONSTANT = 20.0
TAU4_CONSTANT = 4.0


@dataclass(frozen=True, eq=False)
class TheoryInputs:
    n: int
    d: int
    sigma2: float
    delta: np.ndarray
    gamma: float
    alpha: float = 0.05
    mu3: float = 0.0
    mu4: Optional[float] = None
    regime_c: float = 1.0

    def __post_init__(self):
        delta = np.asarray(self.delta, dtype=float).reshape(-1)
        if delta.size == 1 and self.d > 1:
            delta = np.full(self.d, delta[0])
        if delta.size != self.d:
            raise ValueError(f"delta must have length d={self.d}")
        if not (self.sigma2 > 0 and self.gamma > 0 and self.n >= 1 and self.d >= 1):
            raise ValueError("need sigma2 > 0, gamma > 0, n >= 1, d >= 1")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        object.__setattr__(self, "delta", delta)

    @classmethod
    def from_norm(cls, n, d, sigma2, delta_norm, gamma, **kw) -> "TheoryInputs":
        """Spread ``delta_norm`` evenly over the ``d`` coordinates."""
        return cls(n=n, d=d, sigma2=sigma2, delta=np.full(d, delta_norm / math.sqrt(d)),
                   gamma=gamma, **kw)

    @property
    def delta_norm2(self) -> float:
        return float(self.delta @ self.delta)

    @property
    def psi(self) -> float:
        return math.sqrt(self.delta_norm2 / self.sigma2)

    @property
    def regime(self) -> str:
        return "validated" if self.gamma >= self.regime_c * math.sqrt(self.d) else "out-of-regime"


@dataclass(frozen=True)
class PowerPrediction:
    beta: float
    finite_sample_lower: float
    regime: str


def population_mmd2_approx(inputs: TheoryInputs) -> float:
    return 2.0 * inputs.delta_norm2 / inputs.gamma**2


def variance_V_approx(inputs: TheoryInputs) -> float:
    """Leading-order variance of h: ``(16 d sigma^4 + 16 sigma^2 ||delta||^2) / gamma^4``."""
    s2 = inputs.sigma2
    return (16.0 * inputs.d * s2**2 + 16.0 * s2 * inputs.delta_norm2) / inputs.gamma**4


def power_prediction(inputs: TheoryInputs) -> PowerPrediction:
    s2, dn2 = inputs.sigma2, inputs.delta_norm2
    z = normal_quantile(1.0 - inputs.alpha)
    arg = math.sqrt(inputs.n) * dn2 / math.sqrt(8.0 * inputs.d * s2**2 + 8.0 * s2 * dn2) - z
    beta = float(normal_cdf(arg))
    lower = min(1.0, max(0.0, beta - berry_esseen_bound(inputs.n)))
    return PowerPrediction(beta, lower, inputs.regime)


def corollary_rate(regime: str, n: int, d: int, psi: float) -> float:
    """``Phi(sqrt(n) psi^2 / sqrt(d))`` for low SNR, ``Phi(sqrt(n) psi)`` for high SNR."""
    if psi < 0:
        raise ValueError("psi must be non-negative")
    if regime == "low-snr":
        return float(normal_cdf(math.sqrt(n) * psi**2 / math.sqrt(d)))
    if regime == "high-snr":
        return float(normal_cdf(math.sqrt(n) * psi))
    raise ValueError(f"unknown regime {regime!r}")


def cq_power_prediction(regime: str, n: int, d: int, psi: float,
                        subtract_z: bool = False, alpha: float = 0.05) -> float:
    """Power rates of the CQ test: ``Phi(n psi^2 / sqrt(d))`` (low SNR) and the
    corrected ``Phi(sqrt(n) psi)`` (high SNR).

    With ``subtract_z`` the argument is shifted by ``-z_alpha``.
    """
    if psi < 0:
        raise ValueError("psi must be non-negative")
    if regime == "low-snr":
        arg = n * psi**2 / math.sqrt(d)
    elif regime == "high-snr":
        # sqrt(n) ||delta||^2 / sqrt(delta' Sigma delta) with Sigma = sigma^2 I
        arg = math.sqrt(n) * psi
    else:
        raise ValueError(f"unknown regime {regime!r}")
    if subtract_z:
        arg -= normal_quantile(1.0 - alpha)
    return float(normal_cdf(arg))


def berry_esseen_bound(n: int) -> float:
    if n < 1:
        raise ValueError("n must be >= 1")
    return BERRY_ESSEEN_CONSTANT / math.sqrt(n)


def tau4_bound(V: float) -> float:
    if V < 0:
        raise ValueError("V must be non-negative")
    return TAU4_CONSTANT * V**2


# ---------------------------------------------------------------------------
# one-coordinate Taylor expansions
# ---------------------------------------------------------------------------

def double_integral_expansion(sigma2, mu3, mu4, delta_i, gamma) -> float:
    """Second-order expansion of ``E exp(-(u - v)^2 / gamma^2)``, ``u ~ f``, ``v ~ g``,
    ``E u - E v = delta_i``. ``mu3`` cancels and is accepted for symmetry."""
    g2 = gamma**2
    dl2 = delta_i**2
    return (1.0 - (2.0 * sigma2 + dl2) / g2
            + (mu4 + 6.0 * sigma2 * dl2 + 3.0 * sigma2**2 + 0.5 * dl2**2) / g2**2)


def triple_integral_expansion(sigma2, mu3, mu4, delta_i, gamma) -> float:
    """Second-order expansion of ``E[k(u, v) k(v, w)]`` with ``u ~ f`` and ``v, w ~ g``.

    ``delta_i = E u - E v`` (the unshared point minus the shared one) and ``mu3``
    is the third central moment of ``g``. The odd term enters as
    ``-2 mu3 delta_i / gamma^4``; flipping the roles of P and Q flips its sign.
    """
    g2 = gamma**2
    dl2 = delta_i**2
    return (1.0 - (4.0 * sigma2 + dl2) / g2
            + (3.0 * mu4 + 8.0 * sigma2 * dl2 + 9.0 * sigma2**2 + 0.5 * dl2**2
               - 2.0 * mu3 * delta_i) / g2**2)


def third_moment_integral(sigma2, mu3, delta_i) -> float:
    """``E (u - v)^3`` for equally shaped laws whose means differ by ``delta_i``."""
    return delta_i**3 + 6.0 * sigma2 * delta_i


# ---------------------------------------------------------------------------
# exact Gaussian oracles
# ---------------------------------------------------------------------------

def _delta_norm2(delta, d) -> float:
    delta = np.asarray(delta, dtype=float).reshape(-1)
    if delta.size == 1:
        return float(d * delta[0] ** 2)
    if delta.size != d:
        raise ValueError(f"delta must have length {d}")
    return float(delta @ delta)


def gaussian_exact_mmd2(sigma2, delta, gamma, d) -> float:
    """Population MMD^2 for Gaussian coordinates.

    Uses ``E exp(-w^2/gamma^2) = (1 + 2 s^2/gamma^2)^{-1/2} exp(-m^2/(gamma^2 + 2 s^2))``
    for ``w ~ N(m, s^2)``, with ``s^2 = 2 sigma2``. A scalar ``delta`` is
    taken as the common value of every coordinate.
    """
    g2 = gamma**2
    dn2 = _delta_norm2(delta, d)
    log_rd = -0.5 * d * math.log1p(4.0 * sigma2 / g2)
    return 2.0 * math.exp(log_rd) * -math.expm1(-dn2 / (g2 + 4.0 * sigma2))


def gaussian_exact_variance(sigma2, delta, gamma, d) -> float:
    """Exact ``Var h(z, z')`` for Gaussian coordinates.

    ``E h^2 = 2 E k^2(x,x') + 2 E k^2(x,y) + 2 E k(x,x')k(y,y') + 2 E k(x,y')k(x',y)
    - 8 E k(x,x')k(x',y)``; every term is a product of one-dimensional
    Gaussian integrals.
    """
    g2 = gamma**2
    dn2 = _delta_norm2(delta, d)
    s2 = sigma2
    log_t1 = -0.5 * d * math.log1p(8.0 * s2 / g2)
    log_r2d = -d * math.log1p(4.0 * s2 / g2)
    c = g2 + 2.0 * s2
    log_t = [log_t1,
             log_t1 - 2.0 * dn2 / (g2 + 8.0 * s2),
             log_r2d,
             log_r2d - 2.0 * dn2 / (g2 + 4.0 * s2)]
    log_t5 = (-0.5 * d * (math.log1p(2.0 * s2 / g2) + math.log1p(6.0 * s2 / g2))
              - dn2 * (0.5 / c + 0.5 / (c + 4.0 * s2)))
    # the weights 2, 2, 2, 2, -8 sum to zero, so expm1 avoids cancelling terms near 1
    eh2 = 2.0 * sum(math.expm1(t) for t in log_t) - 8.0 * math.expm1(log_t5)
    return eh2 - gaussian_exact_mmd2(sigma2, delta, gamma, d) ** 2


# ---------------------------------------------------------------------------
# quadrature / Monte Carlo oracles for the one-coordinate integrals
# ---------------------------------------------------------------------------

_INTEGRANDS = {
    "kernel": None,
    "sq": lambda w: w * w,
    "cube": lambda w: w * w * w,
    "quartic": lambda w: w * w * w * w,
}


def _bounds(law) -> tuple[float, float]:
    if getattr(law, "family", None) == "normal":
        return (-10.0 * law.scale, 10.0 * law.scale)
    return law.support()


def _quad_piece(fn, lo, hi, epsabs, epsrel):
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, _ = integrate.quad(fn, lo, hi, epsabs=epsabs, epsrel=epsrel, limit=200)
        except integrate.IntegrationWarning as exc:
            raise QuadratureNonConvergence(str(exc)) from None
    return val


def _quad(fn, lo, hi, epsabs, epsrel, core=10.0):
    """Adaptive quadrature; an infinite range is split into ``[-core, core]`` and two tails."""
    if math.isfinite(lo) and math.isfinite(hi):
        return _quad_piece(fn, lo, hi, epsabs, epsrel)
    a = max(lo, -core)
    b = min(hi, core)
    total = _quad_piece(fn, a, b, epsabs, epsrel)
    if not math.isfinite(lo):
        total += _quad_piece(fn, lo, a, epsabs, epsrel)
    if not math.isfinite(hi):
        total += _quad_piece(fn, b, hi, epsabs, epsrel)
    return total


def quadrature_oracle_double(law_f, law_g, delta, gamma, integrand="kernel",
                             epsabs=1e-9, epsrel=1e-10) -> float:
    """``E phi(u - v)`` by nested adaptive quadrature, ``u = delta + a``, ``a ~ law_f``,
    ``v ~ law_g``.

    ``phi`` is the one-dimensional Gaussian kernel or ``w^2``, ``w^3``, ``w^4``.
    Laws are centred :class:`~mmdhd.model.CoordinateLaw` objects (anything with
    ``pdf`` and ``support``); ``None`` is a point mass at zero. Normal laws are
    integrated over a +-10 sigma box, other laws over their full support.
    """
    if integrand not in _INTEGRANDS:
        raise ValueError(f"unknown integrand {integrand!r}")
    g2 = gamma**2
    phi = _INTEGRANDS[integrand] or (lambda w: math.exp(-w * w / g2))

    def inner(v):
        if law_f is None:
            return phi(delta - v)
        lo, hi = _bounds(law_f)
        pdf = law_f.pdf
        return _quad(lambda a: phi(delta + a - v) * pdf(a), lo, hi, epsabs * 0.1, epsrel,
                     core=10.0 * law_f.scale)

    if law_g is None:
        return inner(0.0)
    lo, hi = _bounds(law_g)
    pdf_g = law_g.pdf
    return _quad(lambda v: inner(v) * pdf_g(v), lo, hi, epsabs, epsrel, core=10.0 * law_g.scale)


def quadrature_oracle_triple(law_f, law_g, delta, gamma, epsabs=1e-9, epsrel=1e-10) -> float:
    """``E[k(u, v) k(v, w)]`` with ``u = delta + a``, ``a ~ law_f`` and ``v, w ~ law_g``."""
    g2 = gamma**2
    lo_f, hi_f = _bounds(law_f)
    lo_g, hi_g = _bounds(law_g)
    pf, pg = law_f.pdf, law_g.pdf

    def integrand(v):
        left = _quad(lambda a: math.exp(-(delta + a - v) ** 2 / g2) * pf(a), lo_f, hi_f,
                     epsabs * 0.1, epsrel, core=10.0 * law_f.scale)
        right = _quad(lambda w: math.exp(-(v - w) ** 2 / g2) * pg(w), lo_g, hi_g,
                      epsabs * 0.1, epsrel, core=10.0 * law_g.scale)
        return left * right * pg(v)

    return _quad(integrand, lo_g, hi_g, epsabs, epsrel, core=10.0 * law_g.scale)


def monte_carlo_triple(law_f, law_g, delta, gamma, draws: int, seed: int) -> tuple[float, float]:
    """Monte Carlo estimate and standard error of ``E[k(u, v) k(v, w)]``."""
    rng = np.random.default_rng(seed)
    u = delta + law_f.draw(rng, draws)
    v = law_g.draw(rng, draws)
    w = law_g.draw(rng, draws)
    vals = np.exp(-((u - v) ** 2 + (v - w) ** 2) / gamma**2)
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(draws))
