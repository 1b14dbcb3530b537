"""Generative model for mean-shift two-sample problems.

Rows are drawn as ``x = U s + mu_p`` and ``y = U t + mu_q`` where ``s`` and ``t``
have i.i.d. zero-mean coordinates from a :class:`CoordinateLaw` and ``U`` is a
fixed orthogonal matrix.

Seeding
-------
Every random quantity is driven by an explicit integer seed. Sub-streams are
derived with :func:`derive_seed`, which feeds ``(master_seed, crc32(tag),
index)`` into :class:`numpy.random.SeedSequence` and takes its first 64-bit
output word. The mapping depends only on those three integers, so results do not
depend on evaluation order or on how work is split between threads.
"""
from __future__ import annotations

import functools
import math
import zlib
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DimensionMismatch, MomentUndefined

_FAMILY_ALIASES = {
    "normal": "normal",
    "standard-normal": "normal",
    "gaussian": "normal",
    "t": "t",
    "student-t": "t",
    "uniform": "uniform",
    "uniform-centered": "uniform",
}


def derive_seed(master_seed: int, tag: str = "", index: int = 0) -> int:
    """Derive a 64-bit sub-stream seed from a master seed, a purpose tag and an index."""
    if master_seed < 0 or index < 0:
        raise ValueError("seeds and indices must be non-negative")
    ss = np.random.SeedSequence([int(master_seed), zlib.crc32(tag.encode()), int(index)])
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class CoordinateLaw:
    """Distribution of one coordinate of ``s`` or ``t``: ``scale * raw``.

    ``raw`` is a standard normal, a Student-t with ``dof`` degrees of freedom
    (not standardised), or uniform on ``[-1, 1]``.
    """

    family: str = "normal"
    scale: float = 1.0
    dof: Optional[float] = None

    def __post_init__(self):
        fam = _FAMILY_ALIASES.get(self.family)
        if fam is None:
            raise ValueError(f"unknown coordinate law {self.family!r}")
        object.__setattr__(self, "family", fam)
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ValueError("scale must be a positive finite number")
        if fam == "t":
            if self.dof is None or not self.dof > 0:
                raise ValueError("student-t law requires dof > 0")
        elif self.dof is not None:
            raise ValueError("dof only applies to the student-t law")

    @property
    def has_variance(self) -> bool:
        return self.family != "t" or self.dof > 2

    def draw(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.family == "normal":
            raw = rng.standard_normal(size)
        elif self.family == "t":
            raw = rng.standard_t(self.dof, size)
        else:
            raw = rng.uniform(-1.0, 1.0, size)
        return self.scale * raw

    def pdf(self, x: float) -> float:
        """Density at a scalar point (plain floats, kept cheap for nested quadrature)."""
        s = self.scale
        u = x / s
        if self.family == "normal":
            return math.exp(-0.5 * u * u) / (s * math.sqrt(2.0 * math.pi))
        if self.family == "uniform":
            return 0.5 / s if -1.0 <= u <= 1.0 else 0.0
        return math.exp(self._t_logc - 0.5 * (self.dof + 1.0) * math.log1p(u * u / self.dof)) / s

    @functools.cached_property
    def _t_logc(self) -> float:
        nu = self.dof
        return math.lgamma(0.5 * (nu + 1)) - math.lgamma(0.5 * nu) - 0.5 * math.log(nu * math.pi)

    def support(self) -> tuple[float, float]:
        if self.family == "uniform":
            return (-self.scale, self.scale)
        return (-math.inf, math.inf)


@dataclass(frozen=True)
class MomentSet:
    sigma2: float
    mu3: Optional[float] = None
    mu4: Optional[float] = None
    mu6: Optional[float] = None

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")
        if self.mu4 is not None:
            # small relative slack for rounding in the closed forms
            if self.mu4 < self.sigma2**2 * (1 - 1e-12):
                raise ValueError("mu4 must be at least sigma2**2")
            if self.mu3 is not None and self.mu3**2 > self.sigma2 * self.mu4 * (1 + 1e-12):
                raise ValueError("mu3**2 must not exceed sigma2 * mu4")


def central_moments(law: CoordinateLaw, max_order: int = 4) -> MomentSet:
    """Exact central moments of ``law`` up to ``max_order`` (one of 2, 3, 4, 6).

    Raises
    ------
    MomentUndefined
        If the law has no finite moment of the requested order, e.g. a
        Student-t with ``dof <= max_order``.
    """
    if max_order not in (2, 3, 4, 6):
        raise ValueError("max_order must be one of 2, 3, 4, 6")
    s = law.scale
    if law.family == "normal":
        full = dict(sigma2=s**2, mu3=0.0, mu4=3 * s**4, mu6=15 * s**6)
    elif law.family == "uniform":
        full = dict(sigma2=s**2 / 3, mu3=0.0, mu4=s**4 / 5, mu6=s**6 / 7)
    else:
        nu = law.dof
        if nu <= max_order:
            raise MomentUndefined(
                f"student-t with dof={nu} has no finite moment of order {max_order}")
        full = dict(sigma2=s**2 * nu / (nu - 2), mu3=0.0)
        if nu > 4:
            full["mu4"] = 3 * s**4 * nu**2 / ((nu - 2) * (nu - 4))
        if nu > 6:
            full["mu6"] = 15 * s**6 * nu**3 / ((nu - 2) * (nu - 4) * (nu - 6))
    keep = {"sigma2": True, "mu3": max_order >= 3, "mu4": max_order >= 4, "mu6": max_order >= 6}
    return MomentSet(**{k: v for k, v in full.items() if keep[k]})


@functools.lru_cache(maxsize=32)
def _cached_rotation(d: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    q = q * np.where(np.diag(r) < 0, -1.0, 1.0)
    q.setflags(write=False)
    return q


def random_rotation(d: int, seed: int) -> np.ndarray:
    """Orthogonal ``d x d`` matrix from the QR factor of a seeded Gaussian matrix.

    Columns are sign-corrected so that the triangular factor has a positive
    diagonal, which makes the output unique for a given Gaussian draw.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    return _cached_rotation(int(d), int(seed)).copy()


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Mean-shift model. ``rotation_seed=None`` means ``U = I``."""

    d: int
    mu_p: np.ndarray
    mu_q: np.ndarray
    law: CoordinateLaw = field(default_factory=CoordinateLaw)
    rotation_seed: Optional[int] = None

    def __post_init__(self):
        mu_p = np.asarray(self.mu_p, dtype=float).reshape(-1)
        mu_q = np.asarray(self.mu_q, dtype=float).reshape(-1)
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if mu_p.shape != (self.d,) or mu_q.shape != (self.d,):
            raise DimensionMismatch(
                f"mean vectors must have length d={self.d}, got {mu_p.size} and {mu_q.size}")
        object.__setattr__(self, "mu_p", mu_p)
        object.__setattr__(self, "mu_q", mu_q)

    @property
    def delta(self) -> np.ndarray:
        return self.mu_p - self.mu_q

    @property
    def delta_norm(self) -> float:
        return float(np.linalg.norm(self.delta))

    @property
    def sigma2(self) -> float:
        return central_moments(self.law, 2).sigma2

    @property
    def snr(self) -> float:
        return self.delta_norm / math.sqrt(self.sigma2)

    @property
    def rotation(self) -> np.ndarray:
        if self.rotation_seed is None:
            return np.eye(self.d)
        return random_rotation(self.d, self.rotation_seed)


def mean_shift_model(d: int, psi: float, law: CoordinateLaw = CoordinateLaw(),
                     rotation_seed: Optional[int] = None) -> ModelSpec:
    """Model with ``mu_q = 0`` and ``delta`` spread evenly: ``delta_i = psi * sigma / sqrt(d)``."""
    sigma = math.sqrt(central_moments(law, 2).sigma2)
    mu_p = np.full(d, psi * sigma / math.sqrt(d))
    return ModelSpec(d=d, mu_p=mu_p, mu_q=np.zeros(d), law=law, rotation_seed=rotation_seed)


def sample_pair(model: ModelSpec, n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``n`` rows from each of P and Q. Deterministic in ``(model, n, seed)``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not model.law.has_variance:
        raise MomentUndefined("coordinate law has no finite variance")
    rng = np.random.default_rng(seed)
    s = model.law.draw(rng, (n, model.d))
    t = model.law.draw(rng, (n, model.d))
    if model.rotation_seed is not None:
        u = _cached_rotation(model.d, int(model.rotation_seed))
        s = s @ u.T
        t = t @ u.T
    return s + model.mu_p, t + model.mu_q
