"""Kernels and bandwidth rules.

The Gaussian kernel is ``exp(-||x - y||^2 / gamma^2)`` (no factor of two), the
Laplace kernel is ``exp(-||x - y||_1 / gamma)`` and the linear kernel is the dot
product.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial.distance import pdist

from .errors import DegenerateData, DimensionMismatch, MissingData

KERNEL_FAMILIES = ("gaussian", "laplace", "linear")


@dataclass(frozen=True)
class KernelSpec:
    family: str = "gaussian"
    gamma: float = 1.0

    def __post_init__(self):
        if self.family not in KERNEL_FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        if self.family != "linear" and not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise ValueError("gamma must be a positive finite number")


def eval_kernel(spec: KernelSpec, x, y) -> float:
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    if x.shape != y.shape:
        raise DimensionMismatch(f"points have lengths {x.size} and {y.size}")
    return float(paired_kernel(spec, x[None, :], y[None, :])[0])


def paired_kernel(spec: KernelSpec, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise kernel values ``k(a[i], b[i])`` for two equally shaped arrays."""
    if a.shape != b.shape:
        raise DimensionMismatch(f"shapes {a.shape} and {b.shape} differ")
    if spec.family == "linear":
        return np.einsum("ij,ij->i", a, b)
    diff = a - b
    if spec.family == "gaussian":
        return np.exp(-np.einsum("ij,ij->i", diff, diff) / spec.gamma**2)
    return np.exp(-np.abs(diff).sum(axis=1) / spec.gamma)


def kernel_from_sqdist(spec: KernelSpec, sqdist):
    """Gaussian kernel from precomputed squared distances."""
    if spec.family != "gaussian":
        raise ValueError("only the gaussian kernel is a function of squared distance")
    return np.exp(-np.asarray(sqdist) / spec.gamma**2)


def kernel_matrix(spec: KernelSpec, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Full Gram matrix ``K[i, j] = k(a[i], b[j])``."""
    if a.shape[1] != b.shape[1]:
        raise DimensionMismatch(f"dimensions {a.shape[1]} and {b.shape[1]} differ")
    if spec.family == "linear":
        return a @ b.T
    if spec.family == "gaussian":
        sq = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * (a @ b.T)
        return np.exp(-np.maximum(sq, 0.0) / spec.gamma**2)
    l1 = np.abs(a[:, None, :] - b[None, :, :]).sum(-1)
    return np.exp(-l1 / spec.gamma)


def median_heuristic(pooled) -> float:
    """Lower median of all pairwise Euclidean distances among the rows of ``pooled``."""
    pooled = np.asarray(pooled, dtype=float)
    if pooled.ndim == 1:
        pooled = pooled[:, None]
    m = pooled.shape[0]
    if m < 2:
        raise DegenerateData("median heuristic needs at least two points")
    sq = pdist(pooled, "sqeuclidean")
    k = (sq.size - 1) // 2
    med = float(np.partition(sq, k)[k])
    if med == 0.0:
        # also covers all-identical points
        raise DegenerateData("median pairwise distance is zero")
    return math.sqrt(med)


@dataclass(frozen=True)
class BandwidthRule:
    """How to choose gamma: ``fixed``, ``power`` (``c * d**alpha``) or ``median``."""

    kind: str
    gamma: Optional[float] = None
    c: float = 1.0
    alpha: float = 0.5

    def __post_init__(self):
        if self.kind not in ("fixed", "power", "median"):
            raise ValueError(f"unknown bandwidth rule {self.kind!r}")
        if self.kind == "fixed" and not (self.gamma is not None and self.gamma > 0):
            raise ValueError("fixed bandwidth must be positive")
        if self.kind == "power" and not self.c > 0:
            raise ValueError("power rule needs c > 0")

    @classmethod
    def fixed(cls, gamma: float) -> "BandwidthRule":
        return cls("fixed", gamma=float(gamma))

    @classmethod
    def power(cls, c: float, alpha: float) -> "BandwidthRule":
        return cls("power", c=float(c), alpha=float(alpha))

    @classmethod
    def median(cls) -> "BandwidthRule":
        return cls("median")

    @classmethod
    def parse(cls, text: str) -> "BandwidthRule":
        """Parse ``median``, ``fixed:5``, ``5``, ``power:c:alpha``, ``c*d^alpha``,
        ``d^0.75`` or ``sqrt``."""
        t = text.strip().lower()
        if t in ("median", "median-heuristic"):
            return cls.median()
        if t == "sqrt":
            return cls.power(1.0, 0.5)
        if t.startswith("d^"):
            return cls.power(1.0, float(t[2:]))
        if "*d^" in t:
            c, a = t.split("*d^")
            return cls.power(float(c), float(a))
        if t.startswith("fixed:"):
            return cls.fixed(float(t[6:]))
        if t.startswith("power:"):
            c, a = t[6:].split(":")
            return cls.power(float(c), float(a))
        try:
            return cls.fixed(float(t))
        except ValueError:
            raise ValueError(f"cannot parse bandwidth rule {text!r}") from None

    @property
    def label(self) -> str:
        if self.kind == "median":
            return "median"
        if self.kind == "fixed":
            return f"fixed:{self.gamma:g}"
        if self.c == 1.0:
            return f"d^{self.alpha:g}"
        return f"{self.c:g}*d^{self.alpha:g}"


def resolve_bandwidth(rule: BandwidthRule, d: int, pooled=None) -> float:
    if rule.kind == "fixed":
        return float(rule.gamma)
    if rule.kind == "power":
        return float(rule.c * d**rule.alpha)
    if pooled is None:
        raise MissingData("median heuristic needs the pooled sample")
    return median_heuristic(pooled)
