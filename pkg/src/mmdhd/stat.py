"""Two-sample statistics: the linear-time MMD test, MMD^2_u, the CQ statistic
and a generic permutation calibration."""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass
from typing import Callable, Union

import numpy as np
from scipy.special import erfc, erfcinv

from .errors import DimensionMismatch, DomainError, TooFewPairs
from .kernel import BandwidthRule, KernelSpec, kernel_matrix, paired_kernel, resolve_bandwidth
from .model import derive_seed


@dataclass
class TestOutcome:
    mmd2_l: float
    v: float
    statistic: float
    z_alpha: float
    reject: bool
    p_value: float
    n: int
    gamma_used: float
    degenerate: bool = False

    __test__ = False  # not a pytest class

    def to_dict(self) -> dict:
        return asdict(self)


def normal_cdf(x):
    return 0.5 * erfc(-np.asarray(x, dtype=float) / math.sqrt(2.0))


def normal_quantile(p: float) -> float:
    """Inverse standard normal CDF, ``Phi(z) = p``."""
    if not 0.0 < p < 1.0:
        raise DomainError(f"p must lie in (0, 1), got {p}")
    return float(-math.sqrt(2.0) * erfcinv(2.0 * p))


def _as_2d(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return a[:, None] if a.ndim == 1 else a


def _check_pair(X, Y):
    X, Y = _as_2d(X), _as_2d(Y)
    if X.shape != Y.shape:
        raise DimensionMismatch(f"X has shape {X.shape} but Y has shape {Y.shape}")
    return X, Y


def h_value(k: KernelSpec, x, x2, y, y2) -> float:
    """``k(x, x') + k(y, y') - k(x, y') - k(x', y)`` for one pair ``z=(x, y)``, ``z'=(x', y')``."""
    pts = [np.asarray(p, dtype=float).reshape(1, -1) for p in (x, x2, y, y2)]
    if len({p.shape for p in pts}) != 1:
        raise DimensionMismatch("all four points must share one dimension")
    x, x2, y, y2 = pts
    return float(paired_kernel(k, x, x2)[0] + paired_kernel(k, y, y2)[0]
                 - paired_kernel(k, x, y2)[0] - paired_kernel(k, x2, y)[0])


def h_values(k: KernelSpec, X, Y) -> np.ndarray:
    """h over consecutive disjoint pairs (rows 0-1, 2-3, ...); a trailing odd row is ignored."""
    X, Y = _check_pair(X, Y)
    m = X.shape[0] // 2
    x1, x2 = X[0:2 * m:2], X[1:2 * m:2]
    y1, y2 = Y[0:2 * m:2], Y[1:2 * m:2]
    return (paired_kernel(k, x1, x2) + paired_kernel(k, y1, y2)
            - paired_kernel(k, x1, y2) - paired_kernel(k, x2, y1))


def mmd2_linear(k: KernelSpec, X, Y) -> tuple[float, np.ndarray]:
    """Linear-time MMD^2: mean of h over the n/2 consecutive disjoint pairs.

    Odd ``n`` drops the last observation of each sample with a warning.
    """
    X, Y = _check_pair(X, Y)
    n = X.shape[0]
    if n < 2:
        raise TooFewPairs("need at least two observations per sample")
    if n % 2:
        warnings.warn(f"odd sample size {n}: dropping the last observation", stacklevel=2)
    h = h_values(k, X, Y)
    return float(h.mean()), h


def empirical_variance_v(h) -> float:
    """Twice the unbiased sample variance of the h values."""
    h = np.asarray(h, dtype=float)
    if h.size < 2:
        raise TooFewPairs(f"need at least two h values, got {h.size}")
    return float(2.0 * h.var(ddof=1))


def _kernel_for(k: Union[KernelSpec, BandwidthRule], X, Y) -> KernelSpec:
    if isinstance(k, KernelSpec):
        return k
    pooled = np.vstack([X, Y]) if k.kind == "median" else None
    return KernelSpec("gaussian", resolve_bandwidth(k, X.shape[1], pooled))


def linear_test(X, Y, k: Union[KernelSpec, BandwidthRule], alpha: float = 0.05) -> TestOutcome:
    """One-sided test rejecting when ``sqrt(n) * MMD^2_l / sqrt(v) > z_alpha``.

    A bandwidth rule is resolved on the data first (gaussian kernel). If
    ``v == 0`` the outcome is flagged ``degenerate`` and the decision falls back
    to ``mmd2_l > 0``.
    """
    if not 0.0 < alpha < 1.0:
        raise DomainError("alpha must lie in (0, 1)")
    X, Y = _check_pair(X, Y)
    if X.shape[0] % 2:
        warnings.warn(f"odd sample size {X.shape[0]}: dropping the last observation", stacklevel=2)
        X, Y = X[:-1], Y[:-1]
    kern = _kernel_for(k, X, Y)
    n = X.shape[0]
    mmd2, h = mmd2_linear(kern, X, Y)
    v = empirical_variance_v(h)
    z = normal_quantile(1.0 - alpha)
    gamma_used = kern.gamma if kern.family != "linear" else float("nan")
    if v > 0:
        stat = math.sqrt(n) * mmd2 / math.sqrt(v)
        p = float(normal_cdf(-stat))
        return TestOutcome(mmd2, v, stat, z, stat > z, p, n, gamma_used)
    stat = math.inf if mmd2 > 0 else -math.inf
    return TestOutcome(mmd2, v, stat, z, mmd2 > 0, 0.0 if mmd2 > 0 else 1.0, n, gamma_used,
                       degenerate=True)


def mmd2_u(k: KernelSpec, X, Y) -> float:
    """Unbiased quadratic-time MMD^2."""
    X, Y = _check_pair(X, Y)
    n = X.shape[0]
    if n < 2:
        raise TooFewPairs("need at least two observations per sample")
    kxx = kernel_matrix(k, X, X)
    kyy = kernel_matrix(k, Y, Y)
    kxy = kernel_matrix(k, X, Y)
    within = (kxx.sum() - np.trace(kxx) + kyy.sum() - np.trace(kyy)) / (n * (n - 1))
    return float(within - 2.0 * kxy.mean())


def cq_statistic(X, Y) -> float:
    """Chen-Qin U-statistic, written with sums of inner products (no kernel matrices)."""
    X, Y = _check_pair(X, Y)
    n = X.shape[0]
    if n < 2:
        raise TooFewPairs("need at least two observations per sample")
    sx, sy = X.sum(0), Y.sum(0)
    xx = (sx @ sx - np.einsum("ij,ij->", X, X)) / (n * (n - 1))
    yy = (sy @ sy - np.einsum("ij,ij->", Y, Y)) / (n * (n - 1))
    return float(xx + yy - 2.0 * (sx @ sy) / n**2)


def permutation_threshold(stat_fn: Callable[[np.ndarray, np.ndarray], float], X, Y,
                          alpha: float, B: int, seed: int) -> tuple[float, float]:
    """Permutation calibration of ``stat_fn``.

    Returns the empirical ``1 - alpha`` quantile of ``B`` label-permuted
    statistics and the p-value ``(1 + #{perm >= observed}) / (B + 1)``.
    Permutation ``b`` uses its own seed ``derive_seed(seed, "perm", b)``.
    """
    if B < 1:
        raise ValueError("B must be >= 1")
    if not 0.0 < alpha < 1.0:
        raise DomainError("alpha must lie in (0, 1)")
    X, Y = _check_pair(X, Y)
    n = X.shape[0]
    pooled = np.vstack([X, Y])
    observed = stat_fn(X, Y)
    perms = np.empty(B)
    for b in range(B):
        idx = np.random.default_rng(derive_seed(seed, "perm", b)).permutation(2 * n)
        perms[b] = stat_fn(pooled[idx[:n]], pooled[idx[n:]])
    threshold = float(np.quantile(perms, 1.0 - alpha))
    p_value = (1.0 + np.count_nonzero(perms >= observed)) / (B + 1.0)
    return threshold, float(p_value)
