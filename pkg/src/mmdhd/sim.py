"""Monte Carlo harness: rejection rates, Berry-Esseen ratios, MMD^2/sqrt(V)
curves, QQ tables and the four power-vs-dimension presets.

Every repetition draws its data from ``derive_seed(cell_seed, "rep", r)``, so
results do not depend on the number of workers or on scheduling order.
"""
from __future__ import annotations

import csv
import dataclasses
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from scipy import stats as sps

from .errors import ConfigInvalid, DegenerateVariance, NonPositiveValue
from .kernel import BandwidthRule, KernelSpec, median_heuristic, resolve_bandwidth
from .model import (CoordinateLaw, ModelSpec, central_moments, derive_seed, mean_shift_model,
                    sample_pair)
from .stat import h_values, normal_quantile
from .theory import TheoryInputs, power_prediction

ModelFactory = Callable[[int], ModelSpec]

_DIRECT_CHUNK = 20_000
_GRAM_CHUNK = 1_000_000


# ---------------------------------------------------------------------------
# h samples from independent pairs
# ---------------------------------------------------------------------------

def _pair_sqdists(X, Y):
    """Squared distances ||x-x'||, ||y-y'||, ||x-y'||, ||x'-y|| over consecutive pairs."""
    m = X.shape[0] // 2
    x1, x2 = X[0:2 * m:2], X[1:2 * m:2]
    y1, y2 = Y[0:2 * m:2], Y[1:2 * m:2]

    def sq(a, b):
        diff = a - b
        return np.einsum("ij,ij->i", diff, diff)

    return sq(x1, x2), sq(y1, y2), sq(x1, y2), sq(x2, y1)


def _h_from_sqdists(sqd, gamma):
    a, b, c, d = sqd
    g2 = gamma * gamma
    return np.exp(-a / g2) + np.exp(-b / g2) - np.exp(-c / g2) - np.exp(-d / g2)


def _gram_sqdists(model: ModelSpec, m: int, rng: np.random.Generator):
    """Exact draws of the four squared distances for Gaussian coordinates.

    Rotate so that ``delta`` lies on the first axis. That coordinate is drawn
    explicitly. The other ``d - 1`` coordinates enter only through the 4x4 Gram
    matrix of four standard normal vectors, a Wishart(I, d - 1) draw obtained
    from the Bartlett factorisation. Cost per pair does not depend on ``d``.
    """
    k = model.d - 1
    sigma = model.law.scale
    dn = model.delta_norm
    e = rng.standard_normal((4, m))
    # Bartlett: G = L L^T, L lower triangular, L_ii = sqrt(chi2(k - i)), L_ij ~ N(0, 1)
    L = np.zeros((4, 4, m))
    for i in range(4):
        L[i, i] = np.sqrt(rng.chisquare(k - i, m))
        for j in range(i):
            L[i, j] = rng.standard_normal(m)

    def gram(i, j):
        return np.einsum("km,km->m", L[i, : i + 1], L[j, : i + 1]) if i <= j else gram(j, i)

    def rest(i, j):
        return gram(i, i) + gram(j, j) - 2.0 * gram(i, j)

    s2 = sigma * sigma
    xx = s2 * ((e[0] - e[1]) ** 2 + rest(0, 1))
    yy = s2 * ((e[2] - e[3]) ** 2 + rest(2, 3))
    xy2 = (dn + sigma * (e[0] - e[3])) ** 2 + s2 * rest(0, 3)
    x2y = (dn + sigma * (e[1] - e[2])) ** 2 + s2 * rest(1, 2)
    return xx, yy, xy2, x2y


def _resolve_method(model: ModelSpec, kernels: Sequence[KernelSpec], method: str) -> str:
    gram_ok = (model.law.family == "normal" and model.d >= 5
               and all(k.family == "gaussian" for k in kernels))
    if method == "auto":
        return "gram" if gram_ok else "direct"
    if method == "gram" and not gram_ok:
        raise ConfigInvalid("gram sampling needs a normal law, d >= 5 and gaussian kernels")
    if method not in ("gram", "direct"):
        raise ConfigInvalid(f"unknown sampling method {method!r}")
    return method


def h_sample(model: ModelSpec, kernels: Sequence[KernelSpec], m_pairs: int, seed: int,
             method: str = "direct") -> np.ndarray:
    """h values over ``m_pairs`` independent pairs ``(z, z')``, one row per kernel.

    All kernels see the same draws. ``method="gram"`` samples the pairwise
    distances exactly without materialising ``d``-dimensional points (normal
    law, gaussian kernels only); ``"auto"`` picks it when allowed.
    """
    method = _resolve_method(model, kernels, method)
    out = np.empty((len(kernels), m_pairs))
    chunk = _GRAM_CHUNK if method == "gram" else max(1, _DIRECT_CHUNK * 100 // max(model.d, 100))
    for c, start in enumerate(range(0, m_pairs, chunk)):
        size = min(chunk, m_pairs - start)
        cseed = derive_seed(seed, f"h-{method}", c)
        if method == "gram":
            sqd = _gram_sqdists(model, size, np.random.default_rng(cseed))
        else:
            X, Y = sample_pair(model, 2 * size, cseed)
            sqd = _pair_sqdists(X, Y) if all(k.family == "gaussian" for k in kernels) else None
        for i, k in enumerate(kernels):
            if sqd is not None:
                out[i, start:start + size] = _h_from_sqdists(sqd, k.gamma)
            else:
                out[i, start:start + size] = h_values(k, X, Y)
    return out


# ---------------------------------------------------------------------------
# rejection rates
# ---------------------------------------------------------------------------

def _resolved_gammas(rules: Sequence[BandwidthRule], d: int):
    return [None if r.kind == "median" else resolve_bandwidth(r, d) for r in rules]


def _rep_block(model, n, rules, gammas, z, seed, reps_idx):
    rej = np.zeros((len(reps_idx), len(rules)), dtype=bool)
    used = np.zeros((len(reps_idx), len(rules)))
    stats = np.zeros((len(reps_idx), len(rules)))
    for row, r in enumerate(reps_idx):
        X, Y = sample_pair(model, n, derive_seed(seed, "rep", r))
        sqd = _pair_sqdists(X, Y)
        for j, g in enumerate(gammas):
            if g is None:
                g = median_heuristic(np.vstack([X, Y]))
            h = _h_from_sqdists(sqd, g)
            v = 2.0 * h.var(ddof=1)
            mmd2 = h.mean()
            if v > 0:
                s = math.sqrt(2 * h.size) * mmd2 / math.sqrt(v)
            else:
                s = math.inf if mmd2 > 0 else -math.inf
            stats[row, j] = s
            rej[row, j] = s > z
            used[row, j] = g
    return rej, used, stats


def simulate_linear_tests(model: ModelSpec, n: int, rules: Sequence[BandwidthRule], alpha: float,
                          reps: int, master_seed: int, workers: int = 1):
    """Run the linear-time test ``reps`` times for each bandwidth rule on shared draws.

    Returns ``(reject, gammas, statistics)`` arrays of shape ``(reps, len(rules))``.
    ``n`` is rounded down to an even number.
    """
    if reps < 1:
        raise ConfigInvalid("reps must be >= 1")
    n = n - n % 2
    if n < 4:
        raise ConfigInvalid("need n >= 4 so that v has at least two pairs")
    z = normal_quantile(1.0 - alpha)
    gammas = _resolved_gammas(rules, model.d)
    blocks = np.array_split(np.arange(reps), max(1, min(workers, reps)))
    if workers <= 1:
        parts = [_rep_block(model, n, rules, gammas, z, master_seed, b) for b in blocks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(
                lambda b: _rep_block(model, n, rules, gammas, z, master_seed, b), blocks))
    return tuple(np.concatenate([p[i] for p in parts]) for i in range(3))


def estimate_rejection_rate(model: ModelSpec, n: int, bandwidth: BandwidthRule, alpha: float,
                            reps: int, master_seed: int, workers: int = 1) -> tuple[float, float]:
    """Fraction of repetitions in which the linear-time test rejects, and its standard error."""
    rej, _, _ = simulate_linear_tests(model, n, [bandwidth], alpha, reps, master_seed, workers)
    rate = float(rej.mean())
    return rate, math.sqrt(rate * (1 - rate) / reps)


# ---------------------------------------------------------------------------
# distributional checks
# ---------------------------------------------------------------------------

def be_ratio_estimate(model: ModelSpec, kernel: KernelSpec, m_pairs: int, master_seed: int,
                      method: str = "direct") -> float:
    """Empirical ``E|h - Eh|^3 / Var(h)^{3/2}`` over ``m_pairs`` independent pairs."""
    if m_pairs < 100:
        raise ConfigInvalid("m_pairs must be >= 100")
    h = h_sample(model, [kernel], m_pairs, derive_seed(master_seed, "be-ratio", model.d), method)[0]
    var = h.var(ddof=1)
    if var == 0:
        raise DegenerateVariance("all h values are equal")
    return float(np.mean(np.abs(h - h.mean()) ** 3) / var**1.5)


def central_moment_ratio(h) -> tuple[float, float]:
    """Sample ``(tau4, V)``: fourth and second central moments of ``h``."""
    h = np.asarray(h, dtype=float)
    c = h - h.mean()
    return float(np.mean(c**4)), float(np.mean(c**2))


@dataclass
class RatioRecord:
    d: int
    gamma_rule: str
    gamma_value: float
    mmd2_hat: float
    var_hat: float
    ratio: float
    pairs: int


def ratio_curve(model_for_d: ModelFactory, gamma_rules: Sequence[BandwidthRule],
                d_grid: Iterable[int], n_large: int, master_seed: int,
                method: str = "auto") -> list[RatioRecord]:
    """Estimate ``MMD^2 / sqrt(Var h)`` per dimension and bandwidth rule.

    Uses ``n_large / 2`` independent pairs per dimension, shared by all rules.
    A median rule is resolved once per ``d`` on a 200-point pilot sample.
    """
    m = n_large // 2
    out = []
    for d in d_grid:
        model = model_for_d(d)
        gammas = []
        for r in gamma_rules:
            if r.kind == "median":
                X, Y = sample_pair(model, 100, derive_seed(master_seed, "pilot", d))
                gammas.append(median_heuristic(np.vstack([X, Y])))
            else:
                gammas.append(resolve_bandwidth(r, d))
        kernels = [KernelSpec("gaussian", g) for g in gammas]
        H = h_sample(model, kernels, m, derive_seed(master_seed, "ratio", d), method)
        for r, g, h in zip(gamma_rules, gammas, H):
            mean, var = float(h.mean()), float(h.var(ddof=1))
            out.append(RatioRecord(d, r.label, g, mean, var, mean / math.sqrt(var), m))
    return out


@dataclass
class QQRow:
    d: int
    rank: int
    statistic: float
    normal_quantile: float


def qq_export(model_for_d: ModelFactory, n: int, d_list: Iterable[int], bandwidth: BandwidthRule,
              reps: int, master_seed: int, alpha: float = 0.05, workers: int = 1) -> list[QQRow]:
    """Sorted replicates of ``sqrt(n) MMD^2_l / sqrt(v)`` against ``Phi^{-1}((i - 0.5)/reps)``."""
    if reps < 100:
        raise ConfigInvalid("reps must be >= 100")
    q = sps.norm.ppf((np.arange(1, reps + 1) - 0.5) / reps)
    rows = []
    for d in d_list:
        _, _, st = simulate_linear_tests(model_for_d(d), n, [bandwidth], alpha, reps,
                                         derive_seed(master_seed, "qq", d), workers)
        for i, (s, qi) in enumerate(zip(np.sort(st[:, 0]), q), start=1):
            rows.append(QQRow(d, i, float(s), float(qi)))
    return rows


def qq_summary(rows: Sequence[QQRow]) -> dict:
    """Per-d least-squares line through the QQ pairs and KS distance of standardised replicates."""
    out = {}
    for d in sorted({r.d for r in rows}):
        st = np.array([r.statistic for r in rows if r.d == d])
        q = np.array([r.normal_quantile for r in rows if r.d == d])
        fit = sps.linregress(q, st)
        z = (st - st.mean()) / st.std(ddof=1)
        out[d] = dict(slope=float(fit.slope), intercept=float(fit.intercept),
                      ks=float(sps.kstest(z, "norm").statistic), reps=int(st.size))
    return out


def fit_loglog_slope(points) -> tuple[float, float]:
    """OLS of ``ln y`` on ``ln x``; returns ``(slope, intercept)``."""
    pts = np.asarray(list(points), dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must be (x, y) pairs")
    if np.any(pts <= 0):
        raise NonPositiveValue("log-log fit needs positive x and y")
    if np.unique(pts[:, 0]).size < 2:
        raise ValueError("need at least two distinct x values")
    fit = sps.linregress(np.log(pts[:, 0]), np.log(pts[:, 1]))
    return float(fit.slope), float(fit.intercept)


def variance_rate_check(model: ModelSpec, kernel: KernelSpec, n_small: int, n_large: int,
                        reps: int, master_seed: int, ref_pairs: int = 10**6,
                        method: str = "auto") -> dict:
    """Spread of ``v / V_ref`` at two sample sizes.

    ``V_ref`` is twice the variance of h over ``ref_pairs`` pairs. ``v - V`` is of
    order ``V / sqrt(n)``, so the ratio of spreads should be near
    ``sqrt(n_large / n_small)``.
    """
    v_ref = 2.0 * float(h_sample(model, [kernel], ref_pairs,
                                 derive_seed(master_seed, "vref"), method)[0].var(ddof=1))
    sds = {}
    for n in (n_small, n_large):
        pairs = n // 2
        h = h_sample(model, [kernel], pairs * reps, derive_seed(master_seed, "vrate", n), method)[0]
        v = 2.0 * h.reshape(reps, pairs).var(axis=1, ddof=1)
        sds[n] = float(np.std(v / v_ref, ddof=1))
    return dict(v_ref=v_ref, sd_small=sds[n_small], sd_large=sds[n_large],
                shrink=sds[n_small] / sds[n_large])


# ---------------------------------------------------------------------------
# power sweeps
# ---------------------------------------------------------------------------

def _parse_rule(text: str, what: str) -> tuple[str, list[float]]:
    kind, *args = text.split(":")
    try:
        return kind, [float(a) for a in args]
    except ValueError:
        raise ConfigInvalid(f"bad {what} {text!r}") from None


@dataclass
class SweepConfig:
    """Power-vs-dimension sweep.

    ``n_rule`` is ``"fixed:N"`` or ``"equal-d"``; ``psi_rule`` is ``"fixed:PSI"``
    or ``"power:C:A"`` meaning ``psi = C * d**A``.
    """

    d_grid: list
    n_rule: str = "fixed:50"
    psi_rule: str = "fixed:2.5"
    bandwidth_rules: list = field(default_factory=lambda: [BandwidthRule.median()])
    law: CoordinateLaw = field(default_factory=CoordinateLaw)
    alpha: float = 0.05
    reps: int = 1000
    master_seed: int = 0
    preset: Optional[str] = None
    null: bool = False
    workers: int = 1

    def __post_init__(self):
        self.d_grid = [int(d) for d in self.d_grid]
        self.bandwidth_rules = [BandwidthRule.parse(r) if isinstance(r, str) else r
                                for r in self.bandwidth_rules]
        if isinstance(self.law, dict):
            self.law = CoordinateLaw(**self.law)
        self.validate()

    def validate(self):
        if self.reps < 1:
            raise ConfigInvalid("reps must be >= 1")
        if not self.d_grid or any(b <= a for a, b in zip(self.d_grid, self.d_grid[1:])):
            raise ConfigInvalid("d_grid must be non-empty and strictly increasing")
        if not self.bandwidth_rules:
            raise ConfigInvalid("need at least one bandwidth rule")
        if not 0 < self.alpha < 1:
            raise ConfigInvalid("alpha must lie in (0, 1)")
        self.n_for(self.d_grid[0])
        self.psi_for(self.d_grid[0])

    def n_for(self, d: int) -> int:
        kind, args = _parse_rule(self.n_rule, "n_rule")
        if kind == "equal-d" and not args:
            return d
        if kind == "fixed" and len(args) == 1 and args[0] >= 4:
            return int(args[0])
        raise ConfigInvalid(f"bad n_rule {self.n_rule!r}")

    def psi_for(self, d: int) -> float:
        kind, args = _parse_rule(self.psi_rule, "psi_rule")
        if kind == "fixed" and len(args) == 1 and args[0] >= 0:
            return args[0]
        if kind == "power" and len(args) == 2 and args[0] >= 0:
            return args[0] * d ** args[1]
        raise ConfigInvalid(f"bad psi_rule {self.psi_rule!r}")

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["bandwidth_rules"] = [r.label for r in self.bandwidth_rules]
        return out


POWER_D_GRID = list(range(40, 201, 20))
POWER_RULES = ["median", "d^0.5", "d^0.75", "d^1"]

POWER_PRESETS = {
    "setting1": dict(n_rule="fixed:50", psi_rule="fixed:2.5"),
    "setting2": dict(n_rule="fixed:50", psi_rule="power:1:0.25"),
    "setting3": dict(n_rule="equal-d", psi_rule="fixed:2"),
    "setting4": dict(n_rule="equal-d", psi_rule="power:0.3:0.5"),
}


def preset_config(name: str, **overrides) -> SweepConfig:
    if name not in POWER_PRESETS:
        raise ConfigInvalid(f"unknown power preset {name!r}")
    kw = dict(d_grid=POWER_D_GRID, bandwidth_rules=POWER_RULES, preset=name)
    kw.update(POWER_PRESETS[name])
    kw.update(overrides)
    return SweepConfig(**kw)


@dataclass
class SweepRecord:
    d: int
    n: int
    gamma_rule: str
    gamma_value: float
    rejection_rate: float
    stderr: float
    predicted_beta: float
    reps: int


def run_sweep(config: SweepConfig) -> tuple[list[SweepRecord], dict]:
    """Rejection rate per ``(d, bandwidth rule)`` with a summary of the trends.

    The mean shift is spread evenly over the coordinates, ``delta_i = psi sigma / sqrt(d)``.
    """
    config.validate()
    records = []
    for d in config.d_grid:
        n = config.n_for(d)
        psi = 0.0 if config.null else config.psi_for(d)
        model = mean_shift_model(d, psi, config.law)
        rej, used, _ = simulate_linear_tests(model, n, config.bandwidth_rules, config.alpha,
                                             config.reps, derive_seed(config.master_seed, "d", d),
                                             config.workers)
        beta = power_prediction(TheoryInputs.from_norm(
            n, d, model.sigma2, model.delta_norm, 1.0, alpha=config.alpha)).beta
        for j, rule in enumerate(config.bandwidth_rules):
            rate = float(rej[:, j].mean())
            records.append(SweepRecord(d, n - n % 2, rule.label, float(used[:, j].mean()), rate,
                                       math.sqrt(rate * (1 - rate) / config.reps), beta,
                                       config.reps))
    return records, summarize_sweep(records, config)


def summarize_sweep(records: Sequence[SweepRecord], config: SweepConfig) -> dict:
    rules = [r.label for r in config.bandwidth_rules]
    per_rule = {}
    for label in rules:
        recs = [r for r in records if r.gamma_rule == label]
        d = np.array([r.d for r in recs], dtype=float)
        p = np.array([r.rejection_rate for r in recs])
        entry = dict(
            loglog_slope=fit_loglog_slope(zip(d, p))[0] if np.all(p > 0) and d.size > 1 else None,
            spearman=float(sps.spearmanr(d, p).statistic) if d.size > 1 and np.ptp(p) > 0 else None,
            cv_power_sqrt_d=float(np.std(p * np.sqrt(d)) / np.mean(p * np.sqrt(d)))
            if np.any(p > 0) else None,
            max_rate=float(p.max()),
            min_rate=float(p.min()),
        )
        per_rule[label] = entry
    spread = 0.0
    for d in config.d_grid:
        rates = [r.rejection_rate for r in records if r.d == d]
        spread = max(spread, max(rates) - min(rates))
    return dict(
        preset=config.preset,
        per_rule=per_rule,
        max_rule_spread=spread,
        config=config.to_dict(),
        master_seed=config.master_seed,
        metadata=dict(delta_direction="equal-spread",
                      sigma=math.sqrt(central_moments(config.law, 2).sigma2)),
    )


def write_csv(records: Sequence, fh) -> None:
    """Write dataclass records as CSV with a header taken from the field names."""
    if not records:
        return
    names = [f.name for f in dataclasses.fields(records[0])]
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(names)
    for r in records:
        w.writerow([_fmt(getattr(r, k)) for k in names])


def _fmt(x):
    if isinstance(x, float):
        return repr(x)
    return x
