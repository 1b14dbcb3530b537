"""Oracle suites that cross-check closed forms against independent computations.

Each suite returns a :class:`SuiteResult`. Closed forms are looked up on the
``theory`` module at call time, so a patched formula is what gets checked.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from . import stat as _stat
from . import theory as _theory
from .kernel import KernelSpec
from .model import CoordinateLaw, ModelSpec, central_moments, derive_seed, random_rotation, sample_pair


@dataclass
class Check:
    name: str
    value: float
    reference: float
    error: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(self.error <= self.tol)


@dataclass
class SuiteResult:
    suite: str
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name, value, reference, tol, relative=False):
        err = abs(value - reference)
        if relative:
            err /= abs(reference)
        self.checks.append(Check(name, float(value), float(reference), float(err), tol))

    def to_dict(self) -> dict:
        return dict(suite=self.suite, passed=self.passed,
                    n_checks=len(self.checks),
                    n_failed=sum(not c.passed for c in self.checks),
                    checks=[dict(asdict(c), passed=c.passed) for c in self.checks])


def _laws(sigma2):
    # t6 scaled so that its variance equals sigma2
    return [CoordinateLaw("normal", math.sqrt(sigma2)),
            CoordinateLaw("t", math.sqrt(sigma2 * 4.0 / 6.0), 6.0)]


def appendix_integrals(seed: int = 0) -> SuiteResult:
    """One-coordinate expansions against adaptive quadrature, in the gamma^2 >= 400 range."""
    res = SuiteResult("appendix-integrals")
    for g2, s2, dl in itertools.product([400.0, 1600.0], [0.5, 1.0, 2.0], [0.0, 0.5, 1.0]):
        gamma = math.sqrt(g2)
        for law in _laws(s2):
            m = central_moments(law, 4)
            tag = f"{law.family} g2={g2:g} s2={s2:g} delta={dl:g}"
            res.add(f"double {tag}",
                    _theory.double_integral_expansion(m.sigma2, m.mu3, m.mu4, dl, gamma),
                    _theory.quadrature_oracle_double(law, law, dl, gamma, "kernel"), 1e-4)
            if dl != 0.5:
                res.add(f"triple {tag}",
                        _theory.triple_integral_expansion(m.sigma2, m.mu3, m.mu4, dl, gamma),
                        _theory.quadrature_oracle_triple(law, law, dl, gamma), 1e-4)
            if g2 == 400.0:
                res.add(f"cube {tag}", _theory.third_moment_integral(m.sigma2, m.mu3, dl),
                        _theory.quadrature_oracle_double(law, law, dl, gamma, "cube"), 1e-6)
    return res


def lemma1(seed: int = 0) -> SuiteResult:
    """Leading-order MMD^2 against the exact Gaussian value for gamma much larger than d."""
    res = SuiteResult("lemma1")
    for d, s2, di in [(10, 1.0, 0.5), (100, 1.0, 0.2), (100, 0.5, 0.1), (400, 1.0, 0.05)]:
        gamma = 10.0 * d
        approx = _theory.population_mmd2_approx(
            _theory.TheoryInputs(n=2, d=d, sigma2=s2, delta=di, gamma=gamma))
        exact = _theory.gaussian_exact_mmd2(s2, di, gamma, d)
        res.add(f"mmd2 d={d} s2={s2:g} delta_i={di:g} gamma=10d", approx, exact, 0.02,
                relative=True)
    return res


def lemma2(seed: int = 0) -> SuiteResult:
    """Leading-order Var(h) against the exact Gaussian value and a Monte Carlo estimate."""
    from .sim import h_sample
    from .model import mean_shift_model

    res = SuiteResult("lemma2")
    for d, di in [(10, 0.5), (100, 0.2), (400, 0.05)]:
        gamma = 10.0 * d
        inp = _theory.TheoryInputs(n=2, d=d, sigma2=1.0, delta=di, gamma=gamma)
        approx = _theory.variance_V_approx(inp)
        res.add(f"var(h) exact d={d} gamma=10d", approx,
                _theory.gaussian_exact_variance(1.0, di, gamma, d), 0.05, relative=True)
        model = mean_shift_model(d, di * math.sqrt(d))
        h = h_sample(model, [KernelSpec("gaussian", gamma)], 200_000,
                     derive_seed(seed, "lemma2", d), "auto")[0]
        res.add(f"var(h) monte carlo d={d} gamma=10d", approx, h.var(ddof=1), 0.05,
                relative=True)
    return res


def cq_identity(seed: int = 0, instances: int = 100) -> SuiteResult:
    """CQ statistic against MMD^2_u with the linear kernel on random data."""
    res = SuiteResult("cq-identity")
    lin = KernelSpec("linear")
    for i in range(instances):
        rng = np.random.default_rng(derive_seed(seed, "cq", i))
        n, d = int(rng.integers(2, 40)), int(rng.integers(1, 60))
        X = rng.normal(size=(n, d)) * rng.uniform(0.1, 3) + rng.normal(size=d)
        Y = rng.standard_t(5, size=(n, d)) + rng.normal(size=d)
        cq = _stat.cq_statistic(X, Y)
        mu = _stat.mmd2_u(lin, X, Y)
        scale = max(abs(mu), float(np.mean(X * X) + np.mean(Y * Y)) * d)
        res.checks.append(Check(f"instance {i} n={n} d={d}", cq, mu, abs(cq - mu) / scale, 1e-10))
    return res


def rotation_invariance(seed: int = 0) -> SuiteResult:
    """Rotating the noise and the means by a common U leaves all distances and the test unchanged."""
    res = SuiteResult("rotation-invariance")
    for d, n in [(3, 20), (25, 40), (120, 30)]:
        rot_seed = derive_seed(seed, "rotation", d)
        base = ModelSpec(d, np.linspace(0.0, 1.0, d), np.zeros(d), CoordinateLaw("t", 1.0, 5.0))
        U = random_rotation(d, rot_seed)
        rotated = ModelSpec(d, U @ base.mu_p, U @ base.mu_q, base.law, rotation_seed=rot_seed)
        sseed = derive_seed(seed, "draw", d)
        X0, Y0 = sample_pair(base, n, sseed)
        X1, Y1 = sample_pair(rotated, n, sseed)
        for label, (a0, b0, a1, b1) in {"xx": (X0, X0, X1, X1), "yy": (Y0, Y0, Y1, Y1),
                                        "xy": (X0, Y0, X1, Y1)}.items():
            err = float(np.max(np.abs(cdist(a0, b0) - cdist(a1, b1))))
            res.checks.append(Check(f"distances {label} d={d}", err, 0.0, err, 1e-9))
        k = KernelSpec("gaussian", math.sqrt(d))
        s0 = _stat.linear_test(X0, Y0, k).statistic
        s1 = _stat.linear_test(X1, Y1, k).statistic
        res.add(f"linear test statistic d={d}", s1, s0, 1e-9)
    return res


SUITES = {
    "appendix-integrals": appendix_integrals,
    "lemma1": lemma1,
    "lemma2": lemma2,
    "cq-identity": cq_identity,
    "rotation-invariance": rotation_invariance,
}


def run_suite(name: str, seed: int = 0) -> SuiteResult:
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    return SUITES[name](seed)
