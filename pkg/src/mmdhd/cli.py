"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 data or configuration error,
3 verification failure.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import json
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import sim, theory, verify
from .dataio import json_safe, load_samples
from .errors import ConfigInvalid, MMDError
from .kernel import BandwidthRule, KernelSpec
from .model import CoordinateLaw, mean_shift_model
from .stat import linear_test

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_VERIFY = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _law(text):
    """``normal``, ``uniform``, ``tNU`` (e.g. ``t6``), optionally ``:scale``."""
    name, _, scale = text.partition(":")
    kw = {"scale": float(scale)} if scale else {}
    try:
        if name.startswith("t") and name[1:].replace(".", "", 1).isdigit():
            return CoordinateLaw("t", dof=float(name[1:]), **kw)
        return CoordinateLaw(name, **kw)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _rule(text):
    try:
        return BandwidthRule.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def resolve_seed(arg_seed, fallback=None) -> int:
    """``--seed`` if given, then ``fallback`` (a config file value), then ``MMDHD_SEED``, then 0."""
    if arg_seed is not None:
        return arg_seed
    if fallback is not None:
        return int(fallback)
    env = os.environ.get("MMDHD_SEED")
    if env:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"MMDHD_SEED must be an integer, got {env!r}") from None
    return 0


def _emit(payload: dict, seed: int, out=None) -> None:
    doc = dict(payload, seed=seed,
               timestamp=_dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"))
    text = json.dumps(json_safe(doc), indent=2)
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def _write_table(records, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        sim.write_csv(records, fh)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_test(args) -> int:
    X, Y = load_samples(args.x), load_samples(args.y)
    if args.kernel == "gaussian":
        k = args.bandwidth
    else:
        if args.bandwidth.kind == "median":
            raise UsageError("--kernel laplace/linear needs a fixed --bandwidth")
        k = KernelSpec(args.kernel, args.bandwidth.gamma if args.bandwidth.kind == "fixed"
                       else args.bandwidth.c * X.shape[1] ** args.bandwidth.alpha)
    out = linear_test(X, Y, k, args.alpha)
    _emit(out.to_dict(), resolve_seed(args.seed), args.out)
    return EXIT_OK


def cmd_predict(args) -> int:
    gamma = args.gamma if args.gamma is not None else math.sqrt(args.d)
    inp = theory.TheoryInputs.from_norm(args.n, args.d, args.sigma**2, args.delta_norm, gamma,
                                        alpha=args.alpha)
    pred = theory.power_prediction(inp)
    psi = args.delta_norm / args.sigma
    payload = dict(
        beta=pred.beta, finite_sample_lower=pred.finite_sample_lower, regime=pred.regime,
        gamma=gamma, psi=psi,
        mmd2_approx=theory.population_mmd2_approx(inp), V_approx=theory.variance_V_approx(inp),
        corollary_low_snr=theory.corollary_rate("low-snr", args.n, args.d, psi),
        corollary_high_snr=theory.corollary_rate("high-snr", args.n, args.d, psi),
        cq_low_snr=theory.cq_power_prediction("low-snr", args.n, args.d, psi),
        cq_high_snr=theory.cq_power_prediction("high-snr", args.n, args.d, psi),
        berry_esseen_bound=theory.berry_esseen_bound(args.n),
    )
    _emit(payload, resolve_seed(args.seed), args.out)
    return EXIT_OK


def cmd_verify(args) -> int:
    seed = resolve_seed(args.seed)
    names = list(verify.SUITES) if args.suite == "all" else [args.suite]
    results = [verify.run_suite(name, seed) for name in names]
    docs = [r.to_dict() for r in results]
    if not args.verbose:
        for doc in docs:
            doc["checks"] = [c for c in doc["checks"] if not c["passed"]]
    passed = all(r.passed for r in results)
    _emit(dict(passed=passed, suites=docs), seed, args.out)
    return EXIT_OK if passed else EXIT_VERIFY


BE_SERIES = [
    ("normal", "d^0.75", CoordinateLaw("normal")),
    ("t4", "d^0.5", CoordinateLaw("t", dof=4.0)),
    ("t4", "d^1", CoordinateLaw("t", dof=4.0)),
]


def _be_ratio(d_grid, series, m_pairs, psi, seed, out):
    rows = []
    for law_name, rule_text, law in series:
        rule = BandwidthRule.parse(rule_text)
        if rule.kind == "median":
            raise UsageError("the Berry-Esseen ratio needs a fixed or power bandwidth rule")
        for d in d_grid:
            gamma = rule.c * d**rule.alpha if rule.kind == "power" else rule.gamma
            ratio = sim.be_ratio_estimate(mean_shift_model(d, psi, law),
                                          KernelSpec("gaussian", gamma), m_pairs, seed)
            rows.append(BERow(d, law_name, rule.label, gamma, ratio, m_pairs))
    summary = {}
    for law_name, rule_text, _ in series:
        label = BandwidthRule.parse(rule_text).label
        pts = [(r.d, r.ratio) for r in rows if r.law == law_name and r.gamma_rule == label]
        slope = sim.fit_loglog_slope(pts)[0] if len(pts) > 1 else None
        summary[f"{law_name} {label}"] = dict(
            mean_ratio=float(np.mean([p[1] for p in pts])), loglog_slope=slope,
            min_ratio=min(p[1] for p in pts), max_ratio=max(p[1] for p in pts))
    _write_table(rows, out)
    return dict(table=str(out), normal_reference=2.0 * math.sqrt(2.0 / math.pi), series=summary)


@dataclass
class BERow:
    d: int
    law: str
    gamma_rule: str
    gamma_value: float
    ratio: float
    m_pairs: int


def cmd_beratio(args) -> int:
    seed = resolve_seed(args.seed)
    if args.law is None:
        series = BE_SERIES
    else:
        name = f"t{args.law.dof:g}" if args.law.family == "t" else args.law.family
        series = [(name, args.gamma_rule, args.law)]
    out = args.out or "be_ratio.csv"
    payload = _be_ratio(args.d_grid, series, args.m_pairs, args.psi, seed, out)
    _emit(payload, seed)
    return EXIT_OK


def _qq(d_grid, n, reps, psi, rule, seed, workers, out):
    alt = sim.qq_export(lambda d: mean_shift_model(d, psi), n, d_grid, rule, reps, seed,
                        workers=workers)
    null = sim.qq_export(lambda d: mean_shift_model(d, 0.0), n, d_grid, rule, reps, seed,
                         workers=workers)
    rows = [QQOut("null", r.d, r.rank, r.statistic, r.normal_quantile) for r in null]
    rows += [QQOut("alternative", r.d, r.rank, r.statistic, r.normal_quantile) for r in alt]
    _write_table(rows, out)
    return dict(table=str(out), n=n, psi=psi, bandwidth=rule.label,
                ks_bound=theory.berry_esseen_bound(n),
                null=sim.qq_summary(null), alternative=sim.qq_summary(alt))


@dataclass
class QQOut:
    model: str
    d: int
    rank: int
    statistic: float
    normal_quantile: float


def cmd_qq(args) -> int:
    seed = resolve_seed(args.seed)
    out = args.out or "qq.csv"
    _emit(_qq(args.d_grid, args.n, args.reps, args.psi, args.bandwidth, seed, args.threads, out),
          seed)
    return EXIT_OK


def _load_config(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"{path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigInvalid("config file must hold a JSON object")
    fields = {f.name for f in sim.dataclasses.fields(sim.SweepConfig)}
    unknown = set(doc) - fields
    if unknown:
        raise ConfigInvalid(f"unknown config keys: {', '.join(sorted(unknown))}")
    return doc


def cmd_sweep(args) -> int:
    file_cfg = _load_config(args.config) if args.config else {}
    preset = args.preset or file_cfg.get("preset") or ("custom" if "d_grid" in file_cfg else None)
    seed = resolve_seed(args.seed, file_cfg.get("master_seed"))
    if preset is None:
        raise UsageError("sweep needs --preset, or a --config holding a preset or a d_grid")
    if preset == "be-ratio":
        d_grid = args.d_grid or file_cfg.get("d_grid") or [40, 100, 200, 400, 700, 1000]
        payload = _be_ratio(d_grid, BE_SERIES, args.reps or file_cfg.get("reps", 1000), 2.5, seed,
                            args.out or "be_ratio.csv")
    elif preset == "ratio-curve":
        d_grid = args.d_grid or file_cfg.get("d_grid") or [40, 100, 200, 400, 700, 1000]
        rules = [BandwidthRule.parse(r) for r in
                 file_cfg.get("bandwidth_rules", ["d^0.5", "d^0.75", "d^1"])]
        n_large = args.reps or file_cfg.get("reps", 4_000_000)
        recs = sim.ratio_curve(lambda d: mean_shift_model(d, 1.0), rules, d_grid, n_large, seed)
        out = args.out or "ratio_curve.csv"
        _write_table(recs, out)
        slopes = {r.label: sim.fit_loglog_slope([(x.d, x.ratio) for x in recs
                                                 if x.gamma_rule == r.label])[0] for r in rules}
        payload = dict(table=str(out), loglog_slope=slopes)
    elif preset == "qq":
        d_grid = args.d_grid or file_cfg.get("d_grid") or [50, 100, 200]
        payload = _qq(d_grid, 50, args.reps or file_cfg.get("reps", 1000), 2.5,
                      BandwidthRule.parse("d^0.75"), seed, args.threads,
                      args.out or "qq.csv")
    else:
        kw = {k: v for k, v in file_cfg.items() if k not in ("preset", "master_seed")}
        if args.d_grid:
            kw["d_grid"] = args.d_grid
        if args.reps:
            kw["reps"] = args.reps
        if args.null:
            kw["null"] = True
        kw.update(master_seed=seed, workers=args.threads)
        if preset in sim.POWER_PRESETS:
            cfg = sim.preset_config(preset, **kw)
        elif preset == "custom":
            cfg = sim.SweepConfig(**kw)
        else:
            raise UsageError(f"unknown preset {preset!r}")
        records, summary = sim.run_sweep(cfg)
        out = args.out or f"sweep_{preset}.csv"
        _write_table(records, out)
        payload = dict(table=str(out), summary=summary)
    _emit(payload, seed)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mmdhd", description="Linear-time MMD two-sample test in high dimension.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--seed", type=int, default=None,
                        help="master seed (default: $MMDHD_SEED, else 0)")
        return sp

    t = common(sub.add_parser("test", help="run the linear-time test on two CSV samples"))
    t.add_argument("--x", required=True)
    t.add_argument("--y", required=True)
    t.add_argument("--alpha", type=float, default=0.05)
    t.add_argument("--bandwidth", type=_rule, default=BandwidthRule.median())
    t.add_argument("--kernel", choices=["gaussian", "laplace", "linear"], default="gaussian")
    t.add_argument("--out")
    t.set_defaults(func=cmd_test)

    pr = common(sub.add_parser("predict", help="closed-form power prediction"))
    pr.add_argument("--n", type=int, required=True)
    pr.add_argument("--d", type=int, required=True)
    pr.add_argument("--sigma", type=float, default=1.0)
    pr.add_argument("--delta-norm", type=float, required=True)
    pr.add_argument("--alpha", type=float, default=0.05)
    pr.add_argument("--gamma", type=float, help="bandwidth, only used for the regime flag "
                    "and the leading-order moments (default sqrt(d))")
    pr.add_argument("--out")
    pr.set_defaults(func=cmd_predict)

    sw = common(sub.add_parser("sweep", help="power-vs-dimension sweeps and study presets"))
    sw.add_argument("--preset", choices=list(sim.POWER_PRESETS)
                    + ["be-ratio", "ratio-curve", "qq", "custom"])
    sw.add_argument("--config", help="JSON file with SweepConfig fields")
    sw.add_argument("--out", help="CSV destination for the record table")
    sw.add_argument("--threads", type=int, default=1)
    sw.add_argument("--reps", type=int, help="repetitions (pairs for be-ratio, "
                    "sample size for ratio-curve)")
    sw.add_argument("--d-grid", type=_int_list)
    sw.add_argument("--null", action="store_true", help="force delta = 0")
    sw.set_defaults(func=cmd_sweep)

    v = common(sub.add_parser("verify", help="run oracle suites"))
    v.add_argument("--suite", choices=list(verify.SUITES) + ["all"], default="all")
    v.add_argument("--verbose", action="store_true", help="list passing checks too")
    v.add_argument("--out")
    v.set_defaults(func=cmd_verify)

    b = common(sub.add_parser("beratio", help="empirical Berry-Esseen ratio vs dimension"))
    b.add_argument("--d-grid", type=_int_list, default=[40, 100, 200, 400, 700, 1000])
    b.add_argument("--m-pairs", type=int, default=1000)
    b.add_argument("--law", type=_law, help="coordinate law (normal, uniform, t4, ...); "
                   "default runs the normal and t4 series")
    b.add_argument("--gamma-rule", default="d^0.75")
    b.add_argument("--psi", type=float, default=2.5)
    b.add_argument("--out")
    b.set_defaults(func=cmd_beratio)

    q = common(sub.add_parser("qq", help="QQ table of the standardised statistic"))
    q.add_argument("--n", type=int, default=50)
    q.add_argument("--d-grid", type=_int_list, default=[50, 100, 200])
    q.add_argument("--reps", type=int, default=1000)
    q.add_argument("--psi", type=float, default=2.5)
    q.add_argument("--bandwidth", type=_rule, default=BandwidthRule.parse("d^0.75"))
    q.add_argument("--threads", type=int, default=1)
    q.add_argument("--out")
    q.set_defaults(func=cmd_qq)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if hasattr(args, "alpha") and not 0 < args.alpha < 1:
            raise UsageError("--alpha must lie in (0, 1)")
        return args.func(args)
    except UsageError as exc:
        print(str(exc).rstrip(), file=sys.stderr)
        return EXIT_USAGE
    except (MMDError, OSError) as exc:
        print(f"mmdhd: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
