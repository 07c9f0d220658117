"""Command line entry point: ``crciv estimate | simulate | first-stage``."""
import argparse
import csv
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .baselines import OlsPipeline, TslsPipeline
from .dataset import DesignSpec, load_csv
from .estimator import CrcPipeline, EffectQuery, att, effect
from .exceptions import ConfigurationError, CrcError
from .first_stage import fit_quantile_process, quantile_grid
from .inference import bootstrap, normal_quantile
from .quadrature import KernelSpec, RSet
from .simulation import (GRID_BANDWIDTHS, GRID_GAMMAS, GRID_SIZES, CrcSettings,
                         DgpSpec, run_study)


@dataclass
class RunConfig:
    subcommand: str = "estimate"
    data: str = None
    y: str = None
    x: str = None
    z1: list = field(default_factory=list)
    z2: list = field(default_factory=list)
    derived: str = ""
    method: str = "crc"
    first_stage: str = "qr"
    qr_grid: int = 1999
    boot_qr_grid: int = None
    kernel: str = "biweight"
    rset: str = None
    delta: float = 0.05
    allow_full_range: bool = False
    bandwidth: float = 0.07
    nodes: int = 2000
    scheme: str = "halton"
    bootstrap: int = 500
    alpha: float = 0.05
    seed: int = 0
    threads: int = 1
    hc: str = "HC0"
    att: list = field(default_factory=list)
    effect: list = field(default_factory=list)
    output: str = None
    csv: str = None
    per_node: str = None
    # simulate only
    paper_tables: bool = False
    gamma: float = 0.4
    n: list = field(default_factory=lambda: [1000])
    h: list = field(default_factory=lambda: [0.07])
    reps: int = 1000
    estimators: list = field(default_factory=lambda: ["ols", "tsls", "crc"])

    def to_dict(self):
        return asdict(self)

    @property
    def rank_set(self):
        if self.rset is None:
            return RSet.trimmed(self.delta)
        return RSet.parse(self.rset, 0.0)


SIMULATE_DEFAULTS = {"first_stage": "ecdf", "nodes": 300, "rset": "0:1",
                     "allow_full_range": True}


def validate(config, n):
    """Structural checks raise; assumption heuristics only produce warnings."""
    config.rank_set  # raises on malformed sets
    if not config.bandwidth > 0:
        raise ConfigurationError("bandwidth must be positive", module="cli")
    if config.bootstrap < 0:
        raise ConfigurationError("bootstrap draws must be >= 0", module="cli")
    if config.bootstrap == 1:
        raise ConfigurationError("bootstrap needs at least two draws", module="cli")
    if not 0 < config.alpha < 1:
        raise ConfigurationError("alpha must lie in (0, 1)", module="cli")
    if config.nodes < 1:
        raise ConfigurationError("need at least one integration node", module="cli")
    warnings = []
    rset = config.rank_set
    lo, hi = config.delta, 1.0 - config.delta
    outside = any(a < lo - 1e-12 or b > hi + 1e-12 for a, b in rset.intervals)
    if outside:
        if config.allow_full_range:
            warnings.append(
                f"rank set {rset.to_text()} extends outside the trimmed range "
                f"[{lo!r}, {hi!r}] (explicitly allowed); boundary ranks add kernel "
                "bias and first-stage tail error")
        else:
            warnings.append(
                f"rank set {rset.to_text()} is not trimmed to [{lo!r}, {hi!r}]; "
                "use a trimmed set or pass --allow-full-range")
    if config.method == "crc" and n > 1:
        h_lo, h_hi = n ** -0.5, n ** -0.25
        if not h_lo <= config.bandwidth <= h_hi:
            warnings.append(
                f"bandwidth {config.bandwidth!r} outside the heuristic range "
                f"[{h_lo:.4g}, {h_hi:.4g}] for n = {n} (undersmoothing regime)")
    if config.kernel == "uniform":
        warnings.append("uniform kernel is not twice continuously differentiable")
    return config, warnings


def _list(text, cast=str):
    if text is None:
        return None
    if isinstance(text, list):
        return [cast(v) for v in text]
    return [cast(v.strip()) for v in str(text).split(",") if v.strip()]


def build_parser():
    p = argparse.ArgumentParser(prog="crciv", description=__doc__)
    sub = p.add_subparsers(dest="subcommand", required=True)

    def data_args(sp):
        sp.add_argument("--data", help="input CSV with a header row")
        sp.add_argument("--y")
        sp.add_argument("--x")
        sp.add_argument("--z1", help="comma list of included covariates")
        sp.add_argument("--z2", help="comma list of instruments")
        sp.add_argument("--config", help="JSON config or earlier report to start from")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--threads", type=int)
        sp.add_argument("--output")

    def crc_args(sp):
        sp.add_argument("--kernel")
        sp.add_argument("--rset", help='e.g. "0.1:0.4,0.6:0.9"')
        sp.add_argument("--delta", type=float)
        sp.add_argument("--allow-full-range", action="store_true", default=None)
        sp.add_argument("--nodes", type=int)
        sp.add_argument("--scheme", choices=["halton", "grid"])

    est = sub.add_parser("estimate", help="estimate coefficients on a CSV dataset")
    data_args(est)
    crc_args(est)
    est.add_argument("--derived", help='e.g. "x^2,x*z1:urban"')
    est.add_argument("--method", choices=["crc", "ols", "tsls"])
    est.add_argument("--first-stage", choices=["qr", "ecdf"])
    est.add_argument("--qr-grid", type=int)
    est.add_argument("--boot-qr-grid", type=int)
    est.add_argument("--bandwidth", type=float)
    est.add_argument("--bootstrap", type=int)
    est.add_argument("--alpha", type=float)
    est.add_argument("--hc", choices=["HC0", "HC1"])
    est.add_argument("--att", help="comma list of treatment values")
    est.add_argument("--effect", action="append",
                     help="ape | ate:x0:x1 | ape-at-x:v (repeatable)")
    est.add_argument("--csv", help="also write coefficients as CSV")
    est.add_argument("--per-node", help="write per-node local fits as CSV")

    sim = sub.add_parser("simulate", help="Monte Carlo bias/std/mse tables")
    crc_args(sim)
    sim.add_argument("--config")
    sim.add_argument("--paper-tables", action="store_true", default=None)
    sim.add_argument("--gamma", type=float)
    sim.add_argument("--n", help="comma list of sample sizes")
    sim.add_argument("--h", help="comma list of bandwidths")
    sim.add_argument("--reps", type=int)
    sim.add_argument("--estimators", help="comma list from ols,tsls,crc")
    sim.add_argument("--seed", type=int)
    sim.add_argument("--threads", type=int)
    sim.add_argument("--output", help="output CSV (or directory with --paper-tables)")

    fs = sub.add_parser("first-stage", help="quantile-regression coefficient process")
    data_args(fs)
    fs.add_argument("--qr-grid", type=int)
    fs.add_argument("--bootstrap", type=int)
    fs.add_argument("--alpha", type=float)
    return p


_LISTS = {"z1": str, "z2": str, "att": float, "n": int, "h": float, "estimators": str}


def resolve_config(args, parser):
    """Explicit flags override a loaded config, which overrides defaults."""
    base = RunConfig().to_dict()
    if args.subcommand == "simulate":
        base.update(SIMULATE_DEFAULTS)
    if args.subcommand == "first-stage":
        base.update(qr_grid=19, bootstrap=0)
    if getattr(args, "config", None):
        with open(args.config) as fh:
            loaded = json.load(fh)
        loaded = loaded.get("config", loaded)
        base.update({k: v for k, v in loaded.items() if k in base})
    elif "CRC_SEED" in os.environ:
        base["seed"] = int(os.environ["CRC_SEED"])
    for key, value in vars(args).items():
        if key in ("config",) or value is None:
            continue
        if key == "effect":
            base[key] = list(value)
        elif key in _LISTS:
            base[key] = _list(value, _LISTS[key])
        else:
            base[key] = value
    base["subcommand"] = args.subcommand
    known = {f.name for f in fields(RunConfig)}
    cfg = RunConfig(**{k: v for k, v in base.items() if k in known})
    if cfg.subcommand in ("estimate", "first-stage"):
        for req in ("data", "y", "x"):
            if not getattr(cfg, req):
                parser.error(f"--{req} is required")
        if not cfg.z2:
            parser.error("--z2 is required")
    return cfg


def _floats(a):
    return [float(v) for v in np.ravel(a)]


def _write_json(obj, path):
    text = json.dumps(obj, indent=2, allow_nan=True)
    if path:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _pipeline(cfg, qr_grid=None):
    design = DesignSpec.parse(cfg.derived, cfg.z1)
    if cfg.method == "ols":
        return OlsPipeline(design, cfg.hc)
    if cfg.method == "tsls":
        return TslsPipeline(design, cfg.hc)
    return CrcPipeline(design=design, first_stage=cfg.first_stage,
                       qr_grid=qr_grid or cfg.qr_grid, kernel=KernelSpec(cfg.kernel),
                       rset=cfg.rank_set, bandwidth=cfg.bandwidth, n_nodes=cfg.nodes,
                       scheme=cfg.scheme)


def run_estimate(cfg):
    data = load_csv(cfg.data, cfg.y, cfg.x, cfg.z1, cfg.z2)
    cfg, warnings = validate(cfg, data.n)
    pipe = _pipeline(cfg)
    report = {"method": cfg.method, "n": data.n, "warnings": warnings}
    z1_means = data.z1.mean(axis=0) if data.d1 else np.zeros(0)
    draws = None
    z = normal_quantile(1 - cfg.alpha / 2)
    if cfg.method == "crc":
        est, cdf, ranks, design = pipe.estimate(data, keep_nodes=bool(cfg.per_node))
        coef = est.beta_r
        names = list(design.names)
        report.update(singular_node_fraction=est.singular_fraction,
                      singular_nodes=est.singular_nodes, nodes_used=est.nodes_used,
                      bandwidth=est.bandwidth, rset=est.rset.to_text())
        if cfg.bootstrap >= 2:
            boot_pipe = _pipeline(cfg, cfg.boot_qr_grid) if cfg.boot_qr_grid else pipe
            boot = bootstrap(data, boot_pipe, cfg.bootstrap, cfg.alpha, cfg.seed,
                             cfg.threads, estimate=coef)
            se, ci, draws = boot.std_errors, boot.ci, boot.draws
            report["sigma_hat"] = [_floats(r) for r in boot.sigma_hat]
            report["bootstrap"] = {"S": boot.S, "failures": len(boot.failures),
                                   "seed": boot.seed}
        else:
            se = np.full(coef.size, math.nan)
            ci = np.column_stack([se, se])
        if cfg.att:
            report["att"] = []
            for xv in cfg.att:
                a = att(design, data.y, ranks, cdf, data, xv, est.rset, est.bandwidth,
                        pipe.kernel)
                report["att"].append({"x": a.x, "beta": _floats(a.beta),
                                      "dropped_fraction": a.dropped_fraction,
                                      "bandwidth_x": a.bandwidth_x})
        if cfg.per_node:
            _write_nodes(est.per_node, names, cfg.per_node)
    else:
        fit = pipe.estimate(data)
        coef, names = fit.coefficients, list(fit.names)
        se = fit.std_errors
        ci = np.column_stack([coef - z * se, coef + z * se])
        report["se_type"] = cfg.hc
        if fit.first_stage_f is not None:
            report["first_stage_f"] = fit.first_stage_f
    report.update(names=names, coefficients=_floats(coef), se=_floats(se),
                  ci=[_floats(r) for r in ci])
    if cfg.method == "crc":
        report["beta_r"] = _floats(coef)
    if cfg.effect:
        report["effects"] = []
        spec = DesignSpec.parse(cfg.derived, cfg.z1)
        for text in cfg.effect:
            q = EffectQuery.parse(text)
            val = effect(coef, spec, q, z1_means)
            entry = {"query": text, "value": val}
            if draws is not None:
                vals = np.array([effect(d, spec, q, z1_means) for d in draws])
                s = float(np.std(vals, ddof=1))
                entry.update(se=s, ci=[val - z * s, val + z * s])
            report["effects"].append(entry)
    report["config"] = cfg.to_dict()
    _write_json(report, cfg.output)
    if cfg.csv:
        with open(cfg.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["name", "coefficient", "se", "ci_lower", "ci_upper"])
            for name, b, s, (lo, hi) in zip(names, coef, se, ci):
                w.writerow([name, repr(float(b)), repr(float(s)), repr(float(lo)),
                            repr(float(hi))])
    for msg in warnings:
        print(f"warning: {msg}", file=sys.stderr)
    return report


def _write_nodes(per_node, names, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["r", "singular", "effective_n"] + names)
        for fit in per_node:
            w.writerow([repr(fit.r), int(fit.singular), fit.effective_n]
                       + [repr(float(b)) for b in fit.beta])


def run_simulate(cfg):
    cfg, warnings = validate(cfg, 0)
    for msg in warnings:
        print(f"warning: {msg}", file=sys.stderr)
    crc = CrcSettings(KernelSpec(cfg.kernel), cfg.rank_set, cfg.nodes, cfg.scheme)
    if cfg.paper_tables:
        outdir = cfg.output or "."
        os.makedirs(outdir, exist_ok=True)
        paths = []
        for g in GRID_GAMMAS:
            rep = run_study(DgpSpec(gamma=g), GRID_SIZES, GRID_BANDWIDTHS,
                            reps=cfg.reps, seed=cfg.seed, crc=crc, threads=cfg.threads)
            long_path = os.path.join(outdir, f"study_gamma{g!r}.csv")
            table_path = os.path.join(outdir, f"table_gamma{g!r}.csv")
            rep.to_csv(long_path)
            rep.to_table_csv(table_path)
            paths += [long_path, table_path]
        with open(os.path.join(outdir, "config.json"), "w") as fh:
            json.dump(cfg.to_dict(), fh, indent=2)
        for p in paths:
            print(p)
        return paths
    rep = run_study(DgpSpec(gamma=cfg.gamma), cfg.n, cfg.h, cfg.estimators,
                    reps=cfg.reps, seed=cfg.seed, crc=crc, threads=cfg.threads)
    out = cfg.output or "study.csv"
    rep.to_csv(out)
    print(out)
    return out


class _ProcessPipeline:
    def __init__(self, grid):
        self.grid = grid

    def __call__(self, data):
        return fit_quantile_process(data, grid=self.grid).coeffs.ravel()


def run_first_stage(cfg):
    data = load_csv(cfg.data, cfg.y, cfg.x, cfg.z1, cfg.z2)
    grid = quantile_grid(cfg.qr_grid)
    proc = fit_quantile_process(data, grid=grid)
    band = None
    if cfg.bootstrap >= 2:
        boot = bootstrap(data, _ProcessPipeline(grid), cfg.bootstrap, cfg.alpha, cfg.seed,
                         cfg.threads, estimate=proc.coeffs.ravel())
        band = boot.ci.reshape(proc.J, -1, 2)
    out = cfg.output or "first_stage.csv"
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        header = ["tau"]
        for name in proc.names:
            header += [name] + ([f"{name}_lo", f"{name}_hi"] if band is not None else [])
        w.writerow(header)
        for j, tau in enumerate(proc.grid):
            line = [repr(float(tau))]
            for k, b in enumerate(proc.coeffs[j]):
                line.append(repr(float(b)))
                if band is not None:
                    line += [repr(float(band[j, k, 0])), repr(float(band[j, k, 1]))]
            w.writerow(line)
    print(out)
    return proc


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    cfg = resolve_config(args, parser)
    try:
        if cfg.subcommand == "estimate":
            run_estimate(cfg)
        elif cfg.subcommand == "simulate":
            run_simulate(cfg)
        else:
            run_first_stage(cfg)
    except CrcError as exc:
        print(json.dumps({"error": exc.to_dict()}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
