"""Monte Carlo designs and bias / std / mse tables.

The default :class:`DgpSpec` is the binary-instrument design

    X = pi Z + gamma Z V + V,      Y = B0 + B1 X,
    B_j = rho_j V + eps_j,          eps_j ~ N(mu_j, sigma_j^2),

with ``V ~ N(0.1, 0.4^2)`` and ``Z ~ Bernoulli(1/2)``. Random numbers come
from numpy's PCG64 bit generator, whose output (and that of
``Generator.standard_normal``) is stable across platforms; every replication
owns a stream keyed by ``(seed, N, replication)``.
"""
import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import norm

from .baselines import instrument_matrix, ols, tsls
from .dataset import Dataset, build_design
from .estimator import estimate_beta_R
from .exceptions import ConfigurationError, CrcError
from .first_stage import EmpiricalCdf, estimate_ranks
from .quadrature import KernelSpec, RSet, nodes_over

GRID_BANDWIDTHS = (0.01, 0.03, 0.05, 0.07, 0.09, 0.11, 0.13, 0.15)
GRID_SIZES = (500, 1000)
GRID_GAMMAS = (0.0, 0.4)


@dataclass(frozen=True)
class DgpSpec:
    pi: float = 0.2
    gamma: float = 0.4
    v_mean: float = 0.1
    v_sd: float = 0.4
    rho0: float = 0.3
    mu0: float = 0.2
    sigma0: float = 0.2
    rho1: float = 0.7
    mu1: float = 0.45
    sigma1: float = 1.0
    z_prob: float = 0.5

    def __post_init__(self):
        if min(self.v_sd, self.sigma0, self.sigma1) <= 0:
            raise ConfigurationError("standard deviations must be positive",
                                     module="simulation")
        if not 0 < self.z_prob < 1:
            raise ConfigurationError("z_prob must lie in (0, 1)", module="simulation")

    @property
    def true_mean(self):
        """``(E B0, E B1)``."""
        return np.array([self.rho0 * self.v_mean + self.mu0,
                         self.rho1 * self.v_mean + self.mu1])


def replication_rng(seed, *key):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


def generate(spec, n, rng):
    """Draw ``n`` observations; returns the dataset and the latent ``(B0, B1)``."""
    z = (rng.random(n) < spec.z_prob).astype(float)
    v = spec.v_mean + spec.v_sd * rng.standard_normal(n)
    eps0 = spec.mu0 + spec.sigma0 * rng.standard_normal(n)
    eps1 = spec.mu1 + spec.sigma1 * rng.standard_normal(n)
    b = np.column_stack([spec.rho0 * v + eps0, spec.rho1 * v + eps1])
    x = spec.pi * z + spec.gamma * z * v + v
    y = b[:, 0] + b[:, 1] * x
    return Dataset(y, x, None, z[:, None], z2_names=("z",)), b


def generate_application_like(n, rng, n_covariates=22, strength=1.5):
    """Binary instrument whose effect on ``x`` fades with the first-stage rank.

    ``x = z1 c - strength * z2 * (1 - U)^2 + V`` with ``U = Phi(V)``, so the
    instrument shifts low-rank units most and leaves top-rank units almost
    untouched. Outcome coefficients load on ``V``; the idiosyncratic noise
    sits mostly in the intercept so that precision across rank sets is
    driven by instrument strength rather than by the scale of ``x``.
    """
    z1 = rng.standard_normal((n, n_covariates))
    z1[:, : n_covariates // 2] = (z1[:, : n_covariates // 2] > 0).astype(float)
    z2 = (rng.random(n) < 0.5).astype(float)
    v = rng.standard_normal(n)
    u = norm.cdf(v)
    c = np.linspace(-0.3, 0.3, n_covariates)
    x = z1 @ c - strength * z2 * (1.0 - u) ** 2 + v
    b0 = 0.3 * v + rng.normal(0.2, 0.5, n)
    b1 = 0.5 * v + rng.normal(-0.5, 0.1, n)
    g = np.linspace(0.1, -0.1, n_covariates)
    y = b0 + b1 * x + z1 @ g
    names = tuple(f"c{j + 1}" for j in range(n_covariates))
    return Dataset(y, x, z1, z2[:, None], z1_names=names, z2_names=("z",))


@dataclass(frozen=True)
class CrcSettings:
    kernel: KernelSpec = field(default_factory=KernelSpec)
    rset: RSet = field(default_factory=lambda: RSet(((0.0, 1.0),)))
    n_nodes: int = 300
    scheme: str = "halton"


def _replication(args):
    spec, n, rep, seed, bandwidths, estimators, crc = args
    data, _ = generate(spec, n, replication_rng(seed, n, rep))
    design = build_design(data)
    out = {}
    if "ols" in estimators:
        out[("OLS", None)] = _guard(lambda: ols(design, data.y).coefficients)
    if "tsls" in estimators:
        out[("TSLS", None)] = _guard(
            lambda: tsls(design, data.y, instrument_matrix(data)).coefficients)
    if "crc" in estimators:
        ranks = estimate_ranks(data, EmpiricalCdf(data))
        nodes = nodes_over(crc.rset, crc.n_nodes, crc.scheme)
        for h in bandwidths:
            out[("CRC", h)] = _guard(lambda h=h: estimate_beta_R(
                design, data.y, ranks, crc.rset, h, crc.kernel, nodes).beta_r)
    return rep, out


def _guard(fn):
    try:
        return fn()
    except (CrcError, np.linalg.LinAlgError) as exc:
        return exc


@dataclass(frozen=True, eq=False)
class StudyReport:
    """One row per (estimator, bandwidth, N, component).

    ``mse`` averages squared deviations from the true mean and ``std`` uses
    the ``reps - 1`` divisor, so ``mse = bias^2 + std^2 (reps - 1) / reps``.
    """

    rows: list
    spec: DgpSpec
    reps: int
    seed: int

    COLUMNS = ("estimator", "component", "N", "h", "bias", "std", "mse", "reps",
               "failures", "sum_dev", "sum_sq_dev", "gamma", "seed")

    def cell(self, estimator, n, h=None, component=1):
        for row in self.rows:
            if (row["estimator"] == estimator and row["N"] == n and row["h"] == h
                    and row["component"] == component):
                return row
        raise KeyError((estimator, n, h, component))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=self.COLUMNS)
            writer.writeheader()
            for row in self.rows:
                writer.writerow({k: _fmt(row[k]) for k in self.COLUMNS})

    def to_table_csv(self, path):
        """Wide layout: one row per estimator and component, bias/std/mse per N."""
        sizes = sorted({row["N"] for row in self.rows})
        keys = []
        for row in self.rows:
            k = (row["component"], row["estimator"], row["h"])
            if k not in keys:
                keys.append(k)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            header = ["component", "estimator"]
            for n in sizes:
                header += [f"N{n}_bias", f"N{n}_std", f"N{n}_mse"]
            writer.writerow(header)
            for comp, est, h in keys:
                label = est if h is None else f"h = {h!r}"
                line = [f"E(B{comp})", label]
                for n in sizes:
                    row = self.cell(est, n, h, comp)
                    line += [_fmt(row["bias"]), _fmt(row["std"]), _fmt(row["mse"])]
                writer.writerow(line)


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def summarize(estimates, truth):
    """bias, std (ddof 1), mse and the raw sums for an ``(reps, d)`` array."""
    estimates = np.asarray(estimates, dtype=float)
    reps = estimates.shape[0]
    dev = estimates - truth
    out = []
    for j in range(estimates.shape[1]):
        s1 = math.fsum(dev[:, j])
        s2 = math.fsum(dev[:, j] ** 2)
        bias = s1 / reps
        var = (s2 - reps * bias ** 2) / (reps - 1) if reps > 1 else float("nan")
        out.append(dict(bias=bias, std=math.sqrt(max(var, 0.0)), mse=s2 / reps,
                        sum_dev=s1, sum_sq_dev=s2))
    return out


def run_study(spec, sizes=GRID_SIZES, bandwidths=GRID_BANDWIDTHS,
              estimators=("ols", "tsls", "crc"), reps=1000, seed=0,
              crc=None, threads=1):
    """Repeat generate -> estimate ``reps`` times for every sample size.

    All estimators and bandwidths within a replication share the same sample.
    """
    if reps < 2:
        raise ConfigurationError("need at least two replications", module="simulation")
    crc = crc or CrcSettings()
    estimators = tuple(e.lower() for e in estimators)
    bandwidths = tuple(float(h) for h in bandwidths)
    truth = spec.true_mean
    rows = []
    for n in sizes:
        jobs = [(spec, int(n), rep, int(seed), bandwidths, estimators, crc)
                for rep in range(reps)]
        if threads > 1:
            with ProcessPoolExecutor(max_workers=threads) as ex:
                results = list(ex.map(_replication, jobs, chunksize=max(1, reps // (8 * threads))))
        else:
            results = [_replication(j) for j in jobs]
        results.sort(key=lambda t: t[0])
        cells = list(results[0][1].keys())
        for key in cells:
            values = [res[key] for _, res in results]
            good = [v for v in values if not isinstance(v, Exception)]
            failures = len(values) - len(good)
            stats = summarize(good, truth) if len(good) >= 2 else [
                dict(bias=None, std=None, mse=None, sum_dev=None, sum_sq_dev=None)] * 2
            for comp, st in enumerate(stats):
                rows.append(dict(estimator=key[0], component=comp, N=int(n), h=key[1],
                                 reps=len(good), failures=failures, gamma=spec.gamma,
                                 seed=int(seed), **st))
    return StudyReport(rows, spec, reps, int(seed))


def full_grid_tables(reps=1000, seed=0, threads=1, crc=None):
    """Both designs (``gamma`` = 0 and 0.4) on the full size/bandwidth grid."""
    out = {}
    for g in GRID_GAMMAS:
        spec = DgpSpec(gamma=g)
        out[g] = run_study(spec, GRID_SIZES, GRID_BANDWIDTHS, reps=reps, seed=seed,
                           crc=crc, threads=threads)
    return out


def spec_dict(spec):
    return asdict(spec)
