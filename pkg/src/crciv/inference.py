"""Nonparametric bootstrap covariance and normal confidence intervals."""
import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .exceptions import ConfigurationError, CrcError, EstimationError

MAX_FAILURE_SHARE = 0.10


def normal_quantile(p):
    """Standard normal quantile function."""
    return float(norm.ppf(p))


def draw_rng(seed, index):
    """Independent generator for bootstrap draw ``index``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def resample_indices(seed, index, n):
    return draw_rng(seed, index).integers(0, n, size=n)


def _one_draw(args):
    data, pipeline, seed, s = args
    try:
        value = np.asarray(pipeline(data.take(resample_indices(seed, s, data.n))), float)
        return s, value, None
    except (CrcError, np.linalg.LinAlgError) as exc:
        code = getattr(exc, "code", type(exc).__name__)
        return s, None, (code, str(exc))


def covariance(draws):
    """``(S - 1)^{-1} sum_s (b_s - mean)(b_s - mean)'`` with exactly rounded sums."""
    draws = np.asarray(draws, dtype=float)
    S, d = draws.shape
    mean = np.array([math.fsum(c) for c in draws.T]) / S
    dev = draws - mean
    cov = np.empty((d, d))
    for j in range(d):
        for k in range(j, d):
            cov[j, k] = cov[k, j] = math.fsum(dev[:, j] * dev[:, k]) / (S - 1)
    return cov, mean


@dataclass(frozen=True, eq=False)
class BootstrapReport:
    S: int
    estimate: np.ndarray
    sigma_hat: np.ndarray
    draw_mean: np.ndarray
    ci: np.ndarray
    alpha: float
    seed: int
    draws: np.ndarray = None
    failures: list = field(default_factory=list)

    @property
    def std_errors(self):
        return np.sqrt(np.diag(self.sigma_hat))

    @property
    def ci_width(self):
        return self.ci[:, 1] - self.ci[:, 0]


def bootstrap(data, pipeline, S=500, alpha=0.05, seed=0, threads=1, estimate=None):
    """Resample rows with replacement and rerun ``pipeline`` on each draw.

    ``pipeline`` maps a :class:`~crciv.dataset.Dataset` to a coefficient
    vector and must redo every estimation step, first stage included.
    Intervals are centered at ``estimate`` (the full-sample value, computed if
    not supplied). Draws that raise a package error are excluded and
    reported; more than 10% failures abort.
    """
    if S < 2:
        raise ConfigurationError("need at least two bootstrap draws", module="inference")
    if not 0 < alpha < 1:
        raise ConfigurationError("alpha must lie in (0, 1)", module="inference")
    seed = int(seed)
    if estimate is None:
        estimate = pipeline(data)
    estimate = np.asarray(estimate, dtype=float)
    jobs = [(data, pipeline, seed, s) for s in range(S)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(_one_draw, jobs, chunksize=max(1, S // (4 * threads))))
    else:
        results = [_one_draw(j) for j in jobs]
    results.sort(key=lambda t: t[0])
    ok = [v for _, v, err in results if err is None]
    failures = [(s, err[0], err[1]) for s, _, err in results if err is not None]
    if len(failures) > MAX_FAILURE_SHARE * S:
        census = dict(Counter(code for _, code, _ in failures))
        raise EstimationError(
            f"{len(failures)} of {S} bootstrap draws failed: {census}", module="inference")
    if len(ok) < 2:
        raise EstimationError("fewer than two successful bootstrap draws", module="inference")
    draws = np.vstack(ok)
    sigma, mean = covariance(draws)
    half = np.sqrt(np.clip(np.diag(sigma), 0.0, None)) * normal_quantile(1 - alpha / 2)
    ci = np.column_stack([estimate - half, estimate + half])
    return BootstrapReport(S, estimate, sigma, mean, ci, alpha, seed, draws, failures)
