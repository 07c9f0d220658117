"""OLS and two-stage least squares with heteroskedasticity-robust covariance."""
from dataclasses import dataclass, field

import numpy as np

from .dataset import DesignSpec, build_design
from .exceptions import ConfigurationError, EstimationError


@dataclass(frozen=True, eq=False)
class LinearFit:
    coefficients: np.ndarray
    robust_cov: np.ndarray
    n: int
    names: tuple = ()
    first_stage_f: float = None

    @property
    def std_errors(self):
        return np.sqrt(np.diag(self.robust_cov))


def _solve(a, b, what):
    if np.linalg.matrix_rank(a) < a.shape[0]:
        raise EstimationError(f"{what} is rank deficient", module="baselines")
    return np.linalg.solve(a, b)


def _sandwich(x_hat, resid, bread_inv, hc):
    meat = (x_hat * resid[:, None] ** 2).T @ x_hat
    cov = bread_inv @ meat @ bread_inv
    if hc == "HC1":
        n, k = x_hat.shape
        cov *= n / (n - k)
    elif hc != "HC0":
        raise ConfigurationError(f"unknown covariance type {hc!r}", module="baselines")
    return (cov + cov.T) / 2


def ols(design, y, hc="HC0"):
    """Least squares of ``y`` on the design with a sandwich covariance."""
    w = np.asarray(getattr(design, "w", design), dtype=float)
    y = np.asarray(y, dtype=float)
    wtw = w.T @ w
    beta = _solve(wtw, w.T @ y, "design")
    bread = np.linalg.inv(wtw)
    cov = _sandwich(w, y - w @ beta, bread, hc)
    return LinearFit(beta, cov, y.size, tuple(getattr(design, "names", ())))


def instrument_matrix(data):
    """Default instrument set ``[1, z2, z1]``."""
    return np.column_stack([np.ones(data.n), data.z2, data.z1])


def first_stage_f(x, instruments, included):
    """F statistic for the excluded instruments in the regression of ``x``.

    ``included`` is a boolean mask of instrument columns that also enter the
    second stage.
    """
    x = np.asarray(x, dtype=float)
    n, k = instruments.shape
    q = int(np.count_nonzero(~included))
    if q == 0 or n <= k:
        return float("nan")

    def rss(m):
        if m.shape[1] == 0:
            return float(x @ x)
        coef, *_ = np.linalg.lstsq(m, x, rcond=None)
        e = x - m @ coef
        return float(e @ e)

    rss_u = rss(instruments)
    rss_r = rss(instruments[:, included])
    return ((rss_r - rss_u) / q) / (rss_u / (n - k))


def tsls(design, y, instruments, hc="HC0", endogenous=1):
    """Two-stage least squares; robust covariance uses the projected design.

    ``endogenous`` names the design column whose first-stage F statistic is
    reported (the basic endogenous variable by default).
    """
    w = np.asarray(getattr(design, "w", design), dtype=float)
    z = np.asarray(instruments, dtype=float)
    y = np.asarray(y, dtype=float)
    if z.shape[1] < w.shape[1]:
        raise ConfigurationError(
            f"under-identified: {z.shape[1]} instruments for {w.shape[1]} regressors",
            module="baselines")
    ztz = z.T @ z
    coef_fs = _solve(ztz, z.T @ w, "instrument matrix")
    w_hat = z @ coef_fs
    bread_mat = w_hat.T @ w
    beta = _solve(bread_mat, w_hat.T @ y, "projected design")
    bread = np.linalg.inv(w_hat.T @ w_hat)
    cov = _sandwich(w_hat, y - w @ beta, bread, hc)
    included = np.array([any(np.array_equal(z[:, j], w[:, k]) for k in range(w.shape[1]))
                         for j in range(z.shape[1])])
    f = first_stage_f(w[:, endogenous], z, included)
    return LinearFit(beta, cov, y.size, tuple(getattr(design, "names", ())), f)


@dataclass(frozen=True)
class OlsPipeline:
    design: DesignSpec = field(default_factory=DesignSpec)
    hc: str = "HC0"

    def estimate(self, data):
        return ols(build_design(data, self.design), data.y, self.hc)

    def __call__(self, data):
        return self.estimate(data).coefficients


@dataclass(frozen=True)
class TslsPipeline:
    design: DesignSpec = field(default_factory=DesignSpec)
    hc: str = "HC0"

    def estimate(self, data):
        return tsls(build_design(data, self.design), data.y, instrument_matrix(data), self.hc)

    def __call__(self, data):
        return self.estimate(data).coefficients
