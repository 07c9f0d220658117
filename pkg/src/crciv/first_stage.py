"""First-stage conditional distribution of the basic endogenous variable.

Two estimators of ``F(x | z)`` are provided:

* :class:`RearrangedCdf`, built from a grid of linear quantile regressions
  and the rearrangement ``F(x|z) = mean_j 1{Q(s_j|z) <= x}``;
* :class:`EmpiricalCdf`, the within-cell empirical CDF for discrete ``Z``.

Quantile regressions are solved exactly with a vertex-descent (simplex type)
method on the weighted check loss, warm-started along the quantile grid.
"""
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.optimize import linprog

from .exceptions import ConvergenceError, EstimationError


def check_loss(u, tau, weights=None):
    """Sum of ``rho_tau(u) = u * (tau - 1{u < 0})``."""
    u = np.asarray(u, dtype=float)
    val = u * (tau - (u < 0))
    if weights is not None:
        val = val * weights
    return float(np.sum(val))


def _rho(u, tau):
    return u * (tau - (u < 0))


class QuantileSolver:
    """Exact weighted linear quantile regression for one design.

    Duplicate rows of ``[X, y]`` are merged into frequency weights, which keeps
    bootstrap resamples non-degenerate. The solver walks between vertices
    (fits interpolating ``p`` observations), always along a descent edge, so it
    cannot cycle; the final vertex is certified by dual feasibility.

    Parameters
    ----------
    X : (n, p) array
        Design including the intercept column.
    y : (n,) array
    max_iter : int
        Pivot cap per quantile level.
    """

    def __init__(self, X, y, max_iter=10000):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if X.ndim != 2 or X.shape[0] != y.size:
            raise EstimationError("design and response sizes differ", module="first_stage")
        rows, inv, counts = np.unique(np.column_stack([X, y]), axis=0,
                                      return_inverse=True, return_counts=True)
        self.X = rows[:, :-1]
        self.y = rows[:, -1]
        self.w = counts.astype(float)
        self.n, self.p = self.X.shape
        if self.n < self.p or np.linalg.matrix_rank(self.X) < self.p:
            raise EstimationError("quantile regression design is rank deficient",
                                  module="first_stage")
        self.max_iter = max_iter
        self._scale_y = max(1.0, float(np.max(np.abs(self.y))))
        self._scale_x = max(1.0, float(np.max(np.abs(self.X))))
        self.basis = self._initial_basis()
        self.pivots = 0
        self.fallbacks = 0

    def _initial_basis(self):
        _, _, piv = scipy.linalg.qr(self.X.T, mode="economic", pivoting=True)
        return np.sort(piv[: self.p])

    def fit(self, tau):
        """Return the coefficient vector minimizing the check loss at ``tau``."""
        if not 0.0 < tau < 1.0:
            raise EstimationError(f"quantile level must lie in (0, 1), got {tau}",
                                  module="first_stage")
        X, y, w, p = self.X, self.y, self.w, self.p
        h = self.basis.copy()
        in_basis = np.zeros(self.n, dtype=bool)
        zero_tol = 1e-11 * self._scale_y * self._scale_x
        edge_tol = 1e-10 * max(1.0, float(w.max()))
        b = gap = None
        for _ in range(self.max_iter):
            in_basis[:] = False
            in_basis[h] = True
            try:
                hinv = np.linalg.inv(X[h])
            except np.linalg.LinAlgError:
                h = self._initial_basis()
                continue
            b = hinv @ y[h]
            r = y - X @ b
            zero = (np.abs(r) <= zero_tol) & ~in_basis
            free = ~zero & ~in_basis
            psi = np.where(free, w * (tau - (r < 0)), 0.0)
            a = hinv.T @ (X.T @ psi)
            d_plus = -a + w[h] * (1.0 - tau)
            d_minus = a + w[h] * tau
            if zero.any():
                C = X[zero] @ hinv
                wz = w[zero][:, None]
                d_plus = d_plus + np.sum(wz * _rho(-C, tau), axis=0)
                d_minus = d_minus + np.sum(wz * _rho(C, tau), axis=0)
            k_plus, k_minus = int(np.argmin(d_plus)), int(np.argmin(d_minus))
            if d_plus[k_plus] <= d_minus[k_minus]:
                k, sigma, slope = k_plus, 1.0, d_plus[k_plus]
            else:
                k, sigma, slope = k_minus, -1.0, d_minus[k_minus]
            gap = -slope
            if slope >= -edge_tol:
                self.basis = h
                if zero.any() and not self._dual_feasible(b, r, zero, in_basis, tau):
                    return self._fallback(tau)
                return b
            c = sigma * (X @ hinv[:, k])
            with np.errstate(divide="ignore", invalid="ignore"):
                t = r / c
            cand = np.flatnonzero(free & (t > 0) & np.isfinite(t))
            if cand.size == 0:
                return self._fallback(tau)
            order = cand[np.argsort(t[cand], kind="stable")]
            cum = slope + np.cumsum(w[order] * np.abs(c[order]))
            m = int(np.searchsorted(cum >= 0, True))
            if m >= order.size:
                return self._fallback(tau)
            h = h.copy()
            h[k] = order[m]
            self.pivots += 1
        raise ConvergenceError(
            f"quantile regression did not converge at tau={tau} within "
            f"{self.max_iter} pivots", last_iterate=b, gap=gap)

    def _dual_feasible(self, b, r, zero, in_basis, tau):
        # Degenerate vertex: seek multipliers on all zero-residual points.
        X, w = self.X, self.w
        active = zero | in_basis
        free = ~active
        g = X[free].T @ (w[free] * (tau - (r[free] < 0)))
        Xa, wa = X[active], w[active]
        res = linprog(np.zeros(Xa.shape[0]), A_eq=Xa.T, b_eq=-g,
                      bounds=list(zip((tau - 1.0) * wa, tau * wa)), method="highs")
        return res.status == 0

    def _fallback(self, tau):
        self.fallbacks += 1
        return solve_lp(self.X, self.y, tau, self.w)


def solve_lp(X, y, tau, weights=None):
    """Quantile regression as a linear program solved by HiGHS.

    Used as a fallback for degenerate vertices and as an independent oracle in
    tests.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    # variables: b (free), u+ >= 0, u- >= 0 with X b + u+ - u- = y
    cost = np.concatenate([np.zeros(p), tau * w, (1 - tau) * w])
    A = np.hstack([X, np.eye(n), -np.eye(n)])
    bounds = [(None, None)] * p + [(0, None)] * (2 * n)
    res = linprog(cost, A_eq=A, b_eq=y, bounds=bounds, method="highs")
    if res.status != 0:
        raise EstimationError(f"linear program failed: {res.message}", module="first_stage")
    return res.x[:p]


def _qr_design(data):
    return np.column_stack([np.ones(data.n), data.z])


def fit_quantile_regression(data, tau):
    """Linear quantile regression of ``x`` on ``(1, z1, z2)`` at level ``tau``."""
    return QuantileSolver(_qr_design(data), data.x).fit(tau)


def quantile_grid(J):
    """Equally spaced levels ``j / (J + 1)``, ``j = 1..J``."""
    if J < 2:
        raise EstimationError("quantile grid needs at least two levels", module="first_stage")
    return np.arange(1, J + 1) / (J + 1.0)


@dataclass(frozen=True, eq=False)
class QuantileProcess:
    """Coefficients ``pi(s_j)`` of ``Q(s_j | z) = (1, z') pi(s_j)`` on a grid.

    ``coeffs`` has shape ``(J, 1 + d_z)``.
    """

    grid: np.ndarray
    coeffs: np.ndarray
    names: tuple = ()

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        coeffs = np.atleast_2d(np.asarray(self.coeffs, dtype=float))
        if grid.size < 2 or np.any(np.diff(grid) <= 0) or grid[0] <= 0 or grid[-1] >= 1:
            raise EstimationError("grid must be strictly increasing inside (0, 1) "
                                  "with at least two levels", module="first_stage")
        if coeffs.shape[0] != grid.size or not np.all(np.isfinite(coeffs)):
            raise EstimationError("coefficients must be finite, one row per level",
                                  module="first_stage")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def J(self):
        return self.grid.size

    def quantiles(self, z):
        """Fitted ``Q(s_j | z)`` for covariate rows ``z``; shape ``(m, J)``."""
        z = np.atleast_2d(np.asarray(z, dtype=float))
        return self.coeffs[:, 0] + z @ self.coeffs[:, 1:].T


def fit_quantile_process(data, J=1999, grid=None):
    """Fit the linear quantile regression at every grid level.

    Fits run in grid order, each warm-started from the previous vertex.
    """
    grid = quantile_grid(J) if grid is None else np.asarray(grid, dtype=float)
    solver = QuantileSolver(_qr_design(data), data.x)
    coeffs = np.empty((grid.size, solver.p))
    for j, tau in enumerate(grid):
        try:
            coeffs[j] = solver.fit(tau)
        except EstimationError as exc:
            raise type(exc)(f"at quantile level {tau}: {exc}") from exc
    names = ("const",) + tuple(data.z1_names) + tuple(data.z2_names)
    return QuantileProcess(grid, coeffs, names)


def rearranged_cdf(process, x, z):
    """``(1/J) * #{j : Q(s_j | z) <= x}``; nondecreasing in ``x`` for any process."""
    q = process.quantiles(z)
    x = np.asarray(x, dtype=float).reshape(-1, 1)
    out = np.mean(q <= x, axis=1)
    return float(out[0]) if out.size == 1 else out


class RearrangedCdf:
    """Conditional CDF from a quantile process via rearrangement."""

    kind = "qr"

    def __init__(self, process):
        self.process = process

    def evaluate(self, x, z):
        return rearranged_cdf(self.process, x, z)

    __call__ = evaluate

    def ranks(self, data, chunk=2000):
        q_rows = []
        for start in range(0, data.n, chunk):
            sl = slice(start, start + chunk)
            q = self.process.quantiles(data.z[sl])
            q_rows.append(np.mean(q <= data.x[sl, None], axis=1))
        return np.concatenate(q_rows)


class EmpiricalCdf:
    """Within-cell empirical CDF ``#{X_i <= x, Z_i = z} / #{Z_i = z}``."""

    kind = "ecdf"

    def __init__(self, data):
        self._cells, inv = np.unique(data.z, axis=0, return_inverse=True)
        inv = inv.ravel()
        self._inverse = inv
        self._lookup = {(row + 0.0).tobytes(): c for c, row in enumerate(self._cells)}
        self._sorted = [np.sort(data.x[inv == c]) for c in range(len(self._cells))]

    def _cell(self, zrow):
        c = self._lookup.get((np.ascontiguousarray(zrow, dtype=float) + 0.0).tobytes())
        if c is None:
            raise EstimationError(f"empty covariate cell z={list(zrow)}",
                                  module="first_stage")
        return c

    def evaluate(self, x, z):
        z = np.atleast_2d(np.asarray(z, dtype=float))
        x = np.atleast_1d(np.asarray(x, dtype=float)).ravel()
        m = max(z.shape[0], x.size)
        z = np.broadcast_to(z, (m, z.shape[1]))
        x = np.broadcast_to(x, (m,))
        cells = np.array([self._cell(zi) for zi in z])
        out = np.empty(m)
        for c in np.unique(cells):
            mask = cells == c
            s = self._sorted[c]
            out[mask] = np.searchsorted(s, x[mask], side="right") / s.size
        return float(out[0]) if out.size == 1 else out

    __call__ = evaluate

    def ranks(self, data):
        out = np.empty(data.n)
        for c, s in enumerate(self._sorted):
            mask = self._inverse == c
            out[mask] = np.searchsorted(s, data.x[mask], side="right") / s.size
        return out


def empirical_cdf(data, x, z):
    return EmpiricalCdf(data).evaluate(x, z)


def fit_conditional_cdf(data, method="ecdf", J=1999):
    """Build the first-stage CDF estimator named by ``method`` (``ecdf``/``qr``)."""
    if method == "ecdf":
        return EmpiricalCdf(data)
    if method == "qr":
        return RearrangedCdf(fit_quantile_process(data, J))
    raise EstimationError(f"unknown first-stage method {method!r}", module="first_stage")


def estimate_ranks(data, cdf):
    """Conditional ranks ``R_i = F(X_i | Z_i)``, each in ``[0, 1]``."""
    return np.clip(cdf.ranks(data), 0.0, 1.0)
