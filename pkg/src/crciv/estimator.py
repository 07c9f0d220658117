"""Localize-then-average estimator of ``E[B | R in set]``.

For each rank ``r`` a kernel-weighted least squares fit of ``y`` on ``W`` is
computed with a pseudo-inverse,

    beta(r) = ( sum_i k_i(r) W_i W_i' )^+ ( sum_i k_i(r) W_i y_i ),

with ``k_i(r) = K((R_i - r) / h) / h``, and ``beta(r)`` is averaged over
nodes spread uniformly (in measure) over the rank set.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from .dataset import DesignSpec, Interaction, Power, build_design
from .exceptions import EstimationError, NumericalError
from .first_stage import estimate_ranks, fit_conditional_cdf
from .quadrature import EQUIVALENT_BANDWIDTH, KernelSpec, RSet, nodes_over

SINGULAR_TOL = 1e-10


def pinv(m, tol=SINGULAR_TOL):
    """Moore-Penrose inverse via SVD; singular values below ``tol * max`` are dropped.

    Accepts a stack of matrices with shape ``(..., a, b)``.
    """
    m = np.asarray(m, dtype=float)
    try:
        u, s, vt = np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD did not converge: {exc}") from exc
    smax = s.max(axis=-1, keepdims=True)
    keep = s > tol * smax
    s_inv = np.where(keep, 1.0 / np.where(keep, s, 1.0), 0.0)
    return np.swapaxes(vt, -1, -2) @ (s_inv[..., None] * np.swapaxes(u, -1, -2))


@dataclass(frozen=True, eq=False)
class LocalFit:
    r: float
    beta: np.ndarray
    gram: np.ndarray
    singular: bool
    effective_n: int


def _local_fits(w, y, ranks, r_values, h, kernel):
    """Local fits at each ``r`` using only observations inside the window."""
    n, d = w.shape
    order = np.argsort(ranks, kind="stable")
    rs, ws, ys = ranks[order], w[order], y[order]
    r_values = np.asarray(r_values, dtype=float)
    m = r_values.size
    lo = np.searchsorted(rs, r_values - h, side="left")
    hi = np.searchsorted(rs, r_values + h, side="right")
    grams = np.zeros((m, d, d))
    rhs = np.zeros((m, d))
    eff = np.zeros(m, dtype=int)
    for k in range(m):
        a, b = lo[k], hi[k]
        if a == b:
            continue
        kw = kernel((rs[a:b] - r_values[k]) / h) / (h * n)
        wk = ws[a:b]
        kwk = wk.T * kw
        grams[k] = kwk @ wk
        rhs[k] = kwk @ ys[a:b]
        eff[k] = int(np.count_nonzero(kw > 0))
    # Gram matrices are symmetric PSD: eigenvalues are the singular values.
    evals, evecs = np.linalg.eigh(grams)
    s = np.abs(evals)
    smax = s.max(axis=1, keepdims=True)
    keep = s > SINGULAR_TOL * smax
    singular = ~keep.all(axis=1)
    inv_vals = np.where(keep, 1.0 / np.where(keep, evals, 1.0), 0.0)
    proj = np.einsum("mkj,mk->mj", evecs, rhs) * inv_vals
    betas = np.einsum("mij,mj->mi", evecs, proj)
    return betas, grams, singular, eff


def local_beta(design, y, ranks, r, h, kernel=None):
    """Kernel-weighted pseudo-inverse regression at a single rank ``r``."""
    if not h > 0:
        raise EstimationError("bandwidth must be positive", module="estimator")
    kernel = kernel or KernelSpec()
    w = getattr(design, "w", design)
    betas, grams, singular, eff = _local_fits(
        np.asarray(w, dtype=float), np.asarray(y, dtype=float),
        np.asarray(ranks, dtype=float), [r], h, kernel)
    return LocalFit(float(r), betas[0], grams[0], bool(singular[0]), int(eff[0]))


def fsum_mean(rows):
    """Component-wise exactly rounded mean; independent of row order."""
    rows = np.asarray(rows, dtype=float)
    return np.array([math.fsum(col) for col in rows.T]) / rows.shape[0]


@dataclass(frozen=True, eq=False)
class CrcEstimate:
    beta_r: np.ndarray
    rset: RSet
    bandwidth: float
    nodes_used: int
    singular_nodes: int
    names: tuple = ()
    per_node: list = None

    @property
    def singular_fraction(self):
        return self.singular_nodes / self.nodes_used


def estimate_beta_R(design, y, ranks, rset, h, kernel=None, nodes=None, keep_nodes=False):
    """Average of the local fits over integration nodes covering ``rset``.

    Singular local Gram matrices are pseudo-inverted and counted; if every
    node is singular the instrument carries no information on the set and an
    error is raised.
    """
    if not h > 0:
        raise EstimationError("bandwidth must be positive", module="estimator")
    kernel = kernel or KernelSpec()
    nodes = nodes if nodes is not None else nodes_over(rset, 2000)
    w = np.asarray(getattr(design, "w", design), dtype=float)
    r_values = np.asarray(getattr(nodes, "nodes", nodes), dtype=float)
    betas, grams, singular, eff = _local_fits(w, np.asarray(y, dtype=float),
                                              np.asarray(ranks, dtype=float),
                                              r_values, h, kernel)
    if singular.all():
        raise EstimationError("instrument irrelevant on R: every local fit is singular",
                              module="estimator")
    if not np.all(np.isfinite(betas)):
        raise NumericalError("non-finite local coefficients")
    per_node = None
    if keep_nodes:
        per_node = [LocalFit(float(r), b, g, bool(s), int(e))
                    for r, b, g, s, e in zip(r_values, betas, grams, singular, eff)]
    return CrcEstimate(fsum_mean(betas), rset, float(h), int(r_values.size),
                       int(singular.sum()), tuple(getattr(design, "names", ())), per_node)


def silverman_bandwidth(x, kernel=None):
    """Rule-of-thumb bandwidth on ``x``, rescaled to the kernel's canonical width."""
    x = np.asarray(x, dtype=float)
    sd = np.std(x, ddof=1)
    iqr = np.subtract(*np.percentile(x, [75, 25])) / 1.349
    spread = min(sd, iqr) if iqr > 0 else sd
    family = (kernel or KernelSpec()).family
    return 0.9 * spread * x.size ** (-0.2) * EQUIVALENT_BANDWIDTH[family]


@dataclass(frozen=True, eq=False)
class AttResult:
    x: float
    beta: np.ndarray
    dropped_fraction: float
    bandwidth_x: float


def att(design, y, ranks, cdf, data, x, rset, h, kernel=None, h_x=None):
    """Average coefficients among units with treatment ``x``.

    Each unit contributes ``beta(F(x | Z_i))`` with weight ``K((X_i - x)/h_x)``;
    units whose counterfactual rank falls outside ``rset`` are dropped.
    """
    kernel = kernel or KernelSpec()
    h_x = silverman_bandwidth(data.x, kernel) if h_x is None else h_x
    r_cf = np.asarray(cdf.evaluate(np.full(data.n, float(x)), data.z), dtype=float).ravel()
    kx = kernel((data.x - x) / h_x) / h_x
    near = kx > 0
    keep = near & rset.contains(r_cf)
    if not keep.any() or kx[keep].sum() <= 0:
        raise EstimationError(f"no observations support the treated average at x={x}",
                              module="estimator")
    dropped = 1.0 - kx[keep].sum() / kx[near].sum()
    levels, inv = np.unique(r_cf[keep], return_inverse=True)
    w = np.asarray(getattr(design, "w", design), dtype=float)
    betas, _, _, _ = _local_fits(w, np.asarray(y, dtype=float),
                                 np.asarray(ranks, dtype=float), levels, h, kernel)
    weights = kx[keep]
    beta = (weights[:, None] * betas[inv.ravel()]).sum(axis=0) / weights.sum()
    return AttResult(float(x), beta, float(dropped), float(h_x))


@dataclass(frozen=True)
class EffectQuery:
    """``kind`` is one of ``ape_mean_z1``, ``ape_at_z1``, ``ate``, ``ape_at_x``."""

    kind: str
    z1: tuple = ()
    x_from: float = 0.0
    x_to: float = 0.0
    x: float = 0.0

    @classmethod
    def parse(cls, text):
        """``ape``, ``ate:x0:x1`` or ``ape-at-x:v``."""
        parts = text.split(":")
        try:
            if parts[0] == "ape" and len(parts) == 1:
                return cls("ape_mean_z1")
            if parts[0] == "ate" and len(parts) == 3:
                return cls("ate", x_from=float(parts[1]), x_to=float(parts[2]))
            if parts[0] == "ape-at-x" and len(parts) == 2:
                return cls("ape_at_x", x=float(parts[1]))
        except ValueError:
            pass
        raise EstimationError(f"cannot parse effect query {text!r}", module="estimator")


def effect(est, spec, query, z1_means=()):
    """Partial or treatment effect implied by the averaged coefficients."""
    beta = np.asarray(getattr(est, "beta_r", est), dtype=float)
    spec = spec or DesignSpec()
    z1_means = np.asarray(z1_means, dtype=float)
    slope = beta[1]
    inter = pow_terms = 0.0
    for pos, term in enumerate(spec.derived_terms, start=2):
        if isinstance(term, Interaction):
            zbar = z1_means if query.kind != "ape_at_z1" else np.asarray(query.z1, float)
            if term.j > zbar.size:
                raise EstimationError(f"no covariate value for interaction {term.j}",
                                      module="estimator")
            inter += beta[pos] * zbar[term.j - 1]
    if query.kind in ("ape_mean_z1", "ape_at_z1"):
        return float(slope + inter)
    if query.kind == "ape_at_x":
        for pos, term in enumerate(spec.derived_terms, start=2):
            if isinstance(term, Power):
                pow_terms += term.k * beta[pos] * query.x ** (term.k - 1)
        return float(slope + inter + pow_terms)
    if query.kind == "ate":
        dx = query.x_to - query.x_from
        for pos, term in enumerate(spec.derived_terms, start=2):
            if isinstance(term, Power):
                pow_terms += beta[pos] * (query.x_to ** term.k - query.x_from ** term.k)
        return float((slope + inter) * dx + pow_terms)
    raise EstimationError(f"unknown effect kind {query.kind!r}", module="estimator")


@dataclass(frozen=True)
class CrcPipeline:
    """Full estimator configuration: first stage, ranks, local fits, average.

    Calling the pipeline on a dataset returns the averaged coefficient vector,
    which makes it usable directly by the bootstrap.
    """

    design: DesignSpec = field(default_factory=DesignSpec)
    first_stage: str = "ecdf"
    qr_grid: int = 1999
    kernel: KernelSpec = field(default_factory=KernelSpec)
    rset: RSet = field(default_factory=RSet.trimmed)
    bandwidth: float = 0.07
    n_nodes: int = 2000
    scheme: str = "halton"

    def estimate(self, data, keep_nodes=False):
        design = build_design(data, self.design)
        data.check_sample_size(design.d_w)
        cdf = fit_conditional_cdf(data, self.first_stage, self.qr_grid)
        ranks = estimate_ranks(data, cdf)
        nodes = nodes_over(self.rset, self.n_nodes, self.scheme)
        est = estimate_beta_R(design, data.y, ranks, self.rset, self.bandwidth,
                              self.kernel, nodes, keep_nodes=keep_nodes)
        return est, cdf, ranks, design

    def __call__(self, data):
        return self.estimate(data)[0].beta_r
