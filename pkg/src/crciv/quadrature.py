"""Kernels, Halton points and integration nodes over a set of ranks."""
import warnings
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigurationError

_KERNELS = {
    "biweight": lambda u: 15.0 / 16.0 * (1.0 - u * u) ** 2,
    "triweight": lambda u: 35.0 / 32.0 * (1.0 - u * u) ** 3,
    "epanechnikov": lambda u: 0.75 * (1.0 - u * u),
    "uniform": lambda u: np.full_like(u, 0.5),
}

# Ratio of each kernel's canonical bandwidth to the Gaussian one, used to
# carry a Gaussian rule-of-thumb bandwidth over to a compact kernel.
EQUIVALENT_BANDWIDTH = {
    "biweight": 2.7779,
    "triweight": 3.1545,
    "epanechnikov": 2.2138,
    "uniform": 1.7400,
}


@dataclass(frozen=True)
class KernelSpec:
    """Symmetric kernel with support ``[-1, 1]``."""

    family: str = "biweight"

    def __post_init__(self):
        if self.family not in _KERNELS:
            raise ConfigurationError(
                f"unknown kernel {self.family!r}; choose from {sorted(_KERNELS)}",
                module="quadrature")
        if self.family == "uniform":
            warnings.warn("the uniform kernel is not twice continuously differentiable",
                          stacklevel=3)

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        inside = np.abs(u) <= 1.0
        out = np.where(inside, _KERNELS[self.family](np.where(inside, u, 0.0)), 0.0)
        return float(out) if out.ndim == 0 else out


def kernel_eval(spec, u):
    return spec(u)


def kernel_weights(spec, ranks, r, h):
    """``K((R_i - r) / h) / h`` for each rank.

    ``r`` may be an array of evaluation points, giving a ``(len(r), n)`` matrix.
    """
    if not h > 0:
        raise ConfigurationError("bandwidth must be positive", module="quadrature")
    ranks = np.asarray(ranks, dtype=float)
    r = np.asarray(r, dtype=float)
    u = (ranks[None, :] - r.reshape(-1, 1)) / h
    w = spec(u) / h
    return w[0] if r.ndim == 0 else w


def halton(index, base=2):
    """Radical inverse of ``index`` in ``base``."""
    if index < 1:
        raise ConfigurationError("Halton index starts at 1", module="quadrature")
    f, value = 1.0, 0.0
    while index > 0:
        f /= base
        index, digit = divmod(index, base)
        value += digit * f
    return value


def halton_sequence(count, base=2, start=1):
    """First ``count`` Halton points from ``start``, vectorized over the digits."""
    idx = np.arange(start, start + count, dtype=np.int64)
    out = np.zeros(count)
    f = 1.0 / base
    while np.any(idx > 0):
        idx, digit = np.divmod(idx, base)
        out += digit * f
        f /= base
    return out


@dataclass(frozen=True)
class RSet:
    """Finite union of disjoint closed intervals inside ``[delta, 1 - delta]``."""

    intervals: tuple
    delta: float = 0.0

    def __post_init__(self):
        iv = tuple(sorted((float(a), float(b)) for a, b in self.intervals))
        if not iv:
            raise ConfigurationError("rank set is empty", module="quadrature")
        if not 0.0 <= self.delta < 0.5:
            raise ConfigurationError("trimming margin must lie in [0, 0.5)",
                                     module="quadrature")
        lo, hi = self.delta, 1.0 - self.delta
        eps = 1e-12
        for a, b in iv:
            if a > b:
                raise ConfigurationError(f"interval [{a}, {b}] is reversed",
                                         module="quadrature")
            if a < lo - eps or b > hi + eps:
                raise ConfigurationError(
                    f"interval [{a}, {b}] leaves [{lo}, {hi}]", module="quadrature")
        for (_, b0), (a1, _) in zip(iv, iv[1:]):
            if a1 <= b0:
                raise ConfigurationError("rank intervals must be disjoint",
                                         module="quadrature")
        object.__setattr__(self, "intervals", iv)

    @classmethod
    def trimmed(cls, delta=0.05):
        return cls(((delta, 1.0 - delta),), delta)

    @classmethod
    def parse(cls, text, delta=0.0):
        """``"0.1:0.4,0.6:0.9"`` -> two intervals."""
        try:
            pairs = [tuple(float(v) for v in part.split(":"))
                     for part in text.split(",") if part.strip()]
        except ValueError:
            raise ConfigurationError(f"cannot parse rank set {text!r}",
                                     module="quadrature") from None
        if any(len(p) != 2 for p in pairs):
            raise ConfigurationError(f"cannot parse rank set {text!r}", module="quadrature")
        return cls(tuple(pairs), delta)

    @property
    def measure(self):
        return sum(b - a for a, b in self.intervals)

    def contains(self, r):
        r = np.asarray(r, dtype=float)
        out = np.zeros(r.shape, dtype=bool)
        for a, b in self.intervals:
            out |= (r >= a) & (r <= b)
        return out

    def to_text(self):
        return ",".join(f"{a!r}:{b!r}" for a, b in self.intervals)

    def inverse_cdf(self, u):
        """Map ``[0, 1]`` onto the set, preserving (normalized) Lebesgue measure.

        Interval junctions are assigned right-continuously.
        """
        u = np.asarray(u, dtype=float)
        lengths = np.array([b - a for a, b in self.intervals])
        starts = np.array([a for a, _ in self.intervals])
        cum = np.concatenate([[0.0], np.cumsum(lengths)])
        s = u * cum[-1]
        m = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(lengths) - 1)
        return starts[m] + (s - cum[m])


@dataclass(frozen=True, eq=False)
class QuadratureNodes:
    nodes: np.ndarray
    scheme: str

    @property
    def M(self):
        return self.nodes.size


def nodes_over(rset, M, scheme="halton"):
    """Integration nodes over ``rset``; averaging over them integrates dr / lambda(R)."""
    if M < 1:
        raise ConfigurationError("need at least one node", module="quadrature")
    if not rset.measure > 0:
        raise ConfigurationError("rank set has zero measure", module="quadrature")
    if scheme == "halton":
        u = halton_sequence(M, 2)
    elif scheme == "grid":
        u = (np.arange(M) + 0.5) / M
    else:
        raise ConfigurationError(f"unknown node scheme {scheme!r}", module="quadrature")
    nodes = rset.inverse_cdf(u)
    nodes.setflags(write=False)
    return QuadratureNodes(nodes, scheme)
