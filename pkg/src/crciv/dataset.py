"""Observational data container and second-stage design construction."""
import csv
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigurationError, ParseError


def _as_matrix(a, n, name):
    if a is None:
        return np.empty((n, 0))
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a.reshape(n, -1) if a.size else np.empty((n, 0))
    if a.ndim != 2 or a.shape[0] != n:
        raise ConfigurationError(f"{name} must have {n} rows, got shape {a.shape}",
                                 module="dataset")
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Outcome ``y``, one basic endogenous regressor ``x``, included
    covariates ``z1`` and excluded instruments ``z2``.

    Arrays are copied and made read-only on construction.
    """

    y: np.ndarray
    x: np.ndarray
    z1: np.ndarray
    z2: np.ndarray
    y_name: str = "y"
    x_name: str = "x"
    z1_names: tuple = ()
    z2_names: tuple = ()

    def __post_init__(self):
        y = np.array(self.y, dtype=float).ravel()
        x = np.array(self.x, dtype=float)
        if x.ndim == 2:
            if x.shape[1] != 1:
                raise ConfigurationError(
                    "only one basic endogenous variable is supported", module="dataset")
            x = x[:, 0]
        x = x.ravel()
        n = y.size
        if n == 0:
            raise ConfigurationError("empty dataset", module="dataset")
        if x.size != n:
            raise ConfigurationError("x and y lengths differ", module="dataset")
        z1 = _as_matrix(self.z1, n, "z1").copy()
        z2 = _as_matrix(self.z2, n, "z2").copy()
        if z2.shape[1] < 1:
            raise ConfigurationError("at least one instrument column is required",
                                     module="dataset")
        for name, a in (("y", y), ("x", x), ("z1", z1), ("z2", z2)):
            if not np.all(np.isfinite(a)):
                raise ConfigurationError(f"non-finite values in {name}", module="dataset")
        z = np.hstack([z1, z2])
        for j in range(z.shape[1]):
            for k in range(j):
                if np.array_equal(z[:, j], z[:, k]):
                    raise ConfigurationError(
                        f"duplicate exogenous columns {k} and {j}", module="dataset")
        z1_names = tuple(self.z1_names) or tuple(f"z1_{j + 1}" for j in range(z1.shape[1]))
        z2_names = tuple(self.z2_names) or tuple(f"z2_{j + 1}" for j in range(z2.shape[1]))
        if len(z1_names) != z1.shape[1] or len(z2_names) != z2.shape[1]:
            raise ConfigurationError("column names do not match matrix widths",
                                     module="dataset")
        for a in (y, x, z1, z2):
            a.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "z1", z1)
        object.__setattr__(self, "z2", z2)
        object.__setattr__(self, "z1_names", z1_names)
        object.__setattr__(self, "z2_names", z2_names)

    @property
    def n(self):
        return self.y.size

    @property
    def d1(self):
        return self.z1.shape[1]

    @property
    def d2(self):
        return self.z2.shape[1]

    @property
    def dz(self):
        return self.d1 + self.d2

    @property
    def z(self):
        """All exogenous variables, ``[z1, z2]``."""
        return np.hstack([self.z1, self.z2])

    def take(self, idx):
        """Row subset (used for bootstrap resampling)."""
        idx = np.asarray(idx)
        return Dataset(self.y[idx], self.x[idx], self.z1[idx], self.z2[idx],
                       self.y_name, self.x_name, self.z1_names, self.z2_names)

    def check_sample_size(self, d_w):
        """Require more rows than parameters in either stage."""
        need = d_w + self.dz
        if self.n < need:
            raise ConfigurationError(
                f"n = {self.n} is too small: need at least d_w + d_z = {need} rows",
                module="dataset")


def load_csv(path, y, x, z1=(), z2=()):
    """Read a headered CSV file and select columns by name.

    Parameters
    ----------
    path : str or path-like
    y, x : str
        Outcome and basic endogenous column names.
    z1, z2 : sequence of str
        Included covariates and excluded instruments.

    Returns
    -------
    Dataset
    """
    z1, z2 = list(z1), list(z2)
    if not os.path.exists(path):
        raise ConfigurationError(f"file not found: {path}", module="dataset")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ConfigurationError("empty dataset", module="dataset") from None
        wanted = [y, x] + z1 + z2
        index = {}
        for name in wanted:
            if name not in header:
                raise ConfigurationError(f"missing column: {name!r}", module="dataset")
            index[name] = header.index(name)
        rows = []
        for lineno, record in enumerate(reader, start=2):
            if not record or all(not c.strip() for c in record):
                continue
            values = []
            for name in wanted:
                j = index[name]
                cell = record[j].strip() if j < len(record) else ""
                try:
                    v = float(cell)
                except ValueError:
                    raise ParseError(
                        f"cannot parse {cell!r} as a number at line {lineno}, "
                        f"column {name!r}", row=lineno, column=name) from None
                if not math.isfinite(v):
                    raise ParseError(f"non-finite value {cell!r} at line {lineno}, "
                                     f"column {name!r}", row=lineno, column=name)
                values.append(v)
            rows.append(values)
    if not rows:
        raise ConfigurationError("empty dataset", module="dataset")
    a = np.array(rows)
    k1 = 2 + len(z1)
    return Dataset(a[:, 0], a[:, 1], a[:, 2:k1], a[:, k1:], y_name=y, x_name=x,
                   z1_names=tuple(z1), z2_names=tuple(z2))


@dataclass(frozen=True)
class Power:
    """Derived term ``x**k``."""

    k: int

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 2:
            raise ConfigurationError("power exponents must be integers >= 2",
                                     module="dataset")

    def label(self, data=None):
        return f"x^{self.k}" if data is None else f"{data.x_name}^{self.k}"


@dataclass(frozen=True)
class Interaction:
    """Derived term ``x * z1[:, j - 1]``; ``j`` counts covariates from 1."""

    j: int

    def label(self, data=None):
        if data is None:
            return f"x*z1_{self.j}"
        return f"{data.x_name}*{data.z1_names[self.j - 1]}"


@dataclass(frozen=True)
class DesignSpec:
    derived_terms: tuple = field(default_factory=tuple)

    def __post_init__(self):
        terms = tuple(self.derived_terms)
        if len(set(terms)) != len(terms):
            raise ConfigurationError("derived terms must be unique", module="dataset")
        for t in terms:
            if not isinstance(t, (Power, Interaction)):
                raise ConfigurationError(f"unsupported derived term {t!r}",
                                         module="dataset")
        object.__setattr__(self, "derived_terms", terms)

    @classmethod
    def parse(cls, text, z1_names=()):
        """Parse a comma list such as ``"x^2,x*z1:urban"``.

        ``x*z1:NAME`` refers to a covariate by column name and ``x*z1:3`` by
        1-based position.
        """
        terms = []
        for tok in (t.strip() for t in (text or "").split(",")):
            if not tok:
                continue
            if tok.startswith("x^"):
                try:
                    terms.append(Power(int(tok[2:])))
                except ValueError:
                    raise ConfigurationError(f"bad power term {tok!r}",
                                             module="dataset") from None
            elif tok.startswith("x*z1:"):
                ref = tok[5:]
                if ref in z1_names:
                    terms.append(Interaction(list(z1_names).index(ref) + 1))
                elif ref.isdigit():
                    terms.append(Interaction(int(ref)))
                else:
                    raise ConfigurationError(f"unknown covariate in {tok!r}",
                                             module="dataset")
            else:
                raise ConfigurationError(f"cannot parse derived term {tok!r}",
                                         module="dataset")
        return cls(tuple(terms))

    def labels(self, data=None):
        return [t.label(data) for t in self.derived_terms]

    def to_text(self):
        out = []
        for t in self.derived_terms:
            out.append(f"x^{t.k}" if isinstance(t, Power) else f"x*z1:{t.j}")
        return ",".join(out)


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    w: np.ndarray
    names: tuple

    @property
    def d_w(self):
        return self.w.shape[1]

    @property
    def n(self):
        return self.w.shape[0]


def build_design(data, spec=None):
    """Assemble ``W = [1, x, derived terms..., z1...]`` row-wise."""
    spec = spec or DesignSpec()
    cols = [np.ones(data.n), data.x]
    names = ["const", data.x_name]
    for t in spec.derived_terms:
        if isinstance(t, Power):
            cols.append(data.x ** t.k)
        else:
            if not 1 <= t.j <= data.d1:
                raise ConfigurationError(
                    f"interaction index {t.j} out of range for {data.d1} covariates",
                    module="dataset")
            cols.append(data.x * data.z1[:, t.j - 1])
        names.append(t.label(data))
    cols.extend(data.z1.T)
    names.extend(data.z1_names)
    w = np.column_stack(cols)
    w.setflags(write=False)
    return DesignMatrix(w, tuple(names))
