"""Periodic 1-D grids, sampled fields, quadrature and the scalar functionals.

The real line is replaced by the periodic interval ``[-L, L)`` sampled at
``n`` equispaced nodes ``x_j = -L + j h``.  Because ``n`` is even the node
``j = n // 2`` sits exactly at ``x = 0``.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class Grid1D:
    """Uniform periodic grid on ``[-L, L)`` with ``n`` nodes."""

    n: int
    L: float

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 8 or self.n & (self.n - 1):
            raise ValueError(f"n must be a power of two >= 8, got {self.n!r}")
        if not (self.L > 0 and math.isfinite(self.L)):
            raise ValueError(f"L must be positive and finite, got {self.L!r}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "L", float(self.L))

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.n

    @property
    def x(self) -> np.ndarray:
        return -self.L + self.h * np.arange(self.n)

    @property
    def zero_index(self) -> int:
        return self.n // 2

    @property
    def xi(self) -> np.ndarray:
        """Angular frequencies ``pi k / L`` in FFT ordering."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.h)

    def refined(self, factor: int = 2) -> "Grid1D":
        return Grid1D(self.n * factor, self.L)

    def sample(self, fn) -> "Field":
        return Field(self, fn(self.x))

    def zeros(self) -> "Field":
        return Field(self, np.zeros(self.n))


@dataclass(frozen=True)
class Field:
    """Real samples of a function on a :class:`Grid1D`.

    The value array is copied and frozen on construction.
    """

    grid: Grid1D
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True).reshape(-1)
        if v.shape[0] != self.grid.n:
            raise ValueError(f"expected {self.grid.n} values, got {v.shape[0]}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def with_values(self, values) -> "Field":
        return Field(self.grid, values)

    def __add__(self, other: "Field") -> "Field":
        return self.with_values(self.values + _vals(other))

    def __sub__(self, other: "Field") -> "Field":
        return self.with_values(self.values - _vals(other))

    def __mul__(self, c) -> "Field":
        return self.with_values(self.values * _vals(c))

    __rmul__ = __mul__

    def __neg__(self) -> "Field":
        return self.with_values(-self.values)

    def min(self) -> float:
        return float(self.values.min())

    def max(self) -> float:
        return float(self.values.max())

    # -- serialization -----------------------------------------------------
    def to_json_dict(self, t: float | None = None) -> dict:
        return {
            "grid": {"n": self.grid.n, "L": self.grid.L},
            "t": t,
            "values": [float(v) for v in self.values],
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "Field":
        g = d["grid"]
        return cls(Grid1D(int(g["n"]), float(g["L"])), np.asarray(d["values"], dtype=float))

    def to_csv(self, path) -> None:
        lines = ["x,value"]
        lines += [f"{x!r},{v!r}" for x, v in zip(self.grid.x.tolist(), self.values.tolist())]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path) -> "Field":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        x, v = data[:, 0], data[:, 1]
        n = len(v)
        h = x[1] - x[0]
        return cls(Grid1D(n, n * h / 2.0), v)


def _vals(obj):
    return obj.values if isinstance(obj, Field) else obj


def save_snapshot(path, f: Field, t: float | None = None) -> None:
    Path(path).write_text(json.dumps(f.to_json_dict(t)))


def load_snapshot(path) -> tuple[Field, float | None]:
    d = json.loads(Path(path).read_text())
    return Field.from_json_dict(d), d.get("t")


class Kind(enum.Enum):
    LOG1P = "log1p"
    POWER = "power"
    LINEAR = "linear"


@dataclass(frozen=True)
class Nonlinearity:
    """The diffusivity pair ``phi`` and its inverse ``beta``.

    ``LOG1P`` is ``phi(s) = log(1 + s)``, ``beta(w) = e^w - 1``; ``POWER`` is
    ``phi(s) = s^m`` extended oddly to negative arguments; ``LINEAR`` is the
    identity (fractional heat equation).
    """

    kind: Kind = Kind.LOG1P
    m: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        if self.kind is Kind.POWER and not self.m > 0:
            raise ValueError("power exponent m must be positive")

    @classmethod
    def log1p(cls) -> "Nonlinearity":
        return cls(Kind.LOG1P)

    @classmethod
    def linear(cls) -> "Nonlinearity":
        return cls(Kind.LINEAR)

    @classmethod
    def power(cls, m: float) -> "Nonlinearity":
        return cls(Kind.POWER, m)

    def phi(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind is Kind.LOG1P:
            return np.log1p(s)
        if self.kind is Kind.LINEAR:
            return s.copy()
        return np.sign(s) * np.abs(s) ** self.m

    def dphi(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind is Kind.LOG1P:
            return 1.0 / (1.0 + s)
        if self.kind is Kind.LINEAR:
            return np.ones_like(s)
        return self.m * np.abs(s) ** (self.m - 1.0)

    def beta(self, w):
        w = np.asarray(w, dtype=float)
        if self.kind is Kind.LOG1P:
            return np.expm1(w)
        if self.kind is Kind.LINEAR:
            return w.copy()
        return np.sign(w) * np.abs(w) ** (1.0 / self.m)

    def dbeta(self, w):
        w = np.asarray(w, dtype=float)
        if self.kind is Kind.LOG1P:
            return np.exp(w)
        if self.kind is Kind.LINEAR:
            return np.ones_like(w)
        return np.abs(w) ** (1.0 / self.m - 1.0) / self.m

    def beta_primitive(self, w):
        """Convex primitive ``B`` with ``B' = beta`` and ``B(0) = 0``."""
        w = np.asarray(w, dtype=float)
        if self.kind is Kind.LOG1P:
            return np.expm1(w) - w
        if self.kind is Kind.LINEAR:
            return 0.5 * w * w
        e = 1.0 / self.m
        return np.abs(w) ** (e + 1.0) / (e + 1.0)

    def to_dict(self) -> dict:
        d = {"kind": self.kind.value}
        if self.kind is Kind.POWER:
            d["m"] = self.m
        return d


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    mass: float
    lp_norms: dict
    lx: float
    energy: float
    min_u: float
    max_u: float

    CSV_HEADER = "t,mass,l1,l2,l4,linf,lx,energy,min,max"

    def csv_row(self) -> str:
        p = self.lp_norms
        vals = [self.t, self.mass, p[1], p[2], p[4], p[math.inf],
                self.lx, self.energy, self.min_u, self.max_u]
        return ",".join(repr(float(v)) for v in vals)

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "mass": self.mass,
            "lp_norms": {("inf" if math.isinf(k) else str(k)): v for k, v in self.lp_norms.items()},
            "lx": self.lx,
            "energy": self.energy,
            "min_u": self.min_u,
            "max_u": self.max_u,
        }


def integrate(f: Field) -> float:
    """Periodic rectangle rule ``h * sum(values)``."""
    return float(f.grid.h * np.sum(f.values))


def lp_norm(f: Field, p: float) -> float:
    if not p >= 1:
        raise ValueError(f"p must be >= 1, got {p!r}")
    a = np.abs(f.values)
    if math.isinf(p):
        return float(a.max())
    if p == 1:
        return float(f.grid.h * a.sum())
    # rescale by the max so that large p does not overflow
    top = a.max()
    if top == 0:
        return 0.0
    return float(top * (f.grid.h * np.sum((a / top) ** p)) ** (1.0 / p))


def psi(s):
    """``Psi(s) = (1 + s) log(1 + s) - s``, convex with ``Psi(0) = Psi'(0) = 0``."""
    arr = np.asarray(s, dtype=float)
    if np.any(arr < 0):
        raise ValueError("psi is defined for s >= 0 only")
    s = np.atleast_1d(arr)
    # (1+s)log1p(s) - s loses digits for small s; use the series there
    small = s < 1e-3
    out = np.empty_like(s)
    ss = s[small]
    out[small] = ss**2 / 2 - ss**3 / 6 + ss**4 / 12 - ss**5 / 20
    sl = s[~small]
    out[~small] = (1.0 + sl) * np.log1p(sl) - sl
    return out.reshape(arr.shape) if arr.ndim else float(out[0])


def lx_functional(f: Field) -> float:
    """``L_X(f) = integral of Psi(f)``."""
    return integrate(f.with_values(psi(f.values)))
