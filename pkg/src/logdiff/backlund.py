"""Change of variables to the nonlocal transport equation.

    y = int_0^x (1 + u) ds - c(t),   v(y, t) = log(1 + u(x, t)),

with ``c'(t) = H(log(1+u))(0, t)``.  It carries the diffusion equation to

    v_tau - Ht(v) v_y + (Ht(v))_y = 0,

where ``Ht`` is the Hilbert transform conjugated by the map.  The map
stretches one x-period ``2L`` into a y-period ``2L + M`` with ``M`` the
mass, which is conserved, so a single uniform y-grid serves a whole run.

Quadratures over the non-uniform y-nodes are done in the node-index
variable: ``y_i`` minus its linear drift is periodic and smooth in ``i``,
so spectral differentiation in ``i`` gives ``dy/di`` to round-off.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.interpolate import PchipInterpolator

from .diagnostics import SAFETY, SmoothingReport, _fit_constant, _worst_ratio
from .grid import Field, Grid1D, integrate
from .operators import _rxi, hilbert_transform, quarter_laplacian_energy, spectral_derivative
from .solver import Trajectory

DIRECT_MAX_N = 256


def antiderivative(u: Field) -> np.ndarray:
    """``int_0^x u`` at the grid nodes, spectrally.

    Mean part integrates to ``mean * x``; the rest through the multiplier
    ``1/(i xi)`` (zero and Nyquist modes dropped).
    """
    g = u.grid
    mean = u.values.mean()
    F = np.fft.rfft(u.values - mean)
    xi = _rxi(g.n, g.L)
    sym = np.zeros_like(F)
    sym[1:-1] = 1.0 / (1j * xi[1:-1])
    A = np.fft.irfft(F * sym, n=g.n)
    return mean * g.x + A - A[g.zero_index]


def _index_derivative(y: np.ndarray, period: float) -> np.ndarray:
    """``dy/di`` for nodes whose drift over one sweep of indices is ``period``."""
    n = y.size
    slope = period / n
    periodic = y - slope * np.arange(n)
    k = np.fft.rfftfreq(n) * 2.0 * np.pi
    sym = 1j * k
    sym[-1] = 0.0
    return slope + np.fft.irfft(np.fft.rfft(periodic) * sym, n=n)


def _index_antiderivative(f: np.ndarray) -> np.ndarray:
    """``sum``-consistent spectral antiderivative in the index variable, zero at ``i=0``."""
    n = f.size
    mean = f.mean()
    F = np.fft.rfft(f - mean)
    k = np.fft.rfftfreq(n) * 2.0 * np.pi
    sym = np.zeros_like(F)
    sym[1:-1] = 1.0 / (1j * k[1:-1])
    A = np.fft.irfft(F * sym, n=n)
    return mean * np.arange(n) + A - A[0]


def resample_uniform(y_nodes: np.ndarray, values: np.ndarray, period: float, n: int) -> Field:
    """Monotone cubic (PCHIP) resample of periodic node data onto ``Grid1D(n, period/2)``."""
    grid = Grid1D(n, period / 2.0)
    ys = np.concatenate([y_nodes - period, y_nodes, y_nodes + period])
    vs = np.concatenate([values, values, values])
    # flat runs make PCHIP's harmonic-mean slopes overflow to a harmless 0
    with np.errstate(over="ignore", divide="ignore"):
        vals = PchipInterpolator(ys, vs)(grid.x)
    return Field(grid, vals)


@dataclass(frozen=True)
class TransportField:
    """``v = log(1+u)`` carried to the y-nodes ``y(x_j)``."""

    x_grid: Grid1D
    y_nodes: np.ndarray
    v_values: np.ndarray
    period: float
    shift: float = 0.0
    t: float = 0.0

    def __post_init__(self):
        for name in ("y_nodes", "v_values"):
            a = np.array(getattr(self, name), dtype=float)
            a.flags.writeable = False
            object.__setattr__(self, name, a)
        if not np.all(np.diff(self.y_nodes) > 0):
            raise ValueError("y-nodes must be strictly increasing")

    @cached_property
    def dy_di(self) -> np.ndarray:
        return _index_derivative(self.y_nodes, self.period)

    @cached_property
    def uniform_resample(self) -> Field:
        return resample_uniform(self.y_nodes, self.v_values, self.period, self.x_grid.n)

    def integrate_y(self, values) -> float:
        """``int values dy`` over one y-period."""
        return float(np.sum(np.asarray(values) * self.dy_di))

    def to_csv(self, path) -> None:
        lines = ["y,v"] + [f"{y!r},{v!r}" for y, v in zip(self.y_nodes.tolist(), self.v_values.tolist())]
        Path(path).write_text("\n".join(lines) + "\n")

    def to_json_dict(self) -> dict:
        return {
            "x_grid": {"n": self.x_grid.n, "L": self.x_grid.L},
            "t": self.t,
            "shift": self.shift,
            "period": self.period,
            "y": self.y_nodes.tolist(),
            "v": self.v_values.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())


def to_transport(u: Field, t: float = 0.0, shift: float = 0.0) -> TransportField:
    """Map ``u`` to transport variables with additive shift ``c(t) = shift``."""
    if u.min() < 0:
        raise ValueError("u must be nonnegative")
    y = u.grid.x + antiderivative(u) - shift
    return TransportField(u.grid, y, np.log1p(u.values), 2.0 * u.grid.L + integrate(u), shift, t)


def shift_history(traj: Trajectory) -> np.ndarray:
    """``c(t_k)`` from ``c' = H(log(1+u))(0, t)``, ``c(0) = 0``.

    Backward rectangle rule, the same quadrature as the implicit step, so
    consecutive maps differ by exactly ``-dt H(w_{k+1})``.
    """
    c = [0.0]
    for k in range(1, len(traj)):
        u = traj.fields[k]
        w = u.with_values(traj.nonlinearity.phi(u.values))
        c.append(c[-1] + (traj.times[k] - traj.times[k - 1]) * hilbert_transform(w).values[u.grid.zero_index])
    return np.array(c)


def transport_trajectory(traj: Trajectory) -> list[TransportField]:
    c = shift_history(traj)
    return [to_transport(u, t, ck) for t, u, ck in zip(traj.times, traj.fields, c)]


def modified_hilbert(tf: TransportField, u_side: Field) -> np.ndarray:
    """``Ht(v)`` at the y-nodes by conjugation: ``H(log(1+u))`` on the x-grid."""
    return hilbert_transform(u_side.with_values(np.log1p(u_side.values))).values


def modified_hilbert_direct(tf: TransportField) -> np.ndarray:
    """``Ht(v)`` at the y-nodes from y-side data only.  O(n^2) oracle.

    The x-distance between nodes is ``int e^{-v} d sigma`` along y, and the
    periodic Hilbert kernel is ``cot(pi s / P_x) / P_x`` with ``P_x`` the
    x-period (itself ``int e^{-v} dy``).  The principal value is taken by
    subtracting ``v_i``; the diagonal term is dropped, an O(h) error.
    """
    n = tf.y_nodes.size
    if n > DIRECT_MAX_N:
        raise ValueError(f"direct formula is an oracle for n <= {DIRECT_MAX_N}")
    v = tf.v_values
    y = tf.y_nodes
    e = np.exp(-v)
    yy = np.concatenate([y, [y[0] + tf.period]])
    ee = np.concatenate([e, [e[0]]])
    X = np.concatenate([[0.0], np.cumsum(0.5 * (ee[1:] + ee[:-1]) * np.diff(yy))])
    Px = X[-1]
    X = X[:-1]
    wts = 0.5 * (np.roll(y, -1) - np.roll(y, 1))
    wts[0] += 0.5 * tf.period
    wts[-1] += 0.5 * tf.period
    dx = e * wts
    S = X[:, None] - X[None, :]
    with np.errstate(divide="ignore"):
        K = 1.0 / (Px * np.tan(np.pi * S / Px))
    np.fill_diagonal(K, 0.0)
    # H f(x) = PV int f(x') K(x - x') dx'; subtracting f(x) kills the odd singular part
    return ((v[None, :] - v[:, None]) * K) @ dx


def l1_relation(tf: TransportField) -> float:
    """``int (1 - e^{-v}) dy``, which equals the mass ``int u dx``."""
    return tf.integrate_y(-np.expm1(-tf.v_values))


def v_integral(tf: TransportField) -> float:
    """``int v dy``, which equals ``int (1+u) log(1+u) dx``."""
    return tf.integrate_y(tf.v_values)


def inverse_map(tf: TransportField) -> np.ndarray:
    """x at the y-nodes from ``x = int_0^y e^{-v} d sigma - cbar``.

    The constant ``cbar`` is fixed by the node that the forward map sent
    from ``x = 0``.
    """
    X = _index_antiderivative(np.exp(-tf.v_values) * tf.dy_di)
    return X - X[tf.x_grid.zero_index]


def quarter_energy_bridge(tf: TransportField) -> tuple[float, float]:
    """``(int |(-Delta)^{1/4} v|^2 dy, int |(-Delta)^{1/4} log(1+u)|^2 dx)``.

    Not an identity: the Gagliardo form of this seminorm is invariant only
    under Moebius maps, so the two agree up to terms that vanish with the
    amplitude of ``u``.
    """
    y_side = quarter_laplacian_energy(tf.uniform_resample)
    x_side = quarter_laplacian_energy(Field(tf.x_grid, tf.v_values))
    return y_side, x_side


def gradient_bridge(tf: TransportField) -> tuple[float, float]:
    """``(int |v_y|^2 dy, int |d_x log(1+u)|^2 / (1+u) dx)``; equal since ``v_y = w_x / (1+u)``."""
    dv = spectral_derivative(tf.uniform_resample)
    y_side = integrate(dv.with_values(dv.values**2))
    w = Field(tf.x_grid, tf.v_values)
    dw = spectral_derivative(w).values
    x_side = integrate(w.with_values(dw**2 * np.exp(-tf.v_values)))
    return y_side, x_side


def transport_residual(traj: Trajectory) -> tuple[np.ndarray, np.ndarray]:
    """L2 residual of the transport equation between consecutive records.

    ``v_tau`` is a backward difference at fixed y on the uniform y-grid;
    ``v_y`` and ``Ht(v)_y`` are spectral and evaluated at the later time.
    Returns ``(times, residual norms)`` for records ``k >= 1``.
    """
    tfs = transport_trajectory(traj)
    n = traj.grid.n
    out_t, out_r = [], []
    prev = tfs[0].uniform_resample
    for k in range(1, len(tfs)):
        tf = tfs[k]
        cur = tf.uniform_resample
        dt = traj.times[k] - traj.times[k - 1]
        Ht = resample_uniform(tf.y_nodes, modified_hilbert(tf, traj.fields[k]), tf.period, n)
        r = ((cur.values - prev.values) / dt
             - Ht.values * spectral_derivative(cur).values
             + spectral_derivative(Ht).values)
        out_t.append(traj.times[k])
        out_r.append(math.sqrt(integrate(cur.with_values(r * r))))
        prev = cur
    return np.array(out_t), np.array(out_r)


def _v_series(tfs):
    t = np.array([tf.t for tf in tfs])
    idx = np.nonzero(t > 0)[0]
    v1 = v_integral(tfs[0])
    sup = np.array([tfs[i].v_values.max() for i in idx])
    tt = t[idx]
    scale = np.maximum(tt**-0.5 * math.sqrt(v1), tt**-0.75 * v1**0.75)
    return sup, np.zeros(idx.size), scale


def check_v_smoothing(runs: dict, calibration: list, safety: float = SAFETY) -> SmoothingReport:
    """``||v(tau)||_inf <= C max{tau^{-1/2} ||v_0||_1^{1/2}, tau^{-3/4} ||v_0||_1^{3/4}}``.

    ``runs`` maps names to lists of :class:`TransportField` along a run.
    """
    C = _fit_constant(*_v_series(calibration))
    rep = SmoothingReport("v-side L1-Linf smoothing", C, safety)
    for name, tfs in runs.items():
        rep.ratios[name] = _worst_ratio(*_v_series(tfs), C, safety)
    return rep
