"""Functional inequalities checked on sampled families of grid functions.

Stroock-Varopoulos, a Nash-Gagliardo-Nirenberg inequality at the
critical exponent, a Trudinger-type exponential integrability bound, and
two scalar calculus inequalities.  Every bound is only certified on the
sampled family, never over the whole function class.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import integrate as spi
from scipy.special import gammainc

from .grid import Field, Grid1D, integrate, lp_norm, psi
from .operators import fractional_power, half_laplacian_values, quarter_laplacian_energy

KINDS = ("gaussian", "multibump", "bandlimited", "dilates")


@dataclass(frozen=True)
class SampleFamily:
    """Seeded test-function family on ``grid``.

    ``gaussian``: single bumps; ``multibump``: 2-4 bumps; ``bandlimited``:
    squared random trigonometric sums under a Gaussian envelope;
    ``dilates``: one fixed profile ``phi(lambda x)`` with ``lambda`` in [1/2, 2].
    All members are nonnegative.
    """

    kind: str
    count: int
    seed: int
    grid: Grid1D
    amplitude: float = 2.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown family kind {self.kind!r}")
        if self.count < 1:
            raise ValueError("count must be positive")

    def generate(self) -> list[Field]:
        rng = np.random.default_rng(self.seed)
        x = self.grid.x
        span = self.grid.L / 4.0
        out = []
        for _ in range(self.count):
            if self.kind == "gaussian":
                a, w, c = rng.uniform(0.1, 1.0) * self.amplitude, rng.uniform(0.5, 3.0), rng.uniform(-span, span) / 4
                v = a * np.exp(-((x - c) / w) ** 2)
            elif self.kind == "multibump":
                v = np.zeros_like(x)
                for _ in range(rng.integers(2, 5)):
                    a, w, c = rng.uniform(0.1, 1.0) * self.amplitude, rng.uniform(0.4, 2.0), rng.uniform(-span, span) / 2
                    v += a * np.exp(-((x - c) / w) ** 2)
            elif self.kind == "bandlimited":
                k = np.arange(1, 7)
                amp = rng.normal(size=(2, k.size)) / k
                trig = amp[0] @ np.cos(np.outer(k, x) * 0.7) + amp[1] @ np.sin(np.outer(k, x) * 0.7)
                env = np.exp(-(x / rng.uniform(2.0, 4.0)) ** 2)
                v = self.amplitude * env * trig**2 / max(np.max(trig**2), 1e-12)
            else:
                lam = rng.uniform(0.5, 2.0)
                v = self.amplitude * np.exp(-((lam * x) ** 2)) * (1 + 0.5 * np.cos(2 * lam * x))
            out.append(Field(self.grid, v))
        return out


# -- Stroock-Varopoulos --------------------------------------------------

def _sv_density(p: float, eps: float | None):
    """``dA/du`` for ``A = u^{p-1}``, or its linearization below ``eps``."""
    def a(s):
        s = np.asarray(s, dtype=float)
        if eps is not None:
            return np.where(s < eps, eps ** (p - 2.0), (p - 1.0) * np.maximum(s, eps) ** (p - 2.0))
        return (p - 1.0) * s ** (p - 2.0)
    return a


def sv_A(u, p: float, eps: float | None = None):
    u = np.asarray(u, dtype=float)
    if eps is None:
        return u ** (p - 1.0)
    return np.where(u < eps, eps ** (p - 2.0) * u, np.maximum(u, eps) ** (p - 1.0))


def sv_G(u, p: float, eps: float | None = None, tol: float = 1e-10) -> np.ndarray:
    """``G(u) = int_0^u sqrt(A'(s) / (1+s)) ds``.

    Integrated in ``s = sigma^2`` so the ``s^{(p-2)/2}`` endpoint
    singularity for ``p < 2`` becomes ``sigma^{p-1}``, and accumulated
    over the sorted distinct nodes.  Intervals with ``hi > 2 lo`` (close to
    that endpoint) and the one holding the ``A_eps`` kink go to adaptive
    quadrature; the rest are analytic well beyond their length and use
    12-point Gauss-Legendre.
    """
    u = np.asarray(u, dtype=float)
    a = _sv_density(p, eps)

    def integrand(sig):
        s = np.asarray(sig, dtype=float) ** 2
        with np.errstate(divide="ignore", invalid="ignore"):
            val = 2.0 * np.sqrt(s) * np.sqrt(a(s) / (1.0 + s))
        return np.nan_to_num(val)

    flat = u.reshape(-1)
    uniq, inv = np.unique(flat, return_inverse=True)
    knots = np.concatenate([[0.0], np.sqrt(uniq)])
    lo, hi = knots[:-1], knots[1:]
    kink = math.sqrt(eps) if eps is not None else -1.0
    # intervals not well separated from the sigma = 0 endpoint see its singularity
    hard = (hi > 2.0 * lo) | ((lo < kink) & (kink < hi))
    node, wt = np.polynomial.legendre.leggauss(12)
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    pieces = (integrand(mid[:, None] + half[:, None] * node[None, :]) @ wt) * half
    for i in np.nonzero(hard & (hi > lo))[0]:
        pts = [kink] if lo[i] < kink < hi[i] else None
        pieces[i] = spi.quad(lambda t: float(integrand(t)), lo[i], hi[i],
                             epsabs=tol, epsrel=tol, limit=200, points=pts)[0]
    return np.cumsum(pieces)[inv].reshape(u.shape)


def check_stroock_varopoulos(z: Field, p: float, eps: float | None = None,
                             A=None, B=None) -> tuple[float, float]:
    """``(int A(z) (-Delta)^{1/2} z, ||(-Delta)^{1/4} B(z)||_2^2)``.

    Default ``A(z) = u^{p-1}`` and ``B(z) = G(u)`` with ``u = e^z - 1``.
    For ``p < 3/2`` the linearized ``A_eps`` is used (``eps`` defaults to
    ``1e-3``).  Custom ``A`` and ``B`` act on the ``z`` values directly.
    """
    if A is None:
        if p < 1:
            raise ValueError("p must be >= 1")
        if p < 1.5 and eps is None:
            eps = 1e-3
        u = np.expm1(z.values)
        if np.any(u < 0):
            raise ValueError("z must be log(1+u) for some u >= 0")
        Az, Bz = sv_A(u, p, eps), sv_G(u, p, eps)
    else:
        Az, Bz = A(z.values), B(z.values)
    lhs = integrate(z.with_values(Az * half_laplacian_values(z.values, z.grid)))
    rhs = quarter_laplacian_energy(z.with_values(Bz))
    return lhs, rhs


# -- Nash-Gagliardo-Nirenberg --------------------------------------------

def check_ngn(phi: Field, p: float, q: float, gamma: float) -> float:
    """``||phi||_{p+q'}^{p+q'} / (p^{q'} ||(-Delta)^{gamma/2} phi||_q^{q'} ||phi||_p^p)``.

    Scale-free at ``q = 1/gamma``; the supremum over a family is the
    empirical constant.
    """
    if not (0 < gamma < 1):
        raise ValueError("gamma must lie in (0, 1)")
    if not math.isclose(q, 1.0 / gamma):
        raise ValueError("critical case requires q = 1/gamma")
    if p < 1 or q <= 1:
        raise ValueError("need p >= 1, q > 1")
    qp = q / (q - 1.0)
    a = phi.with_values(np.abs(phi.values))
    num = lp_norm(a, p + qp) ** (p + qp)
    if num == 0:
        return 0.0
    den = p**qp * lp_norm(fractional_power(phi, gamma), q) ** qp * lp_norm(a, p) ** p
    return num / den


def empirical_ngn_constant(fields, p: float, q: float, gamma: float) -> float:
    return max(check_ngn(f, p, q, gamma) for f in fields)


# -- Trudinger-type Orlicz bound -----------------------------------------

@dataclass
class TrudingerResult:
    alpha: float
    r: float
    r_prime: float
    k: int
    members: int
    note: str = "alpha certified on the sampled family only"

    def to_json(self) -> str:
        return json.dumps(asdict(self))


def trudinger_exponents(p: float, q: float) -> tuple[float, float, int]:
    r = max(p, q)
    rp = r / (r - 1.0)
    return r, rp, int(math.ceil(p / rp - 1e-12))


def orlicz_integral(phi: Field, alpha: float, r_prime: float, k: int) -> float:
    """``int (e^a - sum_{j<k} a^j / j!)`` with ``a = alpha |phi|^{r'}``.

    The subtracted Taylor head is never formed: the integrand equals
    ``e^a P(k, a)`` with ``P`` the regularized lower incomplete gamma
    function, which is accurate for small ``a``.
    """
    a = alpha * np.abs(phi.values) ** r_prime
    with np.errstate(over="ignore"):
        val = np.exp(a) * gammainc(k, a) if k > 0 else np.exp(a)
    val = np.where(a > 0, val, 0.0 if k > 0 else 1.0)
    return float(phi.grid.h * np.sum(val))


def normalize_unit_ball(phi: Field, p: float, q: float, gamma: float) -> Field:
    """Scale ``phi`` so that ``||phi||_p + ||(-Delta)^{gamma/2} phi||_q = 1``.

    Members are put on the sphere rather than only shrunk: the Orlicz
    integral grows with ``|phi|``, so the sphere is the binding case.
    """
    s = lp_norm(phi, p) + lp_norm(fractional_power(phi, gamma), q)
    return phi if s == 0 else phi.with_values(phi.values / s)


def trudinger_alpha_search(family, p: float, q: float, gamma: float, tol: float = 1e-3,
                           alpha_cap: float = 1e4) -> TrudingerResult:
    """Largest ``alpha`` (to ``tol``) with the Orlicz integral ``<= 1`` on every member."""
    if not math.isclose(q, 1.0 / gamma):
        raise ValueError("critical case requires q = 1/gamma")
    fields = family.generate() if isinstance(family, SampleFamily) else list(family)
    r, rp, k = trudinger_exponents(p, q)
    normed = [normalize_unit_ball(f, p, q, gamma) for f in fields]

    def ok(alpha):
        return all(orlicz_integral(f, alpha, rp, k) <= 1.0 for f in normed)

    lo, hi = 0.0, 1.0
    while ok(hi):
        lo, hi = hi, 2.0 * hi
        if hi > alpha_cap:
            return TrudingerResult(math.inf, r, rp, k, len(normed), "no finite alpha limit below cap")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if ok(mid) else (lo, mid)
    return TrudingerResult(lo, r, rp, k, len(normed))


# -- calculus inequalities -----------------------------------------------

def _log_expm1(log_t: np.ndarray) -> np.ndarray:
    """``log(e^t - 1)`` from ``log t``, without overflow or underflow; ``-inf`` at ``t = 0``."""
    s = np.asarray(log_t, dtype=float)
    out = np.empty_like(s)
    small = s < -20.0
    out[small] = s[small] + 0.5 * np.exp(s[small])
    with np.errstate(over="ignore"):
        t = np.exp(s[~small])
    big = t > 30.0
    mid = np.empty_like(t)
    mid[big] = t[big] + np.log1p(-np.exp(-t[big]))
    mid[~big] = np.log(np.expm1(t[~big]))
    out[~small] = mid
    return out


def expm1_cauchy_schwarz_margin(a, x) -> np.ndarray:
    """Relative margin ``1 - (e^{ax}-1)^2 / ((e^a-1)(e^{ax^2}-1))``, 0 where both sides vanish.

    Cauchy-Schwarz on ``sum_k c_k x^k`` with ``c_k = a^k / k!``.
    """
    a, x = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(x, dtype=float))
    if np.any(a < 0) or np.any(x < 0):
        raise ValueError("a and x must be nonnegative")
    zero = (a == 0) | (x == 0)
    out = np.zeros(a.shape)
    nz = ~zero
    la, lx = np.log(a[nz]), np.log(x[nz])
    lhs = 2.0 * _log_expm1(la + lx)
    rhs = _log_expm1(la) + _log_expm1(la + 2.0 * lx)
    out[nz] = -np.expm1(lhs - rhs)
    return out


def check_expm1_cauchy_schwarz(a_grid, x_grid) -> float:
    """Worst relative margin over the tensor grid (nonnegative when the inequality holds)."""
    A, X = np.meshgrid(np.asarray(a_grid, dtype=float), np.asarray(x_grid, dtype=float), indexing="ij")
    return float(expm1_cauchy_schwarz_margin(A, X).min())


def smoothstep_sign(z, eps: float):
    """``C^1`` approximation of the positive-part sign, 0 below 0 and 1 above ``eps``."""
    s = np.clip(np.asarray(z, dtype=float) / eps, 0.0, 1.0)
    return s * s * (3.0 - 2.0 * s)


def smoothstep_primitive(z, eps: float):
    """``j(z) = int_0^z smoothstep_sign``."""
    z = np.asarray(z, dtype=float)
    s = np.clip(z / eps, 0.0, 1.0)
    inner = eps * (s**3 - 0.5 * s**4)
    return np.where(z > eps, 0.5 * eps + (z - eps), np.where(z > 0, inner, 0.0))


def check_log_inequality_suite(n: int = 100001) -> dict:
    """Minimum margins of the scalar facts used by the contraction and energy arguments."""
    u = np.concatenate([[0.0], np.geomspace(1e-12, 1e3, n - 1)])
    log_margin = u - np.log1p(u)

    z = np.linspace(-5.0, 5.0, n)
    j_low, j_high = np.inf, np.inf
    for eps in (1e-3, 0.1, 1.0):
        j = smoothstep_primitive(z, eps)
        j_low = min(j_low, float(j.min()))
        j_high = min(j_high, float((np.abs(z) - j).min()))
    # j is the primitive of the smoothstep: compare with a cumulative quadrature
    eps = 0.1
    jq = spi.cumulative_trapezoid(smoothstep_sign(z, eps), z, initial=0.0)
    jq -= np.interp(0.0, z, jq)
    prim_err = float(np.max(np.abs(jq - smoothstep_primitive(z, eps))))

    s = np.geomspace(1e-3, 1e3, 2001)
    step = 1e-4 * np.maximum(1.0, s)
    fd = (psi(s + step) - psi(s - step)) / (2.0 * step)
    dpsi_err = float(np.max(np.abs(fd - np.log1p(s)) / np.maximum(1.0, np.log1p(s))))

    return {
        "log1p_le_u_margin": float(log_margin.min()),
        "log1p_le_u_equality_at_0": float(log_margin[0]),
        "j_nonneg_margin": j_low,
        "j_le_abs_margin": j_high,
        "j_primitive_error": prim_err,
        "psi_prime_fd_error": dpsi_err,
    }
