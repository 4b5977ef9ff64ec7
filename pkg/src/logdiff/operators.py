"""Nonlocal operators on the periodic grid.

The spectral half-Laplacian (symbol ``|xi|``, Nyquist mode kept) is the
production path.  The Riesz principal-value quadrature is an independent
second discretization kept only as an oracle.

The discrete spectral ``(-Delta)^{1/2}`` has nonpositive off-diagonal
entries (zero at even offsets), so it generates a Markov semigroup on the
grid.  The comparison, positivity and contraction properties of the
implicit scheme rest on this.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gamma, zeta

from .grid import Field, Grid1D, integrate


@dataclass(frozen=True)
class SpectralMultiplier:
    """``|xi_k|^sigma`` over the rfft frequencies of a grid."""

    sigma: float
    multipliers: np.ndarray

    @classmethod
    def for_grid(cls, grid: Grid1D, sigma: float) -> "SpectralMultiplier":
        return cls(float(sigma), _abs_xi_power(grid.n, grid.L, float(sigma)))


@functools.lru_cache(maxsize=64)
def _abs_xi_power(n: int, L: float, sigma: float) -> np.ndarray:
    xi = np.pi * np.arange(n // 2 + 1) / L
    m = xi**sigma
    m[0] = 0.0
    m.flags.writeable = False
    return m


@functools.lru_cache(maxsize=64)
def _rxi(n: int, L: float) -> np.ndarray:
    xi = np.pi * np.arange(n // 2 + 1) / L
    xi.flags.writeable = False
    return xi


def _check_sigma(sigma: float, upper_closed: bool = True) -> None:
    ok = 0 < sigma <= 2 if upper_closed else 0 < sigma < 2
    if not ok:
        raise ValueError(f"sigma out of range: {sigma!r}")


def apply_symbol(f: Field, symbol: np.ndarray) -> Field:
    """Multiply the rfft of ``f`` by ``symbol`` and transform back."""
    n = f.grid.n
    return f.with_values(np.fft.irfft(np.fft.rfft(f.values) * symbol, n=n))


def half_laplacian_values(values: np.ndarray, grid: Grid1D, scale: float = 1.0) -> np.ndarray:
    """Array-level ``scale * (-Delta)^{1/2}``; used in the solver inner loops."""
    sym = _abs_xi_power(grid.n, grid.L, 1.0)
    return np.fft.irfft(np.fft.rfft(values) * (scale * sym), n=grid.n)


def frac_laplacian_spectral(f: Field, sigma: float) -> Field:
    _check_sigma(sigma)
    return apply_symbol(f, _abs_xi_power(f.grid.n, f.grid.L, float(sigma)))


def fractional_power(f: Field, s: float) -> Field:
    """``(-Delta)^{s/2} f`` for any ``s > 0`` (e.g. ``s = 1/2`` gives the quarter power)."""
    if not s > 0:
        raise ValueError("order must be positive")
    return apply_symbol(f, _abs_xi_power(f.grid.n, f.grid.L, float(s)))


def spectral_derivative(f: Field) -> Field:
    xi = _rxi(f.grid.n, f.grid.L)
    sym = 1j * xi
    sym[-1] = 0.0  # Nyquist has no real derivative
    return apply_symbol(f, sym)


def hilbert_transform(f: Field) -> Field:
    """Multiplier ``-i sgn(xi)``; zero and Nyquist modes are annihilated."""
    sym = np.full(f.grid.n // 2 + 1, -1j)
    sym[0] = 0.0
    sym[-1] = 0.0
    return apply_symbol(f, sym)


def riesz_constant(sigma: float) -> float:
    """``C_{1,sigma}``; equals ``1/pi`` at ``sigma = 1``."""
    return 2.0**sigma * gamma((1.0 + sigma) / 2.0) / (math.sqrt(math.pi) * abs(gamma(-sigma / 2.0)))


def periodic_riesz_kernel(s: np.ndarray, L: float, sigma: float) -> np.ndarray:
    """``sum_m |s + 2 L m|^{-1-sigma}`` for ``0 < s < 2L``, summed exactly.

    All periodic images are included through the Hurwitz zeta function, so
    there is no image-truncation tail.
    """
    s = np.asarray(s, dtype=float)
    P = 2.0 * L
    a = s / P
    return P ** (-1.0 - sigma) * (zeta(1.0 + sigma, a) + zeta(1.0 + sigma, 1.0 - a))


def frac_laplacian_riesz(f: Field, sigma: float) -> Field:
    """Principal-value quadrature of the hypersingular Riesz integral.

    The integral over one period is folded onto ``s in (0, L]`` using the
    symmetric difference ``2 f(x) - f(x+s) - f(x-s)`` and summed with the
    trapezoid rule against the exact periodized kernel.  The missing
    singular cell at ``s = 0`` is restored by the zeta-function endpoint
    correction ``-zeta(sigma-1) h^{2-sigma} phi(0)`` with
    ``phi(0) = -f''(x)`` taken from the centred second difference.
    O(n^2) work; oracle use only.
    """
    _check_sigma(sigma, upper_closed=False)
    g = f.grid
    n, h, v = g.n, g.h, f.values
    half = n // 2
    j = np.arange(1, half + 1)
    w = h * periodic_riesz_kernel(j * h, g.L, sigma)
    w[-1] *= 0.5
    acc = np.zeros(n)
    for jj, wj in zip(j, w):
        acc += wj * (2.0 * v - np.roll(v, -jj) - np.roll(v, jj))
    d2 = (np.roll(v, -1) - 2.0 * v + np.roll(v, 1)) / h**2
    acc += zeta(sigma - 1.0) * h ** (2.0 - sigma) * d2
    return f.with_values(riesz_constant(sigma) * acc)


def poisson_kernel(grid: Grid1D, t: float) -> Field:
    """``P(x, t) = t / (pi (x^2 + t^2))`` sampled on the grid."""
    if not t > 0:
        raise ValueError("t must be positive")
    x = grid.x
    return Field(grid, t / (np.pi * (x * x + t * t)))


def poisson_kernel_half_laplacian(grid: Grid1D, t: float) -> Field:
    """Closed form of ``(-Delta)^{1/2} P(., t) = -d_t P``.

    Equals ``(t^2 - x^2) / (pi (x^2 + t^2)^2)``; positive at the origin,
    where ``P`` has its maximum.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    x = grid.x
    return Field(grid, (t * t - x * x) / (np.pi * (x * x + t * t) ** 2))


def conjugate_poisson_kernel(grid: Grid1D, t: float) -> Field:
    """Closed form of ``H P(., t)``: ``x / (pi (x^2 + t^2))``."""
    if not t > 0:
        raise ValueError("t must be positive")
    x = grid.x
    return Field(grid, x / (np.pi * (x * x + t * t)))


def periodic_convolve(f: Field, g: Field) -> Field:
    """``(f * g)(x_i) = h sum_j f(x_j) g(x_i - x_j)`` on the periodic grid."""
    grid = f.grid
    origin_first = np.fft.ifftshift(g.values)
    return f.with_values(grid.h * np.fft.irfft(np.fft.rfft(f.values) * np.fft.rfft(origin_first), n=grid.n))


def harmonic_extension_slice(g: Field, y: float) -> Field:
    """Slice at height ``y`` of the harmonic extension (multiplier ``e^{-|xi| y}``)."""
    if not y > 0:
        raise ValueError("y must be positive")
    return apply_symbol(g, np.exp(-_rxi(g.grid.n, g.grid.L) * y))


def quarter_laplacian_energy(f: Field) -> float:
    """``||(-Delta)^{1/4} f||_2^2`` by Plancherel on the rfft coefficients."""
    n, h = f.grid.n, f.grid.h
    F = np.fft.rfft(f.values)
    w = np.full(F.shape, 2.0)
    w[0] = 1.0
    w[-1] = 1.0
    return float((h / n) * np.sum(w * _rxi(n, f.grid.L) * np.abs(F) ** 2))


def slice_gradient_energy(g: Field, y: float) -> float:
    """``int |grad E(g)|^2 dx`` on the slice at height ``y``."""
    n, h = g.grid.n, g.grid.h
    xi = _rxi(n, g.grid.L)
    F = np.fft.rfft(g.values) * np.exp(-xi * y)
    # |d_x|^2 + |d_y|^2 both carry xi^2 per mode
    w = np.full(F.shape, 2.0)
    w[0] = 1.0
    w[-1] = 1.0
    return float((h / n) * np.sum(w * 2.0 * xi**2 * np.abs(F) ** 2))


def extension_energy(g: Field, y0: float = 1e-7, levels: int = 90) -> float:
    """Dirichlet energy of the harmonic extension over the strip ``y > 0``.

    Slices are geometric, ``y_m = y0 2^m``; the integral is taken as a
    trapezoid in ``log y`` of ``y S(y)``, which is smooth and decays doubly
    exponentially at both ends.  The piece below ``y0`` is ``y0 S(y0)``.
    """
    ys = y0 * 2.0 ** np.arange(levels)
    s = np.array([slice_gradient_energy(g, y) for y in ys])
    integrand = ys * s
    step = math.log(2.0)
    body = step * (integrand.sum() - 0.5 * integrand[0] - 0.5 * integrand[-1])
    return float(body + y0 * s[0])


def inner(f: Field, g: Field) -> float:
    return integrate(f.with_values(f.values * g.values))
