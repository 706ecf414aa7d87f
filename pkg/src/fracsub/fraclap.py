"""Whole-space fractional Laplacian: Fourier multiplier and singular integral.

Two independent discretizations of ``(-Lap)^{sigma/2}`` on the grid.

* :func:`apply_spectral` multiplies the discrete Fourier coefficients by
  ``|xi|^sigma`` (periodic torus).
* :func:`apply_singular` evaluates the principal-value integral
  ``c_singular * PV int (f(x) - f(z)) |x - z|^(-N - sigma) dz`` by a lattice
  sum with a Taylor correction for the singular neighbourhood.

Agreement between the two fixes the normalising constants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft as sfft
from scipy.special import gamma, gammaincc, zeta

from .core import Field, Grid, unit_sphere_area

__all__ = [
    "Constants",
    "constants",
    "SpectralOperator",
    "apply_spectral",
    "apply_singular",
    "lattice_zeta",
    "discrete_laplacian",
]


@dataclass(frozen=True)
class Constants:
    N: int
    sigma: float
    c_singular: float
    c_riesz: float | None
    mu_sigma: float


def c_singular(N: int, sigma: float) -> float:
    return (
        2.0 ** (sigma - 1.0) * sigma * gamma((N + sigma) / 2.0)
        / (math.pi ** (N / 2.0) * gamma(1.0 - sigma / 2.0))
    )


def c_riesz(N: int, sigma: float) -> float:
    if not sigma < N:
        raise ValueError(
            f"the Riesz kernel |x|^(sigma-N) needs sigma < N (got N={N}, sigma={sigma})"
        )
    return gamma((N - sigma) / 2.0) / (
        2.0**sigma * math.pi ** (N / 2.0) * gamma(sigma / 2.0)
    )


def mu_sigma(sigma: float) -> float:
    return 2.0 ** (sigma - 1.0) * gamma(sigma / 2.0) / gamma(1.0 - sigma / 2.0)


def _check_order(sigma: float) -> None:
    if not 0.0 < sigma < 2.0:
        raise ValueError(f"sigma must lie in (0, 2), got {sigma}")


def constants(N: int, sigma: float, require_riesz: bool = True) -> Constants:
    """Normalising constants of the operator, its inverse and the extension.

    Raises
    ------
    ValueError
        If ``sigma >= N`` and ``require_riesz`` is set.
    """
    if N not in (1, 2, 3):
        raise ValueError(f"N must be 1, 2 or 3, got {N}")
    _check_order(sigma)
    if sigma < N:
        cr = c_riesz(N, sigma)
    elif require_riesz:
        raise ValueError(f"c_riesz unavailable: need sigma < N, got sigma={sigma}, N={N}")
    else:
        cr = None
    return Constants(N, sigma, c_singular(N, sigma), cr, mu_sigma(sigma))


# ---------------------------------------------------------------------------
# Fourier multiplier
# ---------------------------------------------------------------------------


class SpectralOperator:
    """Precomputed multiplier ``|xi|^sigma`` on the rfft half-lattice.

    Parameters
    ----------
    grid : Grid
    sigma : float
        Order of the operator, ``0 < sigma < 2``.
    symbol : {"exact", "discrete"}
        ``"exact"`` uses ``|xi|^sigma``.  ``"discrete"`` uses the fractional
        power of the centred five-point (2N+1 point) Laplacian symbol, which
        is what a finite-difference scheme would see.
    """

    def __init__(self, grid: Grid, sigma: float, symbol: str = "exact"):
        _check_order(sigma)
        self.grid = grid
        self.sigma = float(sigma)
        self.symbol = symbol
        if symbol == "exact":
            base = grid.rfrequency_norm**2
        elif symbol == "discrete":
            h = grid.h
            full = grid.frequencies
            half = 2.0 * np.pi * sfft.rfftfreq(grid.M, d=h)
            axes = [full] * (grid.N - 1) + [half]
            mesh = np.meshgrid(*axes, indexing="ij")
            base = sum((4.0 / h**2) * np.sin(k * h / 2.0) ** 2 for k in mesh)
        else:
            raise ValueError(f"unknown symbol {symbol!r}")
        mult = base ** (self.sigma / 2.0)
        mult.flat[0] = 0.0
        mult.flags.writeable = False
        self.multiplier = mult

    def __call__(self, f: Field) -> Field:
        if f.grid != self.grid:
            raise ValueError("field lives on a different grid")
        fh = sfft.rfftn(f.values)
        out = sfft.irfftn(fh * self.multiplier, s=self.grid.shape)
        return Field(out, self.grid, "periodic")


@lru_cache(maxsize=32)
def _spectral(grid: Grid, sigma: float, symbol: str) -> SpectralOperator:
    return SpectralOperator(grid, sigma, symbol)


def apply_spectral(f: Field, sigma: float, symbol: str = "exact") -> Field:
    """``(-Lap)^{sigma/2} f`` on the torus through the FFT."""
    _check_order(sigma)
    return _spectral(f.grid, float(sigma), symbol)(f)


# ---------------------------------------------------------------------------
# lattice sums
# ---------------------------------------------------------------------------


def _upper_gamma(a: float, x: np.ndarray) -> np.ndarray:
    """Non-normalised upper incomplete gamma, valid for ``a > -1``."""
    if a > 0:
        return gammaincc(a, x) * gamma(a)
    if a == 0:
        from scipy.special import exp1

        return exp1(x)
    return (_upper_gamma(a + 1.0, x) - x**a * np.exp(-x)) / a


@lru_cache(maxsize=64)
def lattice_zeta(N: int, s: float, cutoff: int = 6) -> float:
    """Epstein zeta ``Z_N(s) = sum_{n in Z^N, n != 0} |n|^(-2s)``.

    Analytically continued to all ``s != N/2`` by the theta-function
    splitting.  For N = 1 this is ``2 zeta(2s)``.
    """
    if abs(s - N / 2.0) < 1e-14:
        raise ValueError("Z_N(s) has a pole at s = N/2")
    if N == 1:
        return float(2.0 * zeta(2.0 * s)) if s != 0 else -1.0
    rng = np.arange(-cutoff, cutoff + 1)
    mesh = np.meshgrid(*([rng] * N), indexing="ij")
    q = math.pi * sum(m.astype(float) ** 2 for m in mesh).ravel()
    q = q[q > 0]
    terms = _upper_gamma(s, q) * q ** (-s) + _upper_gamma(N / 2.0 - s, q) * q ** (s - N / 2.0)
    bracket = -1.0 / s + 1.0 / (s - N / 2.0) + float(np.sum(terms))
    return bracket * math.pi**s / gamma(s)


def _lag_mesh(shape: tuple[int, ...], h: float) -> list[np.ndarray]:
    """Signed FFT-ordered lags ``j h`` on a periodic array of ``shape``."""
    axes = [sfft.fftfreq(n, d=1.0 / n) * h for n in shape]
    return np.meshgrid(*axes, indexing="ij")


def discrete_laplacian(values: np.ndarray, h: float, periodic: bool = True) -> np.ndarray:
    """Centred ``2N+1``-point Laplacian; zero padding when not periodic."""
    out = -2.0 * values.ndim * values
    for ax in range(values.ndim):
        if periodic:
            out = out + np.roll(values, 1, ax) + np.roll(values, -1, ax)
        else:
            pad = [(1, 1) if i == ax else (0, 0) for i in range(values.ndim)]
            v = np.pad(values, pad)
            sl_lo = [slice(None)] * values.ndim
            sl_hi = [slice(None)] * values.ndim
            sl_lo[ax] = slice(0, -2)
            sl_hi[ax] = slice(2, None)
            out = out + v[tuple(sl_lo)] + v[tuple(sl_hi)]
    return out / h**2


@lru_cache(maxsize=32)
def _taylor_defect(N: int, sigma: float, h: float, delta: float) -> float:
    """Lattice sum minus integral of ``exp(-|w|^2/delta^2) |w|^(2-N-sigma)``.

    Multiplied by ``Lap f / (2N)`` this is what the lattice sum gets wrong
    about the quadratic Taylor term near the singularity.
    """
    n = int(math.ceil(7.0 * delta / h))
    w = _lag_mesh((2 * n + 1,) * N, h)
    r2 = sum(c * c for c in w)
    r2 = r2[r2 > 0]
    lattice = float(np.sum(np.exp(-r2 / delta**2) * r2 ** ((2.0 - N - sigma) / 2.0))) * h**N
    exact = unit_sphere_area(N) * delta ** (2.0 - sigma) * gamma(1.0 - sigma / 2.0) / 2.0
    return lattice - exact


@lru_cache(maxsize=16)
def _folded_kernel(grid: Grid, sigma: float, T: float) -> np.ndarray:
    """``sum_n |v + 2Ln|^(-N-sigma) h^N`` over images with ``0 < |v+2Ln| < T``."""
    N, L, h = grid.N, grid.L, grid.h
    lags = _lag_mesh(grid.shape, h)
    nimg = int(math.ceil(T / (2.0 * L))) + 1
    K = np.zeros(grid.shape)
    for shift in np.ndindex(*([2 * nimg + 1] * N)):
        d2 = sum((lags[i] + 2.0 * L * (shift[i] - nimg)) ** 2 for i in range(N))
        mask = (d2 > 0) & (d2 < T * T)
        K[mask] += d2[mask] ** (-(N + sigma) / 2.0)
    K *= h**N
    K.flags.writeable = False
    return K


@lru_cache(maxsize=16)
def _box_kernel_hat(grid: Grid, sigma: float) -> np.ndarray:
    """rfft of ``|w|^(-N-sigma) h^N`` on the doubled grid, lags ``|w_i| < 2L``."""
    N, M, h = grid.N, grid.M, grid.h
    shape = (2 * M,) * N
    lags = _lag_mesh(shape, h)
    d2 = sum(c * c for c in lags)
    inside = np.ones(shape, dtype=bool)
    for c in lags:
        inside &= np.abs(c) < 2.0 * grid.L - 0.5 * h
    K = np.zeros(shape)
    mask = inside & (d2 > 0)
    K[mask] = d2[mask] ** (-(N + sigma) / 2.0) * h**N
    return sfft.rfftn(K)


def apply_singular(
    f: Field,
    sigma: float,
    delta: float | None = None,
    tail_radius: float | None = None,
    tail: bool = True,
) -> Field:
    """Singular-integral fractional Laplacian on the grid.

    The principal value is replaced by the lattice sum over ``w = z - x != 0``.
    What the lattice sum misses near ``w = 0`` is restored through the
    quadratic Taylor term ``Lap_h f / (2N)`` times a Gaussian-localised
    lattice-minus-integral defect of width ``delta``.

    For ``boundary == "periodic"`` the kernel is folded onto the torus for
    ``|w| < tail_radius`` and the images beyond contribute
    ``(f(x) - mean f) * omega_{N-1} T^(-sigma) / sigma`` (skipped when
    ``tail`` is false).  For ``boundary == "zero"`` the sum over all of
    ``Z^N`` is exact: the diagonal part is ``h^(-sigma) Z_N((N+sigma)/2)``.

    Parameters
    ----------
    delta : float, optional
        Width of the Taylor correction, default ``4h``.  Must be ``>= 2h``.
    tail_radius : float, optional
        Periodic mode only, default ``4L``.
    """
    _check_order(sigma)
    grid = f.grid
    N, h = grid.N, grid.h
    delta = 4.0 * h if delta is None else float(delta)
    if delta < 2.0 * h - 1e-12:
        raise ValueError(f"delta = {delta} is below 2h = {2 * h}; the Taylor correction is invalid")
    v = f.values
    periodic = f.boundary == "periodic"
    if not periodic:
        outer = grid.radius >= 0.75 * grid.L
        scale = np.max(np.abs(v))
        if scale > 0 and np.max(np.abs(v[outer])) > 1e-3 * scale:
            raise ValueError(
                "zero-extended field does not decay (outer-quarter sup above 1e-3 of sup);"
                " use a periodic field instead"
            )
    lap = discrete_laplacian(v, h, periodic=periodic)
    correction = lap / (2.0 * N) * _taylor_defect(N, float(sigma), h, delta)

    if periodic:
        T = 4.0 * grid.L if tail_radius is None else float(tail_radius)
        if T <= h:
            raise ValueError("tail_radius must exceed the grid spacing")
        K = _folded_kernel(grid, float(sigma), T)
        conv = sfft.irfftn(sfft.rfftn(v) * sfft.rfftn(K), s=grid.shape)
        diag = v * float(np.sum(K))
        out = diag - conv + correction
        if tail:
            omega = unit_sphere_area(N)
            out = out + (v - v.mean()) * omega * T ** (-sigma) / sigma
    else:
        shape = (2 * grid.M,) * N
        padded = np.zeros(shape)
        padded[tuple(slice(0, grid.M) for _ in range(N))] = v
        full = sfft.irfftn(sfft.rfftn(padded) * _box_kernel_hat(grid, float(sigma)), s=shape)
        conv = full[tuple(slice(0, grid.M) for _ in range(N))]
        diag = v * h ** (-sigma) * lattice_zeta(N, (N + sigma) / 2.0)
        out = diag - conv + correction
    return Field(c_singular(N, sigma) * out, grid, f.boundary)
