"""sigma-harmonic extension to the upper half-space and its conormal trace.

The extension ``W(x, y)`` of ``U`` solves ``div(y^(1-sigma) grad W) = 0``
with ``W(x, 0) = U(x)``.  It is diagonal in the x-frequency, so each Fourier
coefficient follows the two-point problem

    (y^(1-sigma) W')' = y^(1-sigma) |xi|^2 W,   W(0) = 1,   W(Y) = 0,

solved on a mesh graded geometrically towards ``y = 0``.  The flux between
two nodes uses ``sigma / (y_{j+1}^sigma - y_j^sigma)``, which is exact for
the local behaviour ``A + B y^sigma``.  The zero frequency gets the bounded
extension of a constant, ``W = 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .core import Field, Grid, _rfft_weights
from .fraclap import mu_sigma

__all__ = [
    "graded_mesh",
    "extension_profiles",
    "ExtensionField",
    "extend",
    "conormal_trace",
    "extension_energy",
    "UniquenessReport",
    "linear_uniqueness_check",
]


def graded_mesh(y_min: float, q: float, Y: float) -> np.ndarray:
    """``0, y_min, y_min q, y_min q^2, ...`` closed off by ``Y``."""
    if not y_min > 0 or not 1.0 < q or not Y > y_min:
        raise ValueError(f"need y_min > 0, q > 1 and Y > y_min (got {y_min}, {q}, {Y})")
    n = int(math.ceil(math.log(Y / y_min) / math.log(q))) + 1
    y = y_min * q ** np.arange(n)
    y = y[y < Y * (1.0 - 1e-12)]
    return np.concatenate([[0.0], y, [Y]])


def _mesh_coefficients(y: np.ndarray, sigma: float):
    ys = y**sigma
    flux = sigma / np.diff(ys)
    edges = np.concatenate([[0.0], 0.5 * (y[1:] + y[:-1]), [y[-1]]])
    mass = np.diff(edges ** (2.0 - sigma)) / (2.0 - sigma)
    return flux, mass


def extension_profiles(xi: np.ndarray, y: np.ndarray, sigma: float) -> np.ndarray:
    """Discrete profiles ``phi(xi, y_j)`` with ``phi(0) = 1``, ``phi(Y) = 0``.

    Vectorised Thomas algorithm over the frequencies.  ``xi == 0`` rows are
    set to 1 everywhere.
    """
    xi = np.asarray(xi, dtype=float)
    flux, mass = _mesh_coefficients(y, sigma)
    n = len(y)
    m = n - 2
    nf = xi.size
    out = np.zeros((nf, n))
    out[:, 0] = 1.0
    if m > 0:
        lower = -flux[1:m]
        upper = -flux[1:m]
        diag = (flux[:-1] + flux[1:])[None, :] + (xi**2)[:, None] * mass[1:-1][None, :]
        rhs = np.zeros((nf, m))
        rhs[:, 0] = flux[0]
        cp = np.zeros((nf, m))
        dp = np.zeros((nf, m))
        den = diag[:, 0]
        if m > 1:
            cp[:, 0] = upper[0] / den
        dp[:, 0] = rhs[:, 0] / den
        for j in range(1, m):
            den = diag[:, j] - lower[j - 1] * cp[:, j - 1]
            if j < m - 1:
                cp[:, j] = upper[j] / den
            dp[:, j] = (rhs[:, j] - lower[j - 1] * dp[:, j - 1]) / den
        sol = np.empty((nf, m))
        sol[:, -1] = dp[:, -1]
        for j in range(m - 2, -1, -1):
            sol[:, j] = dp[:, j] - cp[:, j] * sol[:, j + 1]
        out[:, 1:-1] = sol
    out[xi == 0, :] = 1.0
    return out


def _profile_energy(profiles: np.ndarray, xi: np.ndarray, y: np.ndarray, sigma: float) -> np.ndarray:
    """``int y^(1-sigma) (phi'^2 + xi^2 phi^2) dy`` of each discrete profile."""
    flux, mass = _mesh_coefficients(y, sigma)
    grad = np.sum(flux[None, :] * np.diff(profiles, axis=1) ** 2, axis=1)
    pot = (xi**2) * np.sum(mass[None, :] * profiles**2, axis=1)
    return grad + pot


@dataclass(frozen=True, eq=False)
class ExtensionField:
    """Extension of a grid field, stored as per-frequency profiles.

    Attributes
    ----------
    y : ndarray
        Levels ``0 = y_0 < y_1 < ... < y_n = Y``.
    U_hat : ndarray
        ``rfftn`` of the boundary data.
    xi : ndarray
        Distinct ``|xi|`` values; ``index`` maps the rfft lattice onto them.
    profiles : ndarray
        ``profiles[i, j]`` is the profile of ``xi[i]`` at ``y[j]``.
    """

    grid: Grid
    sigma: float
    y: np.ndarray
    U_hat: np.ndarray
    xi: np.ndarray
    index: np.ndarray
    profiles: np.ndarray

    @property
    def n_levels(self) -> int:
        return len(self.y)

    def level_hat(self, j: int) -> np.ndarray:
        return self.U_hat * self.profiles[self.index, j]

    def level(self, j: int) -> Field:
        """``W(., y_j)`` on the grid."""
        return Field(sfft.irfftn(self.level_hat(j), s=self.grid.shape), self.grid, "periodic")

    def nearest_level(self, y: float) -> int:
        return int(np.argmin(np.abs(self.y - y)))

    def at(self, y: float) -> Field:
        """``W(., y)`` for an arbitrary height, via per-frequency interpolation in ``y^sigma``."""
        ys = self.y**self.sigma
        t = y**self.sigma
        j = int(np.clip(np.searchsorted(ys, t) - 1, 0, len(ys) - 2))
        w = (t - ys[j]) / (ys[j + 1] - ys[j])
        prof = (1 - w) * self.profiles[:, j] + w * self.profiles[:, j + 1]
        return Field(sfft.irfftn(self.U_hat * prof[self.index], s=self.grid.shape), self.grid, "periodic")


def _unique_frequencies(grid: Grid):
    """Distinct ``|xi|`` on the rfft lattice, keyed by the integer ``sum k_i^2``."""
    M = grid.M
    full = np.round(sfft.fftfreq(M, d=1.0 / M)).astype(np.int64)
    half = np.arange(M // 2 + 1, dtype=np.int64)
    axes = [full] * (grid.N - 1) + [half]
    mesh = np.meshgrid(*axes, indexing="ij")
    key = sum(k * k for k in mesh)
    uniq, inv = np.unique(key, return_inverse=True)
    xi = (math.pi / grid.L) * np.sqrt(uniq.astype(float))
    return xi, inv.reshape(key.shape)


def extend(
    U: Field,
    sigma: float,
    Y: float | None = None,
    y_min: float | None = None,
    q: float = 1.1,
    top_tol: float = 1e-3,
) -> ExtensionField:
    """sigma-harmonic extension of ``U`` on ``[-L, L)^N x [0, Y]``.

    Defaults: ``Y = 4L``, ``y_min = h/64``, ``q = 1.1``.

    Raises
    ------
    ValueError
        If the non-constant part of ``W`` at ``y ~ Y/2`` is still above
        ``top_tol * ||U||_inf`` (``Y`` too small for the data).
    """
    if not 0.0 < sigma < 2.0:
        raise ValueError(f"sigma must lie in (0, 2), got {sigma}")
    if not 1.0 < q <= 1.2:
        raise ValueError(f"grading ratio q must lie in (1, 1.2], got {q}")
    grid = U.grid
    Y = 4.0 * grid.L if Y is None else float(Y)
    y_min = grid.h / 64.0 if y_min is None else float(y_min)
    y = graded_mesh(y_min, q, Y)
    xi, index = _unique_frequencies(grid)
    profiles = extension_profiles(xi, y, sigma)
    U_hat = sfft.rfftn(U.values)
    W = ExtensionField(grid, float(sigma), y, U_hat, xi, index, profiles)
    scale = U.sup
    if scale > 0:
        j = W.nearest_level(Y / 2.0)
        hat = W.level_hat(j)
        hat.flat[0] = 0.0
        fluct = np.max(np.abs(sfft.irfftn(hat, s=grid.shape)))
        if fluct > top_tol * scale:
            raise ValueError(
                f"extension height Y = {Y} too small: oscillation {fluct:.3g} at y = {y[j]:.3g}"
                f" exceeds {top_tol:g} * ||U||_inf"
            )
    return W


def _trace_multiplier(W: ExtensionField, method: str = "flux") -> np.ndarray:
    y = W.y
    if len(y) < 4 or not (y[0] == 0 and 0 < y[1] < y[2]):
        raise ValueError("conormal trace needs a graded mesh with at least two positive levels")
    s = W.sigma
    if method == "flux":
        flux, mass = _mesh_coefficients(y, s)
        return mu_sigma(s) * (flux[0] * (1.0 - W.profiles[:, 1]) + W.xi**2 * mass[0])
    if method == "richardson":
        p = 2.0 - s
        E1 = (W.profiles[:, 1] - 1.0) / y[1] ** s
        E2 = (W.profiles[:, 2] - 1.0) / y[2] ** s
        b = (E1 * y[2] ** p - E2 * y[1] ** p) / (y[2] ** p - y[1] ** p)
        return -mu_sigma(s) * s * b
    raise ValueError(f"unknown trace method {method!r}")


def conormal_trace(W: ExtensionField, sigma: float | None = None, method: str = "flux") -> Field:
    """``-mu_sigma lim y^(1-sigma) dW/dy`` at ``y = 0``.

    ``"flux"`` balances the first dual cell ``[0, y_1/2]``: the discrete
    flux into it minus its weighted mass term.  This is the discrete
    Dirichlet-to-Neumann map, so ``extension_energy(W)`` equals
    ``int U * trace`` exactly.

    ``"richardson"`` uses ``W = W(0) + b y^sigma + O(y^2)``: ``(W(y) - W(0)) /
    y^sigma = b + O(y^(2-sigma))`` is extrapolated from the two lowest
    levels and the trace is ``-mu_sigma * sigma * b``.  It degrades for
    ``sigma >= 1.5`` where the boundary cell error ``O(y_1^(2-sigma))`` is
    slow to vanish.
    """
    if sigma is not None and abs(sigma - W.sigma) > 1e-15:
        raise ValueError("sigma differs from the one used for the extension")
    mult = _trace_multiplier(W, method)
    out = sfft.irfftn(W.U_hat * mult[W.index], s=W.grid.shape)
    return Field(out, W.grid, "periodic")


def extension_energy(W: ExtensionField) -> float:
    """Weighted Dirichlet energy ``mu_sigma int int y^(1-sigma) |grad W|^2``."""
    grid = W.grid
    e = _profile_energy(W.profiles, W.xi, W.y, W.sigma)
    weight = _rfft_weights(grid)
    total = np.sum(weight * e[W.index] * np.abs(W.U_hat) ** 2)
    return float(mu_sigma(W.sigma) * total * grid.cell_volume / grid.M**grid.N)


@dataclass(frozen=True)
class UniquenessReport:
    status: str
    sup_diff: float
    inner_sup_diff: float
    energy: float
    decay_ratio: float
    tol: float


def linear_uniqueness_check(
    U_candidate: Field,
    rho: Field,
    sigma: float,
    tol: float = 1e-8,
    decay_tol: float = 2e-2,
) -> UniquenessReport:
    """Compare a candidate solution of ``(-Lap)^{sigma/2} U = rho`` with the Riesz potential.

    The candidate must vanish at infinity: its sup over ``|x| >= 3L/4``
    relative to its sup must stay below ``decay_tol``, otherwise the status
    is ``"hypothesis unmet"``.  Otherwise the status is ``"pass"`` when both
    ``||D||_inf`` and the extension energy of ``D = U - K * rho`` are at most
    ``tol``.
    """
    from .riesz import riesz_convolve

    grid = U_candidate.grid
    v = U_candidate.values
    scale = float(np.max(np.abs(v)))
    outer = grid.radius >= 0.75 * grid.L
    ratio = float(np.max(np.abs(v[outer])) / scale) if scale > 0 else 0.0
    D = U_candidate.values - riesz_convolve(rho, sigma).values
    Df = Field(D, grid, "periodic")
    sup_diff = float(np.max(np.abs(D)))
    inner = grid.radius <= grid.L / 4
    inner_sup = float(np.max(np.abs(D[inner])))
    energy = extension_energy(extend(Df, sigma, top_tol=math.inf))
    if ratio > decay_tol:
        status = "hypothesis unmet"
    elif sup_diff <= tol and energy <= tol:
        status = "pass"
    else:
        status = "fail"
    return UniquenessReport(status, sup_diff, inner_sup, energy, ratio, tol)
