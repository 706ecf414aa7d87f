"""Riesz potential ``K^sigma * rho``, finiteness diagnostics and decay analysis."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
import scipy.fft as sfft

from .core import AssumptionError, Field, Grid, ProblemSpec, unit_sphere_area
from .fraclap import _lag_mesh, c_riesz, lattice_zeta

__all__ = [
    "riesz_convolve",
    "riesz_majorant",
    "hls_ratio",
    "FinitenessReport",
    "finiteness_check",
    "DecayFit",
    "r_range",
    "admissible_exponents",
    "radial_profile",
    "decay_fit",
    "write_decay_report",
]


def _require_riesz(N: int, sigma: float) -> None:
    if not sigma < N:
        raise AssumptionError(
            f"Riesz potential needs sigma < N (got sigma={sigma}, N={N});"
            " the energy framework further needs N > 2*sigma"
        )


def central_weight(N: int, sigma: float, h: float, cell: str = "zeta") -> float:
    """Weight of the singular node in the lattice sum for ``|w|^(sigma-N)``.

    ``"zeta"`` is ``-Z_N((N-sigma)/2) h^sigma``, which makes the lattice sum
    exact up to smooth-remainder terms.  ``"ball"`` integrates the kernel
    over a ball with the cell's volume.
    """
    if cell == "zeta":
        return -lattice_zeta(N, (N - sigma) / 2.0) * h**sigma
    if cell == "ball":
        omega = unit_sphere_area(N)
        r0 = (N * h**N / omega) ** (1.0 / N)
        return omega * r0**sigma / sigma
    raise ValueError(f"unknown cell rule {cell!r}")


@lru_cache(maxsize=16)
def _riesz_kernel_hat(grid: Grid, sigma: float, cell: str) -> np.ndarray:
    N, M, h = grid.N, grid.M, grid.h
    shape = (2 * M,) * N
    lags = _lag_mesh(shape, h)
    d2 = sum(c * c for c in lags)
    inside = np.ones(shape, dtype=bool)
    for c in lags:
        inside &= np.abs(c) < 2.0 * grid.L - 0.5 * h
    K = np.zeros(shape)
    mask = inside & (d2 > 0)
    K[mask] = d2[mask] ** ((sigma - N) / 2.0) * h**N
    K.flat[0] = central_weight(N, sigma, h, cell)
    K *= c_riesz(N, sigma)
    return sfft.rfftn(K)


def riesz_convolve(rho: Field, sigma: float, cell: str = "zeta") -> Field:
    """``U = c_riesz * sum_z rho(z) |x - z|^(sigma - N) h^N`` on the grid.

    ``rho`` is taken to vanish outside the box.  The sum is a zero-padded
    cyclic convolution (padding factor 2, so no wrap-around).
    """
    grid = rho.grid
    _require_riesz(grid.N, sigma)
    shape = (2 * grid.M,) * grid.N
    inner = tuple(slice(0, grid.M) for _ in range(grid.N))
    padded = np.zeros(shape)
    padded[inner] = rho.values
    out = sfft.irfftn(sfft.rfftn(padded) * _riesz_kernel_hat(grid, float(sigma), cell), s=shape)
    return Field(out[inner], grid, "periodic")


def riesz_majorant(rho: Field, sigma: float) -> float:
    """``c_riesz (||rho||_inf |B_1-kernel integral| + ||rho||_1)``.

    Splits the kernel at ``|w| = 1``: inside, ``int_{B_1} |w|^(sigma-N) =
    omega/sigma``; outside the kernel is at most 1.
    """
    grid = rho.grid
    _require_riesz(grid.N, sigma)
    a = np.abs(rho.values)
    v1 = unit_sphere_area(grid.N) / sigma
    return c_riesz(grid.N, sigma) * (float(a.max()) * v1 + float(a.sum()) * grid.cell_volume)


def hls_ratio(rho: Field, sigma: float, p: float = 2.0) -> float:
    """``||K * rho||_{p*} / ||rho||_p`` with ``p* = N p / (N - sigma p)``."""
    grid = rho.grid
    N = grid.N
    if not sigma * p < N:
        raise AssumptionError("HLS needs sigma * p < N")
    pstar = N * p / (N - sigma * p)
    U = riesz_convolve(rho, sigma).values
    dv = grid.cell_volume
    num = (np.sum(np.abs(U) ** pstar) * dv) ** (1.0 / pstar)
    den = (np.sum(np.abs(rho.values) ** p) * dv) ** (1.0 / p)
    return float(num / den)


# ---------------------------------------------------------------------------
# finiteness
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FinitenessReport:
    integral_decay: float
    integral_local: float
    local_majorant: float
    tail_fraction: float
    passed: bool
    reason: str = ""


def finiteness_check(
    rho: Field,
    sigma: float,
    ceiling_decay: float = 1e6,
    ceiling_local: float = 1e6,
    tail_fraction_max: float = 0.25,
) -> FinitenessReport:
    """Evaluate the two integrals that make ``K^sigma * rho`` finite.

    ``integral_decay = int |rho| / (1 + |y|^(N-sigma))`` and
    ``integral_local = sup_x int_{B(x,1)} |rho(y)| |x-y|^(sigma-N)``.
    On a truncated box a divergent integral still returns a finite number,
    so the first one also fails when more than ``tail_fraction_max`` of it
    comes from ``|y| >= L/2``.
    """
    grid = rho.grid
    N = grid.N
    _require_riesz(N, sigma)
    a = np.abs(rho.values)
    r = grid.radius
    dens = a / (1.0 + r ** (N - sigma)) * grid.cell_volume
    i1 = float(dens.sum())
    tail = float(dens[r >= grid.L / 2].sum())
    frac = tail / i1 if i1 > 0 else 0.0

    shape = (2 * grid.M,) * N
    inner = tuple(slice(0, grid.M) for _ in range(N))
    lags = _lag_mesh(shape, grid.h)
    d2 = sum(c * c for c in lags)
    K = np.where((d2 > 0) & (d2 < 1.0), np.where(d2 > 0, d2, 1.0) ** ((sigma - N) / 2.0), 0.0)
    K *= grid.cell_volume
    # singular node plus the part of B_1 the lattice misses near the boundary
    K.flat[0] = central_weight(N, sigma, grid.h)
    padded = np.zeros(shape)
    padded[inner] = a
    i2_field = sfft.irfftn(sfft.rfftn(padded) * sfft.rfftn(K), s=shape)[inner]
    i2 = float(i2_field.max())
    majorant = float(a.max()) * unit_sphere_area(N) / sigma

    reasons = []
    if not i1 <= ceiling_decay:
        reasons.append("decay integral above ceiling")
    if frac > tail_fraction_max:
        reasons.append(f"{frac:.2f} of the decay integral sits in |y| >= L/2")
    if not i2 <= ceiling_local:
        reasons.append("local integral above ceiling")
    return FinitenessReport(i1, i2, majorant, frac, not reasons, "; ".join(reasons))


# ---------------------------------------------------------------------------
# decay exponents
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DecayFit:
    """Admissible ``(nu, r)`` pair with its exponent and, optionally, a fit.

    ``exponent`` is the admissible ``sigma - nu - N/r`` closest to the true
    decay ``sigma - N`` (the supremum over the region); ``exponent_inf`` is
    the infimum.  ``passed`` compares the fitted ``slope`` against
    ``exponent + slack``.
    """

    nu: float
    r: float
    exponent: float
    exponent_inf: float = math.nan
    fit_window: tuple[float, float] | None = None
    slope: float = math.nan
    constant: float = math.nan
    slack: float = 0.2
    passed: bool | None = None
    shells: tuple = field(default=(), repr=False)


def r_range(N: int, sigma: float, beta: float, nu: float) -> tuple[float, float] | None:
    """Open interval of admissible ``r`` for a given ``nu`` (None if empty)."""
    if not (N * (2.0 - sigma) / 2.0 < nu < N):
        return None
    lo = max(2.0 / sigma, N / (beta - nu)) if beta > nu else math.inf
    hi = N / (N - nu)
    return (lo, hi) if lo < hi else None


def admissible_exponents(spec: ProblemSpec, n_nu: int = 400, n_r: int = 400) -> DecayFit:
    """Scan the admissible ``(nu, r)`` region of the decay estimate.

    ``nu`` is sampled geometrically towards its upper end ``N`` and ``r``
    across each open interval from :func:`r_range`.

    Raises
    ------
    AssumptionError
        If the region is empty ("no admissible exponent").
    """
    N, sigma, beta = spec.N, spec.sigma, spec.beta
    if not beta > N:
        raise AssumptionError("no admissible exponent: beta must exceed N")
    nu_lo = N * (2.0 - sigma) / 2.0
    t = np.geomspace(1e-6, 1.0, n_nu, endpoint=False)
    nus = N - (N - nu_lo) * t
    best = None
    worst = None
    for nu in nus:
        rr = r_range(N, sigma, beta, float(nu))
        if rr is None:
            continue
        lo, hi = rr
        half = np.geomspace(1e-9, 0.5, n_r // 2)
        s = np.concatenate([half, 1.0 - half[::-1]])
        rs = lo + (hi - lo) * s
        ex = sigma - nu - N / rs
        i, j = int(np.argmax(ex)), int(np.argmin(ex))
        if best is None or ex[i] > best[2]:
            best = (float(nu), float(rs[i]), float(ex[i]))
        if worst is None or ex[j] < worst[2]:
            worst = (float(nu), float(rs[j]), float(ex[j]))
    if best is None:
        raise AssumptionError("no admissible exponent for these (N, sigma, beta)")
    return DecayFit(nu=best[0], r=best[1], exponent=best[2], exponent_inf=worst[2])


def radial_profile(U: Field, a: float, b: float, n_shells: int = 20):
    """Shell means of ``log|x|`` and ``log U`` over log-spaced shells in ``[a, b]``.

    Empty shells are dropped.  Returns ``(r_geo, u_geo, counts)`` where the
    first two are geometric means.
    """
    r = U.grid.radius
    v = U.values
    edges = np.geomspace(a, b, n_shells + 1)
    rs, us, counts = [], [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        mask = (r >= lo) & (r < hi) if hi < b else (r >= lo) & (r <= b + 1e-12)
        if not np.any(mask):
            continue
        if np.any(v[mask] <= 0):
            raise ValueError(f"U is not positive in the shell [{lo:.4g}, {hi:.4g})")
        rs.append(math.exp(float(np.mean(np.log(r[mask])))))
        us.append(math.exp(float(np.mean(np.log(v[mask])))))
        counts.append(int(mask.sum()))
    return np.array(rs), np.array(us), np.array(counts)


def decay_fit(
    U: Field,
    window: tuple[float, float],
    reference: DecayFit | None = None,
    n_shells: int = 20,
    slack: float = 0.2,
) -> DecayFit:
    """Least-squares slope of ``log U`` against ``log |x|`` on ``window``.

    Parameters
    ----------
    reference : DecayFit, optional
        Output of :func:`admissible_exponents`; the fit passes when
        ``slope <= reference.exponent + slack``.  Without it the fit passes
        when the slope is negative.
    """
    a, b = map(float, window)
    if not 0 < a < b:
        raise ValueError(f"bad window {window}")
    if b > U.grid.L / 2 + 1e-12:
        raise ValueError(f"window end {b} exceeds L/2 = {U.grid.L / 2} (periodization guard)")
    rs, us, counts = radial_profile(U, a, b, n_shells)
    if len(rs) < 2:
        raise ValueError("fewer than two populated shells in the window")
    slope, intercept = np.polyfit(np.log(rs), np.log(us), 1)
    slope = float(slope)
    shells = tuple(zip(rs.tolist(), us.tolist(), counts.tolist()))
    if reference is None:
        return DecayFit(
            nu=math.nan, r=math.nan, exponent=math.nan, fit_window=(a, b),
            slope=slope, constant=math.exp(intercept), slack=slack,
            passed=slope < -slack, shells=shells,
        )
    return replace(
        reference, fit_window=(a, b), slope=slope, constant=math.exp(intercept),
        slack=slack, passed=bool(slope <= reference.exponent + slack), shells=shells,
    )


def write_decay_report(fits, path) -> None:
    """CSV with columns ``nu,r,exponent,slope,constant,pass``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["nu", "r", "exponent", "slope", "constant", "pass"])
        for f in fits:
            w.writerow(["%.17g" % f.nu, "%.17g" % f.r, "%.17g" % f.exponent,
                        "%.17g" % f.slope, "%.17g" % f.constant, "PASS" if f.passed else "FAIL"])


def write_shells(fit: DecayFit, path) -> None:
    """Log-log shell data ``r,u,log_r,log_u,count`` of a fit."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["r", "u", "log_r", "log_u", "count"])
        for r, u, c in fit.shells:
            w.writerow(["%.17g" % r, "%.17g" % u, "%.17g" % math.log(r), "%.17g" % math.log(u), c])
