"""Grids, fields, coefficient families and weighted norms.

Everything downstream works on a uniform, origin-centred tensor grid over
the box ``[-L, L)^N``.  A :class:`Field` couples sampled values with that
grid and with the convention used to extend it outside the box (periodic
torus or zero extension).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.fft as sfft

RHO_FAMILIES = ("power_tail", "gaussian", "bump", "custom_table")
BOUNDARIES = ("periodic", "zero")


class FracSubError(Exception):
    """Base class; ``exit_code`` is what the scenario runner returns."""

    exit_code = 4


class ConfigError(FracSubError, ValueError):
    exit_code = 1


class AssumptionError(FracSubError, ValueError):
    """A structural hypothesis on the data (decay of rho, N > 2 sigma, ...) fails."""

    exit_code = 2


class ConvergenceError(FracSubError, RuntimeError):
    exit_code = 3


class CheckFailure(FracSubError, RuntimeError):
    exit_code = 4


# ---------------------------------------------------------------------------
# problem description
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProblemSpec:
    """Parameters of ``(-Lap)^{sigma/2} u = rho u^alpha`` and its discretization."""

    N: int = 2
    sigma: float = 0.5
    alpha: float = 0.5
    beta: float = 4.0
    rho_family: str = "power_tail"
    L: float = 32.0
    M: int = 256
    tol_fixed_point: float = 1e-10
    max_iter: int = 200
    rho_table: str | None = None

    def __post_init__(self):
        if self.N not in (1, 2, 3):
            raise ConfigError(f"N must be 1, 2 or 3, got {self.N}")
        if not 0.0 < self.sigma < 2.0:
            raise AssumptionError(f"sigma must lie in (0, 2), got {self.sigma}")
        if not 0.0 < self.alpha < 1.0:
            raise AssumptionError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.rho_family not in RHO_FAMILIES:
            raise ConfigError(f"unknown rho_family {self.rho_family!r}")
        if self.rho_family == "power_tail" and not self.beta > self.N:
            raise AssumptionError(
                f"power_tail decay needs beta > N (got beta={self.beta}, N={self.N})"
            )
        if self.rho_family == "custom_table" and not self.rho_table:
            raise ConfigError("rho_family = custom_table needs rho_table")
        if self.M < 16 or self.M & (self.M - 1):
            raise ConfigError(f"M must be a power of two >= 16, got {self.M}")
        if not self.L > 0:
            raise ConfigError(f"L must be positive, got {self.L}")
        if self.max_iter < 1 or not self.tol_fixed_point > 0:
            raise ConfigError("max_iter >= 1 and tol_fixed_point > 0 required")

    @property
    def m(self) -> float:
        """Porous-medium exponent ``1/alpha``."""
        return 1.0 / self.alpha

    @property
    def subcritical(self) -> bool:
        return self.N > 2 * self.sigma

    def require_subcritical(self, what: str) -> None:
        if not self.subcritical:
            raise AssumptionError(
                f"{what} needs N > 2*sigma (energy solutions); "
                f"got N={self.N}, sigma={self.sigma}"
            )

    @cached_property
    def grid(self) -> "Grid":
        return Grid(self.N, self.L, self.M)

    def replace(self, **changes) -> "ProblemSpec":
        return replace(self, **changes)


_SPEC_TYPES = {
    "N": int, "sigma": float, "alpha": float, "beta": float,
    "rho_family": str, "L": float, "M": int, "tol_fixed_point": float,
    "max_iter": int, "rho_table": str,
}


def parse_config(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        out[key] = value
    return out


def spec_from_mapping(values: dict[str, str]) -> ProblemSpec:
    kwargs = {}
    for key, typ in _SPEC_TYPES.items():
        if key in values:
            try:
                kwargs[key] = typ(values[key]) if typ is not int else int(float(values[key]))
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {values[key]!r}") from exc
    return ProblemSpec(**kwargs)


def load_spec(path: str | Path) -> ProblemSpec:
    return spec_from_mapping(parse_config(Path(path).read_text()))


# ---------------------------------------------------------------------------
# grids and fields
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Grid:
    """Uniform grid ``x_j = -L + j h``, ``h = 2L/M``, in each of N directions."""

    N: int
    L: float
    M: int

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.M

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.M,) * self.N

    @property
    def cell_volume(self) -> float:
        return self.h**self.N

    @cached_property
    def axis(self) -> np.ndarray:
        return -self.L + self.h * np.arange(self.M)

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*([self.axis] * self.N), indexing="ij"))

    @cached_property
    def radius(self) -> np.ndarray:
        return np.sqrt(sum(c * c for c in self.coords))

    @cached_property
    def frequencies(self) -> np.ndarray:
        """Angular frequencies ``2 pi k / (2L)`` of the full FFT, one axis."""
        return 2.0 * np.pi * sfft.fftfreq(self.M, d=self.h)

    @cached_property
    def rfrequency_norm(self) -> np.ndarray:
        """``|xi|`` on the ``rfftn`` half-lattice."""
        full = self.frequencies
        half = 2.0 * np.pi * sfft.rfftfreq(self.M, d=self.h)
        axes = [full] * (self.N - 1) + [half]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.sqrt(sum(k * k for k in mesh))

    def index_of(self, x: float) -> int:
        j = (x + self.L) / self.h
        if abs(j - round(j)) > 1e-9:
            raise ValueError(f"{x} is not a grid node (h = {self.h})")
        return int(round(j))


@dataclass(frozen=True, eq=False)
class Field:
    """Real samples on a :class:`Grid`.

    ``boundary`` says how the samples continue outside ``[-L, L)^N``:
    ``"periodic"`` (torus) or ``"zero"`` (zero extension).
    """

    values: np.ndarray
    grid: Grid
    boundary: str = "periodic"

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise ValueError(
                f"values of shape {values.shape} do not fit grid {self.grid.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        if self.boundary not in BOUNDARIES:
            raise ValueError(f"unknown boundary convention {self.boundary!r}")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    def like(self, values: np.ndarray, boundary: str | None = None) -> "Field":
        return Field(values, self.grid, boundary or self.boundary)

    @property
    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


def field_from_function(func, grid: Grid, boundary: str = "periodic") -> Field:
    """Sample ``func(*coords)`` on the grid."""
    return Field(np.broadcast_to(func(*grid.coords), grid.shape), grid, boundary)


def check_same_grid(*fields: Field) -> Grid:
    grid = fields[0].grid
    for f in fields[1:]:
        if f.grid != grid:
            raise ValueError(f"grid mismatch: {f.grid} vs {grid}")
    return grid


def write_field_csv(f: Field, path: str | Path) -> None:
    """Dump as ``x1,...,xN,value`` rows with full double precision."""
    grid = f.grid
    cols = [c.ravel() for c in grid.coords] + [f.values.ravel()]
    header = ",".join([f"x{i + 1}" for i in range(grid.N)] + ["value"])
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in zip(*cols):
            fh.write(",".join("%.17g" % v for v in row) + "\n")


def read_table(path: str | Path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[-1].strip() != "value":
            raise ValueError(f"{path}: header must end with 'value'")
        rows = [[float(v) for v in row] for row in reader if row]
    table = np.asarray(rows, dtype=float)
    if table.ndim != 2 or table.shape[1] != len(header):
        raise ValueError(f"{path}: ragged table")
    return table


def read_field_csv(path: str | Path, grid: Grid, boundary: str = "periodic") -> Field:
    """Nearest-sample match of a ``x1,...,xN,value`` table onto ``grid``."""
    from scipy.spatial import cKDTree

    table = read_table(path)
    if table.shape[1] != grid.N + 1:
        raise ValueError(f"{path}: expected {grid.N} coordinate columns")
    tree = cKDTree(table[:, :-1])
    points = np.stack([c.ravel() for c in grid.coords], axis=1)
    _, idx = tree.query(points)
    return Field(table[idx, -1].reshape(grid.shape), grid, boundary)


# ---------------------------------------------------------------------------
# coefficients and norms
# ---------------------------------------------------------------------------


def make_coefficient(spec: ProblemSpec, boundary: str = "zero") -> Field:
    """Sample the coefficient rho of the chosen family.

    ``power_tail`` is ``(1 + |x|^2)^(-beta/2)``, which obeys the tail bound
    ``rho(x) <= 2^(beta/2) |x|^(-beta)`` for ``|x| >= 1``.  ``gaussian`` is
    ``exp(-|x|^2/2)`` and ``bump`` the unit-height ``C^infinity`` bump
    supported in the open unit ball.
    """
    grid = spec.grid
    r2 = grid.radius**2
    family = spec.rho_family
    if family == "power_tail":
        if not spec.beta > spec.N:
            raise AssumptionError("beta must exceed N")
        values = (1.0 + r2) ** (-spec.beta / 2.0)
    elif family == "gaussian":
        values = np.exp(-0.5 * r2)
    elif family == "bump":
        inside = r2 < 1.0
        values = np.zeros(grid.shape)
        values[inside] = np.exp(1.0 - 1.0 / (1.0 - r2[inside]))
    else:
        values = read_field_csv(spec.rho_table, grid).values
        if np.any(values < 0):
            raise AssumptionError("custom_table coefficient has negative entries")
    if not np.any(values > 0):
        raise AssumptionError("rho vanishes identically on the grid")
    return Field(values, grid, boundary)


def tail_constant(rho: Field, beta: float, r_min: float = 1.0) -> float:
    """``max rho(x) |x|^beta`` over grid points with ``|x| >= r_min``."""
    r = rho.grid.radius
    mask = r >= r_min
    return float(np.max(rho.values[mask] * r[mask] ** beta))


def weighted_l1(f: Field, rho: Field) -> float:
    """Trapezoid value of ``int f rho dx`` (plain sum on the uniform grid)."""
    grid = check_same_grid(f, rho)
    return float(np.sum(f.values * rho.values) * grid.cell_volume)


def energy_seminorm(f: Field, s: float) -> float:
    """``||(-Lap)^{s/4} f||_{L^2}`` on the periodic grid, via Parseval.

    Equals ``(sum_k |xi_k|^s |f_hat_k|^2)^{1/2}`` with the continuous
    normalisation, so it is exact for trigonometric polynomials.
    """
    if not 0 < s <= 2:
        raise ValueError(f"order s must lie in (0, 2], got {s}")
    return math.sqrt(spectral_quadratic_form(f, s))


def spectral_quadratic_form(f: Field, s: float) -> float:
    """``sum_k |xi_k|^s |f_hat_k|^2`` with ``L^2`` normalisation."""
    grid = f.grid
    fh = sfft.rfftn(f.values)
    weight = _rfft_weights(grid)
    total = np.sum(weight * grid.rfrequency_norm**s * np.abs(fh) ** 2)
    return float(total * grid.cell_volume / grid.M**grid.N)


def _rfft_weights(grid: Grid) -> np.ndarray:
    """Multiplicity of each rfft coefficient in the full spectrum."""
    M = grid.M
    w = np.full(M // 2 + 1, 2.0)
    w[0] = 1.0
    w[-1] = 1.0
    shape = (1,) * (grid.N - 1) + (M // 2 + 1,)
    return np.broadcast_to(w.reshape(shape), grid.rfrequency_norm.shape)


@dataclass(frozen=True)
class WeightedNorms:
    l1_rho: float
    sup_norm: float
    energy_seminorm: float


def weighted_norms(f: Field, rho: Field, sigma: float) -> WeightedNorms:
    return WeightedNorms(
        l1_rho=weighted_l1(f, rho),
        sup_norm=f.sup,
        energy_seminorm=energy_seminorm(f, sigma),
    )


def ball_mask(grid: Grid, radius: float) -> np.ndarray:
    return grid.radius <= radius + 1e-12


def unit_sphere_area(N: int) -> float:
    """Surface measure of the unit sphere in R^N (2 for N = 1)."""
    return 2.0 * math.pi ** (N / 2.0) / math.gamma(N / 2.0)
