"""Monotone iteration for ``(-Lap)^{sigma/2} u = rho u^alpha`` and ball exhaustion.

On each box the iteration starts from the supersolution ``C * U_R`` and
applies ``u -> A^{-sigma/2}(rho u^alpha)``, which is order preserving.  The
iterates therefore decrease monotonically to the maximal solution below the
start, which for this sublinear problem is the positive one.  Growing the
box gives a pointwise nondecreasing family ``u_R``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    AssumptionError,
    CheckFailure,
    ConvergenceError,
    Field,
    ProblemSpec,
    make_coefficient,
)
from .dirichlet import dirichlet_operator, green_bound_constant
from .riesz import (
    DecayFit,
    admissible_exponents,
    decay_fit,
    finiteness_check,
    riesz_convolve,
)

__all__ = [
    "IterationReport",
    "ExhaustionLadder",
    "supersolution_constant",
    "solve_ball",
    "J_functional",
    "directional_derivative",
    "solve_global",
    "monotone_in_rho",
    "perturbation_experiment",
]


@dataclass
class IterationReport:
    iterations: int
    residual: float
    energy_gap: float
    energy: float
    source_integral: float
    J: float
    monotone: bool
    C: float
    gaps: list = field(default_factory=list)
    note: str = ""

    @property
    def relative_energy_gap(self) -> float:
        return self.energy_gap / self.source_integral if self.source_integral > 0 else 0.0


def supersolution_constant(C_tilde: float, potential_sup: float, alpha: float) -> float:
    """``C = max(1, (C_tilde ||K * rho||_inf)^(alpha/(1-alpha)))``."""
    return max(1.0, (C_tilde * potential_sup) ** (alpha / (1.0 - alpha)))


def solve_ball(
    rho: Field,
    R: float,
    spec: ProblemSpec,
    C_tilde: float | None = None,
    potential: Field | None = None,
    monotone_tol: float = 1e-10,
) -> tuple[Field, IterationReport]:
    """Positive solution on the box ``(-R, R)^N`` by descent from a supersolution.

    Parameters
    ----------
    C_tilde : float, optional
        Green-bound constant with ``U_R <= C_tilde K * rho``.  Fitted on the
        spot (times 2) when omitted.
    potential : Field, optional
        ``riesz_convolve(rho)``, reused if the caller already has it.

    Raises
    ------
    ConvergenceError
        When an iterate rises above its predecessor by more than
        ``monotone_tol`` (relative to the sup of the start) or the cap
        ``spec.max_iter`` is hit.
    """
    op = dirichlet_operator(rho.grid, float(R), spec.sigma)
    alpha = spec.alpha
    r = op.restrict(rho)
    if np.any(r < 0):
        raise AssumptionError("rho must be nonnegative")
    if not np.any(r > 0):
        zero = op.embed(np.zeros_like(r))
        return zero, IterationReport(1, 0.0, 0.0, 0.0, 0.0, 0.0, True, 1.0, [0.0],
                                     note="rho vanishes on the box; u = 0")
    U_R = op.solve_interior(r)
    if C_tilde is None:
        if potential is None:
            potential = riesz_convolve(rho, spec.sigma)
        C_tilde = 2.0 * green_bound_constant(rho, [R], spec.sigma, potential)
        sup_pot = potential.sup
    else:
        sup_pot = potential.sup if potential is not None else riesz_convolve(rho, spec.sigma).sup
    C = supersolution_constant(C_tilde, sup_pot, alpha)
    u = np.maximum(C * U_R, 0.0)
    scale = float(u.max())
    gaps = []
    monotone = True
    for it in range(1, spec.max_iter + 1):
        new = op.solve_interior(r * u**alpha)
        if np.any(new < 0):
            new = np.maximum(new, 0.0)
        rise = float(np.max(new - u))
        if rise > monotone_tol * max(scale, 1.0):
            monotone = False
            raise ConvergenceError(
                f"iterate {it} rose by {rise:.3g} above its predecessor on R = {R}"
            )
        gap = float(np.max(np.abs(new - u)))
        gaps.append(gap)
        u = new
        if gap < spec.tol_fixed_point:
            break
    else:
        raise ConvergenceError(
            f"no convergence on R = {R} after {spec.max_iter} iterations (gap {gaps[-1]:.3g})"
        )
    src = r * u**alpha
    residual = float(np.max(np.abs(op.apply_interior(u) - src)))
    dv = rho.grid.cell_volume
    energy = op.energy(op.embed(u))
    source_integral = float(np.sum(src * u) * dv)
    J = 0.5 * energy - source_integral / (alpha + 1.0)
    report = IterationReport(
        iterations=it,
        residual=residual,
        energy_gap=abs(energy - source_integral),
        energy=energy,
        source_integral=source_integral,
        J=J,
        monotone=monotone,
        C=C,
        gaps=gaps,
    )
    return op.embed(u), report


def J_functional(u: Field, rho: Field, R: float, spec: ProblemSpec) -> float:
    """``J(u) = 1/2 ||A^{sigma/4} u||^2 - 1/(alpha+1) int rho |u|^(alpha+1)`` on the box."""
    op = dirichlet_operator(u.grid, float(R), spec.sigma)
    ui = op.restrict(u)
    src = np.sum(op.restrict(rho) * np.abs(ui) ** (spec.alpha + 1.0)) * u.grid.cell_volume
    return 0.5 * op.energy(u) - float(src) / (spec.alpha + 1.0)


def directional_derivative(
    u: Field, rho: Field, R: float, spec: ProblemSpec, phi: Field, eps: float = 1e-6
) -> float:
    """Central difference quotient of ``J`` at ``u`` along ``phi``."""
    plus = u.like(u.values + eps * phi.values)
    minus = u.like(u.values - eps * phi.values)
    return (J_functional(plus, rho, R, spec) - J_functional(minus, rho, R, spec)) / (2.0 * eps)


@dataclass
class ExhaustionLadder:
    radii: tuple
    solutions: list
    reports: list
    gaps: list
    monotone: bool
    C_tilde: float
    limit: Field
    extrapolated: Field | None = None
    identity_residual: float = math.nan
    decay: DecayFit | None = None
    raw_slope: float = math.nan
    potential: Field | None = None

    @property
    def gap_ratios(self) -> list:
        return [a / b if b > 0 else math.inf for a, b in zip(self.gaps[:-1], self.gaps[1:])]


def default_radii(spec: ProblemSpec) -> tuple:
    return (spec.L / 8, spec.L / 4, spec.L / 2)


def solve_global(
    spec: ProblemSpec,
    rho: Field | None = None,
    radii=None,
    identity_ceiling: float = 2e-2,
    check: bool = True,
) -> tuple[Field, ExhaustionLadder]:
    """Exhaustion by boxes ``(-R, R)^N`` over ``radii`` (default ``L/8, L/4, L/2``).

    Returns the solution on the largest box and the ladder.  The ladder also
    carries an extrapolation in ``R`` (assuming gaps shrink like
    ``R^(sigma-N)``), the integral-identity residual
    ``||u - K * (rho u^alpha)||_inf / ||u||_inf`` on ``|x| <= L/4`` and a
    decay fit.  The decay is fitted to ``K * (rho u^alpha)`` on
    ``[L/4, L/2]``, the whole-space representation of ``u``, because ``u``
    itself vanishes on the box boundary ``|x_i| = L/2``.  The slope of the
    raw ``u`` on ``[L/8, L/4]`` is reported as ``raw_slope``.

    Raises
    ------
    AssumptionError
        ``N <= 2 sigma`` or a coefficient failing the finiteness check.
    CheckFailure
        Non-monotone ladder or identity residual above ``identity_ceiling``
        (only when ``check`` is set).
    """
    spec.require_subcritical("solve_global")
    grid = spec.grid
    if rho is None:
        rho = make_coefficient(spec)
    radii = tuple(default_radii(spec) if radii is None else radii)
    if not np.any(rho.values > 0):
        zero = Field(np.zeros(grid.shape), grid, "zero")
        n = len(radii)
        reports = [IterationReport(1, 0.0, 0.0, 0.0, 0.0, 0.0, True, 1.0, [0.0], "rho = 0")] * n
        ladder = ExhaustionLadder(radii, [zero] * n, reports, [0.0] * (n - 1), True, 0.0, zero,
                                  zero, 0.0, None, math.nan, zero)
        return zero, ladder
    fin = finiteness_check(rho, spec.sigma)
    if not fin.passed:
        raise AssumptionError(f"coefficient fails the finiteness check: {fin.reason}")
    potential = riesz_convolve(rho, spec.sigma)
    C_tilde = 2.0 * green_bound_constant(rho, radii, spec.sigma, potential)
    sols, reps = [], []
    for R in radii:
        u, rep = solve_ball(rho, R, spec, C_tilde=C_tilde, potential=potential)
        sols.append(u)
        reps.append(rep)
    inner = np.ones(grid.shape, dtype=bool)
    for c in grid.coords:
        inner &= np.abs(c) <= radii[0] + 1e-12
    gaps = [
        float(np.max(np.abs(b.values - a.values)[inner])) for a, b in zip(sols[:-1], sols[1:])
    ]
    monotone = all(bool(np.all(a.values <= b.values + 1e-8)) for a, b in zip(sols[:-1], sols[1:]))
    u = sols[-1]
    extrap = None
    if len(sols) >= 2:
        k = (radii[-1] / radii[-2]) ** (spec.N - spec.sigma) - 1.0
        extrap = Field(u.values + (u.values - sols[-2].values) / k, grid, "zero")

    image = riesz_convolve(rho.like(rho.values * u.values**spec.alpha), spec.sigma)
    mask = grid.radius <= spec.L / 4 + 1e-12
    residual = float(np.max(np.abs(u.values - image.values)[mask]) / u.sup)

    ref = admissible_exponents(spec)
    window = (spec.L / 4, spec.L / 2)
    fit = decay_fit(image, window, ref)
    try:
        raw = decay_fit(u, (spec.L / 8, spec.L / 4), ref).slope
    except ValueError:
        raw = -math.inf

    ladder = ExhaustionLadder(
        radii=radii, solutions=sols, reports=reps, gaps=gaps, monotone=monotone,
        C_tilde=C_tilde, limit=u, extrapolated=extrap, identity_residual=residual,
        decay=fit, raw_slope=raw, potential=potential,
    )
    if check:
        if not monotone:
            raise CheckFailure("exhaustion ladder is not monotone in R")
        if residual > identity_ceiling:
            raise CheckFailure(
                f"integral identity residual {residual:.3g} above ceiling {identity_ceiling:g}"
            )
    return u, ladder


@dataclass
class MonotoneReport:
    passed: bool
    max_violation: float


def monotone_in_rho(rho1: Field, rho2: Field, spec: ProblemSpec, radii=None) -> MonotoneReport:
    """Check ``u_1 <= u_2`` for ordered coefficients ``rho_1 <= rho_2``."""
    if np.any(rho1.values > rho2.values):
        raise ValueError("monotone_in_rho needs rho1 <= rho2 pointwise")
    u1, _ = solve_global(spec, rho1, radii, check=False)
    u2, _ = solve_global(spec, rho2, radii, check=False)
    viol = float(np.max(u1.values - u2.values))
    return MonotoneReport(viol <= 1e-8, max(viol, 0.0))


@dataclass
class PerturbationReport:
    eps: list
    G: list
    ratios: list
    sup_diffs: list
    majorants: list
    ordered: bool
    bounded: bool

    @property
    def spread(self) -> float:
        pos = [r for r in self.ratios if r > 0]
        return max(pos) / min(pos) if pos else 1.0


def default_bump(spec: ProblemSpec) -> Field:
    """Strictly positive smooth integrable bump ``exp(-|x|^2/4) / 2``."""
    grid = spec.grid
    return Field(0.5 * np.exp(-grid.radius**2 / 4.0), grid, "zero")


def perturbation_experiment(
    spec: ProblemSpec,
    h_bump: Field | None = None,
    eps_list=(1e-1, 1e-2, 1e-3),
    rho: Field | None = None,
    radii=None,
    base: Field | None = None,
) -> PerturbationReport:
    """Weighted gap ``G(eps)`` between the solutions for ``rho + eps h`` and ``rho``.

    ``G(eps) = int rho u_eps^alpha u^alpha (u_eps^(1-alpha) - u^(1-alpha))``.
    Testing both equations against the other solution gives
    ``G(eps) = eps int h u_eps^alpha u``, which is listed as the majorant.

    Raises
    ------
    CheckFailure
        If some ``u_eps`` drops below ``u`` by more than ``1e-8``.
    """
    if rho is None:
        rho = make_coefficient(spec)
    if h_bump is None:
        h_bump = default_bump(spec)
    if np.any(h_bump.values < 0):
        raise ValueError("the perturbation must be nonnegative")
    if any(e < 0 for e in eps_list):
        raise ValueError("eps values must be nonnegative")
    alpha = spec.alpha
    if base is None:
        base, _ = solve_global(spec, rho, radii, check=False)
    ub = base.values
    dv = spec.grid.cell_volume
    G, ratios, diffs, majorants = [], [], [], []
    ordered = True
    for eps in eps_list:
        if eps == 0:
            ue = ub
        else:
            ue = solve_global(spec, rho.like(rho.values + eps * h_bump.values), radii,
                              check=False)[0].values
        if np.any(ue < ub - 1e-8):
            ordered = False
            raise CheckFailure(f"u_eps < u for eps = {eps}")
        g = float(np.sum(rho.values * ue**alpha * ub**alpha * (ue ** (1 - alpha) - ub ** (1 - alpha))) * dv)
        G.append(g)
        ratios.append(g / eps if eps > 0 else 0.0)
        diffs.append(float(np.max(np.abs(ue - ub))))
        majorants.append(float(eps * np.sum(h_bump.values * ue**alpha * ub) * dv))
    pos = [r for r in ratios if r > 0]
    bounded = bool(pos) and max(pos) <= 2.0 * min(pos)
    return PerturbationReport(list(eps_list), G, ratios, diffs, majorants, ordered, bounded)
