"""Fractional porous-medium evolution ``rho dv/dt + A^{sigma/2}(v^m) = 0`` on boxes.

Explicit Euler in time with the Dirichlet spectral operator in space.  When

    dt <= rho_i / (m v_i^(m-1) Lambda_max)

at every node, one step is an order-preserving map.  This holds because the
off-diagonal entries of ``A^{sigma/2}`` are nonpositive and its diagonal is
at most ``Lambda_max``.  Discrete comparison then holds exactly.  The
separable profile ``C_m (t+1)^(-1/(m-1)) u^(1/m)`` built from a discrete
elliptic solution is a discrete supersolution because ``t -> t^(-1/(m-1))``
is convex.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .core import AssumptionError, ConvergenceError, Field, ProblemSpec, make_coefficient
from .dirichlet import dirichlet_operator
from .riesz import DecayFit, admissible_exponents, decay_fit
from .sublinear import default_radii, solve_ball, solve_global

log = logging.getLogger(__name__)

RHO_FLOOR = 1e-6

__all__ = [
    "C_m",
    "EvolutionState",
    "Trajectory",
    "SeparableSolution",
    "evolve_ball",
    "separable_residual",
    "weak_form_residual",
    "uniqueness_experiment",
    "decay_time_integral_check",
]


def C_m(m: float) -> float:
    """``(m-1)^(-1/(m-1))``."""
    if not m > 1:
        raise ValueError(f"m must exceed 1, got {m}")
    return (m - 1.0) ** (-1.0 / (m - 1.0))


@dataclass(frozen=True)
class EvolutionState:
    t: float
    v: Field
    mass: float
    dt: float
    margin: float


@dataclass
class Trajectory:
    """States at the requested sample times plus running diagnostics."""

    R: float
    m: float
    sigma: float
    rho: Field
    states: list
    time_integral: Field
    steps: int
    clipped: int = 0
    all_times: np.ndarray | None = None
    all_values: np.ndarray | None = None

    def at(self, t: float) -> EvolutionState:
        for s in self.states:
            if abs(s.t - t) <= 1e-9 * max(1.0, t):
                return s
        raise KeyError(f"time {t} was not sampled")

    @property
    def times(self) -> list:
        return [s.t for s in self.states]


@dataclass(frozen=True)
class SeparableSolution:
    """``C_m (t + tau)^(-1/(m-1)) u^(1/m)``; ``tau = 1`` gives the reference profile."""

    u: Field
    m: float
    tau: float = 1.0

    @property
    def C(self) -> float:
        return C_m(self.m)

    def time_factor(self, t: float) -> float:
        return self.C * (t + self.tau) ** (-1.0 / (self.m - 1.0))

    def __call__(self, t: float) -> np.ndarray:
        return self.time_factor(t) * np.maximum(self.u.values, 0.0) ** (1.0 / self.m)


def _stable_dt(rho_i: np.ndarray, v: np.ndarray, m: float, lam_max: float, safety: float) -> float:
    pos = v > 0
    if not np.any(pos):
        return math.inf
    return safety * float(np.min(rho_i[pos] / (m * v[pos] ** (m - 1.0) * lam_max)))


def evolve_ball(
    v0: Field,
    rho: Field,
    R: float,
    m: float,
    sigma: float,
    t_end: float,
    sample_times=(),
    cfl: str = "local",
    safety: float = 0.5,
    dt: float | None = None,
    keep_all: bool = False,
    max_steps: int = 10_000_000,
) -> Trajectory:
    """Explicit evolution on ``(-R, R)^N`` with zero boundary data.

    Parameters
    ----------
    cfl : {"local", "global"}
        ``"global"`` keeps ``dt = safety rho_min / (m ||v0||^(m-1) Lambda_max)``
        for the whole run.  ``"local"`` recomputes the nodewise bound each
        step, which allows much longer steps once the solution has decayed.
    dt : float, optional
        Fixed step.  Rejected if it exceeds the nodewise bound at any step.
    keep_all : bool
        Store every step (for :func:`weak_form_residual`).

    Raises
    ------
    AssumptionError
        If ``min rho`` on the box is below ``1e-6``.
    ConvergenceError
        If the sup of ``v`` grows (instability).
    """
    if not m > 1:
        raise ValueError("m must exceed 1")
    op = dirichlet_operator(rho.grid, float(R), float(sigma))
    rho_i = op.restrict(rho)
    rho_min = float(rho_i.min())
    if rho_min < RHO_FLOOR:
        raise AssumptionError(
            f"min rho on the box is {rho_min:.3g} < {RHO_FLOOR:g}; the evolution needs rho > 0"
        )
    v = op.restrict(v0).copy()
    if np.any(v < 0):
        raise ValueError("initial datum must be nonnegative")
    lam_max = op.lambda_max
    sup0 = float(v.max()) if v.size else 0.0
    dv = rho.grid.cell_volume
    samples = sorted({float(s) for s in sample_times if 0 <= s <= t_end} | {float(t_end)})
    if dt is None and cfl == "global":
        dt_fixed = safety * rho_min / (m * max(sup0, 1e-300) ** (m - 1.0) * lam_max)
    elif dt is None and cfl == "local":
        dt_fixed = None
    elif dt is not None:
        dt_fixed = float(dt)
    else:
        raise ValueError(f"unknown cfl rule {cfl!r}")

    t = 0.0
    states = []
    integral = np.zeros_like(v)
    steps = 0
    clipped = 0
    all_t, all_v = ([0.0], [v.copy()]) if keep_all else (None, None)
    vm = v**m

    def record(step_dt):
        bound = _stable_dt(rho_i, v, m, lam_max, 1.0)
        states.append(EvolutionState(t, op.embed(v.copy()), float(np.sum(rho_i * v) * dv),
                                     step_dt, bound / step_dt if step_dt > 0 else math.inf))

    if samples and samples[0] == 0.0:
        record(0.0)
        samples = samples[1:]
    last_dt = 0.0
    for target in samples:
        while t < target * (1 - 1e-14) and target - t > 1e-14:
            bound = _stable_dt(rho_i, v, m, lam_max, 1.0)
            step = dt_fixed if dt_fixed is not None else safety * bound
            if dt is not None and step > bound * (1 + 1e-12):
                raise ConvergenceError(f"fixed dt = {dt} exceeds the monotone bound {bound:.3g}")
            step = min(step, target - t)
            if not math.isfinite(step):
                step = target - t
            new = v - (step / rho_i) * op.apply_interior(vm)
            neg = new < 0
            if np.any(neg):
                if np.min(new) < -1e-10 * max(sup0, 1.0):
                    raise ConvergenceError(f"negative values {np.min(new):.3g} at t = {t:.4g}")
                clipped += int(neg.sum())
                new[neg] = 0.0
            if new.max() > sup0 * (1 + 1e-12) + 1e-300:
                raise ConvergenceError(f"sup v grew at t = {t:.4g}: instability")
            new_vm = new**m
            integral += 0.5 * step * (vm + new_vm)
            v, vm = new, new_vm
            t += step
            steps += 1
            last_dt = step
            if keep_all:
                all_t.append(t)
                all_v.append(v.copy())
            if steps > max_steps:
                raise ConvergenceError("step cap reached")
        t = target
        record(last_dt)
    if clipped:
        log.info("zeroed %d tiny negative values during the evolution", clipped)
    return Trajectory(
        R=float(R), m=float(m), sigma=float(sigma), rho=rho, states=states,
        time_integral=op.embed(integral), steps=steps, clipped=clipped,
        all_times=np.array(all_t) if keep_all else None,
        all_values=np.array(all_v) if keep_all else None,
    )


def separable_residual(u: Field, rho: Field, R: float, m: float, sigma: float,
                       dt: float, times=(0.0, 1.0, 10.0)) -> float:
    """Discrete residual of the separable profile in the explicit scheme.

    ``max_n ||rho (u~(t_n + dt) - u~(t_n)) / dt + A^{sigma/2}(u~(t_n)^m)||_inf``.
    """
    op = dirichlet_operator(rho.grid, float(R), float(sigma))
    sep = SeparableSolution(u, m)
    rho_i = op.restrict(rho)
    worst = 0.0
    for t in times:
        a = op.restrict(Field(sep(t), u.grid, "zero"))
        b = op.restrict(Field(sep(t + dt), u.grid, "zero"))
        res = rho_i * (b - a) / dt + op.apply_interior(a**m)
        worst = max(worst, float(np.max(np.abs(res))))
    return worst


def weak_form_residual(traj: Trajectory, psi) -> float:
    """``|int int rho v psi_t - int int A^{s/2}(v^m) psi|`` over the stored steps.

    ``psi(x_interior_coords, t)`` and its time derivative are supplied as a
    pair of callables ``(psi, psi_t)`` taking ``(coords, t)``; ``psi`` must
    vanish near both ends of the time window.  The operator term uses the
    symmetric form, which equals ``<A^{s/4} v^m, A^{s/4} psi>``.
    """
    if traj.all_values is None:
        raise ValueError("trajectory was run without keep_all")
    psi_f, psi_t = psi
    op = dirichlet_operator(traj.rho.grid, traj.R, traj.sigma)
    coords = tuple(c[op.slices] for c in traj.rho.grid.coords)
    rho_i = op.restrict(traj.rho)
    dv = traj.rho.grid.cell_volume
    ts = traj.all_times
    vals = traj.all_values
    lhs = np.empty(len(ts))
    rhs = np.empty(len(ts))
    for k, (t, v) in enumerate(zip(ts, vals)):
        lhs[k] = np.sum(rho_i * v * psi_t(coords, t)) * dv
        rhs[k] = np.sum(op.apply_interior(v**traj.m) * psi_f(coords, t)) * dv
    return float(abs(np.trapezoid(lhs - rhs, ts)))


@dataclass
class PMEReport:
    times: list
    rows: list  # (t, mass, sup_v, ratio_bound, ratio_measured)
    radii: tuple
    tau: list
    comparison_ok: bool
    order_in_R_ok: bool
    ratio_ok: bool
    max_excess: float
    gap_to_separable: list
    m: float
    C: float
    trajectories: list = field(default_factory=list, repr=False)

    @property
    def passed(self) -> bool:
        return self.comparison_ok and self.order_in_R_ok and self.ratio_ok


def uniqueness_experiment(
    spec: ProblemSpec,
    rho: Field | None = None,
    radii=None,
    times=(1.0, 10.0, 100.0),
    u: Field | None = None,
    u_min: Field | None = None,
    cfl: str = "local",
) -> PMEReport:
    """Run the separable-supersolution argument on a ladder of boxes.

    ``u`` is the solution under test and ``u_min`` the minimal candidate;
    both default to the exhaustion solution on the largest box.  For each
    box ``R``, ``v_R`` starts from ``C_m u^(1/m)`` and is checked against

    * ``u~ = C_m (t+1)^(-1/(m-1)) u^(1/m)`` (``v_R <= u~``),
    * ``C_m (t+tau_R)^(-1/(m-1)) u_min^(1/m)`` with
      ``tau_R = min_{B_R} (u_min/u)^((m-1)/m) / 2``.

    ``ratio_measured(t) = sup v_Rmax (t+1)^(1/(m-1)) / (C_m u_min^(1/m))``
    estimates ``sup u^(1/m)/u_min^(1/m)`` through ``v_infinity = u~``.  It
    is compared with ``((t+1)/t)^(1/(m-1))``.
    """
    spec.require_subcritical("pme_uniqueness")
    m = spec.m
    if rho is None:
        rho = make_coefficient(spec)
    radii = tuple(default_radii(spec) if radii is None else radii)
    if u is None or u_min is None:
        base, _ = solve_global(spec, rho, radii, check=False)
        u = base if u is None else u
        u_min = base if u_min is None else u_min
    Cm = C_m(m)
    times = sorted(float(t) for t in times)
    trajs = []
    comparison_ok = True
    max_excess = -math.inf
    taus = []
    for R in radii:
        op = dirichlet_operator(rho.grid, float(R), spec.sigma)
        ui = op.restrict(u)
        umi = op.restrict(u_min)
        if np.any(ui <= 0) or np.any(umi <= 0):
            raise AssumptionError("u and u_min must be positive inside every box")
        tau = 0.5 * float(np.min(umi / ui)) ** ((m - 1.0) / m)
        taus.append(tau)
        v0 = op.embed(Cm * ui ** (1.0 / m))
        traj = evolve_ball(v0, rho, R, m, spec.sigma, times[-1], times, cfl=cfl)
        trajs.append(traj)
        sep = SeparableSolution(u, m)
        check = SeparableSolution(u_min, m, tau)
        for st in traj.states:
            v = op.restrict(st.v)
            ex1 = float(np.max(v - op.restrict(Field(sep(st.t), u.grid, "zero"))))
            ex2 = float(np.max(v - op.restrict(Field(check(st.t), u.grid, "zero"))))
            max_excess = max(max_excess, ex1, ex2)
            if ex1 > 1e-8 or ex2 > 1e-8:
                comparison_ok = False
    order_ok = True
    for a, b in zip(trajs[:-1], trajs[1:]):
        for sa, sb in zip(a.states, b.states):
            if np.any(sa.v.values > sb.v.values + 1e-8):
                order_ok = False
    top = trajs[-1]
    op = dirichlet_operator(rho.grid, float(radii[-1]), spec.sigma)
    umi = op.restrict(u_min)
    rows = []
    ratio_ok = True
    gaps = []
    sep = SeparableSolution(u, m)
    for st in top.states:
        t = st.t
        v = op.restrict(st.v)
        measured = float(np.max(v * (t + 1.0) ** (1.0 / (m - 1.0)) / (Cm * umi ** (1.0 / m))))
        bound = ((t + 1.0) / t) ** (1.0 / (m - 1.0))
        if measured > bound + 1e-6:
            ratio_ok = False
        rows.append((t, st.mass, float(v.max()), bound, measured))
        gaps.append(float(np.max(np.abs(v - op.restrict(Field(sep(t), u.grid, "zero"))))))
    return PMEReport(times, rows, radii, taus, comparison_ok, order_ok, ratio_ok,
                     max_excess, gaps, m, Cm, trajs)


def decay_time_integral_check(
    traj: Trajectory, spec: ProblemSpec, window: tuple | None = None
) -> DecayFit:
    """Tail slope of ``int_0^t v^m ds`` against the admissible exponent.

    The default window is ``[R/4, R/2]``, well inside the box of ``traj``.
    Report only; the ``passed`` flag is set but nothing is raised.
    """
    ref = admissible_exponents(spec)
    if window is None:
        window = (traj.R / 4.0, traj.R / 2.0)
    integral = traj.time_integral
    if not np.any(integral.values > 0):
        return DecayFit(ref.nu, ref.r, ref.exponent, ref.exponent_inf, tuple(window),
                        -math.inf, 0.0, passed=True)
    return decay_fit(integral, window, ref)
