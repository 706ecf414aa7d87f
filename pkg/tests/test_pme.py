import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fracsub.core import AssumptionError, Field, ProblemSpec, make_coefficient
from fracsub.dirichlet import dirichlet_operator
from fracsub.pme import (
    C_m,
    SeparableSolution,
    Trajectory,
    decay_time_integral_check,
    evolve_ball,
    separable_residual,
    uniqueness_experiment,
    weak_form_residual,
)
from fracsub.riesz import decay_fit
from fracsub.sublinear import solve_ball

seeds = st.integers(0, 2**31 - 1)


def _spec1(M=64, sigma=0.5):
    return ProblemSpec(N=1, sigma=sigma, alpha=0.5, L=4.0, M=M)


def _bump(grid, R):
    x = grid.coords[0]
    return Field(np.where(np.abs(x) < R, np.cos(np.pi * x / (2 * R)) ** 2, 0.0), grid)


def test_C_m_values():
    assert C_m(2.0) == 1.0
    assert C_m(3.0) == pytest.approx(0.70711, abs=1e-5)
    assert C_m(3.0) == pytest.approx(2**-0.5, rel=1e-15)
    with pytest.raises(ValueError):
        C_m(1.0)


def test_separable_profile():
    spec = _spec1()
    u = Field(np.full(64, 4.0), spec.grid)
    sep = SeparableSolution(u, 2.0)
    assert np.allclose(sep(1.0), 0.5 * 2.0)
    assert SeparableSolution(u, 2.0, tau=0.5).time_factor(0.5) == 1.0


def test_zero_datum_stays_zero():
    spec = _spec1()
    rho = make_coefficient(spec)
    zero = Field(np.zeros(64), spec.grid)
    traj = evolve_ball(zero, rho, 4.0, 2.0, 0.5, 10.0, (1.0, 5.0))
    assert all(np.all(s.v.values == 0) for s in traj.states)
    assert traj.times == [1.0, 5.0, 10.0]
    assert np.all(traj.time_integral.values == 0)


def test_rho_floor():
    spec = _spec1()
    rho = Field(np.where(np.abs(spec.grid.coords[0]) < 1, 1.0, 0.0), spec.grid)
    with pytest.raises(AssumptionError, match="rho > 0"):
        evolve_ball(_bump(spec.grid, 2.0), rho, 4.0, 2.0, 0.5, 1.0)


def test_fixed_dt_above_bound_rejected():
    from fracsub.core import ConvergenceError

    spec = _spec1()
    rho = make_coefficient(spec)
    with pytest.raises(ConvergenceError, match="bound"):
        evolve_ball(_bump(spec.grid, 2.0), rho, 4.0, 2.0, 0.5, 1.0, dt=10.0)


@pytest.mark.parametrize("cfl", ["local", "global"])
def test_mass_and_positivity(cfl):
    spec = _spec1()
    rho = make_coefficient(spec)
    traj = evolve_ball(_bump(spec.grid, 3.0), rho, 4.0, 2.0, 0.5, 5.0, np.linspace(0, 5, 11), cfl=cfl)
    masses = [s.mass for s in traj.states]
    assert np.all(np.diff(masses) <= 1e-10)
    assert all(s.v.values.min() >= -1e-10 for s in traj.states)
    assert all(s.margin >= 1.0 for s in traj.states[1:])


@settings(max_examples=15, deadline=None)
@given(seed=seeds, sigma=st.floats(0.2, 1.8), shift=st.floats(0.0, 0.5))
def test_comparison_principle(seed, sigma, shift):
    spec = _spec1(sigma=sigma)
    g = spec.grid
    rng = np.random.default_rng(seed)
    rho = Field(0.5 + rng.random(64), g)
    a = rng.random(64)
    b = a + shift * rng.random(64)
    op = dirichlet_operator(g, 4.0, sigma)
    dt = 0.5 * rho.values.min() / (2.0 * b.max() * op.lambda_max)
    ta = evolve_ball(Field(a, g), rho, 4.0, 2.0, sigma, 40 * dt, (10 * dt, 20 * dt), dt=dt)
    tb = evolve_ball(Field(b, g), rho, 4.0, 2.0, sigma, 40 * dt, (10 * dt, 20 * dt), dt=dt)
    for sa, sb in zip(ta.states, tb.states):
        assert np.all(sa.v.values <= sb.v.values + 1e-8)


@settings(max_examples=10, deadline=None)
@given(seed=seeds, sigma=st.floats(0.2, 1.8))
def test_order_in_R(seed, sigma):
    spec = _spec1(sigma=sigma)
    g = spec.grid
    rng = np.random.default_rng(seed)
    rho = Field(0.5 + rng.random(64), g)
    v0 = Field(rng.random(64), g)
    op = dirichlet_operator(g, 4.0, sigma)
    dt = 0.5 * 0.5 / (2.0 * op.lambda_max)
    small = evolve_ball(v0, rho, 2.0, 2.0, sigma, 30 * dt, (10 * dt,), dt=dt)
    large = evolve_ball(v0, rho, 4.0, 2.0, sigma, 30 * dt, (10 * dt,), dt=dt)
    for s, l in zip(small.states, large.states):
        assert np.all(s.v.values <= l.v.values + 1e-8)


def test_separable_residual_refines():
    res = []
    for M, dt in ((64, 1e-3), (128, 2.5e-4)):
        spec = _spec1(M=M)
        rho = make_coefficient(spec)
        u, _ = solve_ball(rho, 4.0, spec)
        res.append(separable_residual(u, rho, 4.0, 2.0, 0.5, dt))
    assert res[0] >= 3 * res[1]


def _psi(R, T):
    def space(x):
        return np.cos(np.pi * x / (2 * R)) ** 2 * np.exp(-x * x)

    def psi(coords, t):
        return space(coords[0]) * np.sin(np.pi * t / T) ** 2

    def psi_t(coords, t):
        return space(coords[0]) * (np.pi / T) * np.sin(2 * np.pi * t / T)

    return psi, psi_t


def test_weak_form_trivial_cases():
    spec = _spec1()
    rho = make_coefficient(spec)
    zero = evolve_ball(Field(np.zeros(64), spec.grid), rho, 4.0, 2.0, 0.5, 1.0, keep_all=True, dt=0.002)
    assert weak_form_residual(zero, _psi(4.0, 1.0)) == 0
    traj = evolve_ball(_bump(spec.grid, 3.0), rho, 4.0, 2.0, 0.5, 1.0, keep_all=True, dt=0.002)
    nil = (lambda c, t: 0 * c[0], lambda c, t: 0 * c[0])
    assert weak_form_residual(traj, nil) == 0
    no_steps = evolve_ball(_bump(spec.grid, 3.0), rho, 4.0, 2.0, 0.5, 1.0)
    with pytest.raises(ValueError):
        weak_form_residual(no_steps, _psi(4.0, 1.0))


def test_weak_form_residual_refines():
    res = []
    for M, dt in ((128, 2e-3), (256, 5e-4)):
        spec = _spec1(M=M)
        rho = make_coefficient(spec)
        traj = evolve_ball(_bump(spec.grid, 3.0), rho, 4.0, 2.0, 0.5, 1.0, keep_all=True, dt=dt)
        res.append(weak_form_residual(traj, _psi(4.0, 1.0)))
    assert res[0] >= 3 * res[1]


def test_uniqueness_small_box(small_spec, small_global):
    u = small_global[0]
    rep = uniqueness_experiment(small_spec, u=u, u_min=u)
    assert rep.m == 2 and rep.C == 1
    assert rep.comparison_ok and rep.order_in_R_ok and rep.ratio_ok and rep.passed
    assert rep.max_excess <= 1e-8
    for t, mass, sup_v, bound, measured in rep.rows:
        assert measured <= bound + 1e-6
    assert rep.rows[-1][3] == pytest.approx(1.01)
    assert all(0 < tau <= 0.5 for tau in rep.tau)


def test_uniqueness_requires_subcritical():
    with pytest.raises(AssumptionError):
        uniqueness_experiment(ProblemSpec(N=2, sigma=1.2, L=16.0, M=64))


def test_time_integral_zero_and_separable(default_spec, default_global):
    u = default_global[0]
    g = u.grid
    zero = Trajectory(16.0, 2.0, 0.5, u, [], Field(np.zeros(g.shape), g, "zero"), 0)
    assert decay_time_integral_check(zero, default_spec).passed
    # for m = 2: int_0^t u~^2 ds = u (1 - 1/(t+1)), a pure rescaling of u
    t = 1.0
    sep = Trajectory(16.0, 2.0, 0.5, u, [], Field(u.values * (1 - 1 / (t + 1)), g, "zero"), 0)
    fit = decay_time_integral_check(sep, default_spec, window=(4.0, 8.0))
    assert fit.slope == pytest.approx(decay_fit(u, (4.0, 8.0)).slope, abs=1e-12)


def test_time_integral_of_evolution(default_spec, default_global):
    u = default_global[0]
    rho = make_coefficient(default_spec)
    op = dirichlet_operator(u.grid, 16.0, 0.5)
    v0 = op.embed(op.restrict(u) ** 0.5)
    traj = evolve_ball(v0, rho, 16.0, 2.0, 0.5, 1.0)
    fit = decay_time_integral_check(traj, default_spec)
    assert fit.fit_window == (4.0, 8.0)
    assert fit.slope <= -1.3 and fit.passed
    assert math.isfinite(fit.constant)
