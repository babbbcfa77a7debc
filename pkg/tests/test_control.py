import numpy as np
import pytest

from omegalab import affine_family, parisian, step_family
from omegalab.control import (barrier_value_at, find_barrier, generator_apply,
                              hjb_residual, value_at)
from omegalab.volterra import SolverConfig, solve_H
from conftest import Q, PHI, A


@pytest.fixture(scope="module")
def par_solution(model):
    table = solve_H(model, parisian(PHI).shifted(Q),
                    SolverConfig(grid_step=1e-3, x_max=3.0))
    return find_barrier(table)


@pytest.fixture(scope="module")
def step3_solution(model):
    table = solve_H(model, step_family(3, A, PHI).shifted(Q),
                    SolverConfig(grid_step=1e-3, x_max=2.0))
    return find_barrier(table)


def test_barrier_found_interior(par_solution):
    assert 0.0 < par_solution.b_star < 2.0
    assert par_solution.H1_at_b > 0.0
    assert par_solution.H_at_b > 0.0


def test_barrier_is_argmin_on_grid(par_solution):
    t = par_solution.table
    xs = t.grid[t.grid > 0.0]
    h1 = np.asarray(t.H1_pos(xs))
    assert np.all(h1 >= par_solution.H1_at_b - 1e-12 * par_solution.H1_at_b)


def test_smooth_fit(par_solution, step3_solution):
    for sol in (par_solution, step3_solution):
        assert sol.b_star > 0.0
        assert sol.diagnostics.smooth_fit_residual < 1e-4


def test_barrier_extension_beyond_small_table(model, par_solution):
    # a table solved on a short domain still finds the same barrier: the
    # scan continues in closed form and the table is re-solved to cover b*
    small = solve_H(model, parisian(PHI).shifted(Q),
                    SolverConfig(grid_step=1e-3, x_max=0.05))
    sol = find_barrier(small)
    assert sol.b_star == pytest.approx(par_solution.b_star, abs=1e-6)
    assert sol.table.x_max >= sol.b_star


def test_boundary_barrier_when_h1_increasing(model):
    # strong discounting pushes the optimum to the origin
    table = solve_H(model, parisian(0.3).shifted(1.0),
                    SolverConfig(grid_step=1e-3, x_max=2.0))
    sol = find_barrier(table)
    assert sol.b_star == 0.0
    assert sol.H1_at_b == pytest.approx(float(table.H1_pos(0.0)), rel=1e-12)
    assert sol.diagnostics.smooth_fit_residual is None


def test_value_branches_agree_at_barrier(par_solution):
    b = par_solution.b_star
    below = par_solution.H_at_b / par_solution.H1_at_b
    assert value_at(par_solution, b) == pytest.approx(below, rel=1e-12)


def test_value_unit_slope_above_barrier(par_solution):
    b = par_solution.b_star
    v1 = value_at(par_solution, b + 1.0)
    v2 = value_at(par_solution, b + 2.0)
    assert v2 - v1 == pytest.approx(1.0, abs=1e-12)


def test_value_decays_below_a(par_solution):
    t = par_solution.table
    xs = t.a - np.array([1.0, 2.0, 3.0])
    vals = np.asarray(value_at(par_solution, xs))
    ratios = vals[1:] / vals[:-1]
    assert np.allclose(ratios, np.exp(-t.big_phi), rtol=1e-12)


def test_value_nondecreasing_slope_at_least_one(par_solution):
    t = par_solution.table
    xs = np.linspace(0.01, 3.0, 500)
    vals = np.asarray(value_at(par_solution, xs))
    slopes = np.diff(vals) / np.diff(xs)
    assert np.all(np.diff(vals) >= 0.0)
    assert np.all(slopes >= 1.0 - 1e-8)


def test_barrier_value_at_optimum_coincides(par_solution):
    for x in (-0.5, 0.2, par_solution.b_star, 1.5):
        assert barrier_value_at(par_solution.table, par_solution.b_star, x) \
            == pytest.approx(float(value_at(par_solution, x)), rel=1e-12)


def test_barrier_value_branch_boundary(par_solution):
    t = par_solution.table
    b = 0.6
    expected = float(t.H_value(b)) / float(t.H1_pos(b))
    assert barrier_value_at(t, b, b) == pytest.approx(expected, rel=1e-12)


def test_barrier_dominance(par_solution):
    t = par_solution.table
    b = par_solution.b_star
    xs = t.grid
    v_star = np.asarray(value_at(par_solution, xs))
    scale = np.max(v_star)
    for other in (0.0, b / 2, 2 * b):
        v_other = np.asarray(barrier_value_at(t, other, xs))
        assert np.max(v_other - v_star) <= 1e-10 * scale


def test_barrier_requires_nonnegative_level(par_solution):
    with pytest.raises(ValueError):
        barrier_value_at(par_solution.table, -0.1, 0.5)


def test_step_family_barrier_ordering(model):
    bs = []
    for n in (1, 3, 5):
        table = solve_H(model, step_family(n, A, PHI).shifted(Q),
                        SolverConfig(grid_step=1e-3, x_max=2.0))
        bs.append(find_barrier(table).b_star)
    assert bs[0] >= bs[1] >= bs[2]


def test_affine_family_barrier_ordering(model):
    bs = []
    for mslope in (-1.5, -0.5):
        table = solve_H(model, affine_family(mslope, A, PHI).shifted(Q),
                        SolverConfig(grid_step=1e-3, x_max=2.0))
        bs.append(find_barrier(table).b_star)
    assert bs[0] <= bs[1]


def test_hjb_residual_zero_inside(par_solution):
    b = par_solution.b_star
    for x in np.linspace(0.1 * b, 0.9 * b, 5):
        v = float(value_at(par_solution, x))
        scale = (Q + 0.0) * v  # omega vanishes on (0, infty)
        assert abs(hjb_residual(par_solution, float(x))) <= 1e-4 * scale


def test_hjb_residual_nonpositive_above(par_solution, step3_solution):
    for sol in (par_solution, step3_solution):
        b = sol.b_star
        for x in np.linspace(b + 0.1, b + 2.0, 5):
            v = float(value_at(sol, x))
            assert hjb_residual(sol, float(x)) <= 1e-6 * Q * v


def test_hjb_refuses_kinks_and_origin(par_solution):
    with pytest.raises(ValueError):
        hjb_residual(par_solution, 0.0)
    with pytest.raises(ValueError):
        hjb_residual(par_solution, -0.5)


def test_generator_on_constant(model):
    # (Gamma - (q+omega)) K = -(q+omega(x)) K, exactly
    K = 2.5
    om = step_family(2, A, PHI)
    for x in (0.5, -0.3):
        gamma = generator_apply(model, x, lambda y: K, 0.0, 0.0,
                                exp_tail=(x - 5.0, K, 0.0),
                                kinks=om.breaks)
        resid = gamma - (Q + float(om.value(x))) * K
        assert resid == pytest.approx(-(Q + float(om.value(x))) * K, abs=1e-12)


def test_generator_cross_checks_hjb(par_solution):
    # quadrature-based generator vs the closed-form residual path
    sol = par_solution
    t = sol.table
    x = 0.5 * sol.b_star
    v = lambda y: barrier_value_at(t, sol.b_star, float(y))
    v1 = float(t.H1_pos(x)) / sol.H1_at_b
    v2 = float(t.H2_pos(x)) / sol.H1_at_b
    tail = (t.a, float(t.H_value(t.a)) / sol.H1_at_b, t.big_phi)
    gamma = generator_apply(t.model, x, v, v1, v2, exp_tail=tail,
                            kinks=t.kinks)
    ref = gamma - (Q + 0.0) * v(x)
    assert hjb_residual(sol, x) == pytest.approx(ref, abs=1e-8)
