"""Window solver, rolling estimation, and stability-audit tests.

The bearing scenarios give windows with known curvature (the Hessian at the
reference equals twice the closed-form Grammian), so convergence, error
magnitudes, and audit constants can all be checked against oracles.
"""

import numpy as np
import pytest

from obsmhe import (
    BoundaryStuck, ConditionsFailed, GridMismatch, NoiseSignals,
    SampledSignal, SolverOptions, TimeGrid, ZERO_NOISE, bearing, flow,
    audit_nonuniform_stability, audit_uniform_stability,
    multistart_uniqueness, rolling_estimate, solve_fie, solve_mhe,
    solve_pmhe)

OPTS = SolverOptions(ball_radius=0.1)


def _truth(sys_, x0, u, t, h=0.0025):
    g = TimeGrid.with_step(0.0, t, h)
    return flow(sys_, 0.0, t, x0, u, g)[-1]


def test_mhe_recovers_reference_from_offset_start(circ, x0, grid6):
    sys_, u = circ
    x_ref = _truth(sys_, x0, u, 1.0)
    sol = solve_mhe(sys_, x0, u, 2.0, 1.0, OPTS, grid6,
                    x_init=x_ref + np.array([0.03, -0.04]))
    assert sol.converged and not sol.projected
    assert sol.error_to_reference < 1e-8
    assert sol.grad_norm <= OPTS.grad_tol * max(1.0, sol.trace[0][0])


def test_mhe_curvature_matches_grammian_oracle(circ, x0, grid6):
    sys_, u = circ
    sol = solve_mhe(sys_, x0, u, 2.0, 1.0, OPTS, grid6)
    lo, _ = bearing.circ_eigs(1.0, 1.0, 1.0)
    assert sol.hess_min_eig == pytest.approx(2.0 * lo, rel=1e-4)


def test_zero_noise_pmhe_is_bitwise_mhe(circ, x0, grid6):
    sys_, u = circ
    a = solve_mhe(sys_, x0, u, 3.0, 1.0, OPTS, grid6)
    b = solve_pmhe(sys_, x0, u, 3.0, 1.0, ZERO_NOISE, OPTS, grid6)
    assert np.array_equal(a.xi_star, b.xi_star)
    assert a.cost == b.cost and a.trace == b.trace


def test_fie_estimates_initial_state(circ, x0, grid6):
    sys_, u = circ
    sol = solve_fie(sys_, x0, u, 2.0, OPTS, grid6,
                    x_init=np.asarray(x0) + np.array([0.02, 0.02]))
    assert sol.converged
    assert np.linalg.norm(sol.xi_star - x0) < 1e-8


def test_fie_rejects_subgrid_shorter_than_one_step(circ, x0, grid6):
    sys_, u = circ
    with pytest.raises(GridMismatch):
        solve_fie(sys_, x0, u, 0.001, OPTS, grid6)


def test_flat_valley_converges_in_place(cst, x0):
    # Straight-line motion toward the landmark freezes the bearing, so the
    # cost is flat along the motion direction: the solver accepts a nearby
    # zero-cost start immediately instead of drifting.
    sys_, u = cst
    grid = TimeGrid.with_step(0.0, 0.9, 0.0025)
    x_ref = _truth(sys_, x0, u, 0.4)
    shifted = x_ref + 0.01 * np.array([-1.0, 0.0])  # along the ray to (0, 0)
    sol = solve_mhe(sys_, x0, u, 0.9, 0.5,
                    OPTS.replace(ball_center=x_ref), grid, x_init=shifted)
    assert sol.converged and sol.iterations == 0
    assert sol.error_to_reference == pytest.approx(0.01, rel=1e-10)


def test_boundary_stuck_when_minimizer_outside_ball(circ, x0, grid6):
    sys_, u = circ
    x_ref = _truth(sys_, x0, u, 1.0)
    far = x_ref + np.array([0.5, 0.5])
    with pytest.raises(BoundaryStuck):
        solve_mhe(sys_, x0, u, 2.0, 1.0,
                  OPTS.replace(ball_center=far, ball_radius=0.05), grid6)


def test_pmhe_error_scales_with_noise(circ, x0, grid6):
    sys_, u = circ
    v = SampledSignal.constant(np.array([1e-3]), 1.0, 2.0, grid6.h)
    sol = solve_pmhe(sys_, x0, u, 2.0, 1.0, NoiseSignals(v=v), OPTS, grid6)
    assert sol.converged
    assert 0.0 < sol.error_to_reference < 0.05


def test_rolling_estimate_tracks_noise_free_truth(circ, x0, grid6):
    sys_, u = circ
    results = rolling_estimate(sys_, x0, u, [1.0, 2.0, 3.0, 4.0], 1.0,
                               ZERO_NOISE, OPTS, grid6)
    assert [r.t for r in results] == [1.0, 2.0, 3.0, 4.0]
    for r in results:
        assert r.failure is None
        assert r.solution.error_to_reference < 1e-8


def test_rolling_estimate_records_failures(circ, x0, grid6):
    sys_, u = circ
    v = SampledSignal.constant(np.array([1e-2]), 0.0, 6.0, grid6.h)
    results = rolling_estimate(sys_, x0, u, [2.0, 3.0], 1.0,
                               NoiseSignals(v=v),
                               OPTS.replace(max_iters=0), grid6)
    assert all(r.solution is None for r in results)
    assert all(r.failure.startswith("MaxItersExceeded") for r in results)


def test_nonuniform_audit_circ_constant_over_time(circ, x0, grid6):
    sys_, u = circ
    audits = [audit_nonuniform_stability(sys_, x0, u, t, 1.0, 1e-3, grid6)
              for t in (2.0, 4.0)]
    lo, _ = bearing.circ_eigs(1.0, 1.0, 1.0)
    for a in audits:
        assert a.mu_t == pytest.approx(2.0 * lo, rel=1e-6)
        assert a.K_t > 0
    # the circle is stationary in the rotating frame: same constants each t
    assert audits[0].mu_t == pytest.approx(audits[1].mu_t, rel=1e-9)
    assert audits[0].C1_t == pytest.approx(audits[1].C1_t, rel=1e-9)


def test_nonuniform_audit_bounds_actual_error(circ, x0, grid6):
    sys_, u = circ
    nu = 1e-3
    a = audit_nonuniform_stability(sys_, x0, u, 2.0, 1.0, nu, grid6)
    v = SampledSignal.constant(np.array([nu]), 1.0, 2.0, grid6.h)
    sol = solve_pmhe(sys_, x0, u, 2.0, 1.0, NoiseSignals(v=v), OPTS, grid6)
    assert sol.error_to_reference <= a.K_t * nu


def test_nonuniform_audit_rejects_singular_window(cst, x0):
    from obsmhe import SingularWindow
    sys_, u = cst
    grid = TimeGrid.with_step(0.0, 0.9, 0.0025)
    with pytest.raises(SingularWindow):
        audit_nonuniform_stability(sys_, x0, u, 0.9, 0.5, 1e-3, grid)


def test_uniform_audit_margins_hold_on_circle(circ, x0):
    sys_, u = circ
    audit = audit_uniform_stability(sys_, x0, u, 1.0, [1, 2, 3, 4, 5, 6],
                                    R=0.02, nu=1e-4, alpha=0.6,
                                    grid_step=0.0025)
    lo, _ = bearing.circ_eigs(1.0, 1.0, 1.0)
    assert audit.mu_hat == pytest.approx(2.0 * lo, rel=1e-6)
    assert all(audit.conditions_ok)
    assert audit.g1 == pytest.approx(audit.a1_hat * (1e-4 + 0.02))
    assert audit.g2 == pytest.approx(audit.a2_hat * 1e-4)
    assert np.isfinite(audit.bound_factor) and audit.bound_factor > 0


def test_uniform_audit_is_seed_deterministic(circ, x0):
    sys_, u = circ
    kw = dict(T=1.0, t_grid=[2, 4], R=0.02, nu=1e-4, alpha=0.6,
              grid_step=0.005, seed=7, t_subsample=1)
    a = audit_uniform_stability(sys_, x0, u, **kw)
    b = audit_uniform_stability(sys_, x0, u, **kw)
    assert (a.mu_hat, a.a1_hat, a.a2_hat, a.g3_hat) == \
        (b.mu_hat, b.a1_hat, b.a2_hat, b.g3_hat)


def test_uniform_audit_failure_carries_report(circ, x0):
    sys_, u = circ
    with pytest.raises(ConditionsFailed) as info:
        audit_uniform_stability(sys_, x0, u, 1.0, [2, 4], R=0.02, nu=1e-4,
                                alpha=0.001, grid_step=0.005, t_subsample=1)
    audit = info.value.audit
    assert not all(audit.conditions_ok)
    assert audit.g1 > audit.alpha * audit.mu_hat


def test_multistart_unique_on_circle(circ, x0, grid6):
    sys_, u = circ
    rep = multistart_uniqueness(sys_, x0, u, 2.0, 1.0, R=0.02, n_starts=6,
                                seed=3, opts=OPTS, grid=grid6)
    assert rep.unique and not rep.failures
    assert rep.max_pairwise_distance <= rep.cluster_radius
    assert len(rep.solutions) == 6


def test_multistart_not_unique_on_flat_valley(cst, x0):
    # Along the straight run every point of the motion ray inside the ball
    # has zero cost, so distinct starts converge in place and the spread
    # exceeds the cluster radius.
    sys_, u = cst
    grid = TimeGrid.with_step(0.0, 0.9, 0.0025)
    rep = multistart_uniqueness(sys_, x0, u, 0.9, 0.5, R=0.02, n_starts=8,
                                seed=1, opts=OPTS, grid=grid)
    assert not rep.unique
    assert rep.max_pairwise_distance > rep.cluster_radius
