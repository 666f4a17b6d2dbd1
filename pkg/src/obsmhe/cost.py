"""Cumulative output error, its perturbed variant, and analytic derivatives.

The cost of comparing two state hypotheses over a window is the integral
of the squared output mismatch of their flows. Quadrature is composite
Simpson on the RK4 grid, so the window grid must have an even number of
steps. All functions are pure; trajectories are integrated per call.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import GridMismatch
from .ode_core import (
    Array,
    ControlSystem,
    InputSignal,
    NoiseSignals,
    SampledSignal,
    TimeGrid,
    flow,
    flow_and_stm,
    noise_sensitivity,
    perturbed_flow,
)


@dataclass(frozen=True)
class WindowCost:
    """Nonnegative cost of an output-mismatch integral over one window."""

    t_start: float
    t_end: float
    value: float
    grid: TimeGrid


@dataclass(frozen=True)
class CostDerivatives:
    """Gradient and (symmetrized) Hessian of a window cost at `point`."""

    point: Array
    gradient: Array
    hessian: Array


def simpson_weights(grid: TimeGrid) -> Array:
    """Composite Simpson weights for the grid nodes (n_steps must be even)."""
    n = grid.n_steps
    if n % 2:
        raise GridMismatch("composite Simpson needs an even number of steps")
    w = np.ones(n + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * (grid.h / 3.0)


def _outputs(sys: ControlSystem, xs: Array, us: Array) -> Array:
    return np.stack([np.asarray(sys.h(x, u), dtype=float) for x, u in zip(xs, us)])


def _output_jacobians(sys: ControlSystem, xs: Array, us: Array) -> Array:
    return np.stack([np.asarray(sys.dh_dx(x, u), dtype=float) for x, u in zip(xs, us)])


def fd_step(point: Array, eps: float = 1e-5) -> float:
    """Central-difference step scaled to the magnitude of the point."""
    return eps * max(1.0, float(np.linalg.norm(point)))


def fd_gradient(fn: Callable[[Array], float], x: Array, eps: Optional[float] = None) -> Array:
    """Central finite differences of a scalar function."""
    x = np.asarray(x, dtype=float)
    step = fd_step(x) if eps is None else eps
    g = np.empty(x.shape[0])
    for i in range(x.shape[0]):
        e = np.zeros(x.shape[0])
        e[i] = step
        g[i] = (fn(x + e) - fn(x - e)) / (2.0 * step)
    return g


def cum_output_error(sys: ControlSystem, t1: float, t2: float, xi1: Array,
                     xi2: Array, u: InputSignal, grid: TimeGrid) -> WindowCost:
    """Integral over [t1, t2] of the squared output mismatch of the flows
    started at (t1, xi1) and (t1, xi2)."""
    sub = grid.subgrid(t1, t2)
    us = u.at_nodes(sub)
    y1 = _outputs(sys, flow(sys, t1, t2, xi1, u, sub), us)
    y2 = _outputs(sys, flow(sys, t1, t2, xi2, u, sub), us)
    mismatch = np.sum((y2 - y1) ** 2, axis=1)
    value = float(simpson_weights(sub) @ mismatch)
    return WindowCost(t1, t2, value, sub)


def grad_cum_error(sys: ControlSystem, t1: float, t2: float, xi1: Array,
                   xi2: Array, u: InputSignal, grid: TimeGrid) -> Array:
    """Analytic gradient of cum_output_error in xi2.

    Assembles 2 * integral of (y2 - y1)^T H(x2) Phi along the co-integrated
    xi2-trajectory.
    """
    sub = grid.subgrid(t1, t2)
    us = u.at_nodes(sub)
    y1 = _outputs(sys, flow(sys, t1, t2, xi1, u, sub), us)
    x2, phis = flow_and_stm(sys, t1, t2, xi2, u, sub)
    y2 = _outputs(sys, x2, us)
    hs = _output_jacobians(sys, x2, us)
    # (y2 - y1)^T H Phi at each node
    rows = np.einsum("ni,nij,njk->nk", y2 - y1, hs, phis)
    return 2.0 * (simpson_weights(sub) @ rows)


def gauss_newton_term(sys: ControlSystem, t1: float, t2: float, xi2: Array,
                      u: InputSignal, grid: TimeGrid) -> Array:
    """The windowed integral of Phi^T H^T H Phi along the xi2-trajectory.

    This is the Grammian-style curvature term C(t, T, xi2, u); the
    Gauss-Newton Hessian of the window cost is 2*C.
    """
    sub = grid.subgrid(t1, t2)
    us = u.at_nodes(sub)
    x2, phis = flow_and_stm(sys, t1, t2, xi2, u, sub)
    hs = _output_jacobians(sys, x2, us)
    hphi = np.einsum("nij,njk->nik", hs, phis)
    integrand = np.einsum("nij,nik->njk", hphi, hphi)
    c = np.einsum("n,njk->jk", simpson_weights(sub), integrand)
    return 0.5 * (c + c.T)


def hess_cum_error(sys: ControlSystem, t1: float, t2: float, xi1: Array,
                   xi2: Array, u: InputSignal, grid: TimeGrid,
                   mode: str = "gauss_newton") -> Array:
    """Hessian of cum_output_error in xi2.

    gauss_newton: 2*C(t, T, xi2, u); exact at xi2 = xi1 where the residual
    term vanishes. full_fd: symmetrized central finite differences of the
    analytic gradient, which captures the residual term as well.
    """
    if mode == "gauss_newton":
        return 2.0 * gauss_newton_term(sys, t1, t2, xi2, u, grid)
    if mode != "full_fd":
        raise ValueError(f"unknown hessian mode {mode!r}")
    xi2 = np.asarray(xi2, dtype=float)
    step = fd_step(xi2)
    n = xi2.shape[0]
    hess = np.empty((n, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = step
        gp = grad_cum_error(sys, t1, t2, xi1, xi2 + e, u, grid)
        gm = grad_cum_error(sys, t1, t2, xi1, xi2 - e, u, grid)
        hess[i] = (gp - gm) / (2.0 * step)
    return 0.5 * (hess + hess.T)


# ---------------------------------------------------------------------------
# Perturbed cost: the reference trajectory is driven by process noise w from
# time 0 and the measured output carries additive noise v on the window.
# ---------------------------------------------------------------------------

def _window_grid(t: float, T: float, grid: TimeGrid) -> TimeGrid:
    if t < T:
        raise GridMismatch("window end t must be at least the horizon T")
    return grid.subgrid(t - T, t)


def perturbed_reference(sys: ControlSystem, t: float, T: float, x0: Array,
                        u: InputSignal, eta: NoiseSignals,
                        grid: TimeGrid) -> tuple[Array, Array]:
    """Perturbed reference on the window: states x~(s, w) and measured
    outputs h(x~) + v at the window nodes.

    The reference is integrated from (0, x0) on a [0, t] grid with the
    window's step, so process noise accumulated before the window is
    accounted for.
    """
    win = _window_grid(t, T, grid)
    full = TimeGrid.with_step(0.0, t, win.h)
    xs_full = perturbed_flow(sys, 0.0, t, x0, u, eta.w, full)
    i0 = full.index_of(t - T)
    xs = xs_full[i0:]
    us = u.at_nodes(win)
    ys = _outputs(sys, xs, us)
    if eta.v is not None:
        ys = ys + eta.v.at_nodes(win)
    return xs, ys


def _candidate_residual(sys: ControlSystem, win: TimeGrid, xi: Array,
                        u: InputSignal, ref_out: Array,
                        with_stm: bool) -> tuple[Array, Array, Optional[Array], Array]:
    us = u.at_nodes(win)
    if with_stm:
        xs, phis = flow_and_stm(sys, win.t_start, win.t_end, xi, u, win)
    else:
        xs = flow(sys, win.t_start, win.t_end, xi, u, win)
        phis = None
    resid = _outputs(sys, xs, us) - ref_out
    return xs, us, phis, resid


def perturbed_cost_from_reference(sys: ControlSystem, win: TimeGrid, xi: Array,
                                  u: InputSignal, ref_out: Array) -> float:
    """Window cost against a precomputed measured-output trajectory."""
    _, _, _, resid = _candidate_residual(sys, win, xi, u, ref_out, with_stm=False)
    return float(simpson_weights(win) @ np.sum(resid ** 2, axis=1))


def grad_perturbed_cost_from_reference(sys: ControlSystem, win: TimeGrid, xi: Array,
                                       u: InputSignal, ref_out: Array) -> Array:
    """Analytic gradient in xi against a precomputed measured-output trajectory."""
    xs, us, phis, resid = _candidate_residual(sys, win, xi, u, ref_out, with_stm=True)
    hs = _output_jacobians(sys, xs, us)
    rows = np.einsum("ni,nij,njk->nk", resid, hs, phis)
    return 2.0 * (simpson_weights(win) @ rows)


def perturbed_cost(sys: ControlSystem, t: float, T: float, x0: Array, xi: Array,
                   u: InputSignal, eta: NoiseSignals, grid: TimeGrid) -> WindowCost:
    """Cost of the hypothesis (t-T, xi) against the noisy reference record."""
    win = _window_grid(t, T, grid)
    _, ref_out = perturbed_reference(sys, t, T, x0, u, eta, grid)
    value = perturbed_cost_from_reference(sys, win, xi, u, ref_out)
    return WindowCost(t - T, t, value, win)


def grad_perturbed_cost(sys: ControlSystem, t: float, T: float, x0: Array,
                        xi: Array, u: InputSignal, eta: NoiseSignals,
                        grid: TimeGrid) -> Array:
    """Gradient of perturbed_cost in xi."""
    win = _window_grid(t, T, grid)
    _, ref_out = perturbed_reference(sys, t, T, x0, u, eta, grid)
    return grad_perturbed_cost_from_reference(sys, win, xi, u, ref_out)


def grad_sensitivity_v(sys: ControlSystem, t: float, T: float, xi: Array,
                       u: InputSignal, grid: TimeGrid,
                       dv: SampledSignal) -> Array:
    """Directional derivative of the perturbed-cost gradient in the
    measurement-noise direction dv: -2 * integral of (H Phi)^T dv(s).

    Affine structure: independent of the noise the gradient is taken at.
    """
    win = _window_grid(t, T, grid)
    us = u.at_nodes(win)
    xs, phis = flow_and_stm(sys, win.t_start, win.t_end, xi, u, win)
    hs = _output_jacobians(sys, xs, us)
    dvs = dv.at_nodes(win)
    rows = np.einsum("ni,nij,njk->nk", dvs, hs, phis)
    return -2.0 * (simpson_weights(win) @ rows)


def grad_sensitivity_w(sys: ControlSystem, t: float, T: float, x0: Array,
                       xi: Array, u: InputSignal, eta: NoiseSignals,
                       grid: TimeGrid, dw: SampledSignal) -> Array:
    """Directional derivative of the perturbed-cost gradient in the
    process-noise direction dw.

    Uses the noise sensitivity z(s) = d_w x~(s, w) . dw of the perturbed
    reference: -2 * integral of (H(x^) Phi)^T H(x~) z(s).
    """
    win = _window_grid(t, T, grid)
    full = TimeGrid.with_step(0.0, t, win.h)
    xs_ref = perturbed_flow(sys, 0.0, t, x0, u, eta.w, full)
    zs_full = noise_sensitivity(sys, t, x0, u, eta.w, dw, full)
    i0 = full.index_of(t - T)
    us = u.at_nodes(win)
    xs_hat, phis = flow_and_stm(sys, win.t_start, win.t_end, xi, u, win)
    h_hat = _output_jacobians(sys, xs_hat, us)
    h_ref = _output_jacobians(sys, xs_ref[i0:], us)
    dy = np.einsum("nij,nj->ni", h_ref, zs_full[i0:])
    rows = np.einsum("ni,nij,njk->nk", dy, h_hat, phis)
    return -2.0 * (simpson_weights(win) @ rows)
