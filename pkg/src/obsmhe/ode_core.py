"""System description, time grids, signals, and flow integration.

Everything here is immutable after construction and every operation is a
pure function of its inputs, so all of it is safe to call concurrently.

Integration is fixed-step classical RK4 on a uniform grid. Piecewise
inputs are evaluated per step from the piece active on the open step, so
breakpoints that sit on grid nodes do not break the order of the scheme;
breakpoints off the grid raise GridMismatch.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from ._backend import rk4_flow, rk4_flow_sens, rk4_flow_stm
from .errors import DomainViolation, GridMismatch

Array = np.ndarray

_NODE_TOL = 1e-9


@dataclass(frozen=True)
class ControlSystem:
    """A controlled ODE x' = f(x, u) with output y = h(x, u).

    `df_dx` and `dh_dx` are the Jacobians of f and h in the state. The
    optional `domain_guard` marks states where h is defined; trajectories
    leaving the guarded region raise DomainViolation.
    """

    n_x: int
    n_u: int
    n_y: int
    f: Callable[[Array, Array], Array]
    h: Callable[[Array, Array], Array]
    df_dx: Callable[[Array, Array], Array]
    dh_dx: Callable[[Array, Array], Array]
    domain_guard: Optional[Callable[[Array], bool]] = None

    def __post_init__(self):
        if min(self.n_x, self.n_u, self.n_y) < 1:
            raise ValueError("dimensions must be positive")

    def guard_ok(self, x: Array) -> bool:
        return self.domain_guard is None or bool(self.domain_guard(x))


def check_jacobians(sys: ControlSystem, points: Sequence[tuple[Array, Array]],
                    eps: float = 1e-6) -> float:
    """Max deviation of df_dx/dh_dx from central finite differences of f/h.

    Convenience check of the ControlSystem contract; returns the worst
    absolute entry error over the supplied (state, input) test points.
    """
    worst = 0.0
    for x, u in points:
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        for fn, jac, dim in ((sys.f, sys.df_dx, sys.n_x), (sys.h, sys.dh_dx, sys.n_y)):
            fd = np.empty((dim, sys.n_x))
            for i in range(sys.n_x):
                e = np.zeros(sys.n_x)
                e[i] = eps
                fd[:, i] = (np.asarray(fn(x + e, u)) - np.asarray(fn(x - e, u))) / (2 * eps)
            worst = max(worst, float(np.max(np.abs(fd - np.asarray(jac(x, u))))))
    return worst


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid with n_steps intervals on [t_start, t_end]."""

    t_start: float
    t_end: float
    n_steps: int

    def __post_init__(self):
        if self.n_steps < 1:
            raise GridMismatch("grid needs at least one step")
        if not self.t_end > self.t_start:
            raise GridMismatch("t_end must exceed t_start")

    @property
    def h(self) -> float:
        return (self.t_end - self.t_start) / self.n_steps

    @property
    def nodes(self) -> Array:
        return self.t_start + self.h * np.arange(self.n_steps + 1)

    @classmethod
    def with_step(cls, t_start: float, t_end: float, h: float) -> "TimeGrid":
        n = round((t_end - t_start) / h)
        if n < 1 or abs(t_start + n * h - t_end) > _NODE_TOL * max(1.0, abs(t_end)):
            raise GridMismatch(
                f"step {h} does not divide interval [{t_start}, {t_end}]")
        return cls(t_start, t_end, n)

    @classmethod
    def for_window(cls, t_start: float, t_end: float, n_steps: int = 400) -> "TimeGrid":
        """Default window grid: 400 steps over the window (h = T/400)."""
        return cls(t_start, t_end, n_steps)

    def index_of(self, t: float) -> int:
        i = round((t - self.t_start) / self.h)
        if i < 0 or i > self.n_steps or abs(self.t_start + i * self.h - t) > _NODE_TOL * max(1.0, abs(t)):
            raise GridMismatch(f"time {t} is not a node of {self}")
        return i

    def covers(self, t0: float, t1: float) -> bool:
        lo = min(self.t_start, t0) >= self.t_start - _NODE_TOL
        hi = t1 <= self.t_end + _NODE_TOL
        return lo and hi

    def subgrid(self, t0: float, t1: float) -> "TimeGrid":
        i0, i1 = self.index_of(t0), self.index_of(t1)
        if i1 <= i0:
            raise GridMismatch("empty subgrid")
        return TimeGrid(self.t_start + i0 * self.h, self.t_start + i1 * self.h, i1 - i0)

    def refined(self, factor: int = 2) -> "TimeGrid":
        return TimeGrid(self.t_start, self.t_end, self.n_steps * factor)


@dataclass(frozen=True)
class InputSignal:
    """Piecewise-defined input trajectory, right-continuous at breakpoints.

    `pieces` is an ordered tuple of (start_time, evaluator); the first
    start must be <= 0 so the signal is defined for every s >= 0. `bound`
    is an optional sup-norm bound checked on every evaluated sample.
    """

    pieces: tuple[tuple[float, Callable[[float], Array]], ...]
    bound: Optional[float] = None

    def __post_init__(self):
        if not self.pieces:
            raise ValueError("input signal needs at least one piece")
        starts = [s for s, _ in self.pieces]
        if starts != sorted(starts):
            raise ValueError("piece start times must be increasing")
        if starts[0] > 0.0:
            raise ValueError("first piece must start at or before time 0")

    @classmethod
    def from_callable(cls, fn: Callable[[float], Array], bound: Optional[float] = None) -> "InputSignal":
        return cls(pieces=((0.0, fn),), bound=bound)

    @classmethod
    def constant(cls, value) -> "InputSignal":
        v = np.array(value, dtype=float)
        return cls(pieces=((0.0, lambda s: v),), bound=float(np.linalg.norm(v)))

    @property
    def breakpoints(self) -> tuple[float, ...]:
        return tuple(s for s, _ in self.pieces[1:])

    def _piece_at(self, s: float) -> Callable[[float], Array]:
        fn = self.pieces[0][1]
        for start, ev in self.pieces:
            if start <= s + _NODE_TOL:
                fn = ev
            else:
                break
        return fn

    def _checked(self, value: Array, s: float) -> Array:
        v = np.asarray(value, dtype=float)
        if self.bound is not None and np.linalg.norm(v) > self.bound + 1e-12:
            raise DomainViolation(
                f"input sample at s={s} exceeds declared bound {self.bound}")
        return v

    def at(self, s: float) -> Array:
        """Right-continuous evaluation at time s."""
        return self._checked(self._piece_at(s)(s), s)

    def at_nodes(self, grid: TimeGrid) -> Array:
        return np.stack([self.at(s) for s in grid.nodes])

    def stage_values(self, t0: float, h: float, n: int) -> tuple[Array, Array, Array]:
        """Per-step RK4 stage inputs: start, midpoint and end of each step.

        All three stages use the piece active on the open step (so the end
        value is the one-sided limit from inside the step), which keeps
        RK4 at full order when breakpoints sit on nodes.
        """
        u0 = []
        um = []
        u1 = []
        for i in range(n):
            a = t0 + i * h
            ev = self._piece_at(a + 0.5 * h)
            u0.append(self._checked(ev(a), a))
            um.append(self._checked(ev(a + 0.5 * h), a + 0.5 * h))
            u1.append(self._checked(ev(a + h), a + h))
        return np.stack(u0), np.stack(um), np.stack(u1)

    def check_breakpoints_on(self, grid: TimeGrid) -> None:
        for b in self.breakpoints:
            if grid.t_start - _NODE_TOL < b < grid.t_end + _NODE_TOL:
                grid.index_of(b)  # raises GridMismatch if off-grid


@dataclass(frozen=True)
class SampledSignal:
    """Sample-and-hold signal: values[i] holds on [t0 + i*h, t0 + (i+1)*h).

    The value at the final time t0 + n*h is the last sample's value.
    """

    t0: float
    h: float
    values: Array  # (n_samples, dim)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] < 1:
            raise ValueError("values must be a (n_samples, dim) array")
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, value, t0: float, t1: float, h: float) -> "SampledSignal":
        n = round((t1 - t0) / h)
        return cls(t0, h, np.tile(np.asarray(value, dtype=float), (n, 1)))

    @classmethod
    def zero(cls, dim: int, t0: float, t1: float, h: float) -> "SampledSignal":
        n = round((t1 - t0) / h)
        return cls(t0, h, np.zeros((n, dim)))

    @property
    def t_end(self) -> float:
        return self.t0 + self.h * self.values.shape[0]

    @property
    def sup_norm(self) -> float:
        if self.values.shape[0] == 0:
            return 0.0
        return float(np.max(np.linalg.norm(self.values, axis=1)))

    def sample_index(self, s: float) -> int:
        i = int(np.floor((s - self.t0) / self.h + _NODE_TOL))
        return min(max(i, 0), self.values.shape[0] - 1)

    def at(self, s: float) -> Array:
        return self.values[self.sample_index(s)]

    def at_nodes(self, grid: TimeGrid) -> Array:
        return np.stack([self.at(s) for s in grid.nodes])

    def step_values(self, t0: float, h: float, n: int) -> Array:
        """One held value per integration step (grids must be aligned)."""
        if abs(self.h - h) > _NODE_TOL:
            raise GridMismatch("sample-and-hold step differs from grid step")
        off = (t0 - self.t0) / h
        i0 = round(off)
        if abs(off - i0) > _NODE_TOL:
            raise GridMismatch("sample-and-hold grid is not aligned to the integration grid")
        if i0 < 0 or i0 + n > self.values.shape[0]:
            raise GridMismatch("sample-and-hold signal does not cover the requested span")
        return self.values[i0:i0 + n]

    def __add__(self, other: "SampledSignal") -> "SampledSignal":
        if abs(self.t0 - other.t0) > _NODE_TOL or abs(self.h - other.h) > _NODE_TOL \
                or self.values.shape != other.values.shape:
            raise GridMismatch("cannot add signals on different grids")
        return SampledSignal(self.t0, self.h, self.values + other.values)

    def scaled(self, a: float) -> "SampledSignal":
        return SampledSignal(self.t0, self.h, a * self.values)


@dataclass(frozen=True)
class NoiseSignals:
    """Measurement noise v on the estimation window and process noise w on [0, t].

    Either component may be None (interpreted as zero). `norm` is the
    max of their per-sample Euclidean sup-norms.
    """

    v: Optional[SampledSignal] = None
    w: Optional[SampledSignal] = None

    @property
    def norm(self) -> float:
        n = 0.0
        if self.v is not None:
            n = max(n, self.v.sup_norm)
        if self.w is not None:
            n = max(n, self.w.sup_norm)
        return n

    @property
    def is_zero(self) -> bool:
        return (self.v is None or not np.any(self.v.values)) and \
               (self.w is None or not np.any(self.w.values))


ZERO_NOISE = NoiseSignals()


def _check_guard(sys: ControlSystem, xs: Array, where: str) -> None:
    if not np.all(np.isfinite(xs)):
        raise DomainViolation(f"non-finite state during {where}")
    if sys.domain_guard is not None:
        for row in xs:
            if not sys.domain_guard(row):
                raise DomainViolation(f"domain guard failed during {where}")


def _span(grid: TimeGrid, s1: float, s2: float, u: InputSignal) -> TimeGrid:
    if s2 < s1:
        raise GridMismatch("s1 must not exceed s2")
    sub = grid.subgrid(s1, s2)
    u.check_breakpoints_on(sub)
    return sub


def flow(sys: ControlSystem, s1: float, s2: float, xi: Array, u: InputSignal,
         grid: TimeGrid) -> Array:
    """States of x' = f(x, u) from (s1, xi) at every grid node in [s1, s2]."""
    sub = _span(grid, s1, s2, u)
    u0, um, u1 = u.stage_values(sub.t_start, sub.h, sub.n_steps)
    xs = rk4_flow(sys.f, np.asarray(xi, dtype=float), sub.h, u0, um, u1)
    _check_guard(sys, xs, "flow")
    return xs


def stm(sys: ControlSystem, s1: float, s2: float, xi: Array, u: InputSignal,
        grid: TimeGrid) -> Array:
    """State-transition matrices d_xi phi(s; s1, xi, u) at the grid nodes."""
    _, phis = flow_and_stm(sys, s1, s2, xi, u, grid)
    return phis


def flow_and_stm(sys: ControlSystem, s1: float, s2: float, xi: Array,
                 u: InputSignal, grid: TimeGrid) -> tuple[Array, Array]:
    """State and STM trajectories co-integrated on the same RK4 stages."""
    sub = _span(grid, s1, s2, u)
    u0, um, u1 = u.stage_values(sub.t_start, sub.h, sub.n_steps)
    xs, phis = rk4_flow_stm(sys.f, sys.df_dx, np.asarray(xi, dtype=float),
                            sub.h, u0, um, u1)
    _check_guard(sys, xs, "stm")
    return xs, phis


def perturbed_flow(sys: ControlSystem, s1: float, s2: float, xi: Array,
                   u: InputSignal, w: Optional[SampledSignal],
                   grid: TimeGrid) -> Array:
    """States of x' = f(x, u) + w; with w = None this is exactly `flow`."""
    sub = _span(grid, s1, s2, u)
    u0, um, u1 = u.stage_values(sub.t_start, sub.h, sub.n_steps)
    wv = None if w is None else w.step_values(sub.t_start, sub.h, sub.n_steps)
    xs = rk4_flow(sys.f, np.asarray(xi, dtype=float), sub.h, u0, um, u1, wv)
    _check_guard(sys, xs, "perturbed_flow")
    return xs


def noise_sensitivity(sys: ControlSystem, t_end: float, xi: Array, u: InputSignal,
                      w: Optional[SampledSignal], dw: SampledSignal,
                      grid: TimeGrid) -> Array:
    """Directional derivative z(s) = d_w x~(s, w) . dw on [0, t_end].

    z solves z' = d_x f(x~(s, w), u(s)) z + dw(s) with z(0) = 0, where x~
    is the w-perturbed flow from (0, xi). Linear in dw.
    """
    sub = _span(grid, 0.0, t_end, u)
    u0, um, u1 = u.stage_values(sub.t_start, sub.h, sub.n_steps)
    if w is None:
        wv = np.zeros((sub.n_steps, sys.n_x))
    else:
        wv = w.step_values(sub.t_start, sub.h, sub.n_steps)
    dv = dw.step_values(sub.t_start, sub.h, sub.n_steps)
    xs, zs = rk4_flow_sens(sys.f, sys.df_dx, np.asarray(xi, dtype=float),
                           sub.h, u0, um, u1, wv, dv)
    _check_guard(sys, xs, "noise_sensitivity")
    return zs
