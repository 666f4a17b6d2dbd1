"""Rolling-window Observability Grammian and persistence certificates.

The Grammian of a window [t-T, t] is the integral of Phi^T H^T H Phi along
the reference trajectory; it equals half the Hessian of the window cost at
the reference state. Certificates scan a finite set of window end times
and are therefore *sampled evidence, not a proof*: the underlying
conditions quantify over all t >= T.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .cost import cum_output_error, gauss_newton_term
from .errors import CertificationInconclusive, DomainViolation, EigFailure, Unbounded
from .ode_core import Array, ControlSystem, InputSignal, TimeGrid, flow

SAMPLED_DISCLAIMER = "sampled evidence, not a proof"

_OVERFLOW_GUARD = 1e12


def jacobi_eigh(a: Array, max_sweeps: int = 100) -> tuple[Array, Array]:
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns (eigenvalues ascending, eigenvectors as columns). Intended for
    the small dense matrices this library produces (n <= 10 or so).
    Raises EigFailure if the off-diagonal mass does not vanish within
    `max_sweeps` sweeps.
    """
    a = np.array(a, dtype=float)
    n = a.shape[0]
    v = np.eye(n)
    scale = max(1.0, float(np.linalg.norm(a)))
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.tril(a, -1) ** 2) * 2.0)
        if off <= 1e-15 * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-18 * scale:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rot = np.eye(n)
                rot[p, p] = rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                a = rot.T @ a @ rot
                v = v @ rot
    else:
        raise EigFailure(f"Jacobi iteration did not converge in {max_sweeps} sweeps")
    d = np.diag(a)
    order = np.argsort(d)
    return d[order], v[:, order]


class Verdict(enum.Enum):
    NOT_WEAKLY_PERSISTENT = "NotWeaklyPersistent"
    WEAKLY_PERSISTENT_SAMPLED = "WeaklyPersistentSampled"
    WEAKLY_REGULARLY_PERSISTENT_SAMPLED = "WeaklyRegularlyPersistentSampled"


@dataclass(frozen=True)
class GrammianReport:
    """Grammian matrix of one window with its spectrum."""

    t: float
    T: float
    center: Array
    matrix: Array
    eigenvalues: Array  # ascending
    eigenvectors: Array  # columns, matching eigenvalues

    @property
    def min_eig(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def max_eig(self) -> float:
        return float(self.eigenvalues[-1])


@dataclass(frozen=True)
class WindowEvidence:
    t: float
    min_eig: float
    max_eig: float
    witness_direction: Optional[Array] = None
    witness_cost: Optional[float] = None


@dataclass(frozen=True)
class PersistenceCertificate:
    verdict: Verdict
    t_grid: tuple[float, ...]
    min_eigs: tuple[float, ...]
    max_eigs: tuple[float, ...]
    mu_hat: float  # sampled inf of 2 * min_eig
    threshold: float
    evidence: WindowEvidence
    note: str = SAMPLED_DISCLAIMER


@dataclass(frozen=True)
class BoundednessReport:
    horizon: float
    radius: float
    L_hat: float
    per_window_sup: tuple[float, ...]
    n_ball_samples: int
    seed: int

    @property
    def growing(self) -> bool:
        """Flags a strict per-window growth trend in the sampled suprema."""
        s = self.per_window_sup
        if len(s) < 3:
            return False
        increasing = all(b > a for a, b in zip(s, s[1:]))
        return increasing and s[-1] > 1.5 * s[0]


def observability_grammian(sys: ControlSystem, t: float, T: float, center: Array,
                           u: InputSignal, grid: TimeGrid) -> GrammianReport:
    """Grammian of the window [t-T, t] along the trajectory from (t-T, center)."""
    c = gauss_newton_term(sys, t - T, t, center, u, grid)
    eigvals, eigvecs = jacobi_eigh(c)
    return GrammianReport(t=t, T=T, center=np.asarray(center, dtype=float),
                          matrix=c, eigenvalues=eigvals, eigenvectors=eigvecs)


def _reference_scan(sys: ControlSystem, x0: Array, u: InputSignal, T: float,
                    t_grid, grid_step: float) -> tuple[TimeGrid, Array, list[GrammianReport]]:
    t_grid = sorted(float(t) for t in t_grid)
    if not t_grid or t_grid[0] < T:
        raise ValueError("t_grid must be nonempty with every t >= T")
    full = TimeGrid.with_step(0.0, t_grid[-1], grid_step)
    xs = flow(sys, 0.0, full.t_end, x0, u, full)
    reports = []
    for t in t_grid:
        center = xs[full.index_of(t - T)]
        reports.append(observability_grammian(sys, t, T, center, u, full))
    return full, xs, reports


def _witness_cost(sys: ControlSystem, u: InputSignal, full: TimeGrid,
                  report: GrammianReport, step: float) -> tuple[Array, float]:
    """Cost along the near-null eigenvector; tries both displacement signs."""
    d = report.eigenvectors[:, 0]
    t0, t1 = report.t - report.T, report.t
    best = None
    for sign in (1.0, -1.0):
        try:
            c = cum_output_error(sys, t0, t1, report.center,
                                 report.center + sign * step * d, u, full).value
        except DomainViolation:
            continue
        best = c if best is None else min(best, c)
    if best is None:
        raise DomainViolation("witness displacement left the system domain on both sides")
    return d, best


def certify_weak_persistence(sys: ControlSystem, x0: Array, u: InputSignal,
                             T: float, t_grid, grid_step: float,
                             singular_tol: Optional[float] = None,
                             witness_step: float = 0.01,
                             flat_cost_tol: float = 1e-10) -> PersistenceCertificate:
    """Scan window Grammians for positive-definiteness along the reference.

    Every sampled window positive definite (min eigenvalue above the
    singularity tolerance) yields WeaklyPersistentSampled. A singular
    window yields NotWeaklyPersistent only when the near-null eigenvector
    is corroborated by a flat cost at a small displacement; otherwise the
    scan raises CertificationInconclusive, since a singular Grammian alone
    does not settle the question.
    """
    full, _, reports = _reference_scan(sys, x0, u, T, t_grid, grid_step)
    tols = [singular_tol if singular_tol is not None else 1e-8 * r.max_eig
            for r in reports]
    worst_i = int(np.argmin([r.min_eig for r in reports]))
    worst = reports[worst_i]
    mu_hat = 2.0 * worst.min_eig
    min_eigs = tuple(r.min_eig for r in reports)
    max_eigs = tuple(r.max_eig for r in reports)
    t_list = tuple(r.t for r in reports)

    if all(r.min_eig > tol for r, tol in zip(reports, tols)):
        return PersistenceCertificate(
            verdict=Verdict.WEAKLY_PERSISTENT_SAMPLED, t_grid=t_list,
            min_eigs=min_eigs, max_eigs=max_eigs, mu_hat=mu_hat,
            threshold=tols[worst_i],
            evidence=WindowEvidence(worst.t, worst.min_eig, worst.max_eig))

    direction, wcost = _witness_cost(sys, u, full, worst, witness_step)
    if wcost >= flat_cost_tol:
        raise CertificationInconclusive(
            f"window t={worst.t} has a near-singular Grammian (min_eig="
            f"{worst.min_eig:.3e}) but the flat-cost witness check found cost "
            f"{wcost:.3e} >= {flat_cost_tol:.1e}")
    return PersistenceCertificate(
        verdict=Verdict.NOT_WEAKLY_PERSISTENT, t_grid=t_list,
        min_eigs=min_eigs, max_eigs=max_eigs, mu_hat=mu_hat,
        threshold=tols[worst_i],
        evidence=WindowEvidence(worst.t, worst.min_eig, worst.max_eig,
                                witness_direction=direction, witness_cost=wcost))


def certify_weak_regular_persistence(sys: ControlSystem, x0: Array, u: InputSignal,
                                     T: float, t_grid, grid_step: float,
                                     mu_threshold: float = 1e-6,
                                     boundedness_radius: float = 0.1,
                                     n_ball_samples: int = 16,
                                     seed: int = 0,
                                     singular_tol: Optional[float] = None,
                                     witness_step: float = 0.01) -> PersistenceCertificate:
    """Scan for a uniform Grammian lower bound plus regular boundedness.

    Positive verdict requires the sampled inf of 2*min_eig to reach
    `mu_threshold` and the ball-sampled boundedness check to pass;
    otherwise the verdict falls back to the weak-persistence scan result.
    """
    weak = certify_weak_persistence(sys, x0, u, T, t_grid, grid_step,
                                    singular_tol=singular_tol,
                                    witness_step=witness_step)
    if weak.verdict is Verdict.NOT_WEAKLY_PERSISTENT:
        return weak
    if weak.mu_hat < mu_threshold:
        return weak
    try:
        check_regular_boundedness(sys, x0, u, T, boundedness_radius, t_grid,
                                  n_ball_samples, seed, grid_step)
    except (Unbounded, DomainViolation):
        return weak
    return PersistenceCertificate(
        verdict=Verdict.WEAKLY_REGULARLY_PERSISTENT_SAMPLED,
        t_grid=weak.t_grid, min_eigs=weak.min_eigs, max_eigs=weak.max_eigs,
        mu_hat=weak.mu_hat, threshold=mu_threshold, evidence=weak.evidence)


def ball_samples(rng: np.random.Generator, center: Array, radius: float,
                 n: int) -> Array:
    """n seeded points in the closed ball plus the 2*dim axis boundary points."""
    center = np.asarray(center, dtype=float)
    dim = center.shape[0]
    pts = []
    for _ in range(n):
        d = rng.standard_normal(dim)
        nrm = np.linalg.norm(d)
        if nrm < 1e-12:
            d = np.zeros(dim)
            d[0] = 1.0
            nrm = 1.0
        r = radius * rng.uniform() ** (1.0 / dim)
        pts.append(center + (r / nrm) * d)
    for i in range(dim):
        e = np.zeros(dim)
        e[i] = radius
        pts.append(center + e)
        pts.append(center - e)
    return np.stack(pts)


def check_regular_boundedness(sys: ControlSystem, x0: Array, u: InputSignal,
                              T: float, R: float, t_grid, n_ball_samples: int,
                              seed: int, grid_step: float,
                              overflow_guard: float = _OVERFLOW_GUARD) -> BoundednessReport:
    """Sampled check of the uniform trajectory bound over ball-perturbed starts.

    For each sampled window, integrates the flow from seeded points in the
    ball around x(t-T) and records the largest trajectory norm seen.
    """
    if R <= 0:
        raise ValueError("R must be positive")
    full, xs, _ = _reference_scan(sys, x0, u, T, t_grid, grid_step)
    rng = np.random.default_rng(seed)
    per_window = []
    for t in sorted(float(t) for t in t_grid):
        center = xs[full.index_of(t - T)]
        sup = 0.0
        for xi in ball_samples(rng, center, R, n_ball_samples):
            traj = flow(sys, t - T, t, xi, u, full)
            sup = max(sup, float(np.max(np.linalg.norm(traj, axis=1))))
        if sup > overflow_guard:
            raise Unbounded(f"trajectory norm {sup:.3e} exceeds the overflow guard")
        per_window.append(sup)
    return BoundednessReport(horizon=T, radius=R, L_hat=max(per_window),
                             per_window_sup=tuple(per_window),
                             n_ball_samples=n_ball_samples, seed=seed)
