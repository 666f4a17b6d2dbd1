"""Pure-Python RK4 stepping kernels.

Reference implementation of the hot inner loops; `obsmhe._kernels` is the
compiled twin with identical signatures and semantics. Stage input values
are precomputed per step (u0 at the step start, um at the midpoint, u1 at
the step end, all taken from the piece active on the open step), so the
kernels never evaluate input signals themselves.

Process-noise arrays are sample-and-hold: one value per step, constant
across the four stages.
"""

import numpy as np

BACKEND = "python"


def rk4_flow(f, x0, h, u0, um, u1, w=None):
    """Integrate x' = f(x, u) + w over n steps of size h.

    Returns states at all n+1 nodes, states[0] == x0 exactly.
    """
    n = u0.shape[0]
    xs = np.empty((n + 1, x0.shape[0]))
    xs[0] = x0
    x = np.array(x0, dtype=float)
    for i in range(n):
        if w is None:
            k1 = f(x, u0[i])
            k2 = f(x + (0.5 * h) * k1, um[i])
            k3 = f(x + (0.5 * h) * k2, um[i])
            k4 = f(x + h * k3, u1[i])
        else:
            wi = w[i]
            k1 = f(x, u0[i]) + wi
            k2 = f(x + (0.5 * h) * k1, um[i]) + wi
            k3 = f(x + (0.5 * h) * k2, um[i]) + wi
            k4 = f(x + h * k3, u1[i]) + wi
        x = x + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
        xs[i + 1] = x
    return xs


def rk4_flow_stm(f, dfdx, x0, h, u0, um, u1):
    """Co-integrate the flow and its state-transition matrix.

    P' = dfdx(x, u) @ P with P(0) = I, on the same RK4 stages as the state.
    Returns (states, stms) with shapes (n+1, nx) and (n+1, nx, nx).
    """
    n = u0.shape[0]
    nx = x0.shape[0]
    xs = np.empty((n + 1, nx))
    ps = np.empty((n + 1, nx, nx))
    xs[0] = x0
    ps[0] = np.eye(nx)
    x = np.array(x0, dtype=float)
    p = np.eye(nx)
    for i in range(n):
        k1 = f(x, u0[i])
        q1 = dfdx(x, u0[i]) @ p
        x2 = x + (0.5 * h) * k1
        p2 = p + (0.5 * h) * q1
        k2 = f(x2, um[i])
        q2 = dfdx(x2, um[i]) @ p2
        x3 = x + (0.5 * h) * k2
        p3 = p + (0.5 * h) * q2
        k3 = f(x3, um[i])
        q3 = dfdx(x3, um[i]) @ p3
        x4 = x + h * k3
        p4 = p + h * q3
        k4 = f(x4, u1[i])
        q4 = dfdx(x4, u1[i]) @ p4
        x = x + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
        p = p + (h / 6.0) * (q1 + 2.0 * (q2 + q3) + q4)
        xs[i + 1] = x
        ps[i + 1] = p
    return xs, ps


def rk4_flow_sens(f, dfdx, x0, h, u0, um, u1, w, dw):
    """Co-integrate the noise-perturbed flow and one noise sensitivity.

    x' = f(x, u) + w,  z' = dfdx(x, u) @ z + dw,  z(0) = 0.
    Returns (states, zs).
    """
    n = u0.shape[0]
    nx = x0.shape[0]
    xs = np.empty((n + 1, nx))
    zs = np.zeros((n + 1, nx))
    xs[0] = x0
    x = np.array(x0, dtype=float)
    z = np.zeros(nx)
    for i in range(n):
        wi = w[i]
        di = dw[i]
        k1 = f(x, u0[i]) + wi
        m1 = dfdx(x, u0[i]) @ z + di
        x2 = x + (0.5 * h) * k1
        z2 = z + (0.5 * h) * m1
        k2 = f(x2, um[i]) + wi
        m2 = dfdx(x2, um[i]) @ z2 + di
        x3 = x + (0.5 * h) * k2
        z3 = z + (0.5 * h) * m2
        k3 = f(x3, um[i]) + wi
        m3 = dfdx(x3, um[i]) @ z3 + di
        x4 = x + h * k3
        z4 = z + h * m3
        k4 = f(x4, u1[i]) + wi
        m4 = dfdx(x4, u1[i]) @ z4 + di
        x = x + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
        z = z + (h / 6.0) * (m1 + 2.0 * (m2 + m3) + m4)
        xs[i + 1] = x
        zs[i + 1] = z
    return xs, zs
