"""Independent reference computations used to check the controller.

Each function here takes a deliberately different route from the code it
checks: brute-force active-set enumeration instead of the active-set
iteration, the matrix exponential instead of the hand-derived transition
matrices, and step-by-step simulation instead of closed-form periodicity.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.linalg import expm


def enumerate_qp(H, f, A_eq=None, b_eq=None, A_in=None, b_in=None, tol=1e-9):
    """Solve a strictly convex QP by trying every subset of inequalities as active.

    Returns ``(x, objective)`` or ``None`` when no subset yields a KKT point.
    """
    H = np.asarray(H, float)
    f = np.asarray(f, float)
    n = len(f)
    A_eq = np.zeros((0, n)) if A_eq is None else np.atleast_2d(np.asarray(A_eq, float)).reshape(-1, n)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, float).ravel()
    A_in = np.zeros((0, n)) if A_in is None else np.atleast_2d(np.asarray(A_in, float)).reshape(-1, n)
    b_in = np.zeros(0) if b_in is None else np.asarray(b_in, float).ravel()
    p, q = len(b_eq), len(b_in)
    best = None
    for k in range(0, min(q, n - p) + 1):
        for subset in itertools.combinations(range(q), k):
            C = np.vstack([A_eq, A_in[list(subset)]])
            d = np.concatenate([b_eq, b_in[list(subset)]])
            m = C.shape[0]
            K = np.block([[H, C.T], [C, np.zeros((m, m))]])
            if np.linalg.matrix_rank(K) < n + m:
                continue
            sol = np.linalg.solve(K, np.concatenate([-f, d]))
            x, mult = sol[:n], sol[n:]
            if q and np.any(A_in @ x - b_in > tol * (1 + np.abs(b_in))):
                continue
            if np.any(mult[p:] < -tol):
                continue
            obj = 0.5 * x @ H @ x + f @ x
            if best is None or obj < best[1]:
                best = (x, obj)
    return best


def random_qp(rng: np.random.Generator, n: int, p: int, q: int):
    """Random strictly convex QP with a nonempty feasible set."""
    M = rng.standard_normal((n, n))
    H = M @ M.T + 0.1 * np.eye(n)
    f = rng.standard_normal(n) * 3
    x_feas = rng.standard_normal(n)
    A_eq = rng.standard_normal((p, n))
    b_eq = A_eq @ x_feas
    A_in = rng.standard_normal((q, n))
    b_in = A_in @ x_feas + rng.uniform(0.0, 1.0, q)
    return H, f, A_eq, b_eq, A_in, b_in


def exact_transition(dt: float):
    """Transition (A, B) of the chains xi'' = u1 and theta''' = u2 via the matrix exponential."""
    Ac = np.zeros((5, 5))
    Ac[0, 1] = 1.0
    Ac[2, 3] = 1.0
    Ac[3, 4] = 1.0
    Bc = np.zeros((5, 2))
    Bc[1, 0] = 1.0
    Bc[4, 1] = 1.0
    aug = np.zeros((7, 7))
    aug[:5, :5] = Ac
    aug[:5, 5:] = Bc
    E = expm(aug * dt)
    return E[:5, :5], E[:5, 5:]


def integrate_chains(xhat, u, t: float) -> np.ndarray:
    """Closed-form polynomial integration of the two integrator chains for time ``t``."""
    xi, xid, th, thd, thdd = xhat
    a, jerk = u
    return np.array(
        [
            xi + xid * t + a * t**2 / 2,
            xid + a * t,
            th + thd * t + thdd * t**2 / 2 + jerk * t**3 / 6,
            thd + thdd * t + jerk * t**2 / 2,
            thdd + jerk * t,
        ]
    )


def point_foot_step_offsets(omega0, xi0_rel, step_length, first_width, step_time, steps=20, substeps=65):
    """Step-end DCM offsets of a point-foot walker with fixed footstep increments.

    The walker starts on a stance point at the origin with DCM ``xi0_rel``
    relative to it, steps forward by ``step_length`` and sideways by
    ``first_width`` with the lateral sign alternating every step. The DCM is
    advanced with ``substeps`` exact exponential sub-steps about the stance
    point. Returns an array ``(steps, 2)`` of ``xi_end - next_foothold``.
    """
    u = np.zeros(2)
    xi = np.asarray(xi0_rel, float).copy()
    width = first_width
    growth = math.exp(omega0 * step_time / substeps)
    offsets = []
    for _ in range(steps):
        for _ in range(substeps):
            xi = u + (xi - u) * growth
        u = u + np.array([step_length, width])
        offsets.append(xi - u)
        width = -width
    return np.array(offsets)
