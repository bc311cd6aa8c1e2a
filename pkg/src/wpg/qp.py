"""Dense primal active-set solver for small strictly convex QPs.

Solves::

    min  1/2 x'Hx + f'x
    s.t. A_eq x  = b_eq
         A_in x <= b_in

Each working-set subproblem is solved in the range space of H: with the
Cholesky factor ``H = L L'`` and ``R = L^-1 C'`` for the working rows ``C``, the
multipliers follow from the Schur complement ``R'R``. ``QpFactor`` keeps L and
``L^-1 A'`` so repeated solves with the same matrices only pay for the
iterations. A feasible starting point comes from the warm-start working set,
the equality-only minimizer, or, failing both, a phase-1 LP; an infeasible
phase-1 LP is what produces ``QpStatus.INFEASIBLE``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.optimize import linprog

REGULARIZATION = 1e-9
FEAS_TOL = 1e-9
DUAL_TOL = 1e-10


class QpError(ValueError):
    """Malformed problem: dimension mismatch or non positive definite Hessian."""


class QpStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    ITERATION_LIMIT = "iteration_limit"


def _as_matrix(a, n: int, name: str) -> np.ndarray:
    if a is None:
        return np.zeros((0, n))
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.size == 0:
        return np.zeros((0, n))
    if a.ndim != 2 or a.shape[1] != n:
        raise QpError(f"{name} must have {n} columns, got shape {a.shape}")
    return a


def _as_vector(b, rows: int, name: str) -> np.ndarray:
    if b is None:
        b = np.zeros(0)
    b = np.atleast_1d(np.asarray(b, dtype=float)).ravel()
    if b.shape != (rows,):
        raise QpError(f"{name} must have length {rows}, got {b.shape}")
    return b


@dataclass(frozen=True)
class QpProblem:
    H: np.ndarray
    f: np.ndarray
    A_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None
    A_in: Optional[np.ndarray] = None
    b_in: Optional[np.ndarray] = None

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        if H.ndim != 2 or H.shape[0] != H.shape[1]:
            raise QpError(f"H must be square, got shape {H.shape}")
        n = H.shape[0]
        f = _as_vector(self.f, n, "f")
        A_eq = _as_matrix(self.A_eq, n, "A_eq")
        b_eq = _as_vector(self.b_eq, A_eq.shape[0], "b_eq")
        A_in = _as_matrix(self.A_in, n, "A_in")
        b_in = _as_vector(self.b_in, A_in.shape[0], "b_in")
        if A_eq.shape[0] > n:
            raise QpError("more equality constraints than variables")
        if np.any(np.isnan(b_in)) or not np.all(np.isfinite(b_eq)):
            raise QpError("constraint right-hand sides must not be NaN")
        object.__setattr__(self, "H", 0.5 * (H + H.T))
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "A_eq", A_eq)
        object.__setattr__(self, "b_eq", b_eq)
        object.__setattr__(self, "A_in", A_in)
        object.__setattr__(self, "b_in", b_in)

    @property
    def n(self) -> int:
        return self.H.shape[0]

    @property
    def p(self) -> int:
        return self.A_eq.shape[0]

    @property
    def q(self) -> int:
        return self.A_in.shape[0]

    def objective(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ self.H @ x + self.f @ x)


@dataclass
class QpSolution:
    x_star: np.ndarray
    status: QpStatus
    active_set: tuple
    objective: float
    eq_multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))
    in_multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))
    iterations: int = 0

    @property
    def ok(self) -> bool:
        return self.status is QpStatus.OPTIMAL

    @property
    def multipliers(self):
        return self.eq_multipliers, self.in_multipliers


class QpFactor:
    """Factorization of H and constraint images reusable across right-hand sides."""

    def __init__(self, H: np.ndarray, A_eq: np.ndarray, A_in: np.ndarray):
        H = 0.5 * (H + H.T)
        self.regularized = False
        try:
            L = np.linalg.cholesky(H)
        except np.linalg.LinAlgError:
            try:
                L = np.linalg.cholesky(H + REGULARIZATION * np.eye(H.shape[0]))
                self.regularized = True
            except np.linalg.LinAlgError:
                raise QpError("H is not positive definite after regularization") from None
        self.L = L
        self.R_eq = solve_triangular(L, A_eq.T, lower=True) if A_eq.size else np.zeros((H.shape[0], 0))
        self.R_in = solve_triangular(L, A_in.T, lower=True) if A_in.size else np.zeros((H.shape[0], 0))
        self.shape = (H.shape[0], A_eq.shape[0], A_in.shape[0])

    @classmethod
    def from_problem(cls, problem: QpProblem) -> "QpFactor":
        return cls(problem.H, problem.A_eq, problem.A_in)


def kkt_residual(problem: QpProblem, candidate, multipliers=None) -> float:
    """Infinity norm of the stacked KKT conditions at ``candidate``.

    ``multipliers`` is ``(eq_multipliers, in_multipliers)``; omitted parts are
    taken as zero. Inequality multipliers belong to ``A_in x <= b_in``.
    """
    x = np.asarray(candidate, dtype=float)
    if x.shape != (problem.n,):
        raise QpError(f"candidate must have length {problem.n}")
    lam, mu = (None, None) if multipliers is None else multipliers
    lam = np.zeros(problem.p) if lam is None else np.asarray(lam, float)
    mu = np.zeros(problem.q) if mu is None else np.asarray(mu, float)
    if lam.shape != (problem.p,) or mu.shape != (problem.q,):
        raise QpError("multiplier dimensions do not match the problem")
    grad = problem.H @ x + problem.f + problem.A_eq.T @ lam + problem.A_in.T @ mu
    parts = [np.abs(grad)]
    if problem.p:
        parts.append(np.abs(problem.A_eq @ x - problem.b_eq))
    if problem.q:
        finite = np.isfinite(problem.b_in)
        viol = problem.A_in[finite] @ x - problem.b_in[finite]
        parts.append(np.maximum(viol, 0.0))
        parts.append(np.maximum(-mu, 0.0))
        parts.append(np.abs(mu[finite] * viol))
        parts.append(np.abs(mu[~finite]))
    return float(max((p.max() for p in parts if p.size), default=0.0))


class _Workspace:
    """Per-solve state: the factor restricted to rows with finite bounds."""

    def __init__(self, problem: QpProblem, factor: QpFactor):
        self.problem = problem
        self.rows = np.flatnonzero(np.isfinite(problem.b_in))
        self.A = problem.A_in[self.rows]
        self.b = problem.b_in[self.rows]
        self.R = factor.R_in[:, self.rows]
        self.R_eq = factor.R_eq
        self.L = factor.L
        self.y = solve_triangular(factor.L, problem.f, lower=True, check_finite=False)
        self.row_norms = np.linalg.norm(self.A, axis=1)
        self.p = problem.p

    def eqp(self, working: Sequence[int]):
        """Minimizer and multipliers with the equalities and ``working`` rows tight.

        Returns ``None`` when the working rows are linearly dependent.
        """
        R = np.hstack([self.R_eq, self.R[:, working]]) if len(working) else self.R_eq
        d = np.concatenate([self.problem.b_eq, self.b[working]])
        if R.shape[1] == 0:
            lam = np.zeros(0)
            v = self.y
        else:
            # unit-diagonal scaling: pivots then measure how far each row is
            # from the span of the others, whatever the row norms
            s = np.sqrt(np.einsum("ij,ij->j", R, R))
            if np.min(s) == 0.0:
                return None
            Rs = R / s
            try:
                cf = cho_factor(Rs.T @ Rs, lower=True, check_finite=False)
            except np.linalg.LinAlgError:
                return None
            if np.min(np.diag(cf[0])) ** 2 <= 1e-12:
                return None
            lam = cho_solve(cf, (-(R.T @ self.y) - d) / s, check_finite=False) / s
            v = self.y + R @ lam
        x = -solve_triangular(self.L, v, lower=True, trans="T", check_finite=False)
        if R.shape[1]:
            # the normal equations square the conditioning; refine on the
            # residual of the tight rows
            A_w = np.vstack([self.problem.A_eq, self.A[working]])
            for _ in range(2):
                r = A_w @ x - d
                if np.max(np.abs(r)) <= 1e-15 * (1.0 + np.max(np.abs(d))):
                    break
                dl = cho_solve(cf, r / s, check_finite=False) / s
                lam = lam + dl
                v = v + R @ dl
                x = -solve_triangular(self.L, v, lower=True, trans="T", check_finite=False)
        return x, lam

    def feasible(self, x) -> bool:
        if not self.rows.size:
            return True
        return bool(np.all(self.A @ x - self.b <= FEAS_TOL * (1.0 + np.abs(self.b))))


def _phase_one(problem: QpProblem, ws: _Workspace, target: np.ndarray):
    """Feasible point nearest ``target`` in the 1-norm, or ``None`` if there is none.

    Landing near the subproblem minimizer rather than on an arbitrary vertex
    saves most of the active-set iterations that would follow.
    """
    n = problem.n
    # variables (x, e) with |x - target| <= e componentwise
    eye = np.eye(n)
    rows = [np.hstack([eye, -eye]), np.hstack([-eye, -eye])]
    rhs = [target, -target]
    if ws.rows.size:
        rows.append(np.hstack([ws.A, np.zeros((len(ws.rows), n))]))
        rhs.append(ws.b)
    res = linprog(
        np.concatenate([np.zeros(n), np.ones(n)]),
        A_ub=np.vstack(rows),
        b_ub=np.concatenate(rhs),
        A_eq=np.hstack([problem.A_eq, np.zeros((problem.p, n))]) if problem.p else None,
        b_eq=problem.b_eq if problem.p else None,
        bounds=[(None, None)] * (2 * n),
        method="highs",
        options={"primal_feasibility_tolerance": 1e-10},
    )
    if res.status == 2:
        return None
    if res.status != 0:
        raise RuntimeError(f"phase-1 LP failed: {res.message}")
    return np.asarray(res.x[:n], dtype=float)


def _repair(ws: _Workspace, working: list, x, budget: int = 12):
    """Grow ``working`` by the most violated rows until its minimizer is feasible.

    Returns the feasible ``(x, working)`` or ``None`` when the budget runs out
    or a violated row depends on the working ones.
    """
    for _ in range(budget):
        viol = (ws.A @ x - ws.b) / (1.0 + np.abs(ws.b))
        viol[working] = -np.inf
        i = int(np.argmax(viol))
        if viol[i] <= FEAS_TOL:
            return x, working
        working = working + [i]
        sol = ws.eqp(working)
        if sol is None:
            return None
        x = sol[0]
    return (x, working) if ws.feasible(x) else None


def _start(ws: _Workspace, warm: Optional[Iterable[int]]):
    """Feasible initial point and working set, or ``None`` if the problem is infeasible.

    Tries the warm working set, then the equality-only minimizer, each grown
    by violated rows if needed, before paying for a phase-1 LP.
    """
    candidates = []
    if warm:
        pos = {int(r): i for i, r in enumerate(ws.rows)}
        working = sorted({pos[w] for w in warm if int(w) in pos})
        if working:
            candidates.append(working)
    candidates.append([])
    target = None
    for working in candidates:
        sol = ws.eqp(working)
        if sol is None:
            continue
        if target is None:
            target = sol[0]
        if ws.feasible(sol[0]):
            return sol[0], working
        repaired = _repair(ws, working, sol[0]) if ws.rows.size else None
        if repaired is not None:
            return repaired
    if target is None:
        target = np.zeros(ws.problem.n)
    x0 = _phase_one(ws.problem, ws, target)
    if x0 is None:
        return None
    return x0, _tight_rows(ws, x0)


def _tight_rows(ws: _Workspace, x) -> list:
    """Linearly independent rows binding at ``x``, most binding first."""
    if not ws.rows.size:
        return []
    slack = (ws.b - ws.A @ x) / (1.0 + np.abs(ws.b))
    working: list = []
    for i in np.argsort(slack):
        if slack[i] > FEAS_TOL or len(working) + ws.p >= ws.problem.n:
            break
        if ws.eqp(working + [int(i)]) is not None:
            working.append(int(i))
    return working


def solve(
    problem: QpProblem,
    warm_start: Optional[Iterable[int]] = None,
    *,
    factor: Optional[QpFactor] = None,
    max_iter: Optional[int] = None,
) -> QpSolution:
    """Solve ``problem``; ``warm_start`` is a guess of the active inequality indices."""
    if factor is None:
        factor = QpFactor.from_problem(problem)
    elif factor.shape != (problem.n, problem.p, problem.q):
        raise QpError("factor does not match the problem dimensions")
    n, p = problem.n, problem.p
    ws = _Workspace(problem, factor)
    if max_iter is None:
        max_iter = 100 * (n + problem.q)

    start = _start(ws, warm_start)
    if start is None:
        return QpSolution(
            x_star=np.full(n, np.nan),
            status=QpStatus.INFEASIBLE,
            active_set=(),
            objective=float("nan"),
            eq_multipliers=np.zeros(p),
            in_multipliers=np.zeros(problem.q),
        )
    x, working = start
    lam = np.zeros(p + len(working))
    status = QpStatus.ITERATION_LIMIT
    it = 0
    while it < max_iter:
        it += 1
        sol = ws.eqp(working)
        if sol is None:
            # dependent rows can only enter via the warm start; restart cold
            working = []
            continue
        xhat, lam = sol
        step = xhat - x
        alpha, blocking = 1.0, -1
        # a round-off step off a vertex would let a dependent row into the working set
        step_norm = np.sqrt(step @ step)
        moving = step_norm > 1e-12 * (1.0 + np.sqrt(x @ x))
        if ws.rows.size and moving:
            Ap = ws.A @ step
            free = np.ones(len(ws.rows), dtype=bool)
            free[working] = False
            scale = ws.row_norms * step_norm
            cand = np.flatnonzero(free & (Ap > 1e-13 * scale))
            if cand.size:
                slack = np.maximum(ws.b[cand] - ws.A[cand] @ x, 0.0)
                ratios = slack / Ap[cand]
                k = int(np.argmin(ratios))
                if ratios[k] < 1.0:
                    alpha, blocking = float(ratios[k]), int(cand[k])
        if blocking >= 0:
            x = x + alpha * step
            working = working + [blocking]
            continue
        x = xhat
        mu_w = lam[p:]
        if mu_w.size == 0 or mu_w.min() >= -DUAL_TOL * (1.0 + np.abs(mu_w).max()):
            status = QpStatus.OPTIMAL
            break
        drop = int(np.argmin(mu_w))
        working = working[:drop] + working[drop + 1 :]

    mu = np.zeros(problem.q)
    if status is QpStatus.OPTIMAL and working:
        mu[ws.rows[working]] = np.maximum(lam[p:], 0.0)
    return QpSolution(
        x_star=x,
        status=status,
        active_set=tuple(sorted(int(r) for r in ws.rows[working])),
        objective=problem.objective(x),
        eq_multipliers=np.asarray(lam[:p]),
        in_multipliers=mu,
        iterations=it,
    )
