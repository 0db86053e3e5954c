"""Small dense convex QP solver (primal active-set) with a grid-search oracle.

Solves   minimize   0.5 * u'Pu + q'u
         subject to lower <= u <= upper          (box, +-inf allowed)
                    A u >= c                     (general inequality rows)

P must be symmetric positive semidefinite. Problems here are tiny (a platoon
has at most a few dozen followers), so everything is dense numpy and the
working-set linear systems are solved directly. `brute_force_qp` is a
deliberately dumb exhaustive grid evaluator used as an independent oracle for
problems of dimension <= 3.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

STATUS_OPTIMAL = "optimal"
STATUS_INFEASIBLE = "infeasible"
STATUS_SOFTENED = "softened"
STATUS_DEGENERATE = "degenerate"

_FEAS_TOL = 1e-7  # constraint violation above this after phase 1 => infeasible


class QpConvergenceError(RuntimeError):
    """Active-set iteration cap exceeded (should not happen on valid input)."""


@dataclass
class QpProblem:
    """Convex QP data. `A` / `c` may be empty (box-only problem)."""

    P: np.ndarray
    q: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    A: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    c: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.P = np.atleast_2d(np.asarray(self.P, dtype=float))
        self.q = np.asarray(self.q, dtype=float).ravel()
        self.lower = np.asarray(self.lower, dtype=float).ravel()
        self.upper = np.asarray(self.upper, dtype=float).ravel()
        n = self.q.size
        if self.P.shape != (n, n):
            raise ValueError(f"P must be {n}x{n}, got {self.P.shape}")
        if self.lower.size != n or self.upper.size != n:
            raise ValueError("box bounds must match the variable count")
        if np.any(self.lower > self.upper):
            raise ValueError("box lower bound exceeds upper bound")
        if not np.allclose(self.P, self.P.T, atol=1e-10):
            raise ValueError("P must be symmetric")
        if n and np.min(np.linalg.eigvalsh(0.5 * (self.P + self.P.T))) < -1e-8:
            raise ValueError("P must be positive semidefinite")
        self.A = np.asarray(self.A, dtype=float).reshape(-1, n) if np.size(self.A) else np.zeros((0, n))
        self.c = np.asarray(self.c, dtype=float).ravel()
        if self.c.size != self.A.shape[0]:
            raise ValueError("A and c row counts differ")

    @property
    def n(self) -> int:
        return self.q.size

    def objective(self, u: np.ndarray) -> float:
        u = np.asarray(u, dtype=float)
        return float(0.5 * u @ self.P @ u + self.q @ u)


@dataclass
class QpSolution:
    u: np.ndarray
    objective: float
    status: str
    iterations: int = 0
    kkt_residual: float = float("nan")
    # Lagrange multipliers for the stationarity check, aligned with the
    # stacked constraint rows used internally (general rows, then box rows).
    multipliers: np.ndarray | None = None


def _stack_constraints(p: QpProblem):
    """All constraints as rows of `a u >= b`: general rows then finite box rows."""
    rows = []
    rhs = []
    for i in range(p.A.shape[0]):
        rows.append(p.A[i])
        rhs.append(p.c[i])
    eye = np.eye(p.n)
    for i in range(p.n):
        if np.isfinite(p.lower[i]):
            rows.append(eye[i])
            rhs.append(p.lower[i])
    for i in range(p.n):
        if np.isfinite(p.upper[i]):
            rows.append(-eye[i])
            rhs.append(-p.upper[i])
    if rows:
        return np.vstack(rows), np.asarray(rhs, dtype=float)
    return np.zeros((0, p.n)), np.zeros(0)


def _pd_min_norm_solve(M, b):
    """Min-norm solution of `M y = b` for symmetric PSD M.

    `np.linalg.solve` is unusable here: on a singular M its LU factors can
    carry machine-epsilon pivots instead of raising, turning rounding noise
    in `b` into O(1) garbage along the null directions. Factor with eigh and
    drop modes below a relative cutoff; components of `b` in those modes are
    noise by construction (the quadratics here are bounded below).
    """
    w, V = np.linalg.eigh(M)
    cutoff = np.max(np.abs(w), initial=0.0) * M.shape[0] * np.finfo(float).eps
    keep = w > cutoff
    if not np.any(keep):
        return np.zeros(M.shape[0])
    Vk = V[:, keep]
    return Vk @ ((Vk.T @ b) / w[keep])


def _kkt_step(P, gradient, act_rows):
    """Solve the equality-constrained step: min 0.5 p'Pp + g'p s.t. act_rows @ p = 0.

    Nullspace method: an SVD of the active rows yields an orthonormal basis Z
    of their common nullspace, so act_rows @ p = 0 holds to machine precision
    even when the working set is redundant or rank deficient. Returns
    (p, lam) with lam in the >=-constraint stationarity convention
    grad f(x + p) = act_rows' lam, so lam >= 0 means optimal.
    """
    n = P.shape[1]
    k = act_rows.shape[0]
    if k == 0:
        return _pd_min_norm_solve(P, -gradient), np.zeros(0)
    _, sing, vt = np.linalg.svd(act_rows)
    cutoff = max(act_rows.shape) * np.finfo(float).eps * (sing[0] if sing.size else 0.0)
    rank = int(np.sum(sing > cutoff))
    Z = vt[rank:].T
    if Z.shape[1] == 0:
        p = np.zeros(n)
    else:
        p = Z @ _pd_min_norm_solve(Z.T @ P @ Z, -(Z.T @ gradient))
    lam = np.linalg.lstsq(act_rows.T, gradient + P @ p, rcond=None)[0]
    return p, lam


def _active_set_minimize(P, q, rows, rhs, x0, itmax, tol):
    """Primal active-set loop from a feasible x0. Returns (x, multipliers, iters).

    `multipliers` is aligned with `rows` (zero for inactive constraints) and
    satisfies stationarity P x + q = rows' * mult at the reported optimum.
    """
    x = np.asarray(x0, dtype=float).copy()
    m = rows.shape[0]
    act_tol = max(tol, 1e-10)
    working = [i for i in range(m) if rows[i] @ x - rhs[i] <= act_tol]
    best_f = float("inf")
    stalled = 0
    for it in range(1, itmax + 1):
        g = P @ x + q
        act = rows[working] if working else np.zeros((0, x.size))
        step, lam = _kkt_step(P, g, act)
        # zero-step threshold must scale with the iterate: the KKT solve's
        # noise floor grows with conditioning and |x|
        zero_step = np.max(np.abs(step), initial=0.0) <= 1e-9 * (
            1.0 + np.max(np.abs(x), initial=0.0)
        )
        f = 0.5 * x @ P @ x + q @ x
        if f < best_f - 1e-12 * (1.0 + abs(best_f)):
            best_f = f
            stalled = 0
        else:
            stalled += 1
            if stalled > 30:
                # many consecutive moves without objective progress: the
                # "steps" are KKT-solve noise, so decide on the multipliers
                zero_step = True
        if not zero_step:
            # ratio test against constraints not in the working set
            alpha = 1.0
            blocker = -1
            for i in range(m):
                if i in working:
                    continue
                proj = rows[i] @ step
                if proj < -1e-12:
                    gap = rows[i] @ x - rhs[i]
                    ratio = max(0.0, -gap / proj) if gap < 0 else gap / (-proj)
                    if ratio < alpha - 1e-14:
                        alpha = ratio
                        blocker = i
            x_next = x + alpha * step
            if blocker < 0 and np.array_equal(x_next, x):
                zero_step = True  # numerically stagnant: decide on multipliers
            else:
                x = x_next
                if blocker >= 0:
                    working.append(blocker)
                continue
        if not working:
            return x, np.zeros(m), it
        lam = np.asarray(lam)
        negative = [j for j in range(len(working)) if lam[j] < -tol]
        if not negative:
            mult = np.zeros(m)
            for j, idx in enumerate(working):
                mult[idx] += lam[j]
            return x, mult, it
        # Bland-style anti-cycling: drop the lowest-index offending row
        working.pop(min(negative, key=lambda j: working[j]))
    raise QpConvergenceError(
        f"active-set did not converge in {itmax} iterations (n={P.shape[0]}, m={m})"
    )


def _phase_one(p: QpProblem, rows, rhs, itmax, tol):
    """Find a feasible point, or report infeasibility.

    Minimizes ||s||^2 over (u, s) with A u + s >= c, s >= 0 and the original
    box on u; the box midpoint with s = max(0, violation) is always feasible
    for this relaxed problem. The Hessian is singular on the u block, which
    the nullspace step handles (pure-u directions carry no gradient).
    """
    n, m = p.n, p.A.shape[0]
    lo = np.where(np.isfinite(p.lower), p.lower, -1e9)
    hi = np.where(np.isfinite(p.upper), p.upper, 1e9)
    u0 = 0.5 * (lo + hi)
    s0 = np.maximum(0.0, p.c - p.A @ u0) + 1e-3
    P1 = np.zeros((n + m, n + m))
    P1[n:, n:] = np.eye(m)
    q1 = np.zeros(n + m)
    rows1 = []
    rhs1 = []
    for i in range(m):
        row = np.zeros(n + m)
        row[:n] = p.A[i]
        row[n + i] = 1.0
        rows1.append(row)
        rhs1.append(p.c[i])
    eye = np.eye(n + m)
    for i in range(n):
        if np.isfinite(p.lower[i]):
            rows1.append(eye[i])
            rhs1.append(p.lower[i])
        if np.isfinite(p.upper[i]):
            rows1.append(-eye[i])
            rhs1.append(-p.upper[i])
    for i in range(m):
        rows1.append(eye[n + i])
        rhs1.append(0.0)
    rows1 = np.vstack(rows1)
    rhs1 = np.asarray(rhs1)
    x0 = np.concatenate([u0, s0])
    x, _, _ = _active_set_minimize(P1, q1, rows1, rhs1, x0, itmax, tol)
    u = np.clip(x[:n], p.lower, p.upper)
    violation = float(np.max(p.c - p.A @ u, initial=0.0))
    return u, violation


def solve_qp(problem: QpProblem, tol: float = 1e-8, x0: np.ndarray | None = None) -> QpSolution:
    """Solve a convex QP; deterministic for identical inputs.

    Returns status "optimal" with a KKT stationarity residual, or
    "infeasible" when no point satisfies the constraints. A feasible `x0`
    skips the feasibility phase; an infeasible one is ignored.
    """
    p = problem
    if p.n == 0:
        return QpSolution(np.zeros(0), 0.0, STATUS_OPTIMAL, 0, 0.0, np.zeros(0))
    rows, rhs = _stack_constraints(p)
    itmax = 10 * (p.n + rows.shape[0]) + 10
    if x0 is not None:
        x0 = np.asarray(x0, dtype=float).copy()
        if rows.size and np.min(rows @ x0 - rhs) < -_FEAS_TOL:
            x0 = None  # not actually feasible; fall through to the usual start
    if x0 is None:
        x0 = np.clip(np.zeros(p.n), p.lower, p.upper)
        if rows.size and np.min(rows @ x0 - rhs) < -_FEAS_TOL:
            if p.A.shape[0] == 0:
                # box-only problems are feasible whenever lower <= upper
                x0 = np.clip(x0, p.lower, p.upper)
            else:
                x0, violation = _phase_one(p, rows, rhs, 20 * itmax, tol)
                if violation > _FEAS_TOL:
                    return QpSolution(x0, float("nan"), STATUS_INFEASIBLE, 0, float("nan"))
    x, mult, iters = _active_set_minimize(p.P, p.q, rows, rhs, x0, itmax, tol)
    residual = float(np.max(np.abs(p.P @ x + p.q - rows.T @ mult), initial=0.0)) if rows.size else float(
        np.max(np.abs(p.P @ x + p.q), initial=0.0)
    )
    return QpSolution(x, p.objective(x), STATUS_OPTIMAL, iters, residual, mult)


def brute_force_qp(problem: QpProblem, resolution: float = 0.001) -> QpSolution:
    """Exhaustive grid oracle for dimension <= 3.

    Evaluates the objective at every box grid point (spacing ~`resolution`,
    endpoints included), discards points violating A u >= c, and returns the
    grid argmin. Intentionally brute force; used to cross-check `solve_qp`.
    """
    p = problem
    if p.n > 3:
        raise ValueError("brute force oracle only supports dimension <= 3")
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    if not (np.all(np.isfinite(p.lower)) and np.all(np.isfinite(p.upper))):
        raise ValueError("brute force oracle needs finite box bounds")
    axes = []
    for lo, hi in zip(p.lower, p.upper):
        count = int(round((hi - lo) / resolution)) + 1 if hi > lo else 1
        axes.append(np.linspace(lo, hi, max(count, 1)))
    sizes = [a.size for a in axes]
    total = int(np.prod(sizes)) if sizes else 1
    best_obj = np.inf
    best_u = None
    chunk = 1_000_000
    for start in range(0, total, chunk):
        flat = np.arange(start, min(start + chunk, total))
        if axes:
            coords = np.unravel_index(flat, sizes)
            block = np.stack([axes[d][coords[d]] for d in range(p.n)], axis=1)
        else:
            block = np.zeros((1, 0))
        if p.A.shape[0]:
            ok = np.all(block @ p.A.T >= p.c - 1e-12, axis=1)
            block = block[ok]
            if block.size == 0:
                continue
        vals = 0.5 * np.einsum("ij,jk,ik->i", block, p.P, block) + block @ p.q
        k = int(np.argmin(vals))
        if vals[k] < best_obj:
            best_obj = float(vals[k])
            best_u = block[k].copy()
    if best_u is None:
        return QpSolution(np.zeros(p.n), float("nan"), STATUS_INFEASIBLE)
    return QpSolution(best_u, best_obj, STATUS_OPTIMAL)
