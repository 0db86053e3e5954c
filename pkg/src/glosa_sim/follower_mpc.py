"""Gap-regulating advisories for platoon followers via a one-step convex QP.

Each follower's control is the average speed it would hold over the next
step, u = (current + advised)/2. With the leader's control fixed by its own
advisory, gaps propagate linearly: a follower's gap grows by (u_ahead - u)*dt.
The QP drives next-step gaps toward constant-time-gap targets, subject to a
box on each control (acceleration envelope intersected with the physical
[current/2, (current+limit)/2] range of a one-step average) and a hard floor
keeping every next-step gap at or above its target. If that floor is
infeasible from the current state, it is softened with a heavily penalized
slack and the result is flagged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .leader import ROLE_FOLLOWER, SpeedAdvisory
from .platooning import Platoon
from .qp import (
    STATUS_DEGENERATE,
    STATUS_OPTIMAL,
    STATUS_SOFTENED,
    QpProblem,
    solve_qp,
)
from .traffic import VehicleCapabilities

DEFAULT_TIME_GAP = 2.0  # s, constant-time-gap headway
DEFAULT_STANDSTILL_GAP = 2.0  # m, gap held at zero speed
SAFETY_SLACK_WEIGHT = 1e6  # penalty on violating the gap floor when softened


def target_gaps(speeds, time_gap: float = DEFAULT_TIME_GAP, standstill_gap: float = DEFAULT_STANDSTILL_GAP):
    """Constant-time-gap targets: speed * time_gap + standstill_gap, per CV."""
    if time_gap < 0 or standstill_gap < 0:
        raise ValueError("time_gap and standstill_gap must be non-negative")
    speeds = np.asarray(speeds, dtype=float)
    if np.any(speeds < 0):
        raise ValueError("speeds must be non-negative")
    return speeds * time_gap + standstill_gap


@dataclass
class GapSystem:
    """One-step gap dynamics for a platoon, ready to optimize.

    gaps/targets cover every member, leader first; the leader's gap entry is
    carried along but never constrained (its value is arbitrary). u_low and
    u_high bound the follower controls only; the leader control is fixed.
    coupling is the (n x n) matrix B with next_gaps = gaps + B @ controls,
    controls ordered leader-first (leader row all zero).
    """

    gaps: np.ndarray
    targets: np.ndarray
    u_low: np.ndarray
    u_high: np.ndarray
    leader_control: float
    dt: float
    coupling: np.ndarray
    member_ids: list[int]
    member_speeds: np.ndarray
    speed_limit: float
    signal_id: int = 0
    generated_at: float = 0.0

    @property
    def follower_count(self) -> int:
        return len(self.member_ids) - 1


@dataclass
class FollowerSolution:
    controls: np.ndarray  # follower controls, nearest-first
    status: str
    objective: float  # || next_gaps - targets ||^2 over followers
    predicted_gaps: np.ndarray  # follower next-step gaps
    slack: np.ndarray | None = None
    kkt_residual: float = float("nan")


def _control_bounds(speeds: np.ndarray, caps: VehicleCapabilities, speed_limit: float, dt: float):
    """Box on one-step average controls u = (current + next)/2.

    next lies in [current + brake*dt, current + accel*dt] intersected with
    [0, speed_limit]; averaging with the current speed halves the excursion.
    The braking side never drops below current/2 (next speed floor of zero).
    """
    lo = np.maximum(0.5 * speeds, speeds + 0.5 * caps.brake * dt)
    hi = np.minimum(0.5 * (speeds + speed_limit), speeds + 0.5 * caps.accel * dt)
    return lo, hi


def build_qp(
    platoon: Platoon,
    leader_advisory: SpeedAdvisory,
    dt: float,
    caps: VehicleCapabilities,
    speed_limit: float,
    time_gap: float = DEFAULT_TIME_GAP,
    standstill_gap: float = DEFAULT_STANDSTILL_GAP,
) -> GapSystem:
    """Assemble the follower gap QP for one platoon.

    The leader control is pinned to the average of its current and advised
    speed. Follower gaps come from their safety messages; gap targets use
    each follower's own current speed.
    """
    if not platoon.followers:
        raise ValueError("platoon has no followers to optimize")
    n = len(platoon.members)
    speeds = np.array([m.speed for m in platoon.members], dtype=float)
    gaps = np.empty(n, dtype=float)
    gaps[0] = 0.0  # leader gap is not part of the system; arbitrary
    for i, m in enumerate(platoon.members[1:], start=1):
        if not np.isfinite(m.gap):
            raise ValueError(f"follower {m.cv_id} has no measured gap")
        gaps[i] = m.gap
    targets = target_gaps(speeds, time_gap, standstill_gap)
    lo, hi = _control_bounds(speeds[1:], caps, speed_limit, dt)
    coupling = np.zeros((n, n))
    for i in range(1, n):
        coupling[i, i - 1] = dt  # the CV ahead opens my gap
        coupling[i, i] = -dt  # my own motion closes it
    leader_control = 0.5 * (platoon.leader.speed + leader_advisory.advised_speed)
    return GapSystem(
        gaps=gaps,
        targets=targets,
        u_low=lo,
        u_high=hi,
        leader_control=leader_control,
        dt=dt,
        coupling=coupling,
        member_ids=[m.cv_id for m in platoon.members],
        member_speeds=speeds,
        speed_limit=speed_limit,
        signal_id=platoon.signal_id,
        generated_at=leader_advisory.generated_at,
    )


def _follower_dynamics(system: GapSystem):
    """Affine map next_gaps = E @ u + offset over follower controls u."""
    n = system.follower_count
    E = system.coupling[1:, 1:]
    offset = system.gaps[1:].copy()
    offset[0] += system.coupling[1, 0] * system.leader_control
    return E, offset


def solve_gap_system(system: GapSystem, tol: float = 1e-8) -> FollowerSolution:
    """Minimize the squared distance of next-step gaps from their targets.

    Hard constraint: every follower's next gap stays at or above target. When
    the current state makes that impossible inside the control box, the
    constraint is re-solved with a nonnegative slack penalized by
    SAFETY_SLACK_WEIGHT and the solution is flagged "softened".
    """
    n = system.follower_count
    if n < 1:
        raise ValueError("gap system has no followers")
    E, offset = _follower_dynamics(system)
    goals = system.targets[1:]
    resid0 = offset - goals
    P = 2.0 * (E.T @ E)
    q = 2.0 * (E.T @ resid0)
    if np.allclose(system.u_low, system.u_high, atol=1e-12):
        u = system.u_low.copy()
        predicted = E @ u + offset
        return FollowerSolution(
            u, STATUS_DEGENERATE, float(np.sum((predicted - goals) ** 2)), predicted
        )
    problem = QpProblem(P, q, system.u_low, system.u_high, A=E, c=goals - offset)
    sol = solve_qp(problem, tol)
    if sol.status == STATUS_OPTIMAL:
        u = sol.u
        predicted = E @ u + offset
        return FollowerSolution(
            u,
            STATUS_OPTIMAL,
            float(np.sum((predicted - goals) ** 2)),
            predicted,
            kkt_residual=sol.kkt_residual,
        )
    # soften the gap floor with penalized nonnegative slack
    P2 = np.zeros((2 * n, 2 * n))
    P2[:n, :n] = P
    P2[n:, n:] = 2.0 * SAFETY_SLACK_WEIGHT * np.eye(n)
    q2 = np.concatenate([q, np.zeros(n)])
    lower = np.concatenate([system.u_low, np.zeros(n)])
    upper = np.concatenate([system.u_high, np.full(n, np.inf)])
    A2 = np.hstack([E, np.eye(n)])
    rhs2 = goals - offset
    u_start = np.clip(np.zeros(n), system.u_low, system.u_high)
    start = np.concatenate([u_start, np.maximum(0.0, rhs2 - E @ u_start)])
    soft = solve_qp(QpProblem(P2, q2, lower, upper, A=A2, c=rhs2), tol, x0=start)
    if soft.status != STATUS_OPTIMAL:
        raise RuntimeError("softened gap QP unexpectedly infeasible")
    u = soft.u[:n]
    predicted = E @ u + offset
    return FollowerSolution(
        u,
        STATUS_SOFTENED,
        float(np.sum((predicted - goals) ** 2)),
        predicted,
        slack=soft.u[n:],
        kkt_residual=soft.kkt_residual,
    )


def optimize_followers(system: GapSystem, tol: float = 1e-8) -> list[SpeedAdvisory]:
    """Solve the gap QP and convert controls back to advised speeds.

    advised = 2u - current, which the control box already confines to
    [0, speed_limit]; the clip is a numerical backstop.
    """
    sol = solve_gap_system(system, tol)
    advisories = []
    for i in range(system.follower_count):
        current = system.member_speeds[i + 1]
        advised = float(np.clip(2.0 * sol.controls[i] - current, 0.0, system.speed_limit))
        advisories.append(
            SpeedAdvisory(
                cv_id=system.member_ids[i + 1],
                advised_speed=advised,
                generated_at=system.generated_at,
                signal_id=system.signal_id,
                role=ROLE_FOLLOWER,
                speed_at_generation=float(current),
                mpc_status=sol.status,
            )
        )
    return advisories
