"""Damped-least-squares (Levenberg-Marquardt style) numerical IK.

Only the ``active`` joints move; every other joint keeps its seed value.
Joint limits are enforced by clamping after each step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .chain import KinematicChain, pose_and_jacobian
from .transforms import Pose, rotation_log

SUCCESS = "success"
MAX_ITERS = "max_iters"
STALLED = "stalled"

DEFAULT_POSITION_TOL = 1e-4
DEFAULT_ORIENTATION_TOL = 1e-3
DEFAULT_MAX_ITERATIONS = 200
DEFAULT_DAMPING = 1e-3
LAMBDA_MIN = 1e-9
LAMBDA_MAX = 1e3
STEP_FLOOR = 1e-12


@dataclass(frozen=True)
class Tolerances:
    position: float = DEFAULT_POSITION_TOL
    orientation: float = DEFAULT_ORIENTATION_TOL

    def __post_init__(self):
        if not (self.position > 0 and self.orientation > 0):
            raise ValueError("tolerances must be positive")


@dataclass(frozen=True)
class Target:
    frame: str
    pose: Pose


@dataclass(frozen=True, eq=False)
class IKRequest:
    """One IK problem. ``targets`` holds one entry per hand to place."""

    chain: KinematicChain
    active: np.ndarray
    seed: np.ndarray
    targets: tuple[Target, ...]
    tolerances: Tolerances = Tolerances()
    max_iterations: int = DEFAULT_MAX_ITERATIONS
    damping: float = DEFAULT_DAMPING
    w: float = 1.0
    position_only: bool = False

    def __post_init__(self):
        object.__setattr__(self, "active", np.asarray(self.active, dtype=np.intp))
        object.__setattr__(self, "seed", self.chain.check_q(self.seed).copy())
        if isinstance(self.targets, Target):
            object.__setattr__(self, "targets", (self.targets,))
        else:
            object.__setattr__(self, "targets", tuple(self.targets))
        if not self.targets:
            raise ValueError("IK request needs at least one target")
        if self.active.size == 0:
            raise ValueError("IK request needs at least one active joint")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be non-negative")
        if not self.w > 0:
            raise ValueError("w must be positive")


@dataclass(frozen=True, eq=False)
class IKOutcome:
    status: str
    solution: np.ndarray
    position_residual: float
    orientation_residual: float
    iterations: int
    extra: dict = field(default_factory=dict)

    @property
    def success(self) -> bool:
        return self.status == SUCCESS

    def to_dict(self, chain: KinematicChain | None = None) -> dict:
        d = {
            "status": self.status,
            "iterations": self.iterations,
            "residual": {"position": self.position_residual, "orientation": self.orientation_residual},
            "solution": [float(v) for v in self.solution],
        }
        if chain is not None:
            d["joint_names"] = list(chain.joint_names)
        return d


def _errors(req: IKRequest, q):
    """Stacked weighted error, stacked weighted Jacobian and raw residuals."""
    rows = 3 if req.position_only else 6
    n_t = len(req.targets)
    e = np.zeros(rows * n_t)
    J = np.zeros((rows * n_t, req.active.size))
    pos_res = 0.0
    ori_res = 0.0
    for k, t in enumerate(req.targets):
        pose, Jt = pose_and_jacobian(req.chain, q, t.frame, req.active)
        dp = t.pose.translation - pose.translation
        pos_res = max(pos_res, float(np.linalg.norm(dp)))
        s = rows * k
        e[s : s + 3] = dp
        J[s : s + 3] = Jt[:3]
        if not req.position_only:
            dr = rotation_log(t.pose.rotation @ pose.rotation.T)
            ori_res = max(ori_res, float(np.linalg.norm(dr)))
            e[s + 3 : s + 6] = dr / req.w
            J[s + 3 : s + 6] = Jt[3:] / req.w
    return e, J, pos_res, ori_res


def _converged(req, pos_res, ori_res):
    tol = req.tolerances
    return pos_res <= tol.position and (req.position_only or ori_res <= tol.orientation)


def solve(req: IKRequest) -> IKOutcome:
    chain = req.chain
    lo = chain.lower[req.active]
    hi = chain.upper[req.active]
    q = req.seed.copy()
    q[req.active] = np.clip(q[req.active], lo, hi)
    e, J, pos_res, ori_res = _errors(req, q)
    cost = float(e @ e)
    lam = min(max(req.damping, LAMBDA_MIN), LAMBDA_MAX)
    eye = np.eye(e.size)
    for it in range(req.max_iterations + 1):
        if _converged(req, pos_res, ori_res):
            return IKOutcome(SUCCESS, q, pos_res, ori_res, it)
        if it == req.max_iterations:
            break
        dq = J.T @ np.linalg.solve(J @ J.T + lam * eye, e)
        q_new = q.copy()
        q_new[req.active] = np.clip(q[req.active] + dq, lo, hi)
        step = float(np.linalg.norm(q_new[req.active] - q[req.active]))
        if step < STEP_FLOOR:
            return IKOutcome(STALLED, q, pos_res, ori_res, it)
        e_new, J_new, p_new, o_new = _errors(req, q_new)
        cost_new = float(e_new @ e_new)
        if cost_new < cost:
            q, e, J, pos_res, ori_res, cost = q_new, e_new, J_new, p_new, o_new, cost_new
            lam = max(lam / 10.0, LAMBDA_MIN)
        else:
            lam = min(lam * 10.0, LAMBDA_MAX)
    return IKOutcome(MAX_ITERS, q, pos_res, ori_res, req.max_iterations)


def solve_trajectory(
    chain: KinematicChain,
    active,
    seeds: dict,
    targets,
    tolerances: Tolerances = Tolerances(),
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
    **options,
) -> list[IKOutcome]:
    """Solve a sequence of steps, each seeded by its own seed or the previous solution.

    ``targets[k]`` is a Target or a sequence of Targets for step k. Stops after
    the first failed step.
    """
    if 0 not in seeds:
        raise ValueError("trajectory needs a seed for step 0")
    outcomes: list[IKOutcome] = []
    prev = None
    for k, tk in enumerate(targets):
        seed = seeds[k] if k in seeds else prev
        req = IKRequest(
            chain=chain,
            active=active,
            seed=seed,
            targets=tk,
            tolerances=tolerances,
            max_iterations=max_iterations,
            **options,
        )
        out = solve(req)
        outcomes.append(out)
        if not out.success:
            break
        prev = out.solution
    return outcomes
