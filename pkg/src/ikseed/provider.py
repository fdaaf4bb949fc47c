"""Arm-initial-guess provider: map lookup plus analytic wrist solve."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .chain import KinematicChain, forward_kinematics
from .reachability import MapMismatchError, ReachabilityMap
from .transforms import Pose
from .wrist import GIMBAL_TOL, MIRROR, PRIMARY, solve_zxz

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class ArmCandidate:
    q_arm: np.ndarray  # values for ArmInfo.joints (positional then wrist)
    center_error: float
    branch: str
    sample: int


def wrist_center(hand_pose: Pose, chain: KinematicChain, arm: str) -> np.ndarray:
    info = chain.arm(arm)
    return hand_pose.translation - hand_pose.rotation @ info.wrist_offset


def _wrist_limits(chain, info):
    return tuple((float(chain.lower[i]), float(chain.upper[i])) for i in info.wrist)


def _shift_into(v, lo, hi):
    """Vectorized: nearest whole-turn shift of v at or above lo; caller re-checks hi."""
    inside = (v >= lo) & (v <= hi)
    k = np.ceil((lo - v) / TWO_PI)
    u = v + TWO_PI * k
    return np.where(inside, v, np.where(u <= hi, u, v))


def solve_zxz_batch(M, limits):
    """Z-X-Z solutions for a stack of rotations.

    Returns (rows, angles, branch) where ``rows`` indexes the input stack.
    For each row the primary solution (if feasible) precedes the mirror one.
    Near-gimbal rows defer to the scalar solver.
    """
    M = np.asarray(M, dtype=float)
    cb = np.clip(M[:, 2, 2], -1.0, 1.0)
    sb = np.hypot(M[:, 0, 2], M[:, 1, 2])
    b = np.arctan2(sb, cb)
    a = np.arctan2(M[:, 0, 2], -M[:, 1, 2])
    c = np.arctan2(M[:, 2, 0], M[:, 2, 1])
    am = np.where(a > 0, a - math.pi, a + math.pi)
    cm = np.where(c > 0, c - math.pi, c + math.pi)
    lims = np.array(limits, dtype=float)
    regular = sb >= GIMBAL_TOL

    def feasible(x, y, z):
        s = [_shift_into(v, lims[i, 0], lims[i, 1]) for i, v in enumerate((x, y, z))]
        ok = regular.copy()
        for i, v in enumerate(s):
            ok &= (v >= lims[i, 0]) & (v <= lims[i, 1])
        return np.stack(s, axis=1), ok

    prim, okp = feasible(a, b, c)
    mirr, okm = feasible(am, -b, cm)
    rows = np.concatenate([np.flatnonzero(okp), np.flatnonzero(okm)])
    ang = np.concatenate([prim[okp], mirr[okm]])
    br = np.concatenate([np.zeros(int(okp.sum()), dtype=np.int8), np.ones(int(okm.sum()), dtype=np.int8)])
    for i in np.flatnonzero(~regular):
        for sol in solve_zxz(M[i], limits):
            rows = np.append(rows, i)
            ang = np.vstack([ang, np.array(sol.angles)])
            br = np.append(br, np.int8(sol.branch == MIRROR))
    order = np.lexsort((br, rows))
    return rows[order], ang[order].reshape(-1, 3), br[order]


def _check_map(m: ReachabilityMap, chain: KinematicChain, arm: str):
    if m.chain_hash != chain.hash:
        raise MapMismatchError("reachability map was built for a different robot model")
    if m.arm and m.arm != arm:
        raise MapMismatchError(f"reachability map is for arm {m.arm!r}, not {arm!r}")


def candidate_arrays(m: ReachabilityMap, chain: KinematicChain, arm: str, hand_pose: Pose, r: float):
    """Array form of :func:`arm_candidates`: (Q_arm, center_error, branch, sample)."""
    _check_map(m, chain, arm)
    info = chain.arm(arm)
    center = wrist_center(hand_pose, chain, arm)
    idx, dist = m.query_indices(center, r)
    n_arm = info.joints.size
    if idx.size == 0:
        return np.zeros((0, n_arm)), np.zeros(0), np.zeros(0, dtype=np.int8), idx
    # wrist base frame = lower arm @ pre; target wrist rotation excludes the fixed tail
    base_rot = m.rotations[idx] @ info.pre.rotation
    target = hand_pose.rotation @ info.tail.rotation.T
    M = base_rot.transpose(0, 2, 1) @ target
    rows, ang, br = solve_zxz_batch(M, _wrist_limits(chain, info))
    Q = np.concatenate([m.q[idx[rows]], ang], axis=1)
    return Q, dist[rows], br, idx[rows]


def arm_candidates(m: ReachabilityMap, chain: KinematicChain, arm: str, hand_pose_in_arm_base: Pose, r: float):
    Q, err, br, samples = candidate_arrays(m, chain, arm, hand_pose_in_arm_base, r)
    return [
        ArmCandidate(q_arm=Q[i], center_error=float(err[i]), branch=MIRROR if br[i] else PRIMARY, sample=int(samples[i]))
        for i in range(Q.shape[0])
    ]


def arm_base_pose(chain: KinematicChain, q, arm: str) -> Pose:
    return forward_kinematics(chain, q, chain.arm(arm).frames.arm_base)
