"""Joint-limit-aware manipulability of a robot state.

The Jacobian columns are weighted by each joint's clipped distance to its
nearer limit and the angular rows are divided by the position/orientation
ratio ``w``; the goodness is the manipulability index of that scaled matrix.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from . import kernels
from .chain import KinematicChain, geometric_jacobian

log = logging.getLogger(__name__)

DEFAULT_D_MAX = 0.25
DEFAULT_W = 1.0


class JointLimitWarning(UserWarning):
    """A joint state outside its limits was scored."""


@dataclass(frozen=True)
class GoodnessParams:
    d_max: float = DEFAULT_D_MAX
    w: float = DEFAULT_W
    d_max_per_joint: dict | None = None

    def __post_init__(self):
        if not self.d_max > 0:
            raise ValueError("d_max must be positive")
        if not self.w > 0:
            raise ValueError("w must be positive")
        for k, v in (self.d_max_per_joint or {}).items():
            if not v > 0:
                raise ValueError(f"d_max for {k!r} must be positive")

    def clip_vector(self, chain: KinematicChain, active) -> np.ndarray:
        """Clipping distance for each active joint."""
        per = self.d_max_per_joint or {}
        names = chain.joint_names
        return np.array([per.get(names[i], self.d_max) for i in active], dtype=float)


@dataclass(frozen=True)
class LimitDistances:
    d: np.ndarray
    violated: np.ndarray

    @property
    def any_violated(self) -> bool:
        return bool(self.violated.any())


def raw_limit_distances(q, lower, upper, d_max):
    """Vectorized min(q_max - q, q - q_min, d_max) floored at zero; works on batches."""
    d = np.minimum(np.minimum(upper - q, q - lower), d_max)
    return np.maximum(d, 0.0)


def limit_distances(q, chain: KinematicChain, active, d_max) -> LimitDistances:
    q = chain.check_q(q)
    active = np.asarray(active, dtype=np.intp)
    qa = q[active]
    lo = chain.lower[active]
    hi = chain.upper[active]
    violated = (qa < lo) | (qa > hi)
    if violated.any():
        bad = [chain.joint_names[i] for i in active[violated]]
        warnings.warn(f"joints outside limits scored as zero distance: {bad}", JointLimitWarning, stacklevel=2)
    d = raw_limit_distances(qa, lo, hi, np.broadcast_to(np.asarray(d_max, dtype=float), qa.shape))
    return LimitDistances(d=d, violated=violated)


def scaled_jacobian(J, d, w: float) -> np.ndarray:
    J = np.asarray(J, dtype=float)
    if J.ndim != 2 or J.shape[0] != 6:
        raise ValueError(f"Jacobian must have 6 rows, got shape {J.shape}")
    d = np.asarray(getattr(d, "d", d), dtype=float)
    if d.shape != (J.shape[1],):
        raise ValueError("distance vector does not match Jacobian columns")
    Js = J * d[None, :]
    Js[3:] /= w
    return Js


def manipulability(J) -> float:
    """sqrt(det(J J^T)) from a QR factorization of J^T; 0 when rank-deficient."""
    J = np.asarray(J, dtype=float)
    if J.ndim != 2 or J.shape[0] != 6:
        raise ValueError("expected a 6-row Jacobian")
    # rank bounds decided exactly: too few non-zero columns, or too few
    # columns with an angular part (prismatic columns have none)
    if np.count_nonzero(np.any(J != 0.0, axis=0)) < 6:
        return 0.0
    if np.count_nonzero(np.any(J[3:] != 0.0, axis=0)) < 3:
        return 0.0
    return float(kernels.gram_root_det(J))


def goodness(chain: KinematicChain, q, active, hand: str, params: GoodnessParams = GoodnessParams()) -> float:
    active = np.asarray(active, dtype=np.intp)
    if active.size < 1:
        raise ValueError("goodness needs at least one active joint")
    ld = limit_distances(q, chain, active, params.clip_vector(chain, active))
    J = geometric_jacobian(chain, q, hand, active)
    return manipulability(scaled_jacobian(J, ld.d, params.w))


class BatchScorer:
    """Goodness of many full states sharing one hand frame and active set.

    Precomputes the root-to-hand path so that each call is one kernel launch.
    Active joints that do not move the hand contribute nothing and are dropped.
    """

    def __init__(self, chain: KinematicChain, active, hand: str, params: GoodnessParams):
        self.chain = chain
        self.hand = hand
        self.params = params
        self.path = chain.path(hand)
        active = np.asarray(active, dtype=np.intp)
        clip = dict(zip(active.tolist(), params.clip_vector(chain, active)))
        on_path = np.array([int(k) in clip for k in self.path.qidx], dtype=bool)
        self._weighted = on_path
        qidx = self.path.qidx
        self._lo = chain.lower[qidx]
        self._hi = chain.upper[qidx]
        self._clip = np.array([clip.get(int(k), 0.0) for k in qidx])

    def __call__(self, Q) -> np.ndarray:
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        Qp = Q[:, self.path.qidx]
        D = raw_limit_distances(Qp, self._lo, self._hi, self._clip)
        D[:, ~self._weighted] = 0.0
        sp = self.path
        return kernels.serial_goodness(sp.origins, sp.kinds, sp.axes, sp.tail, Qp, D, self.params.w)
