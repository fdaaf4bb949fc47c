"""Rigid transforms in 3-D and rotation helpers.

Rotations are kept as 3x3 matrices in memory. Files carry unit quaternions
ordered (w, x, y, z).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ORTHO_TOL = 1e-9


class PoseError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Pose:
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.array(self.rotation, dtype=float).reshape(3, 3)
        t = np.array(self.translation, dtype=float).reshape(3)
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> Pose:
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_translation(cls, t) -> Pose:
        return cls(np.eye(3), t)

    @classmethod
    def from_matrix(cls, T) -> Pose:
        T = np.asarray(T, dtype=float)
        return cls(T[:3, :3], T[:3, 3])

    @classmethod
    def from_quaternion(cls, quat, translation=(0.0, 0.0, 0.0)) -> Pose:
        return cls(quat_to_matrix(quat), translation)

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def quaternion(self) -> np.ndarray:
        return matrix_to_quat(self.rotation)

    def validate(self, tol: float = ORTHO_TOL) -> Pose:
        if not is_rotation(self.rotation, tol):
            raise PoseError("rotation is not orthonormal with det +1")
        if not np.all(np.isfinite(self.translation)):
            raise PoseError("translation must be finite")
        return self

    def __matmul__(self, other: Pose) -> Pose:
        return compose(self, other)

    def allclose(self, other: Pose, atol: float = 1e-12) -> bool:
        return bool(
            np.allclose(self.rotation, other.rotation, rtol=0, atol=atol)
            and np.allclose(self.translation, other.translation, rtol=0, atol=atol)
        )

    def __repr__(self):
        return f"Pose(t={self.translation.tolist()}, q={self.quaternion().tolist()})"


def compose(a: Pose, b: Pose) -> Pose:
    return Pose(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def inverse(a: Pose) -> Pose:
    Rt = a.rotation.T
    return Pose(Rt, -Rt @ a.translation)


def is_rotation(R, tol: float = ORTHO_TOL) -> bool:
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        return False
    return bool(
        np.max(np.abs(R.T @ R - np.eye(3))) <= tol and abs(np.linalg.det(R) - 1.0) <= tol
    )


def orthonormalize(R) -> np.ndarray:
    u, _, vt = np.linalg.svd(np.asarray(R, dtype=float))
    Q = u @ vt
    if np.linalg.det(Q) < 0:
        u[:, -1] *= -1
        Q = u @ vt
    return Q


def rot_x(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def axis_angle(axis, angle: float) -> np.ndarray:
    """Rodrigues rotation about a unit ``axis``."""
    x, y, z = axis
    c, s = np.cos(angle), np.sin(angle)
    C = 1.0 - c
    return np.array(
        [
            [c + x * x * C, x * y * C - z * s, x * z * C + y * s],
            [y * x * C + z * s, c + y * y * C, y * z * C - x * s],
            [z * x * C - y * s, z * y * C + x * s, c + z * z * C],
        ]
    )


def rpy_to_matrix(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """Fixed-axis roll-pitch-yaw, i.e. Rz(yaw) Ry(pitch) Rx(roll)."""
    return rot_z(yaw) @ rot_y(pitch) @ rot_x(roll)


def rotation_log(R) -> np.ndarray:
    """Rotation vector (axis * angle) of ``R``, angle in [0, pi]."""
    R = np.asarray(R, dtype=float)
    cos_t = np.clip((np.trace(R) - 1.0) * 0.5, -1.0, 1.0)
    theta = np.arccos(cos_t)
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if theta < 1e-6:
        # first-order series; exact to O(theta^3)
        return 0.5 * w
    if np.pi - theta < 1e-4:
        # near pi the antisymmetric part vanishes; read the axis off the symmetric part
        B = 0.5 * (R + np.eye(3))
        k = int(np.argmax(np.diag(B)))
        axis = B[:, k] / np.sqrt(max(B[k, k], 1e-300))
        axis /= np.linalg.norm(axis)
        if np.dot(axis, w) < 0:
            axis = -axis
        return axis * theta
    return w * (theta / (2.0 * np.sin(theta)))


def quat_to_matrix(q) -> np.ndarray:
    w, x, y, z = np.asarray(q, dtype=float)
    n = w * w + x * x + y * y + z * z
    if n < 1e-300:
        raise PoseError("zero quaternion")
    s = 2.0 / n
    return np.array(
        [
            [1 - s * (y * y + z * z), s * (x * y - z * w), s * (x * z + y * w)],
            [s * (x * y + z * w), 1 - s * (x * x + z * z), s * (y * z - x * w)],
            [s * (x * z - y * w), s * (y * z + x * w), 1 - s * (x * x + y * y)],
        ]
    )


def matrix_to_quat(R) -> np.ndarray:
    """Unit quaternion (w, x, y, z) with w >= 0."""
    R = np.asarray(R, dtype=float)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0:
        s = 2.0 * np.sqrt(tr + 1.0)
        q = np.array([0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s])
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = np.array([(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s])
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = np.array([(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s])
    else:
        s = 2.0 * np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = np.array([(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s])
    if q[0] < 0:
        q = -q
    return q / np.linalg.norm(q)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    q = rng.normal(size=4)
    return quat_to_matrix(q / np.linalg.norm(q))


def pose_to_dict(p: Pose) -> dict:
    return {"translation": [float(v) for v in p.translation], "quaternion": [float(v) for v in p.quaternion()]}


def pose_from_dict(d) -> Pose:
    try:
        t = d.get("translation", [0.0, 0.0, 0.0])
        if "quaternion" in d:
            R = quat_to_matrix(d["quaternion"])
        elif "rpy" in d:
            R = rpy_to_matrix(*d["rpy"])
        else:
            R = np.eye(3)
        return Pose(R, t)
    except (TypeError, ValueError, AttributeError) as exc:
        raise PoseError(f"malformed pose {d!r}: {exc}") from exc


def matrices_to_quats(Rs) -> np.ndarray:
    """Batch version of :func:`matrix_to_quat` for an (m, 3, 3) array."""
    Rs = np.asarray(Rs, dtype=float)
    m = Rs.shape[0]
    q = np.empty((m, 4))
    r00, r11, r22 = Rs[:, 0, 0], Rs[:, 1, 1], Rs[:, 2, 2]
    tr = r00 + r11 + r22
    c0 = tr > 0
    c1 = ~c0 & (r00 > r11) & (r00 > r22)
    c2 = ~c0 & ~c1 & (r11 > r22)
    c3 = ~c0 & ~c1 & ~c2
    R = Rs
    with np.errstate(invalid="ignore", divide="ignore"):
        s = 2.0 * np.sqrt(np.where(c0, tr + 1.0, 1.0))
        q[c0] = np.stack([0.25 * s, (R[:, 2, 1] - R[:, 1, 2]) / s, (R[:, 0, 2] - R[:, 2, 0]) / s, (R[:, 1, 0] - R[:, 0, 1]) / s], 1)[c0]
        s = 2.0 * np.sqrt(np.where(c1, 1.0 + r00 - r11 - r22, 1.0))
        q[c1] = np.stack([(R[:, 2, 1] - R[:, 1, 2]) / s, 0.25 * s, (R[:, 0, 1] + R[:, 1, 0]) / s, (R[:, 0, 2] + R[:, 2, 0]) / s], 1)[c1]
        s = 2.0 * np.sqrt(np.where(c2, 1.0 + r11 - r00 - r22, 1.0))
        q[c2] = np.stack([(R[:, 0, 2] - R[:, 2, 0]) / s, (R[:, 0, 1] + R[:, 1, 0]) / s, 0.25 * s, (R[:, 1, 2] + R[:, 2, 1]) / s], 1)[c2]
        s = 2.0 * np.sqrt(np.where(c3, 1.0 + r22 - r00 - r11, 1.0))
        q[c3] = np.stack([(R[:, 1, 0] - R[:, 0, 1]) / s, (R[:, 0, 2] + R[:, 2, 0]) / s, (R[:, 1, 2] + R[:, 2, 1]) / s, 0.25 * s], 1)[c3]
    q[q[:, 0] < 0] *= -1.0
    return q / np.linalg.norm(q, axis=1, keepdims=True)


def quats_to_matrices(qs) -> np.ndarray:
    qs = np.asarray(qs, dtype=float)
    w, x, y, z = qs.T
    s = 2.0 / np.einsum("ij,ij->i", qs, qs)
    R = np.empty((qs.shape[0], 3, 3))
    R[:, 0, 0] = 1 - s * (y * y + z * z)
    R[:, 0, 1] = s * (x * y - z * w)
    R[:, 0, 2] = s * (x * z + y * w)
    R[:, 1, 0] = s * (x * y + z * w)
    R[:, 1, 1] = 1 - s * (x * x + z * z)
    R[:, 1, 2] = s * (y * z - x * w)
    R[:, 2, 0] = s * (x * z - y * w)
    R[:, 2, 1] = s * (y * z + x * w)
    R[:, 2, 2] = 1 - s * (x * x + y * y)
    return R
