"""Kinematic tree, robot-model loading, forward kinematics and Jacobians.

Joints form a tree. Each joint connects a ``parent`` link to its own child
link (named ``link``, defaulting to the joint name). A joint's frame is
``parent_frame @ origin @ motion(q)``. Fixed joints carry no state.

Mobile-base degrees of freedom are virtual joints prepended in the order
x, y, z, theta between a ``world`` link and the model root.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .transforms import Pose, PoseError, axis_angle, pose_from_dict, pose_to_dict

REVOLUTE = "revolute"
PRISMATIC = "prismatic"
FIXED = "fixed"
KINDS = (REVOLUTE, PRISMATIC, FIXED)

BASE_DOF_ORDER = ("x", "y", "z", "theta")
DEFAULT_BASE_LIMITS = {"x": (-10.0, 10.0), "y": (-10.0, 10.0), "z": (-2.0, 2.0), "theta": (-2 * math.pi, 2 * math.pi)}
WORLD = "world"

_WRIST_AXES = (np.array([0.0, 0.0, 1.0]), np.array([1.0, 0.0, 0.0]), np.array([0.0, 0.0, 1.0]))


class ModelError(ValueError):
    """Malformed or inconsistent robot model."""


class ModelParseError(ModelError):
    pass


class ModelValidationError(ModelError):
    pass


@dataclass(frozen=True, eq=False)
class Joint:
    name: str
    kind: str
    axis: np.ndarray
    origin: Pose
    limits: tuple[float, float]
    parent: str
    link: str

    @property
    def movable(self) -> bool:
        return self.kind != FIXED

    def motion(self, value: float) -> np.ndarray:
        """Local 4x4 transform origin @ motion(value)."""
        T = self.origin.matrix()
        if self.kind == REVOLUTE:
            M = np.eye(4)
            M[:3, :3] = axis_angle(self.axis, value)
            return T @ M
        if self.kind == PRISMATIC:
            M = np.eye(4)
            M[:3, 3] = self.axis * value
            return T @ M
        return T


@dataclass(frozen=True)
class SerialPath:
    """Movable joints between two links, fixed joints folded into origins."""

    origins: np.ndarray
    kinds: np.ndarray
    axes: np.ndarray
    tail: np.ndarray
    qidx: np.ndarray  # movable index of each path joint

    def fk(self, q_full) -> np.ndarray:
        if len(self.qidx) == 0:
            return self.tail.copy()
        return kernels.serial_fk(self.origins, self.kinds, self.axes, self.tail, np.asarray(q_full)[self.qidx][None])[0]

    def fk_batch(self, Q_path) -> np.ndarray:
        Q_path = np.asarray(Q_path, dtype=float)
        if len(self.qidx) == 0:
            return np.broadcast_to(self.tail, (Q_path.shape[0], 4, 4)).copy()
        return kernels.serial_fk(self.origins, self.kinds, self.axes, self.tail, Q_path)


@dataclass(frozen=True)
class ArmFrames:
    arm_base: str
    lower_arm: str
    wrist_joints: tuple[str, ...]
    hand: str


@dataclass(frozen=True, eq=False)
class ArmInfo:
    """Derived arm structure used by the reachability map and wrist solver."""

    name: str
    frames: ArmFrames
    joints: np.ndarray  # movable indices arm_base -> hand
    positional: np.ndarray  # non-wrist movable indices arm_base -> lower_arm
    wrist: np.ndarray  # wrist movable indices in Z-X-Z order
    pre: Pose  # lower_arm link -> wrist base frame (before the first wrist motion)
    tail: Pose  # frame after the last wrist motion -> hand

    @property
    def wrist_offset(self) -> np.ndarray:
        """Wrist center to hand origin, expressed in the hand frame."""
        return self.tail.rotation.T @ self.tail.translation


@dataclass(frozen=True, eq=False)
class Coupling:
    joint: str
    source: str
    scale: float
    offset: float = 0.0

    def value(self, source_value: float) -> float:
        return self.scale * source_value + self.offset


@dataclass(frozen=True, eq=False)
class KinematicChain:
    name: str
    base: str
    joints: tuple[Joint, ...]
    arms: dict[str, ArmFrames]
    couplings: dict[str, Coupling] = field(default_factory=dict)
    source: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        links = {self.base: -1}
        for i, j in enumerate(self.joints):
            links[j.link] = i
        movable = [i for i, j in enumerate(self.joints) if j.movable]
        object.__setattr__(self, "_link_joint", links)
        object.__setattr__(self, "_movable", tuple(movable))
        object.__setattr__(self, "_qindex", {self.joints[i].name: k for k, i in enumerate(movable)})
        object.__setattr__(self, "_paths", {})
        object.__setattr__(self, "_arms", {})
        lo = np.array([self.joints[i].limits[0] for i in movable])
        hi = np.array([self.joints[i].limits[1] for i in movable])
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    # -- naming ------------------------------------------------------------

    @property
    def dof(self) -> int:
        return len(self._movable)

    @property
    def links(self) -> tuple[str, ...]:
        return tuple(self._link_joint)

    @property
    def joint_names(self) -> tuple[str, ...]:
        """Movable joint names in JointState order."""
        return tuple(self.joints[i].name for i in self._movable)

    def index(self, joint_name: str) -> int:
        try:
            return self._qindex[joint_name]
        except KeyError:
            raise KeyError(f"no movable joint named {joint_name!r}") from None

    def indices(self, names) -> np.ndarray:
        return np.array([self.index(n) for n in names], dtype=np.intp)

    def joint(self, name: str) -> Joint:
        for j in self.joints:
            if j.name == name:
                return j
        raise KeyError(f"no joint named {name!r}")

    def has_link(self, name: str) -> bool:
        return name in self._link_joint

    def check_q(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if q.shape != (self.dof,):
            raise ValueError(f"joint state has shape {q.shape}, expected ({self.dof},)")
        return q

    def zero(self) -> np.ndarray:
        """All-zero state clamped into limits."""
        return np.clip(np.zeros(self.dof), self.lower, self.upper)

    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def within_limits(self, q, tol: float = 0.0) -> bool:
        q = np.asarray(q)
        return bool(np.all(q >= self.lower - tol) and np.all(q <= self.upper + tol))

    def clamp(self, q) -> np.ndarray:
        return np.clip(q, self.lower, self.upper)

    def apply_couplings(self, q, names=None) -> np.ndarray:
        q = np.array(q, dtype=float)
        for name, c in self.couplings.items():
            if names is None or name in names:
                q[self.index(name)] = c.value(q[self.index(c.source)])
        return q

    @property
    def hash(self) -> int:
        """64-bit digest of the normalized model content."""
        h = self.__dict__.get("_hash")
        if h is None:
            blob = json.dumps(chain_to_dict(self), sort_keys=True, separators=(",", ":")).encode()
            h = int.from_bytes(hashlib.sha256(blob).digest()[:8], "little")
            object.__setattr__(self, "_hash", h)
        return h

    # -- structure ---------------------------------------------------------

    def _joint_path(self, frame: str, start: str | None = None) -> list[int]:
        """Joint indices from ``start`` (default base) down to ``frame``."""
        if frame not in self._link_joint:
            raise KeyError(f"unknown frame {frame!r}")
        start = self.base if start is None else start
        if start not in self._link_joint:
            raise KeyError(f"unknown frame {start!r}")
        path = []
        link = frame
        while link != start:
            ji = self._link_joint[link]
            if ji < 0:
                raise ModelValidationError(f"{start!r} is not an ancestor of {frame!r}")
            path.append(ji)
            link = self.joints[ji].parent
        return path[::-1]

    def path(self, frame: str, start: str | None = None) -> SerialPath:
        key = (frame, start)
        sp = self._paths.get(key)
        if sp is not None:
            return sp
        jpath = self._joint_path(frame, start)
        pre = np.eye(4)
        origins, kinds, axes, qidx = [], [], [], []
        qpos = {ji: k for k, ji in enumerate(self._movable)}
        for ji in jpath:
            j = self.joints[ji]
            if not j.movable:
                pre = pre @ j.origin.matrix()
                continue
            origins.append(pre @ j.origin.matrix())
            kinds.append(0 if j.kind == REVOLUTE else 1)
            axes.append(j.axis)
            qidx.append(qpos[ji])
            pre = np.eye(4)
        sp = SerialPath(
            origins=np.array(origins, dtype=float).reshape(-1, 4, 4),
            kinds=np.array(kinds, dtype=np.int32),
            axes=np.array(axes, dtype=float).reshape(-1, 3),
            tail=pre,
            qidx=np.array(qidx, dtype=np.intp),
        )
        for a in (sp.origins, sp.kinds, sp.axes, sp.tail, sp.qidx):
            a.setflags(write=False)
        self._paths[key] = sp
        return sp

    def arm(self, name: str) -> ArmInfo:
        info = self._arms.get(name)
        if info is None:
            if name not in self.arms:
                raise KeyError(f"chain has no arm {name!r}")
            info = _derive_arm(self, name, self.arms[name])
            self._arms[name] = info
        return info

    def frame_of_joint(self, joint_name: str) -> str:
        return self.joint(joint_name).link

    def ancestors(self, frame: str) -> np.ndarray:
        """Movable indices that move ``frame`` relative to the base."""
        return self.path(frame).qidx


def forward_kinematics(chain: KinematicChain, q, frame: str) -> Pose:
    q = chain.check_q(q)
    return Pose.from_matrix(chain.path(frame).fk(q))


def link_transform(chain: KinematicChain, q, frame: str) -> Pose:
    """Pose of ``frame`` relative to its parent link, at state ``q``."""
    q = chain.check_q(q)
    ji = chain._link_joint.get(frame)
    if ji is None:
        raise KeyError(f"unknown frame {frame!r}")
    if ji < 0:
        return Pose.identity()
    j = chain.joints[ji]
    value = q[chain.index(j.name)] if j.movable else 0.0
    return Pose.from_matrix(j.motion(value))


def geometric_jacobian(chain: KinematicChain, q, frame: str, active) -> np.ndarray:
    """6 x len(active) Jacobian of ``frame`` in the base frame; rows (v, omega).

    Active joints that do not move ``frame`` give zero columns.
    """
    q = chain.check_q(q)
    active = np.asarray(active, dtype=np.intp).reshape(-1)
    if active.size == 0:
        raise ValueError("active joint set is empty")
    if np.any(active < 0) or np.any(active >= chain.dof):
        raise IndexError("active index out of range")
    sp = chain.path(frame)
    J = np.zeros((6, active.size))
    if sp.qidx.size == 0:
        return J
    _, Jp = kernels.serial_jacobian(sp.origins, sp.kinds, sp.axes, sp.tail, q[sp.qidx])
    pos = {int(k): c for c, k in enumerate(sp.qidx)}
    for c, k in enumerate(active):
        col = pos.get(int(k))
        if col is not None:
            J[:, c] = Jp[:, col]
    return J


def pose_and_jacobian(chain: KinematicChain, q, frame: str, active) -> tuple[Pose, np.ndarray]:
    sp = chain.path(frame)
    q = np.asarray(q, dtype=float)
    T, Jp = kernels.serial_jacobian(sp.origins, sp.kinds, sp.axes, sp.tail, q[sp.qidx])
    J = np.zeros((6, len(active)))
    pos = {int(k): c for c, k in enumerate(sp.qidx)}
    for c, k in enumerate(active):
        col = pos.get(int(k))
        if col is not None:
            J[:, c] = Jp[:, col]
    return Pose.from_matrix(T), J


# -- model files ------------------------------------------------------------


def _vec3(v, what):
    a = np.asarray(v, dtype=float)
    if a.shape != (3,) or not np.all(np.isfinite(a)):
        raise ModelParseError(f"{what} must be 3 finite numbers, got {v!r}")
    return a


def _derive_arm(chain: KinematicChain, name: str, fr: ArmFrames) -> ArmInfo:
    wrist_names = list(fr.wrist_joints)
    if len(wrist_names) != 3:
        raise ModelValidationError(f"arm {name!r}: spherical wrist needs exactly 3 movable joints")
    arm_path = chain._joint_path(fr.hand, fr.arm_base)
    lower_path = chain._joint_path(fr.lower_arm, fr.arm_base)
    if arm_path[: len(lower_path)] != lower_path:
        raise ModelValidationError(f"arm {name!r}: lower_arm is not on the arm_base -> hand path")
    wrist_path = arm_path[len(lower_path) :]
    movable_wrist = [ji for ji in wrist_path if chain.joints[ji].movable]
    if [chain.joints[ji].name for ji in movable_wrist] != wrist_names:
        raise ModelValidationError(
            f"arm {name!r}: movable joints between lower_arm and hand must be exactly {wrist_names}"
        )
    for ji, ax in zip(movable_wrist, _WRIST_AXES):
        j = chain.joints[ji]
        if j.kind != REVOLUTE or not np.allclose(j.axis, ax, atol=1e-12):
            raise ModelValidationError(f"arm {name!r}: wrist joint {j.name!r} does not fit a Z-X-Z wrist")
    first = wrist_path.index(movable_wrist[0])
    last = wrist_path.index(movable_wrist[-1])
    pre = np.eye(4)
    for ji in wrist_path[: first + 1]:
        pre = pre @ chain.joints[ji].origin.matrix()
    for ji in wrist_path[first + 1 : last + 1]:
        if not np.allclose(chain.joints[ji].origin.matrix(), np.eye(4), atol=1e-12):
            raise ModelValidationError(
                f"arm {name!r}: joint {chain.joints[ji].name!r} has a non-identity origin inside the wrist"
            )
    tail = np.eye(4)
    for ji in wrist_path[last + 1 :]:
        tail = tail @ chain.joints[ji].origin.matrix()
    qpos = {ji: k for k, ji in enumerate(chain._movable)}
    return ArmInfo(
        name=name,
        frames=fr,
        joints=np.array([qpos[ji] for ji in arm_path if ji in qpos], dtype=np.intp),
        positional=np.array([qpos[ji] for ji in lower_path if ji in qpos], dtype=np.intp),
        wrist=np.array([qpos[ji] for ji in movable_wrist], dtype=np.intp),
        pre=Pose.from_matrix(pre),
        tail=Pose.from_matrix(tail),
    )


def _parse_joint(raw, default_parent, i) -> Joint:
    if not isinstance(raw, dict):
        raise ModelParseError(f"joint #{i} is not an object")
    try:
        name = str(raw["name"])
        kind = str(raw.get("kind", REVOLUTE))
    except KeyError:
        raise ModelParseError(f"joint #{i} has no name") from None
    if kind not in KINDS:
        raise ModelParseError(f"joint {name!r}: unknown kind {kind!r}")
    axis = _vec3(raw.get("axis", [0.0, 0.0, 1.0]), f"joint {name!r} axis")
    norm = float(np.linalg.norm(axis))
    if kind != FIXED:
        if norm < 1e-12:
            raise ModelValidationError(f"joint {name!r}: zero axis")
        if abs(norm - 1.0) > 1e-9:
            raise ModelValidationError(f"joint {name!r}: axis is not unit length ({norm})")
    elif norm > 0:
        axis = axis / norm
    try:
        origin = pose_from_dict(raw.get("origin", {}))
        origin = Pose(origin.rotation, origin.translation).validate()
    except PoseError as exc:
        raise ModelParseError(f"joint {name!r}: {exc}") from None
    if kind == FIXED:
        limits = (0.0, 0.0)
    else:
        lim = raw.get("limits")
        if lim is None or len(lim) != 2:
            raise ModelParseError(f"joint {name!r}: limits must be [min, max]")
        limits = (float(lim[0]), float(lim[1]))
        if not limits[0] < limits[1]:
            raise ModelValidationError(f"joint {name!r}: limits {limits} are reversed or empty")
    return Joint(
        name=name,
        kind=kind,
        axis=axis,
        origin=origin,
        limits=limits,
        parent=str(raw.get("parent", default_parent)),
        link=str(raw.get("link", name)),
    )


def chain_from_dict(model: dict) -> KinematicChain:
    if not isinstance(model, dict):
        raise ModelParseError("model must be a JSON object")
    raw_joints = model.get("joints")
    if not isinstance(raw_joints, list) or not raw_joints:
        raise ModelParseError("model needs a non-empty 'joints' array")
    root = str(model.get("root", "base"))
    base_dof = list(model.get("base_dof", []))
    for d in base_dof:
        if d not in BASE_DOF_ORDER:
            raise ModelParseError(f"unknown base dof {d!r}")
    if len(set(base_dof)) != len(base_dof):
        raise ModelValidationError("duplicate base dof")
    base_limits = dict(DEFAULT_BASE_LIMITS)
    for k, v in model.get("base_limits", {}).items():
        base_limits[k] = (float(v[0]), float(v[1]))

    joints: list[Joint] = []
    base = root
    if base_dof:
        base = WORLD
        order = [d for d in BASE_DOF_ORDER if d in base_dof]
        parent = WORLD
        for k, d in enumerate(order):
            link = root if k == len(order) - 1 else f"base_{d}_link"
            axis = {"x": (1, 0, 0), "y": (0, 1, 0), "z": (0, 0, 1), "theta": (0, 0, 1)}[d]
            lo, hi = base_limits[d]
            if not lo < hi:
                raise ModelValidationError(f"base dof {d!r}: limits reversed")
            joints.append(
                Joint(
                    name=f"base_{d}",
                    kind=REVOLUTE if d == "theta" else PRISMATIC,
                    axis=np.array(axis, dtype=float),
                    origin=Pose.identity(),
                    limits=(lo, hi),
                    parent=parent,
                    link=link,
                )
            )
            parent = link

    prev = root
    for i, raw in enumerate(raw_joints):
        j = _parse_joint(raw, prev, i)
        joints.append(j)
        prev = j.link

    names = [j.name for j in joints]
    dup = {n for n in names if names.count(n) > 1}
    if dup:
        raise ModelValidationError(f"duplicate joint names: {sorted(dup)}")
    links = [base] + [j.link for j in joints]
    dup = {n for n in links if links.count(n) > 1}
    if dup:
        raise ModelValidationError(f"duplicate link names: {sorted(dup)}")
    known = {base}
    for j in joints:
        if j.parent not in known:
            raise ModelValidationError(f"joint {j.name!r}: parent link {j.parent!r} is not defined before it")
        known.add(j.link)

    arms = {}
    for arm, fr in model.get("frames", {}).items():
        try:
            af = ArmFrames(
                arm_base=str(fr["arm_base"]),
                lower_arm=str(fr["lower_arm"]),
                wrist_joints=tuple(str(n) for n in fr["wrist_joints"]),
                hand=str(fr["hand"]),
            )
        except (KeyError, TypeError):
            raise ModelParseError(f"arm {arm!r}: frames need arm_base, lower_arm, wrist_joints, hand") from None
        for f in (af.arm_base, af.lower_arm, af.hand):
            if f not in known:
                raise ModelValidationError(f"arm {arm!r}: unknown frame {f!r}")
        for wj in af.wrist_joints:
            if wj not in names:
                raise ModelValidationError(f"arm {arm!r}: unknown wrist joint {wj!r}")
        arms[str(arm)] = af

    couplings = {}
    for c in model.get("couplings", []):
        try:
            cp = Coupling(str(c["joint"]), str(c["source"]), float(c["scale"]), float(c.get("offset", 0.0)))
        except (KeyError, TypeError, ValueError):
            raise ModelParseError(f"malformed coupling {c!r}") from None
        for n in (cp.joint, cp.source):
            if n not in names or not joints[names.index(n)].movable:
                raise ModelValidationError(f"coupling refers to unknown movable joint {n!r}")
        couplings[cp.joint] = cp

    chain = KinematicChain(
        name=str(model.get("name", "robot")),
        base=base,
        joints=tuple(joints),
        arms=arms,
        couplings=couplings,
        source=model,
    )
    for arm in arms:
        chain.arm(arm)
    return chain


def load_chain(model_text: str) -> KinematicChain:
    """Parse robot-model JSON text into a validated chain."""
    try:
        model = json.loads(model_text)
    except json.JSONDecodeError as exc:
        raise ModelParseError(f"model is not valid JSON: {exc}") from None
    return chain_from_dict(model)


def load_chain_file(path) -> KinematicChain:
    return load_chain(Path(path).read_text())


def chain_to_dict(chain: KinematicChain) -> dict:
    """Normalized description; base virtual joints appear as ordinary joints."""
    return {
        "name": chain.name,
        "base": chain.base,
        "joints": [
            {
                "name": j.name,
                "kind": j.kind,
                "axis": [float(v) for v in j.axis],
                "origin": pose_to_dict(j.origin),
                "limits": [float(j.limits[0]), float(j.limits[1])],
                "parent": j.parent,
                "link": j.link,
            }
            for j in chain.joints
        ],
        "frames": {
            k: {"arm_base": a.arm_base, "lower_arm": a.lower_arm, "wrist_joints": list(a.wrist_joints), "hand": a.hand}
            for k, a in sorted(chain.arms.items())
        },
        "couplings": [
            {"joint": c.joint, "source": c.source, "scale": c.scale, "offset": c.offset}
            for _, c in sorted(chain.couplings.items())
        ],
    }
