"""Analytic Z-X-Z spherical-wrist solution."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .transforms import rot_x, rot_z

GIMBAL_TOL = 1e-8
PRIMARY = "primary"
MIRROR = "mirror"


@dataclass(frozen=True)
class WristSolution:
    angles: tuple[float, float, float]
    branch: str

    def matrix(self) -> np.ndarray:
        a, b, c = self.angles
        return rot_z(a) @ rot_x(b) @ rot_z(c)


def _within(v, lim):
    return lim[0] <= v <= lim[1]


def _shift_into(v, lim):
    """Move ``v`` by multiples of 2 pi into ``lim`` if possible; else return v."""
    if _within(v, lim):
        return v
    k = math.ceil((lim[0] - v) / (2 * math.pi))
    u = v + 2 * math.pi * k
    return u if _within(u, lim) else v


def solve_zxz(R, limits=((-math.pi, math.pi),) * 3) -> list[WristSolution]:
    """Angles (a, b, c) with Rz(a) Rx(b) Rz(c) = R, filtered by joint limits.

    Returns up to two solutions, primary branch (b >= 0) first. Angles are
    shifted by whole turns into the limits where that helps, since revolute
    limits are read on the unwrapped line.
    """
    R = np.asarray(R, dtype=float)
    cb = min(1.0, max(-1.0, R[2, 2]))
    sb = math.hypot(R[0, 2], R[1, 2])
    out: list[WristSolution] = []
    if sb < GIMBAL_TOL:
        # b = 0 or pi: only a + c (or a - c) is observable
        if cb > 0:
            b = 0.0
            total = math.atan2(R[1, 0], R[0, 0])
            splits = ((total, 0.0), (0.0, total))
        else:
            b = math.pi
            total = math.atan2(R[0, 1], R[0, 0])
            splits = ((total, 0.0), (0.0, -total))
        for a, c in splits:
            a = _shift_into(a, limits[0])
            c = _shift_into(c, limits[2])
            bb = _shift_into(b, limits[1])
            if _within(a, limits[0]) and _within(bb, limits[1]) and _within(c, limits[2]):
                out.append(WristSolution((a, bb, c), PRIMARY))
                break
        return out
    b = math.atan2(sb, cb)
    a = math.atan2(R[0, 2], -R[1, 2])
    c = math.atan2(R[2, 0], R[2, 1])
    branches = (
        ((a, b, c), PRIMARY),
        ((a - math.pi if a > 0 else a + math.pi, -b, c - math.pi if c > 0 else c + math.pi), MIRROR),
    )
    for angles, tag in branches:
        shifted = tuple(_shift_into(v, lim) for v, lim in zip(angles, limits))
        if all(_within(v, lim) for v, lim in zip(shifted, limits)):
            out.append(WristSolution(shifted, tag))
    return out
