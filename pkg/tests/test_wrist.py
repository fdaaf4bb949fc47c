import math

import numpy as np
import pytest

from ikseed.transforms import random_rotation, rot_x, rot_z
from ikseed.wrist import MIRROR, PRIMARY, solve_zxz

WIDE = ((-4.0, 4.0),) * 3


def zxz(a, b, c):
    return rot_z(a) @ rot_x(b) @ rot_z(c)


def test_identity_is_gimbal_zero():
    sols = solve_zxz(np.eye(3))
    assert len(sols) == 1
    np.testing.assert_allclose(sols[0].matrix(), np.eye(3), atol=1e-15)


def test_pure_x_rotation():
    sols = solve_zxz(rot_x(math.pi / 2))
    a, b, c = sols[0].angles
    assert sols[0].branch == PRIMARY
    assert (a, c) == pytest.approx((0.0, 0.0), abs=1e-12)
    assert b == pytest.approx(math.pi / 2, abs=1e-12)
    assert sols[1].branch == MIRROR and sols[1].angles[1] == pytest.approx(-math.pi / 2)


@pytest.mark.parametrize("b", [0.0, math.pi])
def test_gimbal_recomposes(rng, b):
    for _ in range(50):
        a, c = rng.uniform(-math.pi, math.pi, size=2)
        R = zxz(a, b, c)
        sols = solve_zxz(R)
        assert sols
        np.testing.assert_allclose(sols[0].matrix(), R, atol=1e-12)


def test_random_round_trip_both_branches(rng):
    for _ in range(1000):
        R = random_rotation(rng)
        sols = solve_zxz(R, WIDE)
        assert [s.branch for s in sols] == [PRIMARY, MIRROR]
        for s in sols:
            assert np.linalg.norm(s.matrix() - R) < 1e-9
        assert sols[0].angles[1] >= 0 >= sols[1].angles[1]


def test_limits_filter_branches():
    R = zxz(0.3, 0.8, -0.2)
    sols = solve_zxz(R, ((-1, 1), (0, 2), (-1, 1)))
    assert [s.branch for s in sols] == [PRIMARY]
    assert solve_zxz(R, ((-1, 1), (1.0, 2), (-1, 1))) == []


def test_whole_turn_shift_into_limits():
    R = zxz(3.0, 0.5, 0.0)
    sols = solve_zxz(R, ((0.0, 2 * math.pi), (0, 1), (-1, 1)))
    assert len(sols) == 1
    assert 0 <= sols[0].angles[0] <= 2 * math.pi
    np.testing.assert_allclose(sols[0].matrix(), R, atol=1e-12)
