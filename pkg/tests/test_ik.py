import math

import numpy as np
import pytest

from ikseed.chain import chain_from_dict, forward_kinematics
from ikseed.ik import (
    MAX_ITERS,
    STALLED,
    IKRequest,
    Target,
    Tolerances,
    solve,
    solve_trajectory,
)
from ikseed.transforms import Pose

from conftest import planar_2r_dict, random_state

TIGHT = Tolerances(1e-6, 1e-6)


def analytic_2r(x, y, l1=1.0, l2=1.0):
    """Both elbow branches of the two-link planar IK."""
    c2 = (x * x + y * y - l1 * l1 - l2 * l2) / (2 * l1 * l2)
    out = []
    for s in (1.0, -1.0):
        q2 = s * math.acos(max(-1.0, min(1.0, c2)))
        q1 = math.atan2(y, x) - math.atan2(l2 * math.sin(q2), l1 + l2 * math.cos(q2))
        out.append(np.array([q1, q2]))
    return out


@pytest.fixture
def wide():
    return chain_from_dict(planar_2r_dict(lim=10.0))


def planar_request(chain, seed, x, y, **kw):
    return IKRequest(chain, [0, 1], seed, Target("tip", Pose.from_translation([x, y, 0])), position_only=True, **kw)


def test_converged_seed_takes_zero_iterations(wide):
    q = np.array([0.4, 0.9])
    target = forward_kinematics(wide, q, "tip")
    out = solve(IKRequest(wide, [0, 1], q, Target("tip", target)))
    assert out.success and out.iterations == 0
    np.testing.assert_array_equal(out.solution, q)


def test_planar_matches_analytic_branch(wide):
    out = solve(planar_request(wide, [0.3, 0.5], 1.2, 0.5, tolerances=TIGHT))
    assert out.success
    err = min(np.max(np.abs(out.solution - b)) for b in analytic_2r(1.2, 0.5))
    assert err < 1e-6


def test_full_pose_target(wide):
    q = np.array([0.2, 1.1])
    out = solve(IKRequest(wide, [0, 1], [0.0, 0.8], Target("tip", forward_kinematics(wide, q, "tip")), tolerances=TIGHT))
    assert out.success
    np.testing.assert_allclose(out.solution, q, atol=1e-5)


def test_unreachable_fails(wide):
    out = solve(planar_request(wide, [0.1, 0.1], 3.0, 0.0))
    assert not out.success
    assert out.status in (MAX_ITERS, STALLED)


def test_limits_respected_on_every_outcome(rng):
    chain = chain_from_dict(planar_2r_dict(lim=0.5))
    for _ in range(50):
        x, y = rng.uniform(-2, 2, size=2)
        out = solve(planar_request(chain, [0.0, 0.0], x, y))
        assert chain.within_limits(out.solution)


def test_success_is_certified_by_fk(seednoid, rng):
    info = seednoid.arm("right")
    active = np.concatenate([seednoid.indices(["waist_y", "waist_p"]), info.joints])
    for _ in range(10):
        q = seednoid.midpoint()
        q[active] = random_state(rng, seednoid)[active]
        target = forward_kinematics(seednoid, q, "r_hand")
        seed = q.copy()
        seed[active] = np.clip(q[active] + rng.normal(scale=0.05, size=active.size), seednoid.lower[active], seednoid.upper[active])
        out = solve(IKRequest(seednoid, active, seed, Target("r_hand", target)))
        if out.success:
            P = forward_kinematics(seednoid, out.solution, "r_hand")
            assert np.linalg.norm(P.translation - target.translation) <= 1e-4
            assert np.linalg.norm(P.rotation - target.rotation) < 2e-3
        # inactive joints untouched
        mask = np.ones(seednoid.dof, bool)
        mask[active] = False
        np.testing.assert_array_equal(out.solution[mask], seed[mask])


def test_dual_target(seednoid, rng):
    r, l = seednoid.arm("right"), seednoid.arm("left")
    active = np.concatenate([seednoid.indices(["waist_y"]), r.joints, l.joints])
    q = seednoid.midpoint()
    q[active] = rng.uniform(seednoid.lower[active], seednoid.upper[active]) * 0.5
    targets = (Target("r_hand", forward_kinematics(seednoid, q, "r_hand")), Target("l_hand", forward_kinematics(seednoid, q, "l_hand")))
    seed = q.copy()
    seed[active] += 0.03
    out = solve(IKRequest(seednoid, active, seed, targets))
    assert out.success


def test_deterministic(wide):
    a = solve(planar_request(wide, [0.3, 0.5], 1.2, 0.5))
    b = solve(planar_request(wide, [0.3, 0.5], 1.2, 0.5))
    assert a.status == b.status and np.array_equal(a.solution, b.solution)


def test_request_validation(wide):
    with pytest.raises(ValueError):
        Tolerances(0, 1)
    with pytest.raises(ValueError):
        IKRequest(wide, [0, 1], [0, 0], ())
    with pytest.raises(ValueError):
        IKRequest(wide, [0, 1], [0, 0, 0], Target("tip", Pose.identity()))


def test_trajectory_fixed_point(wide):
    target = Target("tip", Pose.from_translation([1.2, 0.5, 0]))
    outs = solve_trajectory(wide, [0, 1], {0: [0.3, 0.5]}, [target] * 4, position_only=True)
    assert all(o.success for o in outs) and len(outs) == 4
    for o in outs[1:]:
        np.testing.assert_array_equal(o.solution, outs[0].solution)
        assert o.iterations == 0


def test_trajectory_uses_own_seeds(wide):
    pts = [(1.2, 0.5), (1.1, 0.6), (1.0, 0.7), (0.9, 0.8), (-1.0, 0.5)]
    targets = [Target("tip", Pose.from_translation([x, y, 0])) for x, y in pts]
    own = analytic_2r(-1.0, 0.5)[0]
    outs = solve_trajectory(wide, [0, 1], {0: [0.3, 0.5], 4: own}, targets, position_only=True)
    assert len(outs) == 5 and outs[4].success and outs[4].iterations == 0


def test_trajectory_gates_after_failure(wide):
    good = Target("tip", Pose.from_translation([1.2, 0.5, 0]))
    bad = Target("tip", Pose.from_translation([3.0, 0.0, 0]))
    outs = solve_trajectory(wide, [0, 1], {0: [0.3, 0.5]}, [good, good, bad, good, good], position_only=True)
    assert len(outs) == 3 and not outs[-1].success


def test_trajectory_needs_step_zero_seed(wide):
    with pytest.raises(ValueError):
        solve_trajectory(wide, [0, 1], {1: [0, 0]}, [Target("tip", Pose.identity())] * 2)
