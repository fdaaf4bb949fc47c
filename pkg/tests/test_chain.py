import json
import math

import numpy as np
import pytest

from ikseed import kernels
from ikseed.chain import (
    ModelParseError,
    ModelValidationError,
    chain_from_dict,
    forward_kinematics,
    geometric_jacobian,
    link_transform,
    load_chain,
)
from ikseed.transforms import Pose, compose, rotation_log

from conftest import planar_2r_dict, random_chain, random_state


def fd_jacobian(chain, q, frame, active, h=1e-6):
    """Central differences; orientation columns from the rotation-log delta."""
    J = np.zeros((6, len(active)))
    for c, k in enumerate(active):
        qp, qm = q.copy(), q.copy()
        qp[k] += h
        qm[k] -= h
        Pp, Pm = forward_kinematics(chain, qp, frame), forward_kinematics(chain, qm, frame)
        J[:3, c] = (Pp.translation - Pm.translation) / (2 * h)
        J[3:, c] = rotation_log(Pp.rotation @ Pm.rotation.T) / (2 * h)
    return J


def test_minimal_model():
    chain = load_chain(json.dumps({"joints": [{"name": "a", "axis": [0, 0, 1], "limits": [-1, 1]}]}))
    assert chain.dof == 1
    assert chain.links == ("base", "a")


@pytest.mark.parametrize(
    "joint, error",
    [
        ({"name": "a", "axis": [0, 0, 1], "limits": [1, -1]}, ModelValidationError),
        ({"name": "a", "axis": [0, 0, 0], "limits": [-1, 1]}, ModelValidationError),
        ({"name": "a", "axis": [0, 0, 2], "limits": [-1, 1]}, ModelValidationError),
        ({"name": "a", "axis": [0, 0, 1]}, ModelParseError),
        ({"name": "a", "kind": "ball", "limits": [-1, 1]}, ModelParseError),
    ],
)
def test_invalid_joints_rejected(joint, error):
    with pytest.raises(error):
        chain_from_dict({"joints": [joint]})


def test_malformed_text_rejected():
    with pytest.raises(ModelParseError):
        load_chain("{not json")


def test_duplicate_names_rejected():
    j = {"name": "a", "axis": [0, 0, 1], "limits": [-1, 1]}
    with pytest.raises(ModelValidationError):
        chain_from_dict({"joints": [j, dict(j)]})


def test_dangling_frame_rejected():
    model = planar_2r_dict()
    model["frames"] = {"arm": {"arm_base": "base", "lower_arm": "nope", "wrist_joints": ["q1", "q2", "q2"], "hand": "tip"}}
    with pytest.raises(ModelValidationError):
        chain_from_dict(model)


def test_dangling_parent_rejected():
    with pytest.raises(ModelValidationError):
        chain_from_dict({"joints": [{"name": "a", "axis": [0, 0, 1], "limits": [-1, 1], "parent": "ghost"}]})


def test_seednoid_like_structure(seednoid):
    right = seednoid.arm("right")
    left = seednoid.arm("left")
    assert seednoid.joint_names[:4] == ("base_x", "base_y", "base_z", "base_theta")
    for arm, p in ((right, "r_"), (left, "l_")):
        arm_joints = [j for j in seednoid.joints if j.name.startswith(p) and j.name != p + "arm_base" and j.name != p + "hand"]
        assert len(arm_joints) == 8
        assert sum(not j.movable for j in arm_joints) == 1
        assert arm.joints.size == 7 and arm.positional.size == 4 and arm.wrist.size == 3
        assert list(arm.joints[-3:]) == list(arm.wrist)
    assert {"lifter_ankle", "lifter_knee"} <= set(seednoid.joint_names)
    assert {"waist_y", "waist_p", "waist_r"} <= set(seednoid.joint_names)


def test_fk_zero_is_product_of_origins(rng):
    chain = random_chain(rng, 6)
    T = np.eye(4)
    for j in chain.joints:
        T = T @ j.origin.matrix()
    np.testing.assert_allclose(forward_kinematics(chain, np.zeros(chain.dof), "ee").matrix(), T, atol=1e-14)


def test_fk_planar_quarter_turn(planar):
    np.testing.assert_allclose(forward_kinematics(planar, [math.pi / 2, 0], "tip").translation, [0, 2, 0], atol=1e-15)


def test_fk_planar_trig(planar):
    a, b = math.pi / 6, math.pi / 4
    expected = [math.cos(a) + math.cos(a + b), math.sin(a) + math.sin(a + b), 0.0]
    np.testing.assert_allclose(forward_kinematics(planar, [a, b], "tip").translation, expected, atol=1e-15)


def test_fk_errors(planar):
    with pytest.raises(KeyError):
        forward_kinematics(planar, [0, 0], "nowhere")
    with pytest.raises(ValueError):
        forward_kinematics(planar, [0, 0, 0], "tip")


def test_fk_frame_chaining(rng, seednoid):
    for _ in range(20):
        q = random_state(rng, seednoid)
        for j in seednoid.joints:
            parent = forward_kinematics(seednoid, q, j.parent)
            child = forward_kinematics(seednoid, q, j.link)
            assert compose(parent, link_transform(seednoid, q, j.link)).allclose(child, atol=1e-12)


def test_jacobian_planar_manipulability(planar):
    J = geometric_jacobian(planar, [0.0, math.pi / 2], "tip", [0, 1])
    assert abs(abs(np.linalg.det(J[:2, :2])) - 1.0) < 1e-12


def test_prismatic_column():
    chain = chain_from_dict({"joints": [{"name": "s", "kind": "prismatic", "axis": [1, 0, 0], "limits": [-1, 1]}]})
    for v in (-0.7, 0.0, 0.4):
        np.testing.assert_array_equal(geometric_jacobian(chain, [v], "s", [0])[:, 0], [1, 0, 0, 0, 0, 0])


def test_jacobian_matches_finite_differences(rng):
    for _ in range(50):
        chain = random_chain(rng, 6)
        q = random_state(rng, chain)
        J = geometric_jacobian(chain, q, "ee", range(6))
        Jfd = fd_jacobian(chain, q, "ee", range(6))
        assert np.all(np.abs(J - Jfd) <= 1e-8 + 1e-5 * np.abs(Jfd))


def test_jacobian_inactive_off_path_columns_zero(seednoid, rng):
    q = random_state(rng, seednoid)
    active = seednoid.indices(["l_elbow", "r_elbow"])
    J = geometric_jacobian(seednoid, q, "r_hand", active)
    assert np.all(J[:, 0] == 0) and np.any(J[:, 1] != 0)


def test_jacobian_errors(planar):
    with pytest.raises(ValueError):
        geometric_jacobian(planar, [0, 0], "tip", [])
    with pytest.raises(KeyError):
        geometric_jacobian(planar, [0, 0], "nope", [0])


@pytest.mark.parametrize("name", ["python", "c"])
def test_backends_agree(rng, name):
    impl = kernels.get_backend(name)
    chain = random_chain(rng, 8)
    sp = chain.path("ee")
    Q = np.stack([random_state(rng, chain) for _ in range(64)])
    ref = kernels.get_backend("python")
    np.testing.assert_allclose(impl.serial_fk(sp.origins, sp.kinds, sp.axes, sp.tail, Q), ref.serial_fk(sp.origins, sp.kinds, sp.axes, sp.tail, Q), atol=1e-13)
    T1, J1 = impl.serial_jacobian(sp.origins, sp.kinds, sp.axes, sp.tail, Q[0])
    T2, J2 = ref.serial_jacobian(sp.origins, sp.kinds, sp.axes, sp.tail, Q[0])
    np.testing.assert_allclose(J1, J2, atol=1e-13)
    D = rng.uniform(0, 1, size=Q.shape)
    g1 = impl.serial_goodness(sp.origins, sp.kinds, sp.axes, sp.tail, Q, D, 0.7)
    g2 = ref.serial_goodness(sp.origins, sp.kinds, sp.axes, sp.tail, Q, D, 0.7)
    np.testing.assert_allclose(g1, g2, rtol=1e-8, atol=1e-300)


def test_chain_hash_is_content_based(seednoid):
    from ikseed.chain import chain_from_dict as build

    again = build(seednoid.source)
    assert again.hash == seednoid.hash
    other = json.loads(json.dumps(seednoid.source))
    other["joints"][0]["limits"] = [0.0, 1.4]
    assert build(other).hash != seednoid.hash


def test_pose_invariant_on_fk(rng, seednoid):
    q = random_state(rng, seednoid)
    P = forward_kinematics(seednoid, q, "l_hand")
    assert isinstance(P, Pose)
    P.validate()
