import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ikseed.transforms import (
    Pose,
    PoseError,
    compose,
    inverse,
    is_rotation,
    matrices_to_quats,
    matrix_to_quat,
    quat_to_matrix,
    quats_to_matrices,
    random_rotation,
    rotation_log,
    rpy_to_matrix,
    axis_angle,
)

angles = st.floats(-np.pi, np.pi, allow_nan=False)
coords = st.floats(-5, 5, allow_nan=False)


def _pose(rng):
    return Pose(random_rotation(rng), rng.normal(size=3))


def test_identity_is_neutral(rng):
    P = _pose(rng)
    assert compose(Pose.identity(), P).allclose(P, atol=0)
    assert compose(P, Pose.identity()).allclose(P, atol=1e-15)


def test_inverse_law(rng):
    for _ in range(100):
        P = _pose(rng)
        assert compose(P, inverse(P)).allclose(Pose.identity(), atol=1e-12)
        assert compose(inverse(P), P).allclose(Pose.identity(), atol=1e-12)


def test_translations_add():
    a = Pose.from_translation([1, 0, 0])
    b = Pose.from_translation([0, 1, 0])
    np.testing.assert_array_equal(compose(a, b).translation, [1, 1, 0])


def test_compose_matches_homogeneous_product(rng):
    a, b = _pose(rng), _pose(rng)
    np.testing.assert_allclose(compose(a, b).matrix(), a.matrix() @ b.matrix(), atol=1e-14)


def test_long_composition_stays_orthonormal(rng):
    steps = [Pose(random_rotation(rng), rng.normal(size=3) * 1e-3) for _ in range(16)]
    P = Pose.identity()
    for i in range(1_000_000):
        P = compose(P, steps[i & 15])
    R = P.rotation
    assert np.max(np.abs(R.T @ R - np.eye(3))) < 1e-9
    assert abs(np.linalg.det(R) - 1) < 1e-9


def test_validate_rejects_reflection():
    with pytest.raises(PoseError):
        Pose(np.diag([1.0, 1.0, -1.0]), np.zeros(3)).validate()


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-1, 1, allow_nan=False), min_size=4, max_size=4).filter(lambda v: np.linalg.norm(v) > 0.1))
def test_quaternion_round_trip(q):
    q = np.asarray(q) / np.linalg.norm(q)
    R = quat_to_matrix(q)
    assert is_rotation(R)
    q2 = matrix_to_quat(R)
    assert np.allclose(q2, q if q[0] >= 0 else -q, atol=1e-12) or abs(q[0]) < 1e-12
    np.testing.assert_allclose(quat_to_matrix(q2), R, atol=1e-12)


def test_batch_quaternions_match_scalar(rng):
    Rs = np.stack([random_rotation(rng) for _ in range(500)] + [np.eye(3), np.diag([1.0, -1, -1]), np.diag([-1.0, 1, -1]), np.diag([-1.0, -1, 1])])
    qs = matrices_to_quats(Rs)
    for R, q in zip(Rs, qs):
        np.testing.assert_allclose(q, matrix_to_quat(R), atol=1e-15)
    np.testing.assert_allclose(quats_to_matrices(qs), Rs, atol=1e-14)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, np.pi, allow_nan=False), st.lists(st.floats(-1, 1, allow_nan=False), min_size=3, max_size=3))
def test_rotation_log_inverts_axis_angle(theta, axis):
    axis = np.asarray(axis)
    if np.linalg.norm(axis) < 0.1:
        return
    axis /= np.linalg.norm(axis)
    v = rotation_log(axis_angle(axis, theta))
    assert abs(np.linalg.norm(v) - theta) < 1e-7
    np.testing.assert_allclose(axis_angle(v / max(np.linalg.norm(v), 1e-300), np.linalg.norm(v)), axis_angle(axis, theta), atol=1e-7)


@given(angles, angles, angles)
def test_rpy_is_rotation(r, p, y):
    assert is_rotation(rpy_to_matrix(r, p, y))
