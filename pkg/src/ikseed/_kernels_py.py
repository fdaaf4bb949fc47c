"""Pure numpy kernels. Reference backend and fallback for ``_kernels_c``.

A serial path is described by four arrays:

``origins`` (n, 4, 4)
    fixed transform from the previous joint frame to joint j, before its motion
``kinds`` (n,)
    0 revolute, 1 prismatic
``axes`` (n, 3)
    unit motion axis in the joint's own frame
``tail`` (4, 4)
    fixed transform from the last joint frame to the output frame

Batched functions take ``Q`` of shape (m, n) and loop over joints while
vectorizing across the batch.
"""

import numpy as np

REVOLUTE = 0
PRISMATIC = 1

ROOT_FLOOR = 1e-150


def _batch_rodrigues(axis, angles):
    x, y, z = axis
    c = np.cos(angles)
    s = np.sin(angles)
    C = 1.0 - c
    R = np.empty((angles.shape[0], 3, 3))
    R[:, 0, 0] = c + x * x * C
    R[:, 0, 1] = x * y * C - z * s
    R[:, 0, 2] = x * z * C + y * s
    R[:, 1, 0] = y * x * C + z * s
    R[:, 1, 1] = c + y * y * C
    R[:, 1, 2] = y * z * C - x * s
    R[:, 2, 0] = z * x * C - y * s
    R[:, 2, 1] = z * y * C + x * s
    R[:, 2, 2] = c + z * z * C
    return R


def _walk(origins, kinds, axes, Q):
    """Yield (R, p, z) per joint: frame before motion and world-frame axis."""
    m = Q.shape[0]
    R = np.broadcast_to(np.eye(3), (m, 3, 3)).copy()
    p = np.zeros((m, 3))
    for j in range(origins.shape[0]):
        o = origins[j]
        p = p + R @ o[:3, 3]
        R = R @ o[:3, :3]
        z = R @ axes[j]
        yield j, R, p, z
        if kinds[j] == REVOLUTE:
            R = R @ _batch_rodrigues(axes[j], Q[:, j])
        else:
            p = p + z * Q[:, j : j + 1]
    yield -1, R, p, None


def serial_fk(origins, kinds, axes, tail, Q):
    Q = np.ascontiguousarray(Q, dtype=float)
    for j, R, p, _ in _walk(origins, kinds, axes, Q):
        if j < 0:
            out = np.zeros((Q.shape[0], 4, 4))
            out[:, :3, :3] = R @ tail[:3, :3]
            out[:, :3, 3] = p + R @ tail[:3, 3]
            out[:, 3, 3] = 1.0
            return out


def serial_jacobian(origins, kinds, axes, tail, q):
    """Pose of the tail frame and its 6 x n geometric Jacobian (v rows first)."""
    Q = np.asarray(q, dtype=float).reshape(1, -1)
    n = origins.shape[0]
    zs = np.zeros((n, 3))
    ps = np.zeros((n, 3))
    for j, R, p, z in _walk(origins, kinds, axes, Q):
        if j < 0:
            T = np.eye(4)
            T[:3, :3] = R[0] @ tail[:3, :3]
            T[:3, 3] = p[0] + R[0] @ tail[:3, 3]
            break
        zs[j] = z[0]
        ps[j] = p[0]
    J = np.zeros((6, n))
    pe = T[:3, 3]
    for j in range(n):
        if kinds[j] == REVOLUTE:
            J[:3, j] = np.cross(zs[j], pe - ps[j])
            J[3:, j] = zs[j]
        else:
            J[:3, j] = zs[j]
    return T, J


def gram_root_det(J):
    """sqrt(det(J J^T)) for one 6 x n matrix or a stack, from the R factor of J^T.

    Working on J^T rather than the Gram matrix keeps the error proportional to
    the condition number of J instead of its square.
    """
    J = np.asarray(J, dtype=float)
    single = J.ndim == 2
    if single:
        J = J[None]
    m, k, n = J.shape
    if n < k:
        out = np.zeros(m)
    else:
        R = np.linalg.qr(np.swapaxes(J, 1, 2), mode="r")
        out = np.abs(np.diagonal(R, axis1=1, axis2=2)).prod(axis=1)
        out = np.where(out < ROOT_FLOOR, 0.0, out)
    return out[0] if single else out


def serial_goodness(origins, kinds, axes, tail, Q, D, w):
    """sqrt(det(Jt Jt^T)) per row of Q, Jt = diag(1,1,1,1/w,1/w,1/w) J diag(D)."""
    Q = np.ascontiguousarray(Q, dtype=float)
    D = np.ascontiguousarray(D, dtype=float)
    m, n = Q.shape
    zs = np.zeros((n, m, 3))
    ps = np.zeros((n, m, 3))
    for j, R, p, z in _walk(origins, kinds, axes, Q):
        if j < 0:
            pe = p + R @ tail[:3, 3]
            break
        zs[j] = z
        ps[j] = p
    cols = np.zeros((m, 6, n))
    for j in range(n):
        if kinds[j] == REVOLUTE:
            cols[:, :3, j] = np.cross(zs[j], pe - ps[j])
            cols[:, 3:, j] = zs[j] / w
        else:
            cols[:, :3, j] = zs[j]
    cols *= D[:, None, :]
    f = gram_root_det(cols)
    # fewer than six live columns, or three live revolute ones, cannot span the task space
    live = D != 0.0
    turning = np.count_nonzero(live[:, np.asarray(kinds) == REVOLUTE], axis=1)
    f[(np.count_nonzero(live, axis=1) < 6) | (turning < 3)] = 0.0
    return f
