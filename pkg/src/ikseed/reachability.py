"""Voxelized map from wrist-center positions to sampled arm postures.

Non-wrist arm joints are sampled on a regular lattice. For every lattice
point the lower-arm link orientation and the wrist center (both in the
arm-base frame) are recorded. Samples are indexed by an overlapping grid:
cells of extent ``cell_size`` placed every ``cell_stride``, so a point lies
in up to ``ceil(size / stride) ** 3`` cells.
"""

from __future__ import annotations

import json
import logging
import math
import struct
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .chain import KinematicChain
from .transforms import matrices_to_quats, quats_to_matrices

log = logging.getLogger(__name__)

MAGIC = b"RMAP"
FORMAT_VERSION = 1
DEFAULT_CELL_SIZE = 0.05
DEFAULT_CELL_STRIDE = 0.025
DEFAULT_RADIUS = 0.01
DEFAULT_INTERVAL = math.radians(2.0)

_HEADER = struct.Struct("<4sIQddd6dQII")


class MapError(ValueError):
    pass


class MapVersionError(MapError):
    pass


class MapMismatchError(MapError):
    """Map was built for a different chain or arm."""


class MapChainMismatchWarning(UserWarning):
    pass


@dataclass(frozen=True)
class MapSample:
    index: int
    q_partial: np.ndarray
    lower_arm_rotation: np.ndarray
    wrist_center: np.ndarray


@dataclass(eq=False)
class ReachabilityMap:
    cell_size: float
    cell_stride: float
    origin: np.ndarray  # grid origin, cell (0,0,0) starts here
    upper: np.ndarray  # max wrist-center coordinate
    q: np.ndarray  # (N, k) non-wrist joint values
    quats: np.ndarray  # (N, 4) lower-arm orientation
    centers: np.ndarray  # (N, 3)
    cell_keys: np.ndarray  # (C, 3) int32, sorted lexicographically
    cell_offsets: np.ndarray  # (C + 1,) uint64 into cell_refs
    cell_refs: np.ndarray  # sample indices, ascending within a cell
    chain_hash: int = 0
    default_radius: float = DEFAULT_RADIUS
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.cell_stride <= self.cell_size:
            raise MapError("cell stride must not exceed cell size")
        self._lookup = {tuple(int(v) for v in k): c for c, k in enumerate(self.cell_keys)}
        self._rot = None

    @property
    def sample_count(self) -> int:
        return int(self.q.shape[0])

    @property
    def rotations(self) -> np.ndarray:
        if self._rot is None:
            self._rot = quats_to_matrices(self.quats) if len(self.quats) else np.zeros((0, 3, 3))
        return self._rot

    @property
    def arm(self) -> str:
        return self.meta.get("arm", "")

    def cell_extent(self, key) -> tuple[np.ndarray, np.ndarray]:
        lo = self.origin + np.asarray(key, dtype=float) * self.cell_stride
        return lo, lo + self.cell_size

    def cell_members(self, key) -> np.ndarray:
        c = self._lookup.get(tuple(int(v) for v in key))
        if c is None:
            return np.zeros(0, dtype=np.int64)
        return self.cell_refs[int(self.cell_offsets[c]) : int(self.cell_offsets[c + 1])].astype(np.int64)

    def sample(self, i: int) -> MapSample:
        return MapSample(int(i), self.q[i].copy(), self.rotations[i].copy(), self.centers[i].copy())

    def query_indices(self, target_center, r: float) -> tuple[np.ndarray, np.ndarray]:
        """Indices and distances of samples within ``r``, nearest first."""
        if r < 0:
            raise ValueError("query radius must be non-negative")
        p = np.asarray(target_center, dtype=float)
        if self.sample_count == 0 or np.any(p + r < self.origin) or np.any(p - r > self.upper):
            return np.zeros(0, dtype=np.int64), np.zeros(0)
        t = self.cell_stride
        # cores [o + i t, o + (i + 1) t) tile space and sit inside each cell's extent
        lo = np.floor((p - r - self.origin) / t - 1e-9).astype(np.int64)
        hi = np.floor((p + r - self.origin) / t + 1e-9).astype(np.int64)
        parts = []
        for i in range(lo[0], hi[0] + 1):
            for j in range(lo[1], hi[1] + 1):
                for k in range(lo[2], hi[2] + 1):
                    c = self._lookup.get((i, j, k))
                    if c is not None:
                        parts.append(self.cell_refs[int(self.cell_offsets[c]) : int(self.cell_offsets[c + 1])])
        if not parts:
            return np.zeros(0, dtype=np.int64), np.zeros(0)
        idx = np.unique(np.concatenate(parts)).astype(np.int64)
        dist = np.linalg.norm(self.centers[idx] - p, axis=1)
        keep = dist <= r
        idx, dist = idx[keep], dist[keep]
        order = np.lexsort((idx, dist))
        return idx[order], dist[order]

    def to_bytes(self) -> bytes:
        meta = json.dumps(self.meta, sort_keys=True, separators=(",", ":")).encode()
        head = _HEADER.pack(
            MAGIC,
            FORMAT_VERSION,
            self.chain_hash,
            self.cell_size,
            self.cell_stride,
            self.default_radius,
            *self.origin.tolist(),
            *self.upper.tolist(),
            self.sample_count,
            self.q.shape[1],
            len(meta),
        )
        packed = np.concatenate([self.q, self.quats, self.centers], axis=1) if self.sample_count else np.zeros((0, 0))
        return b"".join(
            [
                head,
                meta,
                struct.pack("<QQ", len(self.cell_keys), len(self.cell_refs)),
                np.ascontiguousarray(self.cell_keys, dtype="<i4").tobytes(),
                np.ascontiguousarray(self.cell_offsets, dtype="<u8").tobytes(),
                np.ascontiguousarray(self.cell_refs, dtype="<u8").tobytes(),
                np.ascontiguousarray(packed, dtype="<f8").tobytes(),
            ]
        )

    def equals(self, other: ReachabilityMap) -> bool:
        return self.to_bytes() == other.to_bytes()


def lattice_axes(chain: KinematicChain, joint_idx, intervals) -> list[np.ndarray]:
    """Endpoint-inclusive sample values per joint, lo + k * step."""
    axes = []
    for i, step in zip(joint_idx, intervals):
        lo, hi = float(chain.lower[i]), float(chain.upper[i])
        if not step > 0:
            raise MapError("sampling interval must be positive")
        if not hi > lo:
            raise MapError(f"joint {chain.joint_names[i]!r} has an empty range")
        n = int(math.floor((hi - lo) / step + 1e-9)) + 1
        axes.append(lo + step * np.arange(n))
    return axes


def _assign_cells(centers, origin, size, stride):
    """(keys, sample index) pairs for every cell whose closed extent holds a center."""
    n = centers.shape[0]
    if n == 0:
        return np.zeros((0, 3), dtype=np.int64), np.zeros(0, dtype=np.int64)
    rel = centers - origin
    first = np.ceil((rel - size) / stride).astype(np.int64) - 1
    span = int(math.ceil(size / stride)) + 2
    keys, owners = [], []
    sidx = np.arange(n, dtype=np.int64)
    offs = np.arange(span)
    for a in offs:
        for b in offs:
            for c in offs:
                k = first + np.array([a, b, c])
                lo = k * stride
                ok = np.all((lo <= rel) & (rel <= lo + size), axis=1)
                keys.append(k[ok])
                owners.append(sidx[ok])
    return np.concatenate(keys), np.concatenate(owners)


def _compute_chunk(path, pre_t, grids, shape, start, stop):
    flat = np.arange(start, stop, dtype=np.int64)
    sub = np.unravel_index(flat, shape)
    Q = np.stack([g[s] for g, s in zip(grids, sub)], axis=1)
    T = path.fk_batch(Q)
    R = T[:, :3, :3]
    centers = T[:, :3, 3] + R @ pre_t
    return Q, matrices_to_quats(R), centers


def build_map(
    chain: KinematicChain,
    arm: str,
    intervals=DEFAULT_INTERVAL,
    cell_size: float = DEFAULT_CELL_SIZE,
    cell_stride: float = DEFAULT_CELL_STRIDE,
    threads: int = 1,
    chunk: int = 65536,
    prune_k: int | None = None,
) -> ReachabilityMap:
    if not cell_stride <= cell_size:
        raise MapError("cell stride must not exceed cell size")
    if not (cell_stride > 0 and cell_size > 0):
        raise MapError("grid parameters must be positive")
    info = chain.arm(arm)
    joint_idx = info.positional
    if joint_idx.size < 1:
        raise MapError("arm has no non-wrist joints to sample")
    if np.isscalar(intervals):
        intervals = [float(intervals)] * joint_idx.size
    intervals = [float(v) for v in intervals]
    if len(intervals) != joint_idx.size:
        raise MapError(f"need {joint_idx.size} sampling intervals, got {len(intervals)}")
    grids = lattice_axes(chain, joint_idx, intervals)
    shape = tuple(len(g) for g in grids)
    total = int(np.prod(shape))
    path = chain.path(info.frames.lower_arm, info.frames.arm_base)
    if not np.array_equal(path.qidx, joint_idx):
        raise MapError("lower-arm path joints do not match the arm's positional joints")
    pre_t = info.pre.translation
    ranges = [(s, min(s + chunk, total)) for s in range(0, total, chunk)]
    if threads > 1 and len(ranges) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(lambda r: _compute_chunk(path, pre_t, grids, shape, *r), ranges))
    else:
        parts = [_compute_chunk(path, pre_t, grids, shape, *r) for r in ranges]
    if parts:
        Q = np.concatenate([p[0] for p in parts])
        quats = np.concatenate([p[1] for p in parts])
        centers = np.concatenate([p[2] for p in parts])
    else:
        Q, quats, centers = np.zeros((0, joint_idx.size)), np.zeros((0, 4)), np.zeros((0, 3))

    lo = centers.min(axis=0) if total else np.zeros(3)
    hi = centers.max(axis=0) if total else np.zeros(3)
    origin = (np.floor(lo / cell_stride) - 1.0) * cell_stride
    keys, owners = _assign_cells(centers, origin, cell_size, cell_stride)
    cell_keys, cell_offsets, cell_refs = _pack_cells(keys, owners)
    wrist_ref = chain.midpoint()[info.wrist]
    meta = {
        "arm": arm,
        "joints": [chain.joint_names[i] for i in joint_idx],
        "wrist_joints": [chain.joint_names[i] for i in info.wrist],
        "wrist_reference": [float(v) for v in wrist_ref],
        "intervals": intervals,
        "lattice_shape": list(shape),
        "sample_count": total,
        "chain_name": chain.name,
    }
    m = ReachabilityMap(
        cell_size=float(cell_size),
        cell_stride=float(cell_stride),
        origin=origin,
        upper=hi,
        q=Q,
        quats=quats,
        centers=centers,
        cell_keys=cell_keys,
        cell_offsets=cell_offsets,
        cell_refs=cell_refs,
        chain_hash=chain.hash,
        meta=meta,
    )
    if prune_k is not None:
        m = prune_cells(m, prune_k)
    log.info("built map for arm %s: %d samples in %d cells", arm, total, len(cell_keys))
    return m


def _pack_cells(keys, owners):
    if keys.shape[0] == 0:
        return np.zeros((0, 3), dtype=np.int32), np.zeros(1, dtype=np.uint64), np.zeros(0, dtype=np.uint64)
    order = np.lexsort((owners, keys[:, 2], keys[:, 1], keys[:, 0]))
    keys, owners = keys[order], owners[order]
    change = np.ones(keys.shape[0], dtype=bool)
    change[1:] = np.any(keys[1:] != keys[:-1], axis=1)
    starts = np.flatnonzero(change)
    offsets = np.append(starts, keys.shape[0]).astype(np.uint64)
    return keys[starts].astype(np.int32), offsets, owners.astype(np.uint64)


def prune_cells(m: ReachabilityMap, k: int) -> ReachabilityMap:
    """Keep at most ``k`` samples per cell, chosen by farthest-point spread in joint space."""
    if k < 1:
        raise MapError("prune_k must be positive")
    refs, offsets = [], [0]
    for c in range(len(m.cell_keys)):
        members = m.cell_refs[int(m.cell_offsets[c]) : int(m.cell_offsets[c + 1])].astype(np.int64)
        if members.size > k:
            pts = m.q[members]
            chosen = [0]
            dmin = np.linalg.norm(pts - pts[0], axis=1)
            while len(chosen) < k:
                nxt = int(np.argmax(dmin))
                chosen.append(nxt)
                dmin = np.minimum(dmin, np.linalg.norm(pts - pts[nxt], axis=1))
            members = np.sort(members[chosen])
        refs.append(members)
        offsets.append(offsets[-1] + members.size)
    meta = dict(m.meta, prune_k=k)
    return ReachabilityMap(
        cell_size=m.cell_size,
        cell_stride=m.cell_stride,
        origin=m.origin,
        upper=m.upper,
        q=m.q,
        quats=m.quats,
        centers=m.centers,
        cell_keys=m.cell_keys,
        cell_offsets=np.array(offsets, dtype=np.uint64),
        cell_refs=np.concatenate(refs).astype(np.uint64) if refs else np.zeros(0, dtype=np.uint64),
        chain_hash=m.chain_hash,
        default_radius=m.default_radius,
        meta=meta,
    )


def query(m: ReachabilityMap, target_center, r: float = DEFAULT_RADIUS) -> list[MapSample]:
    idx, _ = m.query_indices(target_center, r)
    return [m.sample(i) for i in idx]


def map_from_bytes(data: bytes) -> ReachabilityMap:
    if len(data) < _HEADER.size or data[:4] != MAGIC:
        raise MapVersionError("not a reachability map file (bad magic)")
    fields = _HEADER.unpack_from(data, 0)
    magic, version, chain_hash, size, stride, radius = fields[:6]
    origin = np.array(fields[6:9])
    upper = np.array(fields[9:12])
    n, nq, meta_len = fields[12:15]
    if version != FORMAT_VERSION:
        raise MapVersionError(f"map format version {version}, expected {FORMAT_VERSION}")
    pos = _HEADER.size
    try:
        meta = json.loads(data[pos : pos + meta_len].decode())
        pos += meta_len
        n_cells, n_refs = struct.unpack_from("<QQ", data, pos)
        pos += 16

        def take(dtype, count):
            nonlocal pos
            nbytes = np.dtype(dtype).itemsize * count
            if pos + nbytes > len(data):
                raise MapError("truncated map file")
            arr = np.frombuffer(data, dtype=dtype, count=count, offset=pos).copy()
            pos += nbytes
            return arr

        keys = take("<i4", 3 * n_cells).reshape(n_cells, 3).astype(np.int32)
        offsets = take("<u8", n_cells + 1).astype(np.uint64)
        refs = take("<u8", n_refs).astype(np.uint64)
        packed = take("<f8", n * (nq + 7)).reshape(n, nq + 7).astype(np.float64) if n else np.zeros((0, nq + 7))
    except (ValueError, struct.error, UnicodeDecodeError) as exc:
        raise MapError(f"corrupt map file: {exc}") from None
    if pos != len(data):
        raise MapError("trailing bytes in map file")
    return ReachabilityMap(
        cell_size=size,
        cell_stride=stride,
        origin=origin,
        upper=upper,
        q=np.ascontiguousarray(packed[:, :nq]),
        quats=np.ascontiguousarray(packed[:, nq : nq + 4]),
        centers=np.ascontiguousarray(packed[:, nq + 4 :]),
        cell_keys=keys,
        cell_offsets=offsets,
        cell_refs=refs,
        chain_hash=chain_hash,
        default_radius=radius,
        meta=meta,
    )


def save_map(m: ReachabilityMap, path) -> None:
    Path(path).write_bytes(m.to_bytes())


def load_map(path, chain: KinematicChain | None = None) -> ReachabilityMap:
    m = map_from_bytes(Path(path).read_bytes())
    if chain is not None and m.chain_hash != chain.hash:
        warnings.warn(
            f"map {path} was built for a different robot model (hash {m.chain_hash:#x} != {chain.hash:#x})",
            MapChainMismatchWarning,
            stacklevel=2,
        )
    return m


def empty_map(cell_size=DEFAULT_CELL_SIZE, cell_stride=DEFAULT_CELL_STRIDE, n_q: int = 0) -> ReachabilityMap:
    return ReachabilityMap(
        cell_size=cell_size,
        cell_stride=cell_stride,
        origin=np.zeros(3),
        upper=np.zeros(3),
        q=np.zeros((0, n_q)),
        quats=np.zeros((0, 4)),
        centers=np.zeros((0, 3)),
        cell_keys=np.zeros((0, 3), dtype=np.int32),
        cell_offsets=np.zeros(1, dtype=np.uint64),
        cell_refs=np.zeros(0, dtype=np.uint64),
    )
