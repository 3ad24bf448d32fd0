"""File formats for the discrete shape forms and query pools.

- meshes: ASCII OFF
- point clouds: 8-byte little-endian count, then float32 xyz triplets
- voxel grids: magic VOX1, u32 version, u32 V, then (u8 value, u32 run) pairs
  over the C-order flattened occupancy
- query pools: magic QRY1, u8 field-kind code, u32 count, then float32 points,
  float32 targets, u8 tiers

All writers stage to a temp file in the target directory and rename, so a
crash never leaves a half-written artifact behind a manifest reference.
"""
from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .fields import FIELD_KINDS, QueryBatch
from .shapes import PointCloud, TriMesh, VoxelGrid


def staged_write(path: str | os.PathLike, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".stage-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_off(mesh: TriMesh, path) -> None:
    lines = ["OFF", f"{len(mesh.vertices)} {len(mesh.triangles)} 0"]
    for v in mesh.vertices:
        lines.append(f"{v[0]:.9g} {v[1]:.9g} {v[2]:.9g}")
    for t in mesh.triangles:
        lines.append(f"3 {t[0]} {t[1]} {t[2]}")
    staged_write(path, ("\n".join(lines) + "\n").encode("ascii"))


def read_off(path) -> TriMesh:
    with open(path, "r", encoding="ascii") as f:
        tokens = f.read().split()
    if not tokens or tokens[0] != "OFF":
        raise ValueError(f"{path}: not an OFF file")
    nv, nf = int(tokens[1]), int(tokens[2])
    pos = 4
    verts = np.array(tokens[pos:pos + 3 * nv], dtype=np.float64).reshape(nv, 3)
    pos += 3 * nv
    tris = []
    for _ in range(nf):
        cnt = int(tokens[pos])
        if cnt != 3:
            raise ValueError(f"{path}: non-triangle face")
        tris.append([int(tokens[pos + 1]), int(tokens[pos + 2]), int(tokens[pos + 3])])
        pos += 4
    return TriMesh(vertices=verts, triangles=np.array(tris, dtype=np.int64))


def write_cloud(cloud: PointCloud, path) -> None:
    header = struct.pack("<Q", len(cloud))
    body = cloud.points.astype("<f4").tobytes()
    staged_write(path, header + body)


def read_cloud(path) -> PointCloud:
    raw = Path(path).read_bytes()
    (n,) = struct.unpack_from("<Q", raw, 0)
    pts = np.frombuffer(raw, dtype="<f4", count=3 * n, offset=8)
    return PointCloud(points=pts.reshape(n, 3).astype(np.float64))


_VOX_MAGIC = b"VOX1"


def write_voxels(grid: VoxelGrid, path) -> None:
    flat = grid.occupancy.ravel(order="C").astype(np.uint8)
    runs = []
    if len(flat):
        boundaries = np.flatnonzero(np.diff(flat)) + 1
        starts = np.concatenate([[0], boundaries])
        ends = np.concatenate([boundaries, [len(flat)]])
        for s, e in zip(starts, ends):
            runs.append(struct.pack("<BI", int(flat[s]), int(e - s)))
    head = _VOX_MAGIC + struct.pack("<II", 1, grid.resolution)
    staged_write(path, head + b"".join(runs))


def read_voxels(path) -> VoxelGrid:
    raw = Path(path).read_bytes()
    if raw[:4] != _VOX_MAGIC:
        raise ValueError(f"{path}: bad voxel magic")
    version, v = struct.unpack_from("<II", raw, 4)
    if version != 1:
        raise ValueError(f"{path}: unsupported voxel format version {version}")
    vals = []
    off = 12
    while off < len(raw):
        bit, run = struct.unpack_from("<BI", raw, off)
        off += 5
        vals.append(np.full(run, bit, dtype=bool))
    flat = np.concatenate(vals) if vals else np.zeros(0, dtype=bool)
    if flat.size != v ** 3:
        raise ValueError(f"{path}: run lengths sum to {flat.size}, expected {v ** 3}")
    return VoxelGrid(resolution=v, occupancy=flat.reshape(v, v, v))


_QRY_MAGIC = b"QRY1"


def write_queries(batch: QueryBatch, path) -> None:
    kind_code = FIELD_KINDS.index(batch.field_kind)
    head = _QRY_MAGIC + struct.pack("<BI", kind_code, len(batch))
    body = (batch.points.astype("<f4").tobytes()
            + batch.targets.astype("<f4").tobytes()
            + batch.tiers.astype(np.uint8).tobytes())
    staged_write(path, head + body)


def read_queries(path) -> QueryBatch:
    raw = Path(path).read_bytes()
    if raw[:4] != _QRY_MAGIC:
        raise ValueError(f"{path}: bad query-pool magic")
    kind_code, n = struct.unpack_from("<BI", raw, 4)
    off = 9
    pts = np.frombuffer(raw, dtype="<f4", count=3 * n, offset=off).reshape(n, 3)
    off += 12 * n
    targets = np.frombuffer(raw, dtype="<f4", count=n, offset=off)
    off += 4 * n
    tiers = np.frombuffer(raw, dtype=np.uint8, count=n, offset=off)
    return QueryBatch(points=pts.astype(np.float64), targets=targets.astype(np.float64),
                      tiers=tiers.copy(), field_kind=FIELD_KINDS[kind_code])
