"""Round trips for the on-disk formats."""
import os

import numpy as np
import pytest

from inrkit.fields import QueryBatch
from inrkit.io3d import (
    read_cloud,
    read_off,
    read_queries,
    read_voxels,
    write_cloud,
    write_off,
    write_queries,
    write_voxels,
)
from inrkit.shapes import PointCloud, ShapeSpec, VoxelGrid, gen_shape


def test_off_round_trip(tmp_path):
    mesh = gen_shape(ShapeSpec(kind="box", dims=(0.4, 0.3, 0.2), seed=1)).mesh
    path = tmp_path / "box.off"
    write_off(mesh, path)
    back = read_off(path)
    assert np.array_equal(back.triangles, mesh.triangles)
    assert np.abs(back.vertices - mesh.vertices).max() < 1e-7


def test_off_rejects_garbage(tmp_path):
    path = tmp_path / "bad.off"
    path.write_text("PLY\n0 0 0\n")
    with pytest.raises(ValueError):
        read_off(path)


def test_cloud_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    cloud = PointCloud(points=rng.uniform(-1, 1, size=(100, 3)))
    path = tmp_path / "c.cloud"
    write_cloud(cloud, path)
    back = read_cloud(path)
    # storage is float32; the round trip is exact at that precision
    assert np.array_equal(back.points, cloud.points.astype(np.float32).astype(np.float64))


def test_voxel_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    grid = VoxelGrid(resolution=8, occupancy=rng.uniform(size=(8, 8, 8)) > 0.7)
    path = tmp_path / "g.vox"
    write_voxels(grid, path)
    back = read_voxels(path)
    assert back.resolution == 8
    assert np.array_equal(back.occupancy, grid.occupancy)


def test_voxel_bad_magic(tmp_path):
    path = tmp_path / "bad.vox"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(ValueError):
        read_voxels(path)


def test_queries_round_trip(tmp_path):
    rng = np.random.default_rng(4)
    batch = QueryBatch(
        points=rng.uniform(-1, 1, size=(50, 3)),
        targets=rng.uniform(0, 0.2, size=50),
        tiers=rng.integers(0, 4, size=50).astype(np.uint8),
        field_kind="udf",
    )
    path = tmp_path / "q.qry"
    write_queries(batch, path)
    back = read_queries(path)
    assert back.field_kind == "udf"
    assert np.array_equal(back.tiers, batch.tiers)
    assert np.array_equal(back.points, batch.points.astype(np.float32).astype(np.float64))
    assert np.array_equal(back.targets, batch.targets.astype(np.float32).astype(np.float64))


def test_writes_are_staged(tmp_path):
    cloud = PointCloud(points=np.zeros((3, 3)))
    write_cloud(cloud, tmp_path / "a.cloud")
    leftovers = [f for f in os.listdir(tmp_path) if f.startswith(".stage-")]
    assert leftovers == []


def test_write_deterministic_bytes(tmp_path):
    bundle = gen_shape(ShapeSpec(kind="sphere", dims=(0.5,), seed=7))
    p1, p2 = tmp_path / "a.off", tmp_path / "b.off"
    write_off(bundle.mesh, p1)
    write_off(bundle.mesh, p2)
    assert p1.read_bytes() == p2.read_bytes()
