"""Turn fitted fields back into discrete shapes.

Three extraction paths: dense point clouds from unsigned distance fields via
iterative surface projection, triangle meshes from signed distance fields via
lookup-table marching cubes, and voxel grids from occupancy fields by
thresholding predicted probabilities at cell centroids.  All of them consume a
small field-evaluator protocol (``values``, optionally
``values_and_gradients``) so analytic oracles, fitted networks, and decoder
heads plug in interchangeably.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .fields import decode_distance_labels
from .fitting import InrRecord
from .mc_tables import (
    CUBE_CORNERS,
    EDGE_AXIS,
    EDGE_ENDPOINTS,
    EDGE_MASKS,
    TRIANGLE_EDGES,
)
from .mlp import input_gradients, mlp_forward
from .rng import stream
from .shapes import PointCloud, TriMesh, VoxelGrid

log = logging.getLogger(__name__)

# cap per-forward batch so dense grids do not blow up memory
_EVAL_CHUNK = 262_144


def decode_raw_field(raw: np.ndarray, field_kind: str, loss_kind: str,
                     max_dist: float) -> tuple[np.ndarray, np.ndarray]:
    """Physical value plus d(value)/d(raw output) for a trained field net.

    udf/sdf networks are trained against encoded labels, so raw outputs are
    logits (bce/focal) or labels (mse); occupancy values decode to
    probabilities.  The returned slope carries the chain rule for adapters
    that also propagate input gradients.
    """
    if loss_kind in ("bce", "focal"):
        label = expit(raw)
        slope = label * (1.0 - label)
    else:  # mse fits regress the label directly
        label = np.asarray(raw, dtype=np.float64)
        slope = np.ones_like(label)
    if field_kind == "occ":
        return label, slope
    value = decode_distance_labels(label, field_kind, max_dist)
    factor = -max_dist if field_kind == "udf" else -2.0 * max_dist
    return value, slope * factor


class InrField:
    """Physical-units view of a fitted INR: distances, or occ probabilities."""

    def __init__(self, record: InrRecord, chunk: int = _EVAL_CHUNK):
        if chunk < 1:
            raise ValueError("chunk must be positive")
        self.record = record
        self.kind = record.field_kind
        self._chunk = chunk

    def _decode(self, raw: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return decode_raw_field(raw, self.kind, self.record.loss_kind,
                                self.record.max_dist)

    def values(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.float64)
        out = np.empty(len(pts))
        for s in range(0, len(pts), self._chunk):
            raw = mlp_forward(self.record.params, pts[s:s + self._chunk])[0][:, 0]
            out[s:s + self._chunk] = self._decode(raw)[0]
        return out

    def values_and_gradients(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        pts = np.asarray(pts, dtype=np.float64)
        vals = np.empty(len(pts))
        grads = np.empty_like(pts)
        for s in range(0, len(pts), self._chunk):
            raw, graw, _ = input_gradients(self.record.params, pts[s:s + self._chunk])
            v, dv = self._decode(raw)
            vals[s:s + self._chunk] = v
            grads[s:s + self._chunk] = dv[:, None] * graw
        return vals, grads


def _field_values_and_gradients(field, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    paired = getattr(field, "values_and_gradients", None)
    if paired is not None:
        return paired(pts)
    return field.values(pts), field.gradients(pts)


# --- udf point sampling ---------------------------------------------------


@dataclass(frozen=True)
class UdfSamplerConfig:
    target_points: int = 4096
    distance_threshold: float = 0.05
    iterations: int = 5
    scatter_factor: int = 8
    max_rounds: int = 20

    def __post_init__(self):
        if self.target_points < 1:
            raise ValueError("target_points must be at least 1")
        if self.distance_threshold <= 0:
            raise ValueError("distance_threshold must be positive")
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")
        if self.scatter_factor < 1 or self.max_rounds < 1:
            raise ValueError("scatter_factor and max_rounds must be at least 1")


def project_points_udf(field, points: np.ndarray, iterations: int = 5,
                       stuck_eps: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
    """Walk points onto the zero set: p <- p - f(p) * grad f(p) / ||grad f(p)||.

    Returns (projected points, stuck mask).  A point is stuck when the field
    gradient vanishes under ``stuck_eps``; stuck points stop moving and are
    flagged instead of raising, so batch sampling can discard them.
    """
    if getattr(field, "kind", None) != "udf":
        raise ValueError("projection expects an unsigned distance field")
    if iterations < 1:
        raise ValueError("iterations must be at least 1")
    pts = np.asarray(points, dtype=np.float64)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts).copy()
    if pts.shape[1] != 3:
        raise ValueError("points must be (N, 3)")
    stuck = np.zeros(len(pts), dtype=bool)
    for _ in range(iterations):
        live = np.nonzero(~stuck)[0]
        if live.size == 0:
            break
        f, g = _field_values_and_gradients(field, pts[live])
        norm = np.linalg.norm(g, axis=1)
        dead = (norm < stuck_eps) | ~np.isfinite(norm)
        stuck[live[dead]] = True
        ok = live[~dead]
        step = (f[~dead] / norm[~dead])[:, None] * g[~dead]
        pts[ok] -= step
    if single:
        return pts[0], stuck[0]
    return pts, stuck


class UdfSamplingError(RuntimeError):
    """Scatter rounds exhausted before the requested count was reached."""

    def __init__(self, message: str, points_found: int):
        super().__init__(message)
        self.points_found = points_found


def sample_cloud_udf(field, config: UdfSamplerConfig | None = None,
                     seed: int = 0) -> PointCloud:
    """Dense surface samples from a udf: scatter, filter, refine, repeat.

    Each round scatters ``scatter_factor *`` target uniform points, drops any
    whose predicted distance exceeds the threshold, and refines survivors with
    projection iterations.  Rounds repeat until the target count is met; the
    output has exactly ``target_points`` rows.  Deterministic given the seed.
    """
    config = config or UdfSamplerConfig()
    if getattr(field, "kind", None) != "udf":
        raise ValueError("sampling expects an unsigned distance field")
    rng = stream(seed, "udf-scatter")
    kept: list[np.ndarray] = []
    total = 0
    for _ in range(config.max_rounds):
        batch = rng.uniform(-1.0, 1.0, size=(config.scatter_factor * config.target_points, 3))
        dist = field.values(batch)
        survivors = batch[dist <= config.distance_threshold]
        if len(survivors):
            proj, stuck = project_points_udf(field, survivors, config.iterations)
            good = np.clip(proj[~stuck], -1.0, 1.0)
            if len(good):
                kept.append(good)
                total += len(good)
        if total >= config.target_points:
            break
    if total == 0:
        raise UdfSamplingError(
            f"no surface points found in {config.max_rounds} scatter rounds; "
            "the field looks empty", points_found=0)
    if total < config.target_points:
        raise UdfSamplingError(
            f"only {total} of {config.target_points} points found after "
            f"{config.max_rounds} scatter rounds", points_found=total)
    return PointCloud(np.concatenate(kept)[:config.target_points])


# --- marching cubes ---------------------------------------------------------


@dataclass(frozen=True)
class McConfig:
    resolution: int = 128
    iso_level: float = 0.0

    def __post_init__(self):
        if self.resolution < 2:
            raise ValueError("resolution must be at least 2")


def _edge_keys(base: np.ndarray, axis: int, n: int) -> np.ndarray:
    # unique integer per lattice edge: flattened lower corner, then axis
    return ((base[:, 0] * (n + 1) + base[:, 1]) * (n + 1) + base[:, 2]) * 3 + axis


def _is_closed(triangles: np.ndarray) -> bool:
    if len(triangles) == 0:
        return False
    edges = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]],
                            triangles[:, [2, 0]]])
    edges = np.sort(edges, axis=1)
    _, counts = np.unique(edges, axis=0, return_counts=True)
    return bool((counts == 2).all())


def marching_cubes(field, config: McConfig | None = None) -> TriMesh:
    """Standard 256-case marching cubes over a uniform grid on [-1,1]^3.

    Triangle vertices are placed by linear interpolation of the two corner
    values along each crossing edge (midpoint when the values tie).  Vertices
    on a shared lattice edge are welded by exact edge identity, cubes are
    processed in lexicographic order, and zero-area triangles from vertices
    welded onto the same corner are dropped.  Triangles wind so normals point
    away from the negative side of the field.
    """
    config = config or McConfig()
    n = config.resolution
    iso = config.iso_level
    xs = np.linspace(-1.0, 1.0, n + 1)
    gx, gy, gz = np.meshgrid(xs, xs, xs, indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)
    vals = np.empty(len(pts))
    for s in range(0, len(pts), _EVAL_CHUNK):
        vals[s:s + _EVAL_CHUNK] = field.values(pts[s:s + _EVAL_CHUNK])
    if not np.isfinite(vals).all():
        raise ValueError("non-finite field values on the sampling grid")
    vals = vals.reshape(n + 1, n + 1, n + 1)

    inside = vals < iso
    index = np.zeros((n, n, n), dtype=np.int32)
    for v, (dx, dy, dz) in enumerate(CUBE_CORNERS):
        index |= inside[dx:dx + n, dy:dy + n, dz:dz + n].astype(np.int32) << v
    masks = EDGE_MASKS[index]
    cubes = np.argwhere(masks != 0)  # lexicographic (i, j, k)
    if len(cubes) == 0:
        log.info("iso level %g never crossed; returning an empty mesh", iso)
        return TriMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
    amask = masks[cubes[:, 0], cubes[:, 1], cubes[:, 2]]
    aindex = index[cubes[:, 0], cubes[:, 1], cubes[:, 2]]

    rows_per_edge: list[np.ndarray] = []
    keys_parts: list[np.ndarray] = []
    vert_parts: list[np.ndarray] = []
    for e in range(12):
        rows = np.nonzero((amask >> e) & 1)[0]
        if rows.size == 0:
            rows_per_edge.append(rows)
            continue
        a0 = cubes[rows] + CUBE_CORNERS[EDGE_ENDPOINTS[e, 0]]
        a1 = cubes[rows] + CUBE_CORNERS[EDGE_ENDPOINTS[e, 1]]
        f0 = vals[a0[:, 0], a0[:, 1], a0[:, 2]]
        f1 = vals[a1[:, 0], a1[:, 1], a1[:, 2]]
        denom = f1 - f0
        mu = np.where(denom != 0.0, (iso - f0) / np.where(denom == 0.0, 1.0, denom), 0.5)
        vert_parts.append(xs[a0] + mu[:, None] * (xs[a1] - xs[a0]))
        keys_parts.append(_edge_keys(np.minimum(a0, a1), int(EDGE_AXIS[e]), n))
        rows_per_edge.append(rows)

    keys = np.concatenate(keys_parts)
    verts = np.concatenate(vert_parts)
    ukeys, first, inverse = np.unique(keys, return_index=True, return_inverse=True)
    vertices = verts[first]

    slot = np.full((len(cubes), 12), -1, dtype=np.int64)
    offset = 0
    for e in range(12):
        rows = rows_per_edge[e]
        if rows.size:
            slot[rows, e] = inverse[offset:offset + rows.size]
            offset += rows.size

    local = TRIANGLE_EDGES[aindex][:, :15].reshape(len(cubes), 5, 3)
    valid = local[:, :, 0] >= 0
    cube_rows = np.broadcast_to(np.arange(len(cubes))[:, None, None], local.shape)
    tris = slot[cube_rows, np.clip(local, 0, 11)][valid]
    # table order winds toward the negative side; flip for outward normals
    tris = tris[:, [0, 2, 1]]
    nondegenerate = ((tris[:, 0] != tris[:, 1]) & (tris[:, 1] != tris[:, 2])
                     & (tris[:, 0] != tris[:, 2]))
    tris = tris[nondegenerate]
    if len(tris) == 0:
        log.info("all candidate triangles degenerate; returning an empty mesh")
        return TriMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
    return TriMesh(vertices, tris, watertight=_is_closed(tris))


# --- occupancy voxelization -------------------------------------------------


def voxelize_occ(field, resolution: int = 32, threshold: float = 0.4) -> VoxelGrid:
    """Occupancy grid from predicted probabilities at all cell centroids.

    A cell is occupied iff its probability is strictly greater than the
    threshold, so raising the threshold never adds occupied cells.
    """
    if getattr(field, "kind", None) != "occ":
        raise ValueError("voxelization expects an occupancy field")
    if resolution < 1:
        raise ValueError("resolution must be at least 1")
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")
    grid = VoxelGrid(resolution, np.zeros((resolution,) * 3, dtype=bool))
    probs = np.empty(resolution ** 3)
    centroids = grid.centroids()
    for s in range(0, len(centroids), _EVAL_CHUNK):
        probs[s:s + _EVAL_CHUNK] = field.values(centroids[s:s + _EVAL_CHUNK])
    grid.occupancy = (probs > threshold).reshape((resolution,) * 3)
    return grid
