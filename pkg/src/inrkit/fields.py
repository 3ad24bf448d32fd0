"""Ground-truth field values (udf/sdf/occ), label encoding, query sampling."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .rng import stream
from .shapes import PointCloud, ShapeBundle, TriMesh, VoxelGrid, sample_mesh_surface

FIELD_KINDS = ("udf", "sdf", "occ")
TIERS = ("close", "medium", "far", "uniform")
TIER_SIGMA = {"close": 0.001, "medium": 0.01, "far": 0.1}
# default tier proportions (close : medium : far : uniform)
TIER_RATIO = (0.5, 0.4, 0.05, 0.05)


def udf_gt(cloud: PointCloud, queries: np.ndarray) -> np.ndarray:
    """Exact distance to the nearest cloud point per query."""
    if len(cloud) == 0:
        raise ValueError("empty cloud")
    queries = np.asarray(queries, dtype=np.float64)
    d, _ = cKDTree(cloud.points).query(queries)
    return np.asarray(d, dtype=np.float64)


def _point_triangle_distances(queries: np.ndarray, mesh: TriMesh) -> np.ndarray:
    """Min distance from each query to the mesh surface (closest-point test)."""
    v, t = mesh.vertices, mesh.triangles
    a, b, c = v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]
    ab = b - a
    ac = c - a
    bc = c - b
    best = np.full(len(queries), np.inf)
    chunk = max(1, int(5e5 / max(len(t), 1)))
    for lo in range(0, len(queries), chunk):
        p = queries[lo:lo + chunk]
        ap = p[:, None, :] - a[None, :, :]  # (Q, T, 3)
        bp = p[:, None, :] - b[None, :, :]
        cp = p[:, None, :] - c[None, :, :]
        d1 = np.einsum("tj,qtj->qt", ab, ap)
        d2 = np.einsum("tj,qtj->qt", ac, ap)
        d3 = np.einsum("tj,qtj->qt", ab, bp)
        d4 = np.einsum("tj,qtj->qt", ac, bp)
        d5 = np.einsum("tj,qtj->qt", ab, cp)
        d6 = np.einsum("tj,qtj->qt", ac, cp)

        # orthogonal projection, only valid when it lands inside the triangle
        va = d3 * d6 - d5 * d4
        vb = d5 * d2 - d1 * d6
        vc = d1 * d4 - d3 * d2
        denom = va + vb + vc
        safe = np.where(np.abs(denom) < 1e-300, 1e-300, denom)
        wv = vb / safe
        ww = vc / safe
        interior = (wv >= 0.0) & (ww >= 0.0) & (wv + ww <= 1.0) & (denom > 0)
        cand = a[None] + wv[..., None] * ab[None] + ww[..., None] * ac[None]
        dist_face = np.linalg.norm(p[:, None, :] - cand, axis=2)
        dist_face = np.where(interior, dist_face, np.inf)

        # segment projections cover every non-interior region (incl. vertices)
        def seg_dist(origin, edge, num, den):
            tt = np.clip(num / np.where(np.abs(den) < 1e-300, 1e-300, den), 0.0, 1.0)
            on = origin[None] + tt[..., None] * edge[None]
            return np.linalg.norm(p[:, None, :] - on, axis=2)

        dist_ab = seg_dist(a, ab, d1, d1 - d3)
        dist_ac = seg_dist(a, ac, d2, d2 - d6)
        dist_bc = seg_dist(b, bc, d4 - d3, (d4 - d3) + (d5 - d6))
        d_all = np.minimum(np.minimum(dist_face, dist_ab),
                           np.minimum(dist_ac, dist_bc))
        best[lo:lo + chunk] = d_all.min(axis=1)
    return best


_RAY_DIRS = np.array([
    [0.5657487693, 0.5479782503, 0.6162332714],
    [-0.3713906764, 0.7427813527, -0.5570860145],
    [0.2672612419, -0.5345224838, -0.8017837257],
])


def _ray_parity(queries: np.ndarray, mesh: TriMesh, direction: np.ndarray) -> np.ndarray:
    """Odd triangle-crossing count along +direction means inside."""
    v, t = mesh.vertices, mesh.triangles
    a, b, c = v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]
    e1 = b - a
    e2 = c - a
    h = np.cross(direction, e2)  # (T, 3)
    det = np.einsum("tj,tj->t", e1, h)
    ok = np.abs(det) > 1e-12
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    counts = np.zeros(len(queries), dtype=np.int64)
    chunk = max(1, int(4e6 / max(len(t), 1)))
    for lo in range(0, len(queries), chunk):
        p = queries[lo:lo + chunk]
        s = p[:, None, :] - a[None, :, :]  # (Q, T, 3)
        u = np.einsum("qtj,tj->qt", s, h) * inv
        q = np.cross(s, e1[None, :, :])
        w = np.einsum("qtj,j->qt", q, direction) * inv
        tt = np.einsum("qtj,tj->qt", q, e2) * inv
        hit = ok[None, :] & (u >= 0) & (w >= 0) & (u + w <= 1) & (tt > 1e-12)
        counts[lo:lo + chunk] = hit.sum(axis=1)
    return counts % 2 == 1


def sdf_gt(mesh: TriMesh, queries: np.ndarray) -> np.ndarray:
    """Distance to the surface, negative inside (ray-parity majority vote)."""
    if not mesh.watertight:
        raise ValueError("sdf ground truth needs a watertight mesh")
    queries = np.asarray(queries, dtype=np.float64)
    dist = _point_triangle_distances(queries, mesh)
    votes = np.zeros(len(queries), dtype=np.int64)
    for d in _RAY_DIRS:
        votes += _ray_parity(queries, mesh, d)
    inside = votes >= 2
    return np.where(inside, -dist, dist)


def occ_gt(grid: VoxelGrid, centroids: np.ndarray) -> np.ndarray:
    """Stored occupancy bit per centroid; centroids must sit on the lattice."""
    centroids = np.asarray(centroids, dtype=np.float64)
    v = grid.resolution
    delta = 2.0 / v
    idx_f = (centroids + 1.0) / delta - 0.5
    idx = np.rint(idx_f).astype(np.int64)
    recon = -1.0 + (idx + 0.5) * delta
    if np.abs(recon - centroids).max() > 1e-9:
        raise ValueError("centroid off the grid lattice")
    if idx.min() < 0 or idx.max() >= v:
        raise ValueError("centroid outside the grid")
    return grid.occupancy[idx[:, 0], idx[:, 1], idx[:, 2]].astype(np.float64)


def encode_distance_labels(values: np.ndarray, field_kind: str, max_dist: float = 0.1) -> np.ndarray:
    """Map raw distances to [0,1] targets: surface at 1 (udf) or 0.5 (sdf)."""
    if max_dist <= 0:
        raise ValueError("max_dist must be positive")
    values = np.asarray(values, dtype=np.float64)
    if field_kind == "udf":
        return np.clip(1.0 - values / max_dist, 0.0, 1.0)
    if field_kind == "sdf":
        return np.clip(0.5 - values / (2.0 * max_dist), 0.0, 1.0)
    if field_kind == "occ":
        return values  # already bits
    raise ValueError(f"unknown field kind {field_kind!r}")


def decode_distance_labels(labels: np.ndarray, field_kind: str, max_dist: float = 0.1) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.float64)
    if field_kind == "udf":
        return (1.0 - labels) * max_dist
    if field_kind == "sdf":
        return (0.5 - labels) * 2.0 * max_dist
    if field_kind == "occ":
        return labels
    raise ValueError(f"unknown field kind {field_kind!r}")


@dataclass
class QueryBatch:
    points: np.ndarray  # (N, 3)
    targets: np.ndarray  # (N,) raw distances (udf/sdf) or occupancy bits
    tiers: np.ndarray  # (N,) uint8 index into TIERS
    field_kind: str

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        self.targets = np.asarray(self.targets, dtype=np.float64)
        self.tiers = np.asarray(self.tiers, dtype=np.uint8)
        if self.field_kind not in FIELD_KINDS:
            raise ValueError(f"unknown field kind {self.field_kind!r}")
        if not (len(self.points) == len(self.targets) == len(self.tiers)):
            raise ValueError("query batch arrays out of sync")
        if not np.isfinite(self.targets).all():
            raise ValueError("non-finite query targets")

    def __len__(self) -> int:
        return len(self.points)


def tier_counts(total: int) -> dict[str, int]:
    """Split a total query budget by the default tier proportions."""
    if total <= 0:
        raise ValueError("total must be positive")
    counts = {name: int(np.floor(total * frac)) for name, frac in zip(TIERS, TIER_RATIO)}
    counts["close"] += total - sum(counts.values())
    return counts


def sample_queries(bundle: ShapeBundle, field_kind: str,
                   counts: dict[str, int] | None = None,
                   seed: int = 0, total: int | None = None) -> QueryBatch:
    """Build the per-shape training query pool.

    udf/sdf pools mix noisy surface points (three noise tiers) with uniform
    volume samples; occ pools are simply every voxel centroid with its bit.
    """
    if field_kind not in FIELD_KINDS:
        raise ValueError(f"unknown field kind {field_kind!r}")
    if field_kind == "occ":
        cents = bundle.voxels.centroids()
        bits = occ_gt(bundle.voxels, cents)
        tiers = np.full(len(cents), TIERS.index("uniform"), dtype=np.uint8)
        return QueryBatch(points=cents, targets=bits, tiers=tiers, field_kind="occ")

    if field_kind == "sdf" and not bundle.mesh.watertight:
        raise ValueError("sdf queries need a watertight mesh")
    if counts is None:
        counts = tier_counts(50_000 if total is None else total)
    if any(c < 0 for c in counts.values()) or sum(counts.values()) <= 0:
        raise ValueError("tier counts must be non-negative and sum > 0")

    rng = stream(seed, "queries", bundle.spec.seed, field_kind)
    pts_parts: list[np.ndarray] = []
    tier_parts: list[np.ndarray] = []
    for ti, tier in enumerate(TIERS):
        n = counts.get(tier, 0)
        if n == 0:
            continue
        if tier == "uniform":
            p = rng.uniform(-1.0, 1.0, size=(n, 3))
        else:
            if field_kind == "udf":
                base = bundle.cloud.points[rng.integers(0, len(bundle.cloud), size=n)]
            else:
                base = sample_mesh_surface(bundle.mesh, n, rng)
            p = base + rng.normal(scale=TIER_SIGMA[tier], size=(n, 3))
            np.clip(p, -1.0, 1.0, out=p)
        pts_parts.append(p)
        tier_parts.append(np.full(n, ti, dtype=np.uint8))
    points = np.vstack(pts_parts)
    tiers = np.concatenate(tier_parts)
    if field_kind == "udf":
        targets = udf_gt(bundle.cloud, points)
    else:
        targets = sdf_gt(bundle.mesh, points)
    return QueryBatch(points=points, targets=targets, tiers=tiers, field_kind=field_kind)
