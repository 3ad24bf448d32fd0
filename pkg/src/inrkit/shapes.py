"""Procedural shapes: analytic distance fields plus matching discrete forms.

Four families (sphere, box, torus, cylinder), each expressible as an exact
signed distance function and as a watertight triangle mesh.  A shape bundle
carries mesh, surface point cloud, solid voxel grid, and the analytic field,
so ground-truth ops and oracle tests all see the same geometry.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rng import stream

KINDS = ("sphere", "box", "torus", "cylinder")


@dataclass(frozen=True)
class ShapeSpec:
    kind: str
    dims: tuple[float, ...]  # sphere: (r,); box: (hx,hy,hz); torus: (R,r); cylinder: (r,h)
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown shape kind {self.kind!r}")
        n_dims = {"sphere": 1, "box": 3, "torus": 2, "cylinder": 2}[self.kind]
        if len(self.dims) != n_dims:
            raise ValueError(f"{self.kind} needs {n_dims} dims, got {len(self.dims)}")
        if any(d <= 0 for d in self.dims) or self.scale <= 0:
            raise ValueError("dims and scale must be positive")
        if self.kind == "torus" and self.dims[1] >= self.dims[0]:
            raise ValueError("torus minor radius must be below major radius")
        ext = self.extent()
        for c in range(3):
            if abs(self.center[c]) + ext[c] > 1.0:
                raise ValueError(f"shape spec leaves [-1,1]^3 along axis {c}")

    def extent(self) -> tuple[float, float, float]:
        """Half-extent of the scaled bounding box, per axis."""
        d = self.dims
        if self.kind == "sphere":
            e = (d[0], d[0], d[0])
        elif self.kind == "box":
            e = d
        elif self.kind == "torus":
            e = (d[0] + d[1], d[1], d[0] + d[1])
        else:
            e = (d[0], d[1], d[0])
        return tuple(self.scale * x for x in e)  # type: ignore[return-value]


@dataclass
class PointCloud:
    points: np.ndarray  # (N, 3) float64

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.ndim != 2 or self.points.shape[1] != 3 or len(self.points) == 0:
            raise ValueError("point cloud must be a non-empty (N, 3) array")
        if np.abs(self.points).max() > 1.0 + 1e-9:
            raise ValueError("point cloud leaves the [-1,1]^3 volume")

    def __len__(self) -> int:
        return len(self.points)


@dataclass
class TriMesh:
    vertices: np.ndarray  # (Nv, 3) float64
    triangles: np.ndarray  # (Nt, 3) int64
    watertight: bool = False

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64)
        self.triangles = np.asarray(self.triangles, dtype=np.int64)
        if len(self.triangles) and (self.triangles.min() < 0
                                    or self.triangles.max() >= len(self.vertices)):
            raise ValueError("triangle index out of range")

    def signed_volume(self) -> float:
        v = self.vertices
        t = self.triangles
        a, b, c = v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]
        return float(np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0)


@dataclass
class VoxelGrid:
    resolution: int
    occupancy: np.ndarray  # (V, V, V) bool

    def __post_init__(self):
        self.occupancy = np.asarray(self.occupancy, dtype=bool)
        if self.occupancy.shape != (self.resolution,) * 3:
            raise ValueError("occupancy shape does not match resolution")

    def centroids(self) -> np.ndarray:
        """All V^3 cell centroids on the uniform lattice over [-1,1]^3."""
        v = self.resolution
        axis = -1.0 + (np.arange(v) + 0.5) * (2.0 / v)
        gx, gy, gz = np.meshgrid(axis, axis, axis, indexing="ij")
        return np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)


class AnalyticField:
    """Exact sdf (and derived udf) with exact gradients, for oracle tests."""

    def __init__(self, value_fn, grad_fn, kind: str = "sdf"):
        self._value = value_fn
        self._grad = grad_fn
        self.kind = kind

    def values(self, pts: np.ndarray) -> np.ndarray:
        return self._value(np.asarray(pts, dtype=np.float64))

    def gradients(self, pts: np.ndarray) -> np.ndarray:
        return self._grad(np.asarray(pts, dtype=np.float64))

    def udf(self) -> "AnalyticField":
        if self.kind == "udf":
            return self

        def val(p):
            return np.abs(self._value(p))

        def grad(p):
            s = np.sign(self._value(p))
            s[s == 0.0] = 1.0
            return self._grad(p) * s[:, None]

        return AnalyticField(val, grad, kind="udf")


def _sdf_local(kind: str, dims: tuple[float, ...], q: np.ndarray) -> np.ndarray:
    if kind == "sphere":
        return np.linalg.norm(q, axis=1) - dims[0]
    if kind == "box":
        h = np.array(dims)
        d = np.abs(q) - h
        outside = np.linalg.norm(np.maximum(d, 0.0), axis=1)
        inside = np.minimum(d.max(axis=1), 0.0)
        return outside + inside
    if kind == "torus":
        big_r, small_r = dims
        rho = np.hypot(q[:, 0], q[:, 2])
        return np.hypot(rho - big_r, q[:, 1]) - small_r
    # capped cylinder, axis y
    r, h = dims
    d0 = np.hypot(q[:, 0], q[:, 2]) - r
    d1 = np.abs(q[:, 1]) - h
    d = np.stack([d0, d1], axis=1)
    return np.minimum(d.max(axis=1), 0.0) + np.linalg.norm(np.maximum(d, 0.0), axis=1)


def _sdf_grad_local(kind: str, dims: tuple[float, ...], q: np.ndarray) -> np.ndarray:
    eps = 1e-300
    if kind == "sphere":
        n = np.linalg.norm(q, axis=1, keepdims=True)
        return q / np.maximum(n, eps)
    if kind == "box":
        h = np.array(dims)
        d = np.abs(q) - h
        g = np.zeros_like(q)
        pos = np.maximum(d, 0.0)
        npos = np.linalg.norm(pos, axis=1)
        out = npos > 0
        g[out] = pos[out] / npos[out, None]
        ins = ~out
        if ins.any():
            ax = d[ins].argmax(axis=1)
            g[np.where(ins)[0], ax] = 1.0
        return _apply_octant(g, q)
    if kind == "torus":
        big_r, _ = dims
        rho = np.maximum(np.hypot(q[:, 0], q[:, 2]), eps)
        lx = rho - big_r
        ln = np.maximum(np.hypot(lx, q[:, 1]), eps)
        gx = (lx / ln) * (q[:, 0] / rho)
        gz = (lx / ln) * (q[:, 2] / rho)
        gy = q[:, 1] / ln
        return np.stack([gx, gy, gz], axis=1)
    r, h = dims
    rho = np.maximum(np.hypot(q[:, 0], q[:, 2]), eps)
    d0 = rho - r
    d1 = np.abs(q[:, 1]) - h
    g = np.zeros_like(q)
    radial = np.stack([q[:, 0] / rho, np.zeros(len(q)), q[:, 2] / rho], axis=1)
    axial = np.zeros_like(q)
    axial[:, 1] = np.sign(q[:, 1])
    both_out = (d0 > 0) & (d1 > 0)
    if both_out.any():
        n = np.hypot(d0[both_out], d1[both_out])
        g[both_out] = (radial[both_out] * (d0[both_out] / n)[:, None]
                       + axial[both_out] * (d1[both_out] / n)[:, None])
    only_r = (d0 > 0) & ~both_out
    g[only_r] = radial[only_r]
    only_a = (d1 > 0) & ~both_out
    g[only_a] = axial[only_a]
    ins = (d0 <= 0) & (d1 <= 0)
    if ins.any():
        pick_r = d0[ins] >= d1[ins]
        idx = np.where(ins)[0]
        g[idx[pick_r]] = radial[idx[pick_r]]
        g[idx[~pick_r]] = axial[idx[~pick_r]]
    return g


def _apply_octant(g: np.ndarray, q: np.ndarray) -> np.ndarray:
    s = np.where(q >= 0, 1.0, -1.0)
    return g * s


def analytic_field(spec: ShapeSpec) -> AnalyticField:
    center = np.array(spec.center)
    s = spec.scale

    def val(p):
        return s * _sdf_local(spec.kind, spec.dims, (p - center) / s)

    def grad(p):
        return _sdf_grad_local(spec.kind, spec.dims, (p - center) / s)

    return AnalyticField(val, grad, kind="sdf")


def plane_field(axis: int = 2, offset: float = 0.0) -> AnalyticField:
    """Analytic sdf of an axis-aligned plane; handy as an exactness oracle."""

    def val(p):
        return p[:, axis] - offset

    def grad(p):
        g = np.zeros_like(p)
        g[:, axis] = 1.0
        return g

    return AnalyticField(val, grad, kind="sdf")


# --- meshes -------------------------------------------------------------------

def _icosahedron() -> tuple[np.ndarray, np.ndarray]:
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    v = np.array([
        (-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
        (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
        (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1),
    ], dtype=np.float64)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    f = np.array([
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ], dtype=np.int64)
    return v, f


def _subdivide_unit_sphere(v: np.ndarray, f: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    verts = list(v)
    cache: dict[tuple[int, int], int] = {}

    def midpoint(i, j):
        key = (i, j) if i < j else (j, i)
        if key not in cache:
            m = verts[i] + verts[j]
            m /= np.linalg.norm(m)
            cache[key] = len(verts)
            verts.append(m)
        return cache[key]

    out = []
    for a, b, c in f:
        ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
        out.extend([(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)])
    return np.array(verts), np.array(out, dtype=np.int64)


def _sphere_mesh(r: float, subdiv: int = 3) -> TriMesh:
    v, f = _icosahedron()
    for _ in range(subdiv):
        v, f = _subdivide_unit_sphere(v, f)
    return TriMesh(vertices=v * r, triangles=f, watertight=True)


def _box_mesh(hx: float, hy: float, hz: float) -> TriMesh:
    sgn = [(x, y, z) for x in (-1, 1) for y in (-1, 1) for z in (-1, 1)]
    v = np.array([(sx * hx, sy * hy, sz * hz) for sx, sy, sz in sgn])
    # outward-wound faces of the unit combinatorial cube above
    f = np.array([
        (0, 1, 3), (0, 3, 2),  # -x
        (4, 6, 7), (4, 7, 5),  # +x
        (0, 4, 5), (0, 5, 1),  # -y
        (2, 3, 7), (2, 7, 6),  # +y
        (0, 2, 6), (0, 6, 4),  # -z
        (1, 5, 7), (1, 7, 3),  # +z
    ], dtype=np.int64)
    return TriMesh(vertices=v, triangles=f, watertight=True)


def _torus_mesh(big_r: float, small_r: float, nu: int = 48, nv: int = 24) -> TriMesh:
    iu, iv = np.meshgrid(np.arange(nu), np.arange(nv), indexing="ij")
    theta = 2 * np.pi * iu / nu
    phi = 2 * np.pi * iv / nv
    x = (big_r + small_r * np.cos(phi)) * np.cos(theta)
    y = small_r * np.sin(phi)
    z = (big_r + small_r * np.cos(phi)) * np.sin(theta)
    v = np.stack([x.ravel(), y.ravel(), z.ravel()], axis=1)

    def vid(i, j):
        return (i % nu) * nv + (j % nv)

    faces = []
    for i in range(nu):
        for j in range(nv):
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            faces.append((a, b, c))
            faces.append((a, c, d))
    mesh = TriMesh(vertices=v, triangles=np.array(faces, dtype=np.int64), watertight=True)
    if mesh.signed_volume() < 0:
        mesh.triangles = mesh.triangles[:, [0, 2, 1]]
    return mesh


def _cylinder_mesh(r: float, h: float, n: int = 48) -> TriMesh:
    theta = 2 * np.pi * np.arange(n) / n
    ring = np.stack([r * np.cos(theta), np.zeros(n), r * np.sin(theta)], axis=1)
    top = ring + np.array([0.0, h, 0.0])
    bot = ring + np.array([0.0, -h, 0.0])
    v = np.vstack([top, bot, [[0.0, h, 0.0]], [[0.0, -h, 0.0]]])
    ct, cb = 2 * n, 2 * n + 1
    faces = []
    for i in range(n):
        j = (i + 1) % n
        faces.append((i, n + j, n + i))  # side
        faces.append((i, j, n + j))
        faces.append((ct, j, i))  # top cap
        faces.append((cb, n + i, n + j))  # bottom cap
    mesh = TriMesh(vertices=v, triangles=np.array(faces, dtype=np.int64), watertight=True)
    if mesh.signed_volume() < 0:
        mesh.triangles = mesh.triangles[:, [0, 2, 1]]
    return mesh


def _local_mesh(spec: ShapeSpec) -> TriMesh:
    d = spec.dims
    if spec.kind == "sphere":
        return _sphere_mesh(d[0])
    if spec.kind == "box":
        return _box_mesh(*d)
    if spec.kind == "torus":
        return _torus_mesh(*d)
    return _cylinder_mesh(*d)


def sample_mesh_surface(mesh: TriMesh, n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform-by-area surface samples."""
    v, t = mesh.vertices, mesh.triangles
    a, b, c = v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]
    areas = 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)
    probs = areas / areas.sum()
    pick = rng.choice(len(t), size=n, p=probs)
    u = rng.uniform(size=(n, 1))
    w = rng.uniform(size=(n, 1))
    flip = (u + w) > 1.0
    u[flip] = 1.0 - u[flip]
    w[flip] = 1.0 - w[flip]
    return a[pick] + u * (b[pick] - a[pick]) + w * (c[pick] - a[pick])


@dataclass
class ShapeBundle:
    spec: ShapeSpec
    mesh: TriMesh
    cloud: PointCloud
    voxels: VoxelGrid
    analytic: AnalyticField
    chordal_error: float


def gen_shape(spec: ShapeSpec, cloud_points: int = 2048, voxel_res: int = 32,
              jitter_sigma: float = 0.0) -> ShapeBundle:
    """All discrete forms of the shape plus its exact field.

    Deterministic: randomness comes only from spec.seed.  ``jitter_sigma``
    adds the offline point-noise augmentation to the cloud (0 disables).
    """
    rng = stream(spec.seed, "shape", spec.kind)
    local = _local_mesh(spec)
    verts = local.vertices * spec.scale + np.array(spec.center)
    mesh = TriMesh(vertices=verts, triangles=local.triangles.copy(), watertight=True)

    fieldh = analytic_field(spec)
    pts = sample_mesh_surface(mesh, cloud_points, rng)
    if jitter_sigma > 0.0:
        pts = pts + rng.normal(scale=jitter_sigma, size=pts.shape)
    np.clip(pts, -1.0, 1.0, out=pts)
    cloud = PointCloud(points=pts)

    grid = VoxelGrid(resolution=voxel_res,
                     occupancy=np.zeros((voxel_res,) * 3, dtype=bool))
    occ = fieldh.values(grid.centroids()) <= 0.0
    grid.occupancy = occ.reshape((voxel_res,) * 3)

    # tessellation error: how far mesh-surface samples sit from the true surface
    probe = sample_mesh_surface(mesh, 4096, stream(spec.seed, "chordal"))
    chordal = float(np.abs(fieldh.values(probe)).max())
    return ShapeBundle(spec=spec, mesh=mesh, cloud=cloud, voxels=grid,
                       analytic=fieldh, chordal_error=chordal)
