"""Dataset building and the manifest that ties every artifact together.

A dataset is a directory of per-shape files (mesh, point cloud, voxel grid,
query pool, and later fitted weights and embeddings) indexed by one JSON
manifest.  The manifest is the single source of truth: ids are unique,
splits are disjoint, and every referenced file must exist on disk, which
``load_manifest`` re-verifies so a half-written dataset is never consumed.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fields import sample_queries
from .io3d import staged_write, write_cloud, write_off, write_queries, write_voxels
from .rng import stream, substream_seed
from .shapes import ShapeSpec, gen_shape

SPLITS = ("train", "val", "test")

# per-class generators draw base dimensions from these ranges; extents stay
# comfortably inside the unit cube even at the top of the scale range
CLASS_DIM_RANGES: dict[str, list[tuple[float, float]]] = {
    "sphere": [(0.30, 0.55)],
    "box": [(0.25, 0.50), (0.25, 0.50), (0.25, 0.50)],
    "torus": [(0.30, 0.45), (0.08, 0.18)],
    "cylinder": [(0.20, 0.40), (0.25, 0.50)],
}
DEFAULT_CLASSES = tuple(CLASS_DIM_RANGES)

# within-class part counts for the segmentation task
PARTS_PER_CLASS = {"sphere": 2, "box": 2, "torus": 2, "cylinder": 3}


def part_labels(spec: ShapeSpec, points: np.ndarray) -> np.ndarray:
    """Within-class part index per surface point, from the analytic geometry.

    sphere/box: upper vs lower half along the axis; torus: outer vs inner
    side of the ring; cylinder: side wall vs top vs bottom cap (nearest
    feature).  Labels depend only on the spec, so refits and reconstructions
    of the same shape agree.
    """
    points = np.asarray(points, dtype=np.float64)
    q = (points - np.asarray(spec.center)) / spec.scale
    if spec.kind in ("sphere", "box"):
        return (q[:, 1] < 0.0).astype(np.int64)
    if spec.kind == "torus":
        big_r = spec.dims[0]
        rho = np.hypot(q[:, 0], q[:, 2])
        return (rho < big_r).astype(np.int64)
    r, h = spec.dims
    rho = np.hypot(q[:, 0], q[:, 2])
    feature = np.stack([np.abs(rho - r), np.abs(q[:, 1] - h),
                        np.abs(q[:, 1] + h)], axis=1)
    return feature.argmin(axis=1).astype(np.int64)


@dataclass
class ShapeEntry:
    id: int
    class_name: str
    class_id: int
    split: str
    spec: ShapeSpec
    lineage: dict
    files: dict[str, str | None] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "class_name": self.class_name,
            "class_id": self.class_id,
            "split": self.split,
            "spec": {
                "kind": self.spec.kind,
                "dims": list(self.spec.dims),
                "center": list(self.spec.center),
                "scale": self.spec.scale,
                "seed": self.spec.seed,
            },
            "lineage": self.lineage,
            "files": self.files,
        }

    @staticmethod
    def from_json(obj: dict) -> "ShapeEntry":
        s = obj["spec"]
        spec = ShapeSpec(kind=s["kind"], dims=tuple(s["dims"]),
                         center=tuple(s["center"]), scale=s["scale"],
                         seed=s["seed"])
        return ShapeEntry(id=obj["id"], class_name=obj["class_name"],
                          class_id=obj["class_id"], split=obj["split"],
                          spec=spec, lineage=obj["lineage"],
                          files=dict(obj["files"]))


@dataclass
class DatasetManifest:
    dataset_id: str
    root: Path
    seed: int
    field_kind: str
    classes: list[str]
    voxel_res: int
    cloud_points: int
    pool_total: int
    entries: list[ShapeEntry] = field(default_factory=list)

    def entry(self, entry_id: int) -> ShapeEntry:
        for e in self.entries:
            if e.id == entry_id:
                return e
        raise KeyError(f"no entry with id {entry_id}")

    def split_entries(self, split: str) -> list[ShapeEntry]:
        if split not in SPLITS:
            raise ValueError(f"unknown split {split!r}")
        return [e for e in self.entries if e.split == split]

    def path_of(self, entry: ShapeEntry, kind: str) -> Path:
        rel = entry.files.get(kind)
        if rel is None:
            raise KeyError(f"entry {entry.id} has no {kind!r} file yet")
        return self.root / rel

    def validate(self) -> None:
        ids = [e.id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate entry ids")
        for e in self.entries:
            if e.split not in SPLITS:
                raise ValueError(f"entry {e.id} has unknown split {e.split!r}")
            for kind, rel in e.files.items():
                if rel is not None and not (self.root / rel).exists():
                    raise ValueError(
                        f"entry {e.id} references missing {kind} file {rel!r}")


def manifest_path(manifest: DatasetManifest) -> Path:
    return manifest.root / "manifest.json"


def save_manifest(manifest: DatasetManifest) -> None:
    """Validate, then write atomically so readers never see a torn manifest."""
    manifest.validate()
    doc = {
        "dataset_id": manifest.dataset_id,
        "seed": manifest.seed,
        "field_kind": manifest.field_kind,
        "classes": manifest.classes,
        "voxel_res": manifest.voxel_res,
        "cloud_points": manifest.cloud_points,
        "pool_total": manifest.pool_total,
        "entries": [e.to_json() for e in manifest.entries],
    }
    blob = json.dumps(doc, indent=1, sort_keys=True).encode()
    staged_write(manifest_path(manifest), blob)


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    with open(path) as fh:
        doc = json.load(fh)
    manifest = DatasetManifest(
        dataset_id=doc["dataset_id"], root=path.parent, seed=doc["seed"],
        field_kind=doc["field_kind"], classes=list(doc["classes"]),
        voxel_res=doc["voxel_res"], cloud_points=doc["cloud_points"],
        pool_total=doc["pool_total"],
        entries=[ShapeEntry.from_json(e) for e in doc["entries"]])
    manifest.validate()
    return manifest


def _draw_spec(class_name: str, rng: np.random.Generator,
               entry_seed: int) -> tuple[ShapeSpec, dict]:
    ranges = CLASS_DIM_RANGES[class_name]
    dims = tuple(float(rng.uniform(lo, hi)) for lo, hi in ranges)
    center = tuple(float(c) for c in rng.uniform(-0.05, 0.05, size=3))
    scale = float(rng.uniform(0.8, 1.2))
    # post-scale re-normalization: shapes must stay inside the unit cube
    # (0.94 leaves room for the +-0.05 center draw plus float rounding)
    extent = dims[0] + dims[1] if class_name == "torus" else max(dims)
    cap = 0.94 / extent
    eff_scale = min(scale, cap)
    spec = ShapeSpec(kind=class_name, dims=dims, center=center,
                     scale=eff_scale, seed=entry_seed)
    lineage = {"scale_draw": scale, "scale_applied": eff_scale,
               "jitter_sigma": 0.005}
    return spec, lineage


def _split_counts(per_class: int, fractions: tuple[float, float, float]) -> tuple[int, int, int]:
    n_train = int(round(per_class * fractions[0]))
    n_val = int(round(per_class * fractions[1]))
    n_test = per_class - n_train - n_val
    if min(n_train, n_val, n_test) < 0:
        raise ValueError("split fractions leave a negative test count")
    return n_train, n_val, n_test


def build_dataset(root, per_class: int, seed: int = 0, field_kind: str = "udf",
                  classes: tuple[str, ...] = DEFAULT_CLASSES,
                  split_fractions: tuple[float, float, float] = (5 / 7, 1 / 7, 1 / 7),
                  cloud_points: int = 2048, voxel_res: int = 32,
                  pool_total: int = 50_000, dataset_id: str | None = None,
                  log_fn=None) -> DatasetManifest:
    """Generate shapes with offline augmentation and write all base artifacts.

    Per entry: class dims drawn from the class ranges, random scale U(0.8,1.2)
    (clamped so shapes stay inside [-1,1]^3), point-wise cloud jitter
    N(0, 0.005), split assignment per class by position.  Deterministic given
    the seed.
    """
    if per_class < 1:
        raise ValueError("per_class must be positive")
    unknown = [c for c in classes if c not in CLASS_DIM_RANGES]
    if unknown:
        raise ValueError(f"unknown classes {unknown}")
    root = Path(root)
    for sub in ("meshes", "clouds", "voxels", "queries", "inrs"):
        (root / sub).mkdir(parents=True, exist_ok=True)

    n_train, n_val, n_test = _split_counts(per_class, split_fractions)
    manifest = DatasetManifest(
        dataset_id=dataset_id or f"shapes-{len(classes)}x{per_class}-s{seed}",
        root=root, seed=seed, field_kind=field_kind, classes=list(classes),
        voxel_res=voxel_res, cloud_points=cloud_points, pool_total=pool_total)

    entry_id = 0
    for class_id, class_name in enumerate(classes):
        for j in range(per_class):
            rng = stream(seed, "dataset", class_name, j)
            spec, lineage = _draw_spec(class_name, rng, entry_seed=entry_id)
            bundle = gen_shape(spec, cloud_points=cloud_points,
                               voxel_res=voxel_res,
                               jitter_sigma=lineage["jitter_sigma"])
            pool = sample_queries(bundle, field_kind, total=pool_total,
                                  seed=substream_seed(seed, "queries", entry_id))
            files = {
                "mesh": f"meshes/{entry_id:04d}.off",
                "cloud": f"clouds/{entry_id:04d}.pts",
                "voxels": f"voxels/{entry_id:04d}.vox",
                "queries": f"queries/{entry_id:04d}.qry",
                "inr": None,
                "emb": None,
            }
            write_off(bundle.mesh, root / files["mesh"])
            write_cloud(bundle.cloud, root / files["cloud"])
            write_voxels(bundle.voxels, root / files["voxels"])
            write_queries(pool, root / files["queries"])
            split = ("train" if j < n_train
                     else "val" if j < n_train + n_val else "test")
            manifest.entries.append(ShapeEntry(
                id=entry_id, class_name=class_name, class_id=class_id,
                split=split, spec=spec, lineage=lineage, files=files))
            if log_fn is not None:
                log_fn(entry_id, class_name, split)
            entry_id += 1

    save_manifest(manifest)
    return manifest
