"""Weight-space studies: mode connectivity, refit repeatability, timing, export.

These are the analysis routines behind the experiment scripts.  They only
measure and report; every pass/fail judgement lives in the test suite so the
recorded numbers stay inspectable.
"""
from __future__ import annotations

import os
import platform
import time
from dataclasses import dataclass

import numpy as np

from .embedding import Inr2vecModel, embed
from .fields import QueryBatch, encode_distance_labels
from .fitting import FitConfig, InitRegistry, InrArchitecture, InrRecord, fit_batch
from .io3d import staged_write
from .losses import field_loss
from .mlp import MlpParams, mlp_forward
from .recon import InrField
from .rng import stream


# --- linear mode connectivity -----------------------------------------------------


@dataclass
class LmcReport:
    ts: np.ndarray      # (T,) interpolation positions, 0 and 1 included
    losses: np.ndarray  # (T,) loss of the blended weights on the fixed batch

    @property
    def endpoint_losses(self) -> tuple[float, float]:
        return float(self.losses[0]), float(self.losses[-1])

    @property
    def peak(self) -> float:
        return float(self.losses.max())

    @property
    def barrier_ratio(self) -> float:
        """Peak loss along the path over the worse endpoint."""
        return self.peak / max(self.endpoint_losses)


def _blend_params(a: MlpParams, b: MlpParams, t: float) -> MlpParams:
    out = a.copy()
    # (1-t)*x + t*y reproduces x exactly at t=0 and y exactly at t=1
    for dst, xa, xb in zip(out.arrays(), a.arrays(), b.arrays()):
        dst[...] = (1.0 - t) * xa + t * xb
    return out


def lmc_sweep(record_a: InrRecord, record_b: InrRecord, pool: QueryBatch,
              ts: np.ndarray | None = None, n_queries: int = 4096,
              seed: int = 0, focal_alpha: float = 0.25,
              focal_gamma: float = 2.0) -> LmcReport:
    """Loss along the straight line between two fitted weight vectors.

    The evaluation batch is drawn once and reused for every t, so the curve
    is comparable point to point and the endpoints reproduce each network's
    own loss exactly.
    """
    if record_a.arch != record_b.arch:
        raise ValueError("cannot interpolate between different architectures")
    if record_a.field_kind != record_b.field_kind:
        raise ValueError("records fit different field kinds")
    if record_a.loss_kind != record_b.loss_kind or record_a.max_dist != record_b.max_dist:
        raise ValueError("records fit with different objectives")
    if pool.field_kind != record_a.field_kind:
        raise ValueError("query pool field kind does not match the records")
    if ts is None:
        ts = np.linspace(0.0, 1.0, 11)
    ts = np.asarray(ts, dtype=np.float64)
    if ts[0] != 0.0 or ts[-1] != 1.0 or np.any(np.diff(ts) <= 0):
        raise ValueError("ts must increase from 0 to 1")

    rng = stream(seed, "lmc")
    take = min(n_queries, len(pool))
    idx = rng.choice(len(pool), size=take, replace=False) if take < len(pool) else np.arange(len(pool))
    points = pool.points[idx]
    targets = encode_distance_labels(pool.targets[idx], pool.field_kind,
                                     record_a.max_dist)

    losses = np.zeros(len(ts))
    for i, t in enumerate(ts):
        blended = _blend_params(record_a.params, record_b.params, float(t))
        out, _ = mlp_forward(blended, points, mode="eval")
        loss, _ = field_loss(record_a.loss_kind, out[:, 0], targets,
                             alpha=focal_alpha, gamma=focal_gamma)
        losses[i] = loss
    return LmcReport(ts=ts, losses=losses)


# --- refit repeatability -----------------------------------------------------------


@dataclass
class RepeatabilityReport:
    embeddings: np.ndarray  # (S, R, E) shapes x refits x embedding dim
    distances: np.ndarray   # (S*R, S*R) pairwise L2, row index = shape*R + refit
    mean_intra: float       # same shape, different refit
    mean_inter: float       # different shapes

    @property
    def ratio(self) -> float:
        """Inter-shape over intra-shape spread; above 1 means refits cluster."""
        return self.mean_inter / self.mean_intra


def repeatability_matrix(pools: list[QueryBatch], model: Inr2vecModel,
                         arch: InrArchitecture, fit_config: FitConfig,
                         fit_seeds: tuple[int, ...] = (1, 2, 3),
                         init_seed: int = 0,
                         registry: InitRegistry | None = None) -> RepeatabilityReport:
    """Refit every shape several times (same init, different query draws),
    embed each fit, and compare within-shape to between-shape distances."""
    if len(pools) < 2:
        raise ValueError("need at least two shapes to compare against each other")
    if len(fit_seeds) < 2:
        raise ValueError("need at least two refits per shape")
    s, r = len(pools), len(fit_seeds)
    rep_pools = [pools[i] for i in range(s) for _ in range(r)]
    rep_seeds = [seed for _ in range(s) for seed in fit_seeds]
    rep_ids = [i for i in range(s) for _ in range(r)]
    records = fit_batch(rep_pools, arch, fit_config, init_seed=init_seed,
                        fit_seeds=rep_seeds, shape_ids=rep_ids, registry=registry)
    flat = np.stack([embed(model, rec) for rec in records])
    distances = np.linalg.norm(flat[:, None, :] - flat[None, :, :], axis=2)

    shape_of = np.repeat(np.arange(s), r)
    same = shape_of[:, None] == shape_of[None, :]
    upper = np.triu(np.ones((s * r, s * r), dtype=bool), k=1)
    mean_intra = float(distances[same & upper].mean())
    mean_inter = float(distances[~same & upper].mean())
    return RepeatabilityReport(embeddings=flat.reshape(s, r, -1),
                               distances=distances, mean_intra=mean_intra,
                               mean_inter=mean_inter)


# --- timing ----------------------------------------------------------------------


@dataclass
class TimingReport:
    hardware: str
    repeats: int
    embed_ms: dict[str, float]  # label -> median wall time
    recon_ms: dict[int, float]  # lattice resolution -> median wall time


def hardware_descriptor() -> str:
    cpu = platform.processor() or platform.machine() or "unknown-cpu"
    return f"{platform.platform()} | {cpu} | {os.cpu_count()} logical cores"


def median_time_ms(fn, repeats: int = 5) -> float:
    if repeats < 1:
        raise ValueError("repeats must be positive")
    samples = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        samples.append((time.perf_counter() - start) * 1e3)
    return float(np.median(samples))


def _lattice(resolution: int) -> np.ndarray:
    axis = -1.0 + (np.arange(resolution) + 0.5) * (2.0 / resolution)
    g = np.meshgrid(axis, axis, axis, indexing="ij")
    return np.stack([a.ravel() for a in g], axis=1)


def timing_harness(model: Inr2vecModel, records_by_label: dict[str, InrRecord],
                   recon_record: InrRecord,
                   recon_resolutions: tuple[int, ...] = (16, 24, 32),
                   repeats: int = 5) -> TimingReport:
    """Median-of-N wall times for the two latency-sensitive paths.

    Embedding reads only the fixed-size weight vector, so its cost must not
    depend on how densely the source shape was sampled; reconstruction
    evaluates the field on a dense lattice, so its cost grows with output
    resolution.  The report carries raw medians; comparisons belong to tests.
    """
    if len(recon_resolutions) < 2 or any(np.diff(recon_resolutions) <= 0):
        raise ValueError("recon_resolutions must be increasing, two or more")
    embed_ms = {}
    for label, rec in records_by_label.items():
        embed_ms[label] = median_time_ms(lambda rec=rec: embed(model, rec), repeats)
    field = InrField(recon_record)
    recon_ms = {}
    for res in recon_resolutions:
        grid = _lattice(res)
        recon_ms[int(res)] = median_time_ms(lambda g=grid: field.values(g), repeats)
    return TimingReport(hardware=hardware_descriptor(), repeats=repeats,
                        embed_ms=embed_ms, recon_ms=recon_ms)


# --- embedding export --------------------------------------------------------------


def export_embeddings(path, ids, class_names, vectors) -> None:
    """Write embeddings as delimited text: id, class, then one column per dim.

    Values are float32 widened to float64 and rendered with repr, a decimal
    form that parses back to the identical bits, so a text round trip is
    lossless.
    """
    ids = [int(i) for i in ids]
    vectors = np.asarray(vectors, dtype=np.float32)
    if vectors.ndim != 2:
        raise ValueError("vectors must be a 2-d array")
    if not (len(ids) == len(class_names) == len(vectors)):
        raise ValueError("ids, classes and vectors must align")
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate ids")
    names = [str(c) for c in class_names]
    if any("," in c or "\n" in c or not c for c in names):
        raise ValueError("class names must be non-empty and delimiter-free")
    dim = vectors.shape[1]
    lines = ["id,class," + ",".join(f"e{j}" for j in range(dim))]
    for i, cls, vec in zip(ids, names, vectors):
        lines.append(f"{i},{cls}," + ",".join(repr(float(x)) for x in vec))
    staged_write(path, ("\n".join(lines) + "\n").encode("ascii"))


def load_embedding_table(path) -> tuple[np.ndarray, list[str], np.ndarray]:
    """Read an export back: (ids, class names, float32 vectors)."""
    with open(path, "r", encoding="ascii") as fh:
        rows = [line.rstrip("\n").split(",") for line in fh if line.strip()]
    if not rows:
        raise ValueError("empty embedding table")
    header = rows[0]
    if header[:2] != ["id", "class"]:
        raise ValueError("embedding table header must start with id,class")
    dim = len(header) - 2
    ids, names, vecs = [], [], []
    for row in rows[1:]:
        if len(row) != dim + 2:
            raise ValueError("embedding table row width mismatch")
        ids.append(int(row[0]))
        names.append(row[1])
        vecs.append(np.array([np.float32(x) for x in row[2:]], dtype=np.float32))
    return (np.asarray(ids, dtype=np.int64), names,
            np.stack(vecs) if vecs else np.zeros((0, dim), dtype=np.float32))
