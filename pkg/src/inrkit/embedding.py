"""Compact embeddings of INR weights, trained jointly with an implicit decoder.

The pipeline: flatten a fitted network's weights into a matrix whose rows are
per-unit weight vectors, push every row through a shared stack of
linear+batchnorm+relu stages, max-pool over rows into one embedding, then ask
a query-conditioned decoder to replicate the original field from that
embedding alone.  Encoder and decoder train end to end on the same loss the
source INRs were fitted with.
"""
from __future__ import annotations

import copy
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .fields import QueryBatch, encode_distance_labels
from .fitting import InrArchitecture, InrRecord
from .losses import field_loss
from .metrics import chamfer_distance
from .mlp import (
    LayerSpec,
    MlpGrads,
    MlpParams,
    commit_batchnorm,
    init_mlp,
    mlp_backward,
    mlp_forward,
)
from .optim import optimizer_init, optimizer_step
from .recon import (
    McConfig,
    UdfSamplerConfig,
    UdfSamplingError,
    decode_raw_field,
    marching_cubes,
    sample_cloud_udf,
    voxelize_occ,
)
from .rng import stream
from .shapes import PointCloud, sample_mesh_surface

FLATTEN_MODES = ("hidden_only", "all_layers")


# --- weight flattening ------------------------------------------------------


def flatten_inr(params: MlpParams, mode: str = "hidden_only") -> np.ndarray:
    """Stack per-layer weight matrices and bias rows into one (R, H) matrix.

    Blocks are oriented so columns index output units and the bias row aligns
    under its weight block.  hidden_only covers the H x H maps; all_layers
    additionally prepends the transposed input map with its bias row and
    appends the output map's weight row plus its bias repeated H times.
    """
    if mode not in FLATTEN_MODES:
        raise ValueError(f"unknown flatten mode {mode!r}")
    specs = params.specs
    if len(specs) < 3:
        raise ValueError("flattening needs at least 2 hidden layers")
    h = specs[0].out_dim
    if any(s.in_dim != h or s.out_dim != h for s in specs[1:-1]):
        raise ValueError("hidden layers must share one width")
    blocks = []
    if mode == "all_layers":
        blocks.append(params.weights[0].T)  # (in_dim, H)
        blocks.append(params.biases[0][None, :])
    for i in range(1, len(specs) - 1):
        blocks.append(params.weights[i].T)  # (H, H)
        blocks.append(params.biases[i][None, :])
    if mode == "all_layers":
        if specs[-1].out_dim != 1:
            raise ValueError("all_layers mode expects a scalar output layer")
        blocks.append(params.weights[-1])  # (1, H)
        blocks.append(np.full((1, h), params.biases[-1][0]))
    return np.concatenate(blocks, axis=0)


def flatten_rows(arch: InrArchitecture, mode: str = "hidden_only") -> int:
    maps = arch.hidden_layers - 1
    rows = maps * (arch.hidden_dim + 1)
    if mode == "all_layers":
        rows += 3 + 1 + 1 + 1
    return rows


def unflatten_inr(flat: np.ndarray, params: MlpParams,
                  mode: str = "hidden_only") -> MlpParams:
    """Write flattened hidden-layer weights back into a copy of ``params``."""
    if mode != "hidden_only":
        raise ValueError("round trip is defined for hidden_only mode")
    out = params.copy()
    h = params.specs[0].out_dim
    r = 0
    for i in range(1, len(params.specs) - 1):
        out.weights[i] = flat[r:r + h].T.copy()
        out.biases[i] = flat[r + h].copy()
        r += h + 1
    if r != len(flat):
        raise ValueError("flat matrix row count does not match the architecture")
    return out


# --- positional encoding ------------------------------------------------------


def pos_encode(points: np.ndarray, freq_count: int = 10) -> np.ndarray:
    """(p, sin(2^i pi p), cos(2^i pi p)) for i < freq_count, per coordinate."""
    if freq_count < 0:
        raise ValueError("freq_count must be non-negative")
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    parts = [points]
    for i in range(freq_count):
        w = (2.0 ** i) * np.pi
        parts.append(np.sin(w * points))
        parts.append(np.cos(w * points))
    return np.concatenate(parts, axis=1)


def pos_encode_dim(freq_count: int) -> int:
    return 3 + 6 * freq_count


def _pos_encode_query_grad(points: np.ndarray, d_encoded: np.ndarray,
                           freq_count: int) -> np.ndarray:
    """Chain d(output)/d(encoding) rows back to d(output)/d(query)."""
    g = d_encoded[:, :3].copy()
    for i in range(freq_count):
        w = (2.0 ** i) * np.pi
        s = slice(3 + 6 * i, 3 + 6 * i + 3)
        c = slice(3 + 6 * i + 3, 3 + 6 * i + 6)
        g += d_encoded[:, s] * (w * np.cos(w * points))
        g -= d_encoded[:, c] * (w * np.sin(w * points))
    return g


# --- encoder -----------------------------------------------------------------


@dataclass(frozen=True)
class EncoderConfig:
    in_dim: int = 512
    stage_dims: tuple[int, ...] = (512, 512, 1024, 1024)
    embed_dim: int = 1024
    batchnorm: bool = True

    def __post_init__(self):
        if self.in_dim < 1 or any(d < 1 for d in self.stage_dims) or not self.stage_dims:
            raise ValueError("encoder dims must be positive")
        if self.embed_dim != self.stage_dims[-1]:
            raise ValueError("embed_dim must equal the last stage dim")

    def layer_specs(self) -> list[LayerSpec]:
        dims = (self.in_dim,) + self.stage_dims
        specs = [LayerSpec(dims[i], dims[i + 1], "relu", batchnorm=self.batchnorm)
                 for i in range(len(self.stage_dims))]
        # final row-wise projection ahead of the pool, no norm or activation
        specs.append(LayerSpec(self.stage_dims[-1], self.embed_dim, "none"))
        return specs


def init_encoder(config: EncoderConfig, seed: int = 0) -> MlpParams:
    return init_mlp(config.layer_specs(), stream(seed, "encoder-init"))


def encoder_forward(enc: MlpParams, flats: np.ndarray, mode: str = "eval"):
    """Row-shared stages then a column-wise max over rows.

    ``flats`` is (R, H) for one matrix or (B, R, H) for a batch; returns the
    (E,) or (B, E) embeddings plus (cache, argmax rows) for backprop.
    """
    flats = np.asarray(flats, dtype=np.float64)
    single = flats.ndim == 2
    if single:
        flats = flats[None]
    b, r, h = flats.shape
    feats, cache = mlp_forward(enc, flats.reshape(b * r, h), mode=mode)
    feats = feats.reshape(b, r, -1)
    winner = feats.argmax(axis=1)  # (B, E) row index feeding each channel
    pooled = np.take_along_axis(feats, winner[:, None, :], axis=1)[:, 0, :]
    if single:
        return pooled[0], (cache, winner, (b, r))
    return pooled, (cache, winner, (b, r))


def encoder_backward(enc: MlpParams, tape, d_pooled: np.ndarray) -> MlpGrads:
    """Backprop through the max pool (winning rows only) and the stages."""
    cache, winner, (b, r) = tape
    d_pooled = np.asarray(d_pooled, dtype=np.float64)
    if d_pooled.ndim == 1:
        d_pooled = d_pooled[None]
    dfeats = np.zeros((b, r, d_pooled.shape[1]))
    np.put_along_axis(dfeats, winner[:, None, :], d_pooled[:, None, :], axis=1)
    grads, _ = mlp_backward(enc, cache, dfeats.reshape(b * r, -1))
    return grads


def embed(model: "Inr2vecModel", record: InrRecord) -> np.ndarray:
    """Eval-mode embedding of one fitted INR; pure and repeatable."""
    if record.arch != model.arch:
        raise ValueError("INR architecture does not match the trained model")
    if record.init_seed != model.init_seed:
        raise ValueError("INR init seed does not match the trained model")
    flat = flatten_inr(record.params, model.flatten_mode)
    emb, _ = encoder_forward(model.encoder, flat, mode="eval")
    return emb


def interpolate_embeddings(e1: np.ndarray, e2: np.ndarray, t: float) -> np.ndarray:
    e1 = np.asarray(e1, dtype=np.float64)
    e2 = np.asarray(e2, dtype=np.float64)
    if e1.shape != e2.shape:
        raise ValueError("embedding lengths differ")
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    if t == 0.0:
        return e1.copy()
    if t == 1.0:
        return e2.copy()
    return (1.0 - t) * e1 + t * e2


# --- decoder -----------------------------------------------------------------


@dataclass(frozen=True)
class DecoderConfig:
    embed_dim: int = 1024
    freq_count: int = 10
    hidden_dim: int = 512
    out_dim: int = 1

    def __post_init__(self):
        if min(self.embed_dim, self.hidden_dim, self.out_dim) < 1 or self.freq_count < 0:
            raise ValueError("decoder dims must be positive")

    @property
    def in_dim(self) -> int:
        return self.embed_dim + pos_encode_dim(self.freq_count)


@dataclass
class DecoderParams:
    config: DecoderConfig
    weights: dict[str, np.ndarray]

    _ORDER = ("w1", "b1", "w2", "b2", "skip", "w3", "b3", "w4", "b4", "out_w", "out_b")

    def arrays(self) -> list[np.ndarray]:
        return [self.weights[k] for k in self._ORDER]

    def copy(self) -> "DecoderParams":
        return DecoderParams(self.config, {k: v.copy() for k, v in self.weights.items()})

    def n_params(self) -> int:
        return sum(a.size for a in self.arrays())


def init_decoder(config: DecoderConfig, seed: int = 0) -> DecoderParams:
    rng = stream(seed, "decoder-init")
    d_in, h, d_out = config.in_dim, config.hidden_dim, config.out_dim

    def lin(out_dim, in_dim):
        bound = np.sqrt(6.0 / in_dim)
        return rng.uniform(-bound, bound, size=(out_dim, in_dim))

    weights = {
        "w1": lin(h, d_in), "b1": np.zeros(h),
        "w2": lin(h, h), "b2": np.zeros(h),
        "skip": lin(h, d_in),
        "w3": lin(h, h), "b3": np.zeros(h),
        "w4": lin(h, h), "b4": np.zeros(h),
        "out_w": lin(d_out, h), "out_b": np.zeros(d_out),
    }
    return DecoderParams(config, weights)


def decoder_forward(dec: DecoderParams, emb_rows: np.ndarray, queries: np.ndarray):
    """Field values for per-query embedding rows; returns (out, cache).

    Input is concat(embedding, positional encoding); the skip projection of
    that raw input joins the second hidden features before the third linear.
    """
    emb_rows = np.atleast_2d(np.asarray(emb_rows, dtype=np.float64))
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    if len(emb_rows) != len(queries):
        raise ValueError("one embedding row per query required")
    if emb_rows.shape[1] != dec.config.embed_dim:
        raise ValueError("embedding length does not match the decoder")
    w = dec.weights
    x = np.concatenate([emb_rows, pos_encode(queries, dec.config.freq_count)], axis=1)
    z1 = x @ w["w1"].T + w["b1"]
    h1 = np.maximum(z1, 0.0)
    z2 = h1 @ w["w2"].T + w["b2"]
    h2 = np.maximum(z2, 0.0) + x @ w["skip"].T
    z3 = h2 @ w["w3"].T + w["b3"]
    h3 = np.maximum(z3, 0.0)
    z4 = h3 @ w["w4"].T + w["b4"]
    h4 = np.maximum(z4, 0.0)
    out = h4 @ w["out_w"].T + w["out_b"]
    return out, (x, z1, h1, z2, h2, z3, h3, z4, h4, queries)


def decoder_backward(dec: DecoderParams, cache, dout: np.ndarray):
    """Gradients for all decoder arrays plus d(loss)/d(input row)."""
    x, z1, h1, z2, h2, z3, h3, z4, h4, _ = cache
    w = dec.weights
    dout = np.atleast_2d(np.asarray(dout, dtype=np.float64))
    g: dict[str, np.ndarray] = {}
    g["out_w"] = dout.T @ h4
    g["out_b"] = dout.sum(axis=0)
    dh4 = dout @ w["out_w"]
    dz4 = dh4 * (z4 > 0)
    g["w4"] = dz4.T @ h3
    g["b4"] = dz4.sum(axis=0)
    dh3 = dz4 @ w["w4"]
    dz3 = dh3 * (z3 > 0)
    g["w3"] = dz3.T @ h2
    g["b3"] = dz3.sum(axis=0)
    dh2 = dz3 @ w["w3"]
    g["skip"] = dh2.T @ x
    dz2 = dh2 * (z2 > 0)
    g["w2"] = dz2.T @ h1
    g["b2"] = dz2.sum(axis=0)
    dh1 = dz2 @ w["w2"]
    dz1 = dh1 * (z1 > 0)
    g["w1"] = dz1.T @ x
    g["b1"] = dz1.sum(axis=0)
    dx = dz1 @ w["w1"] + dh2 @ w["skip"]
    grads = [g[k] for k in DecoderParams._ORDER]
    return grads, dx


class DecoderField:
    """Field-evaluator view of (decoder, embedding), decoded to physical units."""

    def __init__(self, dec: DecoderParams, embedding: np.ndarray, field_kind: str,
                 loss_kind: str = "bce", max_dist: float = 0.1, chunk: int = 65_536):
        if dec.config.out_dim != 1:
            raise ValueError("field evaluation needs a scalar-output decoder")
        self.dec = dec
        self.embedding = np.asarray(embedding, dtype=np.float64)
        self.kind = field_kind
        self.loss_kind = loss_kind
        self.max_dist = max_dist
        self._chunk = chunk

    def _decode(self, raw: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return decode_raw_field(raw, self.kind, self.loss_kind, self.max_dist)

    def values(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.float64)
        out = np.empty(len(pts))
        for s in range(0, len(pts), self._chunk):
            q = pts[s:s + self._chunk]
            rows = np.broadcast_to(self.embedding, (len(q), len(self.embedding)))
            raw = decoder_forward(self.dec, rows, q)[0][:, 0]
            out[s:s + self._chunk] = self._decode(raw)[0]
        return out

    def values_and_gradients(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        pts = np.asarray(pts, dtype=np.float64)
        vals = np.empty(len(pts))
        grads = np.empty_like(pts)
        e = len(self.embedding)
        for s in range(0, len(pts), self._chunk):
            q = pts[s:s + self._chunk]
            rows = np.broadcast_to(self.embedding, (len(q), e))
            raw, cache = decoder_forward(self.dec, rows, q)
            _, dx = decoder_backward(self.dec, cache, np.ones_like(raw))
            v, dv = self._decode(raw[:, 0])
            vals[s:s + self._chunk] = v
            dq = _pos_encode_query_grad(q, dx[:, e:], self.dec.config.freq_count)
            grads[s:s + self._chunk] = dv[:, None] * dq
        return vals, grads


# --- parameter accounting ------------------------------------------------------


def param_count(arch: InrArchitecture,
                enc: EncoderConfig | None = None) -> tuple[int, int, int]:
    """(INR params, row-wise encoder params, naive flat-vector encoder params)."""
    enc = enc or EncoderConfig(in_dim=arch.hidden_dim)
    inr = sum(s.in_dim * s.out_dim + s.out_dim for s in arch.layer_specs())
    encoder = 0
    for s in enc.layer_specs():
        encoder += s.in_dim * s.out_dim + s.out_dim
        if s.batchnorm:
            encoder += 2 * s.out_dim
    flat_size = flatten_rows(arch) * arch.hidden_dim
    naive = flat_size * enc.embed_dim + enc.embed_dim
    return inr, encoder, naive


# --- joint training ------------------------------------------------------------


@dataclass(frozen=True)
class Inr2vecConfig:
    epochs: int = 300
    batch_inrs: int = 16
    queries_per_inr: int = 10_000
    lr: float = 1e-4
    weight_decay: float = 1e-2
    flatten_mode: str = "hidden_only"
    val_points: int = 2048
    val_resolution: int = 32

    def __post_init__(self):
        if self.epochs < 1 or self.batch_inrs < 1 or self.queries_per_inr < 1:
            raise ValueError("epochs, batch_inrs, queries_per_inr must be positive")
        if self.lr <= 0 or self.weight_decay < 0:
            raise ValueError("bad optimizer settings")
        if self.flatten_mode not in FLATTEN_MODES:
            raise ValueError(f"unknown flatten mode {self.flatten_mode!r}")


@dataclass
class Inr2vecModel:
    encoder: MlpParams
    decoder: DecoderParams
    enc_config: EncoderConfig
    dec_config: DecoderConfig
    arch: InrArchitecture
    init_seed: int
    field_kind: str
    loss_kind: str
    max_dist: float
    flatten_mode: str = "hidden_only"

    @property
    def embed_dim(self) -> int:
        return self.enc_config.embed_dim

    def copy_weights_from(self, other: "Inr2vecModel") -> None:
        self.encoder = copy.deepcopy(other.encoder)
        self.decoder = other.decoder.copy()


@dataclass
class Inr2vecHistory:
    train_loss: list[float] = field(default_factory=list)
    val_cd: list[float] = field(default_factory=list)
    best_epoch: int = -1
    best_val_cd: float = float("inf")


def inr2vec_loss_and_grads(enc: MlpParams, dec: DecoderParams, flats: np.ndarray,
                           queries: np.ndarray, targets: np.ndarray, loss_kind: str,
                           alpha: float = 0.25, gamma: float = 2.0,
                           mode: str = "train"):
    """One joint forward/backward over a batch of flattened INRs.

    flats (B, R, H); queries (B, Q, 3); targets (B, Q) already label-encoded.
    Returns (loss, encoder grads, decoder grads, encoder cache for BN commit).
    """
    b, _, _ = flats.shape
    q = queries.shape[1]
    emb, tape = encoder_forward(enc, flats, mode=mode)
    e = emb.shape[1]
    rows = np.repeat(emb, q, axis=0)
    out, dcache = decoder_forward(dec, rows, queries.reshape(b * q, 3))
    loss, dpred = field_loss(loss_kind, out[:, 0], targets.reshape(b * q),
                             alpha=alpha, gamma=gamma)
    dec_grads, dx = decoder_backward(dec, dcache, dpred[:, None])
    demb = dx[:, :e].reshape(b, q, e).sum(axis=1)
    enc_grads = encoder_backward(enc, tape, demb)
    return loss, enc_grads, dec_grads, tape[0]


def _validation_cloud(model: Inr2vecModel, embedding: np.ndarray, n_points: int,
                      resolution: int, seed: int) -> np.ndarray | None:
    """Decode a shape from an embedding as a point set, or None on failure."""
    fld = DecoderField(model.decoder, embedding, model.field_kind,
                       model.loss_kind, model.max_dist)
    try:
        if model.field_kind == "udf":
            cfg = UdfSamplerConfig(target_points=n_points, max_rounds=5)
            return sample_cloud_udf(fld, cfg, seed=seed).points
        if model.field_kind == "sdf":
            mesh = marching_cubes(fld, McConfig(resolution=resolution))
            if len(mesh.triangles) == 0:
                return None
            return sample_mesh_surface(mesh, n_points, stream(seed, "val-mesh"))
        grid = voxelize_occ(fld, resolution=resolution)
        if not grid.occupancy.any():
            return None
        return grid.centroids()[grid.occupancy.ravel()]
    except UdfSamplingError:
        return None


def reference_cloud(bundle_cloud: PointCloud, n_points: int, seed: int) -> np.ndarray:
    pts = bundle_cloud.points
    if len(pts) <= n_points:
        return pts
    idx = stream(seed, "val-ref").choice(len(pts), size=n_points, replace=False)
    return pts[idx]


def train_inr2vec(records: list[InrRecord], pools: list[QueryBatch],
                  val_records: list[InrRecord], val_clouds: list[np.ndarray],
                  enc_config: EncoderConfig, dec_config: DecoderConfig,
                  config: Inr2vecConfig, seed: int = 0,
                  focal_alpha: float = 0.25, focal_gamma: float = 2.0,
                  log_fn=None) -> tuple[Inr2vecModel, Inr2vecHistory]:
    """Joint encoder/decoder training with per-epoch best-checkpoint selection.

    Each step consumes a mini-batch of INRs with fresh query subsamples from
    their fitting pools; after every epoch the val shapes are decoded from
    their embeddings and scored by chamfer distance against ``val_clouds``,
    and the lowest-CD weights are kept as the returned model.
    """
    if len(records) != len(pools) or not records:
        raise ValueError("need one query pool per INR")
    if len(val_records) != len(val_clouds):
        raise ValueError("need one reference cloud per validation INR")
    arch = records[0].arch
    init_seed = records[0].init_seed
    kinds = {r.field_kind for r in records + val_records}
    if len(kinds) != 1:
        raise ValueError("mixed field kinds in dataset")
    for r in records + val_records:
        if r.arch != arch or r.init_seed != init_seed:
            raise ValueError("mixed architectures or init seeds in dataset")
    if enc_config.in_dim != arch.hidden_dim:
        raise ValueError("encoder input width must equal the INR hidden width")
    if dec_config.embed_dim != enc_config.embed_dim:
        raise ValueError("decoder embedding width must match the encoder")

    loss_kind = records[0].loss_kind
    max_dist = records[0].max_dist
    enc = init_encoder(enc_config, seed)
    dec = init_decoder(dec_config, seed)
    model = Inr2vecModel(encoder=enc, decoder=dec, enc_config=enc_config,
                         dec_config=dec_config, arch=arch, init_seed=init_seed,
                         field_kind=records[0].field_kind, loss_kind=loss_kind,
                         max_dist=max_dist, flatten_mode=config.flatten_mode)
    best = Inr2vecModel(encoder=copy.deepcopy(enc), decoder=dec.copy(),
                        enc_config=enc_config, dec_config=dec_config, arch=arch,
                        init_seed=init_seed, field_kind=model.field_kind,
                        loss_kind=loss_kind, max_dist=max_dist,
                        flatten_mode=config.flatten_mode)
    history = Inr2vecHistory()

    flats = np.stack([flatten_inr(r.params, config.flatten_mode) for r in records])
    val_flats = [flatten_inr(r.params, config.flatten_mode) for r in val_records]
    targets = [encode_distance_labels(p.targets, p.field_kind, max_dist) for p in pools]

    arrays = enc.arrays() + dec.arrays()
    opt = optimizer_init("adamw", arrays, lr=config.lr, weight_decay=config.weight_decay)
    rng = stream(seed, "inr2vec-train")
    n = len(records)
    take = config.queries_per_inr

    for epoch in range(config.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        n_steps = 0
        for start in range(0, n, config.batch_inrs):
            batch = order[start:start + config.batch_inrs]
            qs, ts = [], []
            for i in batch:
                pool = pools[i]
                m = len(pool)
                idx = rng.choice(m, size=min(take, m), replace=False)
                qs.append(pool.points[idx])
                ts.append(targets[i][idx])
            loss, enc_g, dec_g, cache = inr2vec_loss_and_grads(
                enc, dec, flats[batch], np.stack(qs), np.stack(ts), loss_kind,
                alpha=focal_alpha, gamma=focal_gamma)
            optimizer_step(opt, enc.arrays() + dec.arrays(),
                           enc_g.arrays() + dec_g)
            commit_batchnorm(enc, cache)
            epoch_loss += loss
            n_steps += 1
        history.train_loss.append(epoch_loss / n_steps)

        cds = []
        for j, rec in enumerate(val_records):
            emb, _ = encoder_forward(enc, val_flats[j], mode="eval")
            pts = _validation_cloud(model, emb, config.val_points,
                                    config.val_resolution, seed=rec.shape_id)
            cds.append(float("inf") if pts is None
                       else chamfer_distance(pts, val_clouds[j]))
        val_cd = float(np.mean(cds)) if cds else float("nan")
        history.val_cd.append(val_cd)
        if cds and val_cd < history.best_val_cd:
            history.best_val_cd = val_cd
            history.best_epoch = epoch
            best.copy_weights_from(model)
        if log_fn is not None:
            log_fn(epoch, history.train_loss[-1], val_cd)

    if history.best_epoch < 0:  # no validation set: final weights are the result
        best.copy_weights_from(model)
    return best, history


# --- persistence ----------------------------------------------------------------


_EMB_HEADER = struct.Struct("<4sII")


def _emb_record_dtype(dim: int) -> np.dtype:
    return np.dtype([("id", "<u8"), ("vec", "<f4", (dim,))])


def save_embeddings(path, ids: np.ndarray, vectors: np.ndarray) -> None:
    from .io3d import staged_write

    ids = np.asarray(ids, dtype=np.uint64)
    vectors = np.asarray(vectors, dtype=np.float32)
    if vectors.ndim != 2 or len(ids) != len(vectors):
        raise ValueError("need one id per embedding row")
    records = np.empty(len(ids), dtype=_emb_record_dtype(vectors.shape[1]))
    records["id"] = ids
    records["vec"] = vectors
    header = _EMB_HEADER.pack(b"EMB1", vectors.shape[1], len(ids))
    staged_write(path, header + records.tobytes())


def load_embeddings(path) -> tuple[np.ndarray, np.ndarray]:
    """Ids and embedding rows; vectors come back as float64 copies of the
    stored float32 payload."""
    with open(path, "rb") as fh:
        blob = fh.read()
    magic, dim, count = _EMB_HEADER.unpack_from(blob, 0)
    if magic != b"EMB1":
        raise ValueError("not an embedding store")
    dtype = _emb_record_dtype(dim)
    if len(blob) != _EMB_HEADER.size + dtype.itemsize * count:
        raise ValueError("embedding store is truncated")
    records = np.frombuffer(blob, dtype=dtype, count=count, offset=_EMB_HEADER.size)
    return records["id"].copy(), records["vec"].astype(np.float64)


def _model_arrays(model: Inr2vecModel) -> list[np.ndarray]:
    arrays = []
    for i in range(len(model.encoder.specs)):
        arrays.append(model.encoder.weights[i])
        arrays.append(model.encoder.biases[i])
        bn = model.encoder.bn[i]
        if bn is not None:
            arrays.extend([bn.gamma, bn.beta, bn.running_mean, bn.running_var])
    arrays.extend(model.decoder.arrays())
    return arrays


def save_inr2vec(model: Inr2vecModel, path) -> None:
    from dataclasses import asdict

    from .io3d import staged_write

    config = {
        "enc": asdict(model.enc_config),
        "dec": asdict(model.dec_config),
        "arch": asdict(model.arch),
        "init_seed": model.init_seed,
        "field_kind": model.field_kind,
        "loss_kind": model.loss_kind,
        "max_dist": model.max_dist,
        "flatten_mode": model.flatten_mode,
    }
    blob = json.dumps(config, sort_keys=True).encode()
    parts = [struct.pack("<4sII", b"I2V1", 1, len(blob)), blob]
    arrays = _model_arrays(model)
    parts.append(struct.pack("<I", len(arrays)))
    for arr in arrays:
        a32 = np.asarray(arr, dtype=np.float32)
        parts.append(struct.pack("<B", a32.ndim))
        parts.append(struct.pack(f"<{a32.ndim}I", *a32.shape))
        parts.append(a32.tobytes())
    staged_write(path, b"".join(parts))


def load_inr2vec(path) -> Inr2vecModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    magic, version, cfg_len = struct.unpack_from("<4sII", blob, 0)
    if magic != b"I2V1":
        raise ValueError("not an inr2vec checkpoint")
    if version != 1:
        raise ValueError(f"unsupported checkpoint version {version}")
    off = 12
    config = json.loads(blob[off:off + cfg_len].decode())
    off += cfg_len
    (n_arrays,) = struct.unpack_from("<I", blob, off)
    off += 4
    arrays = []
    for _ in range(n_arrays):
        (ndim,) = struct.unpack_from("<B", blob, off)
        off += 1
        shape = struct.unpack_from(f"<{ndim}I", blob, off)
        off += 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        arrays.append(np.frombuffer(blob, dtype="<f4", count=size, offset=off)
                      .reshape(shape).astype(np.float64))
        off += 4 * size
    enc_config = EncoderConfig(in_dim=config["enc"]["in_dim"],
                               stage_dims=tuple(config["enc"]["stage_dims"]),
                               embed_dim=config["enc"]["embed_dim"],
                               batchnorm=config["enc"]["batchnorm"])
    dec_config = DecoderConfig(**config["dec"])
    arch = InrArchitecture(**config["arch"])
    enc = init_encoder(enc_config, 0)
    k = 0
    for i in range(len(enc.specs)):
        enc.weights[i] = arrays[k]
        enc.biases[i] = arrays[k + 1]
        k += 2
        if enc.bn[i] is not None:
            enc.bn[i].gamma = arrays[k]
            enc.bn[i].beta = arrays[k + 1]
            enc.bn[i].running_mean = arrays[k + 2]
            enc.bn[i].running_var = arrays[k + 3]
            k += 4
    dec = init_decoder(dec_config, 0)
    for name in DecoderParams._ORDER:
        dec.weights[name] = arrays[k]
        k += 1
    if k != len(arrays):
        raise ValueError("checkpoint array count does not match the config")
    return Inr2vecModel(encoder=enc, decoder=dec, enc_config=enc_config,
                        dec_config=dec_config, arch=arch,
                        init_seed=config["init_seed"],
                        field_kind=config["field_kind"],
                        loss_kind=config["loss_kind"], max_dist=config["max_dist"],
                        flatten_mode=config["flatten_mode"])
