"""Scale presets and the flat key=value config-file format.

Two presets cover every knob in the pipeline: ``paper`` is the full-size
setup, ``desk`` is a reduced setup that runs the complete pipeline on one
CPU in minutes-to-hours instead of days.  A config file overrides individual
fields; it is plain text, one ``key = value`` per line, values in Python
literal syntax (``#`` starts a comment)::

    embed_dim = 256
    encoder_stages = (64, 128)
    flatten_mode = "all_layers"
"""
from __future__ import annotations

import ast
import dataclasses
from dataclasses import dataclass
from pathlib import Path

from .embedding import DecoderConfig, EncoderConfig, Inr2vecConfig
from .fitting import FitConfig, InrArchitecture, default_fit_loss
from .recon import McConfig, UdfSamplerConfig
from .tasks import ClassifierConfig, GanConfig, PartSegConfig, TransferConfig

SCALE_NAMES = ("desk", "paper")


@dataclass(frozen=True)
class ScaleConfig:
    name: str
    # dataset
    classes: tuple[str, ...]
    per_class: int
    cloud_points: int
    voxel_res: int
    pool_total: int
    field_kind: str
    # per-shape INR fitting
    hidden_dim: int
    hidden_layers: int
    omega: float
    fit_steps: int
    fit_queries: int
    fit_lr: float
    max_dist: float
    fit_parallel: int
    # weight-space encoder / implicit decoder
    encoder_stages: tuple[int, ...]
    embed_dim: int
    decoder_hidden: int
    freq_count: int
    flatten_mode: str
    i2v_epochs: int
    i2v_batch: int
    i2v_queries: int
    i2v_lr: float
    i2v_weight_decay: float
    val_points: int
    val_resolution: int
    # reconstruction
    recon_points: int
    udf_threshold: float
    udf_iterations: int
    mc_resolution: int
    occ_threshold: float
    # classification
    clf_hidden: tuple[int, ...]
    clf_epochs: int
    clf_batch: int
    clf_lr: float
    clf_weight_decay: float
    # retrieval
    knn_k: int
    # part segmentation
    parts_per_class: tuple[int, ...]
    seg_hidden: int
    seg_epochs: int
    seg_batch: int
    seg_points: int
    # latent transfer
    transfer_stages: int
    transfer_epochs: int
    transfer_lr: float
    transfer_weight_decay: float
    transfer_patience: int
    # latent generation
    gan_epochs: int
    gan_batch: int
    # studies
    lmc_points: int
    repeat_shapes: int
    repeat_refits: int
    bench_repeats: int

    # ---- component config builders ----

    def arch(self) -> InrArchitecture:
        return InrArchitecture(hidden_dim=self.hidden_dim,
                               hidden_layers=self.hidden_layers,
                               omega=self.omega)

    def fit_config(self, field_kind: str | None = None) -> FitConfig:
        kind = self.field_kind if field_kind is None else field_kind
        return FitConfig(steps=self.fit_steps, queries_per_step=self.fit_queries,
                         lr=self.fit_lr, loss=default_fit_loss(kind),
                         max_dist=self.max_dist, parallel=self.fit_parallel)

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(in_dim=self.hidden_dim,
                             stage_dims=self.encoder_stages,
                             embed_dim=self.embed_dim)

    def decoder_config(self) -> DecoderConfig:
        return DecoderConfig(embed_dim=self.embed_dim,
                             freq_count=self.freq_count,
                             hidden_dim=self.decoder_hidden)

    def inr2vec_config(self) -> Inr2vecConfig:
        return Inr2vecConfig(epochs=self.i2v_epochs, batch_inrs=self.i2v_batch,
                             queries_per_inr=self.i2v_queries, lr=self.i2v_lr,
                             weight_decay=self.i2v_weight_decay,
                             flatten_mode=self.flatten_mode,
                             val_points=self.val_points,
                             val_resolution=self.val_resolution)

    def sampler_config(self) -> UdfSamplerConfig:
        return UdfSamplerConfig(target_points=self.recon_points,
                                distance_threshold=self.udf_threshold,
                                iterations=self.udf_iterations)

    def mc_config(self) -> McConfig:
        return McConfig(resolution=self.mc_resolution)

    def classifier_config(self, num_classes: int) -> ClassifierConfig:
        return ClassifierConfig(embed_dim=self.embed_dim,
                                num_classes=num_classes,
                                hidden_dims=self.clf_hidden,
                                epochs=self.clf_epochs,
                                batch_size=self.clf_batch,
                                max_lr=self.clf_lr,
                                weight_decay=self.clf_weight_decay)

    def partseg_config(self) -> PartSegConfig:
        return PartSegConfig(embed_dim=self.embed_dim,
                             parts_per_class=self.parts_per_class,
                             freq_count=self.freq_count,
                             hidden_dim=self.seg_hidden,
                             epochs=self.seg_epochs,
                             batch_size=self.seg_batch)

    def transfer_config(self) -> TransferConfig:
        return TransferConfig(embed_dim=self.embed_dim,
                              stages=self.transfer_stages,
                              lr=self.transfer_lr,
                              weight_decay=self.transfer_weight_decay,
                              epochs=self.transfer_epochs,
                              patience=self.transfer_patience)

    def gan_config(self) -> GanConfig:
        return GanConfig(embed_dim=self.embed_dim, epochs=self.gan_epochs,
                         batch_size=self.gan_batch)


def paper() -> ScaleConfig:
    return ScaleConfig(
        name="paper",
        classes=("sphere", "box", "torus", "cylinder"),
        per_class=70, cloud_points=8192, voxel_res=64, pool_total=50_000,
        field_kind="udf",
        hidden_dim=512, hidden_layers=4, omega=30.0,
        fit_steps=500, fit_queries=10_000, fit_lr=1e-4, max_dist=0.1,
        fit_parallel=16,
        encoder_stages=(512, 512, 1024, 1024), embed_dim=1024,
        decoder_hidden=512, freq_count=10, flatten_mode="hidden_only",
        i2v_epochs=300, i2v_batch=16, i2v_queries=10_000, i2v_lr=1e-4,
        i2v_weight_decay=1e-2, val_points=4096, val_resolution=64,
        recon_points=4096, udf_threshold=0.05, udf_iterations=5,
        mc_resolution=128, occ_threshold=0.4,
        clf_hidden=(512, 256), clf_epochs=150, clf_batch=256, clf_lr=1e-4,
        clf_weight_decay=1e-2,
        knn_k=10,
        parts_per_class=(2, 2, 2, 3), seg_hidden=512, seg_epochs=250,
        seg_batch=256, seg_points=1024,
        transfer_stages=8, transfer_epochs=200, transfer_lr=1e-4,
        transfer_weight_decay=1e-4, transfer_patience=25,
        gan_epochs=2000, gan_batch=32,
        lmc_points=4096, repeat_shapes=4, repeat_refits=3, bench_repeats=5,
    )


def desk() -> ScaleConfig:
    """Same pipeline, sized for a single CPU."""
    return dataclasses.replace(
        paper(),
        name="desk",
        per_class=50, cloud_points=2048, voxel_res=32,
        hidden_dim=64,
        # 512 queries/step over a 50K pool keeps surface quality near the
        # big-budget fit; smaller pools leave stray low-distance pockets
        fit_queries=512, fit_parallel=4,
        encoder_stages=(64, 64, 128, 128), embed_dim=128, decoder_hidden=128,
        i2v_epochs=30, i2v_queries=2048, val_points=1024, val_resolution=24,
        recon_points=4096, mc_resolution=64,
        clf_epochs=150,
        seg_hidden=128, seg_epochs=60, seg_points=512,
        transfer_epochs=120,
        gan_epochs=300,
        lmc_points=4096, bench_repeats=5,
    )


_SCALES = {"desk": desk, "paper": paper}


def scale_config(name: str) -> ScaleConfig:
    try:
        return _SCALES[name]()
    except KeyError:
        raise ValueError(f"unknown scale {name!r}; expected one of {SCALE_NAMES}") from None


def parse_config_file(path) -> dict[str, object]:
    """Flat key=value lines; values use Python literal syntax."""
    overrides: dict[str, object] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key = value")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not key or not value:
            raise ValueError(f"{path}:{lineno}: expected key = value")
        try:
            overrides[key] = ast.literal_eval(value)
        except (ValueError, SyntaxError):
            overrides[key] = value  # bare strings stay strings
    return overrides


def _coerce(key: str, value: object, current: object) -> object:
    if isinstance(current, bool):
        if isinstance(value, bool):
            return value
    elif isinstance(current, int):
        if isinstance(value, bool):
            pass
        elif isinstance(value, int):
            return value
        elif isinstance(value, float) and value == int(value):
            return int(value)
    elif isinstance(current, float):
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
    elif isinstance(current, tuple):
        if isinstance(value, (list, tuple)):
            return tuple(value)
        return (value,)  # single-element tuples need no trailing comma
    elif isinstance(current, str):
        if isinstance(value, str):
            return value
    raise ValueError(f"config key {key!r} expects {type(current).__name__}, "
                     f"got {value!r}")


def apply_overrides(cfg: ScaleConfig, overrides: dict[str, object]) -> ScaleConfig:
    valid = {f.name for f in dataclasses.fields(ScaleConfig)}
    coerced = {}
    for key, value in overrides.items():
        if key not in valid:
            raise ValueError(f"unknown config key {key!r}")
        coerced[key] = _coerce(key, value, getattr(cfg, key))
    return dataclasses.replace(cfg, **coerced)


def load_scale(name: str, config_path=None) -> ScaleConfig:
    cfg = scale_config(name)
    if config_path is not None:
        cfg = apply_overrides(cfg, parse_config_file(config_path))
    return cfg
