"""Fit one sine-activation MLP per shape from a shared random init.

Every shape network in a dataset starts from the *same* initial weight
vector (per architecture + master seed); only the query subsampling differs
between fits.  That alignment is what makes the weight-space encoder work,
so the init law is versioned and cached in a registry.
"""
from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fields import FIELD_KINDS, QueryBatch, encode_distance_labels
from .io3d import staged_write
from .losses import field_loss
from .mlp import LayerSpec, MlpParams, mlp_backward, mlp_forward
from .optim import optimizer_init, optimizer_step
from .rng import stream

INIT_LAW_VERSION = 1


@dataclass(frozen=True)
class InrArchitecture:
    hidden_dim: int = 64
    hidden_layers: int = 4
    in_dim: int = 3
    out_dim: int = 1
    omega: float = 30.0

    def __post_init__(self):
        if self.hidden_dim < 1:
            raise ValueError("hidden_dim must be >= 1")
        if self.hidden_layers < 2:
            raise ValueError("need at least 2 hidden layers (one hidden-to-hidden map)")

    @property
    def n_hidden_maps(self) -> int:
        """Number of hidden-to-hidden linear maps (the flattened blocks)."""
        return self.hidden_layers - 1

    def layer_specs(self) -> tuple[LayerSpec, ...]:
        specs = [LayerSpec(self.in_dim, self.hidden_dim, "sine", omega=self.omega)]
        for _ in range(self.hidden_layers - 1):
            specs.append(LayerSpec(self.hidden_dim, self.hidden_dim, "sine", omega=self.omega))
        specs.append(LayerSpec(self.hidden_dim, self.out_dim, "none"))
        return tuple(specs)


def siren_init(arch: InrArchitecture, seed: int) -> MlpParams:
    """Uniform init: first layer +-1/fan_in, later layers +-sqrt(6/fan_in)/omega."""
    rng = stream(seed, "siren-init", INIT_LAW_VERSION, arch)
    weights, biases = [], []
    for i, spec in enumerate(arch.layer_specs()):
        if i == 0:
            bound = 1.0 / spec.in_dim
        else:
            bound = np.sqrt(6.0 / spec.in_dim) / arch.omega
        weights.append(rng.uniform(-bound, bound, size=(spec.out_dim, spec.in_dim)))
        biases.append(rng.uniform(-1.0, 1.0, size=spec.out_dim) / np.sqrt(spec.in_dim))
    return MlpParams(specs=arch.layer_specs(), weights=weights, biases=biases)


class InitRegistry:
    """Cache of shared initial weights keyed by (architecture, seed)."""

    def __init__(self):
        self._cache: dict[tuple[InrArchitecture, int], MlpParams] = {}

    def get(self, arch: InrArchitecture, seed: int) -> MlpParams:
        key = (arch, seed)
        if key not in self._cache:
            self._cache[key] = siren_init(arch, seed)
        return self._cache[key].copy()


_DEFAULT_REGISTRY = InitRegistry()


def shared_init(arch: InrArchitecture, seed: int,
                registry: InitRegistry | None = None) -> MlpParams:
    return (registry or _DEFAULT_REGISTRY).get(arch, seed)


@dataclass(frozen=True)
class FitConfig:
    steps: int = 500
    queries_per_step: int = 10_000
    lr: float = 1e-4
    loss: str = "bce"  # mse | bce | focal
    focal_alpha: float = 0.25
    focal_gamma: float = 2.0
    max_dist: float = 0.1
    parallel: int = 16

    def __post_init__(self):
        if self.steps <= 0:
            raise ValueError("steps must be positive")
        if not (0.0 < self.focal_alpha < 1.0):
            raise ValueError("focal alpha must lie in (0, 1)")
        if self.focal_gamma < 0.0:
            raise ValueError("focal gamma must be >= 0")
        if self.loss not in ("mse", "bce", "focal"):
            raise ValueError(f"unknown loss {self.loss!r}")


def default_fit_loss(field_kind: str) -> str:
    """udf/sdf converge faster as label classification; occ needs focal."""
    return "focal" if field_kind == "occ" else "bce"


@dataclass
class InrRecord:
    arch: InrArchitecture
    field_kind: str
    params: MlpParams
    init_seed: int
    fit_seed: int
    shape_id: int
    loss_trace: np.ndarray = field(default_factory=lambda: np.zeros(0))
    loss_kind: str = "bce"
    max_dist: float = 0.1

    def __post_init__(self):
        if self.field_kind not in FIELD_KINDS:
            raise ValueError(f"unknown field kind {self.field_kind!r}")
        for arr in self.params.arrays():
            if not np.isfinite(arr).all():
                raise ValueError("non-finite weights in INR record")


class FitDivergenceError(RuntimeError):
    def __init__(self, step: int):
        super().__init__(f"fit diverged (non-finite loss) at step {step}")
        self.step = step


def fit_inr(pool: QueryBatch, arch: InrArchitecture, config: FitConfig,
            init_seed: int = 0, fit_seed: int = 0, shape_id: int = 0,
            registry: InitRegistry | None = None) -> InrRecord:
    """Adam steps on query subsamples drawn without replacement per step."""
    params = shared_init(arch, init_seed, registry)
    targets = encode_distance_labels(pool.targets, pool.field_kind, config.max_dist)
    opt = optimizer_init("adam", params.arrays(), lr=config.lr)
    rng = stream(fit_seed, "fit", shape_id)
    n = len(pool)
    take = min(config.queries_per_step, n)
    trace = np.zeros(config.steps)
    for step in range(config.steps):
        idx = rng.choice(n, size=take, replace=False) if take < n else np.arange(n)
        # divergence surfaces as a raised error, not as numpy warnings
        with np.errstate(over="ignore", invalid="ignore"):
            out, cache = mlp_forward(params, pool.points[idx], mode="eval")
            loss, dpred = field_loss(config.loss, out[:, 0], targets[idx],
                                     alpha=config.focal_alpha, gamma=config.focal_gamma)
            if not np.isfinite(loss):
                raise FitDivergenceError(step)
            grads, _ = mlp_backward(params, cache, dpred[:, None])
            optimizer_step(opt, params.arrays(), grads.arrays())
        trace[step] = loss
    return InrRecord(arch=arch, field_kind=pool.field_kind, params=params,
                     init_seed=init_seed, fit_seed=fit_seed, shape_id=shape_id,
                     loss_trace=trace, loss_kind=config.loss, max_dist=config.max_dist)


class FitBatchError(RuntimeError):
    """One or more fits in a batch failed; successful siblings are kept."""

    def __init__(self, errors: dict[int, BaseException], results: list):
        super().__init__(f"{len(errors)} of {len(results)} fits failed: "
                         + ", ".join(f"shape {sid}: {exc}" for sid, exc in errors.items()))
        self.errors = errors
        self.results = results


def fit_batch(pools: list[QueryBatch], arch: InrArchitecture, config: FitConfig,
              init_seed: int = 0, fit_seeds: list[int] | None = None,
              shape_ids: list[int] | None = None,
              registry: InitRegistry | None = None) -> list[InrRecord]:
    """Fit many shapes concurrently; bit-identical to sequential fit_inr calls.

    Each worker runs the exact per-shape code path on its own state, so the
    results do not depend on scheduling."""
    if shape_ids is None:
        shape_ids = list(range(len(pools)))
    if fit_seeds is None:
        fit_seeds = [0] * len(pools)
    if not (len(pools) == len(shape_ids) == len(fit_seeds)):
        raise ValueError("pools/seeds/ids out of sync")
    reg = registry or _DEFAULT_REGISTRY
    # materialize the shared init once so workers only read the cache
    if pools:
        reg.get(arch, init_seed)
    results: list = [None] * len(pools)
    errors: dict[int, BaseException] = {}

    def run(i: int):
        return fit_inr(pools[i], arch, config, init_seed=init_seed,
                       fit_seed=fit_seeds[i], shape_id=shape_ids[i], registry=reg)

    with ThreadPoolExecutor(max_workers=max(1, config.parallel)) as pool_exec:
        futures = {pool_exec.submit(run, i): i for i in range(len(pools))}
        for fut, i in futures.items():
            try:
                results[i] = fut.result()
            except BaseException as exc:  # noqa: BLE001 - propagated below
                errors[shape_ids[i]] = exc
    if errors:
        raise FitBatchError(errors, results)
    return results


# --- .inr format ----------------------------------------------------------------

_INR_MAGIC = b"INR1"
_INR_HEADER = "<4sBBIIIffQQ"
_LOSS_KINDS = ("mse", "bce", "focal")


def save_inr(record: InrRecord, path) -> None:
    arch = record.arch
    head = struct.pack(_INR_HEADER, _INR_MAGIC, FIELD_KINDS.index(record.field_kind),
                       _LOSS_KINDS.index(record.loss_kind),
                       arch.in_dim, arch.hidden_dim, arch.hidden_layers,
                       arch.omega, record.max_dist,
                       record.init_seed, record.shape_id)
    parts = [head]
    for w, b in zip(record.params.weights, record.params.biases):
        parts.append(np.ascontiguousarray(w, dtype="<f4").tobytes())
        parts.append(np.ascontiguousarray(b, dtype="<f4").tobytes())
    staged_write(path, b"".join(parts))


def load_inr(path) -> InrRecord:
    raw = Path(path).read_bytes()
    size = struct.calcsize(_INR_HEADER)
    (magic, kind_code, loss_code, d, h, layers, omega, max_dist, init_seed,
     shape_id) = struct.unpack_from(_INR_HEADER, raw, 0)
    if magic != _INR_MAGIC:
        raise ValueError(f"{path}: bad INR magic")
    arch = InrArchitecture(hidden_dim=h, hidden_layers=layers, in_dim=d,
                           omega=float(np.float32(omega)))
    weights, biases = [], []
    off = size
    for spec in arch.layer_specs():
        w = np.frombuffer(raw, dtype="<f4", count=spec.out_dim * spec.in_dim, offset=off)
        off += 4 * w.size
        b = np.frombuffer(raw, dtype="<f4", count=spec.out_dim, offset=off)
        off += 4 * b.size
        weights.append(w.reshape(spec.out_dim, spec.in_dim).astype(np.float64))
        biases.append(b.astype(np.float64))
    params = MlpParams(specs=arch.layer_specs(), weights=weights, biases=biases)
    return InrRecord(arch=arch, field_kind=FIELD_KINDS[kind_code], params=params,
                     init_seed=init_seed, fit_seed=0, shape_id=shape_id,
                     loss_kind=_LOSS_KINDS[loss_code],
                     max_dist=float(np.float32(max_dist)))
