"""Latent generation: a small GAN trained directly on shape embeddings.

Generator maps 128 noise values (drawn from N(0, 0.2)) through one hidden
layer to an embedding; the critic scores embeddings through two ReLU stages.
Training follows the Wasserstein objective with a gradient penalty: the
critic takes several steps per generator step, and the penalty's parameter
gradient is computed analytically by differentiating through the critic's
input-gradient expression (no finite differences in the loop).
"""
from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ..io3d import staged_write
from ..mlp import (
    LayerSpec,
    MlpGrads,
    MlpParams,
    init_mlp,
    input_gradient_param_backward,
    input_gradients,
    mlp_backward,
    mlp_forward,
)
from ..optim import optimizer_init, optimizer_step
from ..rng import stream


@dataclass(frozen=True)
class GanConfig:
    embed_dim: int
    noise_dim: int = 128
    gen_hidden: int = 128
    critic_hidden: tuple[int, int] = (256, 512)
    noise_std: float = 0.2
    gp_weight: float = 10.0
    critic_steps: int = 5
    lr: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.9
    epochs: int = 2000
    batch_size: int = 32

    def __post_init__(self):
        if min(self.embed_dim, self.noise_dim, self.gen_hidden) < 1:
            raise ValueError("dims must be positive")
        if self.noise_std <= 0 or self.gp_weight < 0:
            raise ValueError("bad noise or penalty settings")
        if self.critic_steps < 1 or self.epochs < 1 or self.batch_size < 1:
            raise ValueError("critic_steps, epochs, batch_size must be positive")

    def generator_specs(self) -> list[LayerSpec]:
        # linear head: the output space is unconstrained embedding coordinates
        return [LayerSpec(self.noise_dim, self.gen_hidden, "relu"),
                LayerSpec(self.gen_hidden, self.embed_dim, "none")]

    def critic_specs(self) -> list[LayerSpec]:
        h1, h2 = self.critic_hidden
        return [LayerSpec(self.embed_dim, h1, "relu"),
                LayerSpec(h1, h2, "relu"),
                LayerSpec(h2, 1, "none")]


@dataclass
class GanParams:
    config: GanConfig
    generator: MlpParams
    critic: MlpParams


def init_gan(config: GanConfig, seed: int = 0) -> GanParams:
    return GanParams(
        config,
        generator=init_mlp(config.generator_specs(), stream(seed, "gan-init", "g")),
        critic=init_mlp(config.critic_specs(), stream(seed, "gan-init", "d")),
    )


def sample_embeddings(gan: GanParams, n: int, seed: int = 0) -> np.ndarray:
    """n generated embeddings; pure given the seed."""
    if n < 1:
        raise ValueError("n must be positive")
    cfg = gan.config
    z = stream(seed, "gan-sample").normal(0.0, cfg.noise_std, (n, cfg.noise_dim))
    return mlp_forward(gan.generator, z)[0]


def gradient_penalty(critic: MlpParams, x_real: np.ndarray, x_fake: np.ndarray,
                     seed, norm_floor: float = 1e-12) -> tuple[float, MlpGrads]:
    """Two-sided penalty (||grad_x D(x_hat)|| - 1)^2 at random mixtures.

    x_hat = eps*x_real + (1-eps)*x_fake with eps ~ U(0,1) per pair; returns
    the mean penalty and its gradient w.r.t. the critic parameters, obtained
    analytically through the input-gradient expression.  ``norm_floor`` keeps
    the direction term finite when a gradient degenerates to zero.
    """
    rng = seed if hasattr(seed, "uniform") else stream(seed, "gp")
    x_real = np.atleast_2d(np.asarray(x_real, dtype=np.float64))
    x_fake = np.atleast_2d(np.asarray(x_fake, dtype=np.float64))
    if x_real.shape != x_fake.shape:
        raise ValueError("real and fake batches must have equal shapes")
    b = len(x_real)
    eps = rng.uniform(size=(b, 1))
    x_hat = eps * x_real + (1.0 - eps) * x_fake
    _, g, tape = input_gradients(critic, x_hat)
    norms = np.linalg.norm(g, axis=1)
    penalty = float(np.mean((norms - 1.0) ** 2))
    direction = g / np.maximum(norms, norm_floor)[:, None]
    adjoint = (2.0 / b) * (norms - 1.0)[:, None] * direction
    return penalty, input_gradient_param_backward(critic, tape, adjoint)


def train_latent_gan(embeddings: np.ndarray, config: GanConfig, seed: int = 0,
                     log_fn=None) -> tuple[GanParams, dict]:
    """Alternating WGAN-GP updates on a single-class embedding set.

    Each epoch runs ``critic_steps`` critic updates on fresh real/fake batches
    and then one generator update; deterministic given the seed.
    """
    embeddings = np.asarray(embeddings, dtype=np.float64)
    if embeddings.ndim != 2 or embeddings.shape[1] != config.embed_dim:
        raise ValueError("embeddings must be (N, embed_dim)")
    n = len(embeddings)
    if n < config.batch_size:
        raise ValueError(f"need at least batch_size={config.batch_size} "
                         f"embeddings, got {n}")

    gan = init_gan(config, seed)
    gen, critic = gan.generator, gan.critic
    opt_g = optimizer_init("adam", gen.arrays(), lr=config.lr,
                           beta1=config.beta1, beta2=config.beta2)
    opt_d = optimizer_init("adam", critic.arrays(), lr=config.lr,
                           beta1=config.beta1, beta2=config.beta2)
    rng = stream(seed, "gan-train")
    b = config.batch_size
    history = {"critic_loss": [], "gen_loss": [], "wasserstein": []}

    for epoch in range(config.epochs):
        d_losses = []
        w_est = 0.0
        for _ in range(config.critic_steps):
            real = embeddings[rng.choice(n, size=b, replace=False)]
            z = rng.normal(0.0, config.noise_std, (b, config.noise_dim))
            fake = mlp_forward(gen, z)[0]
            out_f, cache_f = mlp_forward(critic, fake)
            out_r, cache_r = mlp_forward(critic, real)
            gp, gp_grads = gradient_penalty(critic, real, fake, rng)
            d_loss = float(out_f.mean() - out_r.mean()) + config.gp_weight * gp
            g_fake, _ = mlp_backward(critic, cache_f, np.full_like(out_f, 1.0 / b))
            g_real, _ = mlp_backward(critic, cache_r, np.full_like(out_r, -1.0 / b))
            grads = [a + c + config.gp_weight * p for a, c, p in
                     zip(g_fake.arrays(), g_real.arrays(), gp_grads.arrays())]
            optimizer_step(opt_d, critic.arrays(), grads)
            d_losses.append(d_loss)
            w_est = float(out_r.mean() - out_f.mean())

        z = rng.normal(0.0, config.noise_std, (b, config.noise_dim))
        fake, gen_cache = mlp_forward(gen, z)
        out_f, cache_f = mlp_forward(critic, fake)
        gen_loss = float(-out_f.mean())
        _, d_fake = mlp_backward(critic, cache_f, np.full_like(out_f, -1.0 / b))
        gen_grads, _ = mlp_backward(gen, gen_cache, d_fake)
        optimizer_step(opt_g, gen.arrays(), gen_grads.arrays())

        history["critic_loss"].append(float(np.mean(d_losses)))
        history["gen_loss"].append(gen_loss)
        history["wasserstein"].append(w_est)
        if log_fn is not None:
            log_fn(epoch, history["critic_loss"][-1], gen_loss, w_est)
    return gan, history


# --- checkpoint format -------------------------------------------------------

_GAN_MAGIC = b"GAN1"


def save_gan(gan: GanParams, path) -> None:
    blob = json.dumps(asdict(gan.config), sort_keys=True).encode()
    parts = [struct.pack("<4sII", _GAN_MAGIC, 1, len(blob)), blob]
    arrays = gan.generator.arrays() + gan.critic.arrays()
    parts.append(struct.pack("<I", len(arrays)))
    for arr in arrays:
        a32 = np.asarray(arr, dtype=np.float32)
        parts.append(struct.pack("<B", a32.ndim))
        parts.append(struct.pack(f"<{a32.ndim}I", *a32.shape))
        parts.append(a32.tobytes())
    staged_write(path, b"".join(parts))


def load_gan(path) -> GanParams:
    blob = Path(path).read_bytes()
    magic, version, cfg_len = struct.unpack_from("<4sII", blob, 0)
    if magic != _GAN_MAGIC:
        raise ValueError("not a latent-gan checkpoint")
    if version != 1:
        raise ValueError(f"unsupported checkpoint version {version}")
    off = 12
    cfg = json.loads(blob[off:off + cfg_len].decode())
    off += cfg_len
    cfg["critic_hidden"] = tuple(cfg["critic_hidden"])
    config = GanConfig(**cfg)
    (n_arrays,) = struct.unpack_from("<I", blob, off)
    off += 4
    arrays = []
    for _ in range(n_arrays):
        (ndim,) = struct.unpack_from("<B", blob, off)
        off += 1
        shape = struct.unpack_from(f"<{ndim}I", blob, off)
        off += 4 * ndim
        count = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=off)
        off += 4 * count
        arrays.append(arr.reshape(shape).astype(np.float64))
    def rebuild(specs, flat):
        weights = [flat[2 * i] for i in range(len(specs))]
        biases = [flat[2 * i + 1] for i in range(len(specs))]
        return MlpParams(specs=tuple(specs), weights=weights, biases=biases,
                         bn=[None] * len(specs))
    g_specs = config.generator_specs()
    d_specs = config.critic_specs()
    n_gen = 2 * len(g_specs)
    if len(arrays) != n_gen + 2 * len(d_specs):
        raise ValueError("checkpoint array count does not match the config")
    return GanParams(config=config,
                     generator=rebuild(g_specs, arrays[:n_gen]),
                     critic=rebuild(d_specs, arrays[n_gen:]))
