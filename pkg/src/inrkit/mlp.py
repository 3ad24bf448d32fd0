"""Dense MLP engine: explicit forward/backward in float64 numpy.

Everything downstream (shape field networks, weight-space encoders, task
heads, critics) is built from the same layer primitive: a linear map with an
optional 1D batchnorm on the pre-activation and one of four activations
(sine, relu, sigmoid, none).  Training code works on the flat list of
parameter arrays returned by ``MlpParams.arrays()``; gradients come back in
the same order.

Forward passes are pure: train-mode batchnorm computes batch statistics but
does not touch the running estimates.  The training loop decides when to
fold the batch statistics into the running ones via ``commit_batchnorm``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

ACTIVATIONS = ("sine", "relu", "sigmoid", "none")


@dataclass(frozen=True)
class LayerSpec:
    in_dim: int
    out_dim: int
    activation: str = "none"
    omega: float = 30.0
    batchnorm: bool = False

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.in_dim < 1 or self.out_dim < 1:
            raise ValueError("layer dims must be positive")


@dataclass
class BatchNormState:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1
    eps: float = 1e-5

    @staticmethod
    def fresh(dim: int, momentum: float = 0.1, eps: float = 1e-5) -> "BatchNormState":
        return BatchNormState(
            gamma=np.ones(dim),
            beta=np.zeros(dim),
            running_mean=np.zeros(dim),
            running_var=np.ones(dim),
            momentum=momentum,
            eps=eps,
        )


@dataclass
class MlpParams:
    specs: tuple[LayerSpec, ...]
    weights: list[np.ndarray]  # per layer, shape (out_dim, in_dim)
    biases: list[np.ndarray]  # per layer, shape (out_dim,)
    bn: list[BatchNormState | None] = field(default_factory=list)

    def __post_init__(self):
        if not self.bn:
            self.bn = [None] * len(self.specs)
        if not (len(self.specs) == len(self.weights) == len(self.biases) == len(self.bn)):
            raise ValueError("per-layer lists out of sync")
        for i, spec in enumerate(self.specs):
            if self.weights[i].shape != (spec.out_dim, spec.in_dim):
                raise ValueError(f"layer {i}: weight shape {self.weights[i].shape} "
                                 f"!= {(spec.out_dim, spec.in_dim)}")
            if self.biases[i].shape != (spec.out_dim,):
                raise ValueError(f"layer {i}: bias shape mismatch")
            if i > 0 and spec.in_dim != self.specs[i - 1].out_dim:
                raise ValueError(f"layer {i}: in_dim {spec.in_dim} does not chain "
                                 f"to previous out_dim {self.specs[i - 1].out_dim}")
            if spec.batchnorm and self.bn[i] is None:
                raise ValueError(f"layer {i}: batchnorm spec without state")

    @property
    def in_dim(self) -> int:
        return self.specs[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.specs[-1].out_dim

    def arrays(self) -> list[np.ndarray]:
        """Trainable arrays in canonical order (per layer: W, b, gamma, beta)."""
        out: list[np.ndarray] = []
        for i in range(len(self.specs)):
            out.append(self.weights[i])
            out.append(self.biases[i])
            if self.bn[i] is not None:
                out.append(self.bn[i].gamma)
                out.append(self.bn[i].beta)
        return out

    def copy(self) -> "MlpParams":
        return MlpParams(
            specs=self.specs,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            bn=[None if s is None else BatchNormState(
                s.gamma.copy(), s.beta.copy(), s.running_mean.copy(),
                s.running_var.copy(), s.momentum, s.eps) for s in self.bn],
        )

    def n_params(self) -> int:
        return int(sum(a.size for a in self.arrays()))


@dataclass
class MlpGrads:
    d_weights: list[np.ndarray]
    d_biases: list[np.ndarray]
    d_gamma: list[np.ndarray | None]
    d_beta: list[np.ndarray | None]

    @staticmethod
    def zeros_like(params: MlpParams) -> "MlpGrads":
        return MlpGrads(
            d_weights=[np.zeros_like(w) for w in params.weights],
            d_biases=[np.zeros_like(b) for b in params.biases],
            d_gamma=[None if s is None else np.zeros_like(s.gamma) for s in params.bn],
            d_beta=[None if s is None else np.zeros_like(s.beta) for s in params.bn],
        )

    def arrays(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for i in range(len(self.d_weights)):
            out.append(self.d_weights[i])
            out.append(self.d_biases[i])
            if self.d_gamma[i] is not None:
                out.append(self.d_gamma[i])
                out.append(self.d_beta[i])
        return out

    def add_(self, other: "MlpGrads") -> "MlpGrads":
        for a, b in zip(self.arrays(), other.arrays()):
            a += b
        return self


def init_mlp(specs: Sequence[LayerSpec], rng: np.random.Generator,
             scheme: str = "he", bn_momentum: float = 0.1, bn_eps: float = 1e-5) -> MlpParams:
    """Generic init for relu/linear nets (shape-field nets use their own law)."""
    weights, biases, bn = [], [], []
    for spec in specs:
        if scheme == "he":
            bound = np.sqrt(6.0 / spec.in_dim)
        elif scheme == "glorot":
            bound = np.sqrt(6.0 / (spec.in_dim + spec.out_dim))
        else:
            raise ValueError(f"unknown init scheme {scheme!r}")
        weights.append(rng.uniform(-bound, bound, size=(spec.out_dim, spec.in_dim)))
        biases.append(np.zeros(spec.out_dim))
        bn.append(BatchNormState.fresh(spec.out_dim, bn_momentum, bn_eps)
                  if spec.batchnorm else None)
    return MlpParams(specs=tuple(specs), weights=weights, biases=biases, bn=bn)


def _activate(name: str, omega: float, a: np.ndarray) -> np.ndarray:
    if name == "sine":
        return np.sin(omega * a)
    if name == "relu":
        return np.maximum(a, 0.0)
    if name == "sigmoid":
        return _sigmoid(a)
    return a


def _activate_prime(name: str, omega: float, a: np.ndarray, h: np.ndarray) -> np.ndarray:
    # h is the already-computed activation output, reused where it helps
    if name == "sine":
        return omega * np.cos(omega * a)
    if name == "relu":
        return (a > 0.0).astype(a.dtype)
    if name == "sigmoid":
        return h * (1.0 - h)
    return np.ones_like(a)


def _activate_second(name: str, omega: float, a: np.ndarray, h: np.ndarray) -> np.ndarray:
    if name == "sine":
        return -(omega * omega) * h  # h = sin(omega a)
    if name == "relu":
        return np.zeros_like(a)
    if name == "sigmoid":
        return h * (1.0 - h) * (1.0 - 2.0 * h)
    return np.zeros_like(a)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class _LayerCache:
    x: np.ndarray  # layer input
    z: np.ndarray  # linear output
    a: np.ndarray  # activation input (after bn when present)
    h: np.ndarray  # activation output
    xhat: np.ndarray | None = None
    mean: np.ndarray | None = None
    invstd: np.ndarray | None = None
    new_running: tuple[np.ndarray, np.ndarray] | None = None


@dataclass
class MlpCache:
    mode: str
    layers: list[_LayerCache]

    @property
    def output(self) -> np.ndarray:
        return self.layers[-1].h


def mlp_forward(params: MlpParams, x: np.ndarray, mode: str = "eval") -> tuple[np.ndarray, MlpCache]:
    """Run the net on a batch (B, in_dim).  Pure: never mutates params."""
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be train or eval, got {mode!r}")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.in_dim:
        raise ValueError(f"input shape {x.shape} incompatible with in_dim {params.in_dim}")
    if not np.isfinite(x).all():
        raise ValueError("non-finite values in network input")

    caches: list[_LayerCache] = []
    h = x
    for i, spec in enumerate(params.specs):
        z = h @ params.weights[i].T + params.biases[i]
        bn = params.bn[i]
        if bn is not None:
            if mode == "train":
                if z.shape[0] < 2:
                    raise ValueError("train-mode batchnorm needs batch size >= 2")
                mean = z.mean(axis=0)
                var = z.var(axis=0)
                invstd = 1.0 / np.sqrt(var + bn.eps)
                xhat = (z - mean) * invstd
                n = z.shape[0]
                unbiased = var * (n / (n - 1.0))
                new_running = (
                    (1.0 - bn.momentum) * bn.running_mean + bn.momentum * mean,
                    (1.0 - bn.momentum) * bn.running_var + bn.momentum * unbiased,
                )
            else:
                mean = bn.running_mean
                invstd = 1.0 / np.sqrt(bn.running_var + bn.eps)
                xhat = (z - mean) * invstd
                new_running = None
            a = xhat * bn.gamma + bn.beta
            hc = _LayerCache(x=h, z=z, a=a, h=_activate(spec.activation, spec.omega, a),
                             xhat=xhat, mean=mean, invstd=invstd, new_running=new_running)
        else:
            a = z
            hc = _LayerCache(x=h, z=z, a=a, h=_activate(spec.activation, spec.omega, a))
        caches.append(hc)
        h = hc.h
    return h, MlpCache(mode=mode, layers=caches)


def commit_batchnorm(params: MlpParams, cache: MlpCache) -> None:
    """Fold the batch statistics of a train-mode forward into running stats."""
    if cache.mode != "train":
        raise ValueError("can only commit statistics from a train-mode forward")
    for bn, lc in zip(params.bn, cache.layers):
        if bn is not None and lc.new_running is not None:
            bn.running_mean[...] = lc.new_running[0]
            bn.running_var[...] = lc.new_running[1]


def mlp_backward(params: MlpParams, cache: MlpCache, gout: np.ndarray) -> tuple[MlpGrads, np.ndarray]:
    """Backprop ``gout`` = dLoss/d(output) through the cached forward.

    Returns gradients for every trainable array plus dLoss/d(input batch).
    """
    grads = MlpGrads.zeros_like(params)
    dh = np.asarray(gout, dtype=np.float64)
    if dh.shape != cache.layers[-1].h.shape:
        raise ValueError("gout shape does not match forward output")
    for i in range(len(params.specs) - 1, -1, -1):
        spec = params.specs[i]
        lc = cache.layers[i]
        da = dh * _activate_prime(spec.activation, spec.omega, lc.a, lc.h)
        bn = params.bn[i]
        if bn is not None:
            grads.d_gamma[i][...] = (da * lc.xhat).sum(axis=0)
            grads.d_beta[i][...] = da.sum(axis=0)
            dxhat = da * bn.gamma
            if cache.mode == "train":
                n = lc.z.shape[0]
                dz = (lc.invstd / n) * (
                    n * dxhat - dxhat.sum(axis=0) - lc.xhat * (dxhat * lc.xhat).sum(axis=0)
                )
            else:
                dz = dxhat * lc.invstd
        else:
            dz = da
        grads.d_weights[i][...] = dz.T @ lc.x
        grads.d_biases[i][...] = dz.sum(axis=0)
        dh = dz @ params.weights[i]
    return grads, dh


# --- per-sample input gradients of a scalar-output net -----------------------

@dataclass
class _InputGradTape:
    x: np.ndarray
    caches: list[_LayerCache]
    u: list[np.ndarray]  # u[l] = d y_b / d h_l, including u[0] = grad wrt input
    v: list[np.ndarray]  # v[l+1]... per layer: u_layer * phi'(a)


def input_gradients(params: MlpParams, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, _InputGradTape]:
    """Values and per-sample input gradients of a scalar-output net (eval mode).

    Batchnorm layers are allowed (eval mode is an affine map); returns
    (values (B,), grads (B, in_dim), tape) where tape supports
    ``input_gradient_param_backward``.
    """
    if params.out_dim != 1:
        raise ValueError("input_gradients expects a scalar-output net")
    y, cache = mlp_forward(params, x, mode="eval")
    nl = len(params.specs)
    u: list[np.ndarray] = [None] * (nl + 1)  # type: ignore[list-item]
    v: list[np.ndarray] = [None] * nl  # type: ignore[list-item]
    u[nl] = np.ones_like(y)
    for i in range(nl - 1, -1, -1):
        spec = params.specs[i]
        lc = cache.layers[i]
        vi = u[i + 1] * _activate_prime(spec.activation, spec.omega, lc.a, lc.h)
        if params.bn[i] is not None:
            # eval-mode bn scales each pre-activation column by gamma*invstd
            vi = vi * (params.bn[i].gamma * lc.invstd)
        v[i] = vi
        u[i] = vi @ params.weights[i]
    tape = _InputGradTape(x=cache.layers[0].x, caches=cache.layers, u=u, v=v)
    return y[:, 0], u[0], tape


def input_gradient_param_backward(params: MlpParams, tape: _InputGradTape,
                                  g_adjoint: np.ndarray) -> MlpGrads:
    """Parameter gradients of a scalar function of the input gradients.

    ``g_adjoint`` is dLoss/dG where G = input_gradients(...)[1].  Used for
    gradient penalties; supports all activations (relu second derivative is
    zero almost everywhere).  Batchnorm is not supported here.
    """
    if any(s is not None for s in params.bn):
        raise ValueError("second-order pass does not support batchnorm layers")
    grads = MlpGrads.zeros_like(params)
    nl = len(params.specs)
    ubar = np.asarray(g_adjoint, dtype=np.float64)
    zbar_stash: list[np.ndarray] = []
    for i in range(nl):
        spec = params.specs[i]
        lc = tape.caches[i]
        vbar = ubar @ params.weights[i].T
        grads.d_weights[i] += tape.v[i].T @ ubar
        phi1 = _activate_prime(spec.activation, spec.omega, lc.a, lc.h)
        phi2 = _activate_second(spec.activation, spec.omega, lc.a, lc.h)
        zbar_stash.append(vbar * tape.u[i + 1] * phi2)
        ubar = vbar * phi1
    hbar = np.zeros_like(tape.caches[-1].h)
    for i in range(nl - 1, -1, -1):
        spec = params.specs[i]
        lc = tape.caches[i]
        zbar = zbar_stash[i] + hbar * _activate_prime(spec.activation, spec.omega, lc.a, lc.h)
        grads.d_weights[i] += zbar.T @ lc.x
        grads.d_biases[i] += zbar.sum(axis=0)
        hbar = zbar @ params.weights[i]
    return grads


def finite_diff_grad(loss_fn: Callable[[], float], arrays: Sequence[np.ndarray],
                     eps: float = 1e-6) -> list[np.ndarray]:
    """Central-difference gradient of ``loss_fn`` w.r.t. each array, in place.

    ``loss_fn`` must read the (mutated) arrays on every call and be
    deterministic.  Kept independent of the analytic backward pass so it can
    serve as its oracle.
    """
    grads = []
    for arr in arrays:
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            up = loss_fn()
            flat[j] = orig - eps
            down = loss_fn()
            flat[j] = orig
            gflat[j] = (up - down) / (2.0 * eps)
        grads.append(g)
    return grads


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-8) -> float:
    num = float(np.max(np.abs(a - b)))
    den = max(float(np.max(np.abs(a))), float(np.max(np.abs(b))), floor)
    return num / den
