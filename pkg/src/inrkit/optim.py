"""Adam/AdamW with bias correction, plus constant and one-cycle LR schedules."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class OptimizerState:
    kind: str  # "adam" | "adamw"
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step_count: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in ("adam", "adamw"):
            raise ValueError(f"unknown optimizer kind {self.kind!r}")


def optimizer_init(kind: str, arrays: list[np.ndarray], lr: float, *,
                   beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
                   weight_decay: float = 0.0) -> OptimizerState:
    state = OptimizerState(kind=kind, lr=lr, beta1=beta1, beta2=beta2, eps=eps,
                           weight_decay=weight_decay)
    state.m = [np.zeros_like(a) for a in arrays]
    state.v = [np.zeros_like(a) for a in arrays]
    return state


def optimizer_step(state: OptimizerState, arrays: list[np.ndarray],
                   grads: list[np.ndarray], lr: float | None = None) -> None:
    """One update, in place.  ``lr`` overrides the stored rate (schedules)."""
    if len(arrays) != len(state.m) or len(grads) != len(state.m):
        raise ValueError("array/grad count does not match optimizer state")
    rate = state.lr if lr is None else lr
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for p, g, m, v in zip(arrays, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError("gradient shape does not match parameter shape")
        if not np.isfinite(g).all():
            raise ValueError("non-finite gradient")
        if state.kind == "adam" and state.weight_decay != 0.0:
            g = g + state.weight_decay * p  # coupled decay folds into the gradient
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        mhat = m / bc1
        vhat = v / bc2
        if state.kind == "adamw":
            p -= rate * state.weight_decay * p  # decoupled decay
        p -= rate * mhat / (np.sqrt(vhat) + state.eps)


@dataclass(frozen=True)
class LrSchedule:
    kind: str = "constant"  # "constant" | "one_cycle"
    max_lr: float = 1e-4
    total_steps: int = 1
    div_start: float = 25.0
    div_final: float = 1e4
    peak_frac: float = 0.3

    def __post_init__(self):
        if self.kind not in ("constant", "one_cycle"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.total_steps < 1:
            raise ValueError("total_steps must be >= 1")

    @property
    def peak_step(self) -> int:
        return int(round(self.peak_frac * (self.total_steps - 1)))


def schedule_lr(sched: LrSchedule, step: int) -> float:
    """Learning rate for 0-based ``step``; one_cycle hits max_lr exactly at peak."""
    if step < 0 or step >= sched.total_steps:
        raise ValueError(f"step {step} outside [0, {sched.total_steps})")
    if sched.kind == "constant":
        return sched.max_lr
    peak = sched.peak_step
    start = sched.max_lr / sched.div_start
    final = sched.max_lr / sched.div_final
    if step <= peak:
        if peak == 0:
            return sched.max_lr
        frac = step / peak
        return start + (sched.max_lr - start) * 0.5 * (1.0 - np.cos(np.pi * frac))
    span = sched.total_steps - 1 - peak
    frac = (step - peak) / span
    return final + (sched.max_lr - final) * 0.5 * (1.0 + np.cos(np.pi * frac))
