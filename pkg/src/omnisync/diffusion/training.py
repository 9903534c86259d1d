"""Masked v-prediction training for the toy denoiser.

The loss is the mean squared v-error over masked faces only, image block
plus depth block, equally weighted. Optimization is plain momentum-free
gradient descent: parameter state is exactly the parameter values, so a
seed pins the entire trajectory.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import data as ddata
from . import schedule as dsched
from .unet import ToyUNet, ToyUNetConfig


@dataclass
class TrainConfig:
    face_size: int = 32
    batch_size: int = 4
    n_steps: int = 120
    lr: float = 0.02
    seed: int = 0
    T: int = 1000
    base_channels: int = 16
    heads: int = 2
    sync_sa: bool = True
    sync_conv: bool = True
    sync_gn: bool = True
    n_scenes: int = 32
    condition_face: int = 0
    dtype: str = "float32"
    time_budget_s: float | None = None

    def unet_config(self) -> ToyUNetConfig:
        return ToyUNetConfig(base_channels=self.base_channels, heads=self.heads,
                             sync_sa=self.sync_sa, sync_conv=self.sync_conv,
                             sync_gn=self.sync_gn, dtype=self.dtype)


def masked_v_loss(v_hat_c, v_hat_d, v_c, v_d, mask):
    """(loss, grad_c, grad_d): masked MSE of both blocks, equally weighted."""
    m = mask.astype(v_hat_c.dtype)
    denom = m.sum() * v_c.shape[2]
    if denom == 0:
        raise ValueError("no masked faces in batch")
    diff_c = (v_hat_c - v_c) * m
    diff_d = (v_hat_d - v_d) * m
    loss = (np.sum(diff_c * diff_c) + np.sum(diff_d * diff_d)) / denom
    grad_c = 2.0 * diff_c / denom
    grad_d = 2.0 * diff_d / denom
    return float(loss), grad_c, grad_d


def loss_and_grads(model: ToyUNet, batch: ddata.SceneBatch,
                   schedule: dsched.NoiseSchedule, rng: np.random.Generator):
    """One training step's loss and parameter gradients.

    Draws t ~ Uniform{1..T} per item and fresh Gaussian noise, builds the
    masked noisy state, and backpropagates the masked v-loss. The draws are
    stratified over equal slices of {1..T} in shuffled order, so every batch
    sees both ends of the schedule while each item's marginal distribution
    stays uniform; this cuts step-to-step gradient variance, which plain
    fixed-rate descent has no momentum to average away.
    """
    dt = model.params["in.w"].dtype
    b = batch.x0_c.shape[0]
    u = (rng.permutation(b) + rng.random(b)) / b
    t = 1 + np.minimum((u * schedule.T).astype(np.int64), schedule.T - 1)
    eps_c = ddata.sample_block_noise(rng, batch.x0_c.shape)
    eps_d = ddata.sample_block_noise(rng, batch.x0_d.shape)
    z_c, z_d = dsched.masked_noise_inject(batch.x0_c, batch.x0_d, batch.mask, t,
                                          eps_c, eps_d, schedule)
    x = ddata.assemble_input(z_c, z_d, batch.mask).astype(dt)
    v_c = dsched.v_target(batch.x0_c, eps_c, t, schedule).astype(dt)
    v_d = dsched.v_target(batch.x0_d, eps_d, t, schedule).astype(dt)
    out, cache = model.forward(x, t)
    if not np.all(np.isfinite(out)):
        raise FloatingPointError(
            f"non-finite model output at t={t.tolist()}; "
            f"|out| max {np.abs(out[np.isfinite(out)]).max() if np.any(np.isfinite(out)) else 'n/a'}")
    v_hat_c, v_hat_d = ddata.split_output(out)
    loss, gc, gd = masked_v_loss(v_hat_c, v_hat_d, v_c, v_d,
                                 batch.mask.astype(dt))
    grad_out = np.concatenate([gc, gd], axis=2)
    grads = model.backward(grad_out, cache)
    return loss, grads


def sgd_step(model: ToyUNet, grads: dict, lr: float) -> None:
    for k, g in grads.items():
        model.params[k] -= (lr * g).astype(model.params[k].dtype)


@dataclass
class EvalState:
    """Frozen (scenes, timesteps, noise) used to compare loss before and
    after training without per-step t-sampling noise."""

    batch: ddata.SceneBatch
    t: np.ndarray
    eps_c: np.ndarray
    eps_d: np.ndarray


def make_eval_state(face_size: int, n_items: int, T: int, seed: int,
                    condition_face: int = 0) -> EvalState:
    rng = np.random.default_rng(seed)
    batch = ddata.make_batch(rng, n_items, face_size,
                             condition_face=condition_face)
    t = np.linspace(1, T, n_items).round().astype(np.int64)
    eps_c = ddata.sample_block_noise(rng, batch.x0_c.shape)
    eps_d = ddata.sample_block_noise(rng, batch.x0_d.shape)
    return EvalState(batch, t, eps_c, eps_d)


def eval_loss(model: ToyUNet, state: EvalState,
              schedule: dsched.NoiseSchedule) -> float:
    """Masked v-loss on the frozen evaluation state (forward only)."""
    dt = model.params["in.w"].dtype
    b = state.batch
    z_c, z_d = dsched.masked_noise_inject(b.x0_c, b.x0_d, b.mask, state.t,
                                          state.eps_c, state.eps_d, schedule)
    x = ddata.assemble_input(z_c, z_d, b.mask).astype(dt)
    v_c = dsched.v_target(b.x0_c, state.eps_c, state.t, schedule).astype(dt)
    v_d = dsched.v_target(b.x0_d, state.eps_d, state.t, schedule).astype(dt)
    out, _ = model.forward(x, state.t)
    v_hat_c, v_hat_d = ddata.split_output(out)
    loss, _, _ = masked_v_loss(v_hat_c, v_hat_d, v_c, v_d, b.mask.astype(dt))
    return loss


@dataclass
class TrainHistory:
    losses: list = field(default_factory=list)
    seconds: float = 0.0
    stopped_early: bool = False
    eval_before: float | None = None
    eval_after: float | None = None


def train_toy(config: TrainConfig, eval_state: EvalState | None = None):
    """Train on a fixed pool of synthetic scenes; returns (model, history).

    Scene generation, batch composition, timestep and noise draws all flow
    from the single seed. An optional wall-clock budget stops training early
    (recorded in the history) without breaking determinism of the steps that
    did run. When an EvalState is given, its loss is recorded before and
    after training.
    """
    rng = np.random.default_rng(config.seed)
    scenes = [ddata.make_scene(rng, config.face_size)
              for _ in range(config.n_scenes)]
    schedule = dsched.make_schedule(config.T)
    model = ToyUNet(config.unet_config(), seed=config.seed)
    history = TrainHistory()
    if eval_state is not None:
        history.eval_before = eval_loss(model, eval_state, schedule)
    start = time.monotonic()
    for step in range(config.n_steps):
        if (config.time_budget_s is not None
                and time.monotonic() - start > config.time_budget_s):
            history.stopped_early = True
            break
        idx = rng.integers(0, len(scenes), size=config.batch_size)
        s_values = [float(rng.uniform(0.2, 1.0)) for _ in range(config.batch_size)]
        batch = ddata.encode_scenes([scenes[i] for i in idx], s_values,
                                    config.condition_face)
        loss, grads = loss_and_grads(model, batch, schedule, rng)
        sgd_step(model, grads, config.lr)
        history.losses.append(loss)
    history.seconds = time.monotonic() - start
    if eval_state is not None:
        history.eval_after = eval_loss(model, eval_state, schedule)
    return model, history
