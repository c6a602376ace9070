"""Loss, Adam, the training loop with best-validation selection, checkpoints.

Training is deterministic for a fixed seed: parameter init and epoch
shuffling use independent child streams of the config seed, batches are
visited in schedule order, and updates are single-worker.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator, Sequence

import numpy as np

from . import autodiff as ad
from . import model as m
from .autodiff import Tape, Tensor
from .data.windows import WindowedDataset
from .errors import ConfigError, DimensionError, FormatError, TrainingDivergedError
from .ioutil import format_version_string, pack_container, unpack_container, write_atomic

CHECKPOINT_MAGIC = b"FGCK"
LOG_HEADER = "epoch\ttrain_mse\tval_mse\twall_ms"


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    weight_decay: float = 5e-5
    epochs: int = 200
    batch_size: int = 32
    seed: int = 0
    report_every: int = 1

    def validate(self) -> None:
        if self.learning_rate < 0 or self.weight_decay < 0:
            raise ConfigError("learning_rate and weight_decay must be non-negative")
        if self.epochs < 1 or self.batch_size < 1 or self.report_every < 1:
            raise ConfigError("epochs, batch_size, and report_every must be positive")

    def as_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "weight_decay": self.weight_decay,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "seed": self.seed,
            "report_every": self.report_every,
        }


@dataclass
class AdamState:
    """Bias-corrected Adam moments, one pair per named parameter."""

    step: int
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def init(cls, params: dict[str, Tensor]) -> "AdamState":
        return cls(
            step=0,
            m={k: np.zeros_like(t.data) for k, t in params.items()},
            v={k: np.zeros_like(t.data) for k, t in params.items()},
        )

    def copy(self) -> "AdamState":
        return AdamState(
            step=self.step,
            m={k: v.copy() for k, v in self.m.items()},
            v={k: v.copy() for k, v in self.v.items()},
            beta1=self.beta1,
            beta2=self.beta2,
            eps=self.eps,
        )


def mse_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean of squared differences over every entry."""
    if pred.data.shape != target.data.shape:
        raise DimensionError(f"loss shapes differ: {pred.data.shape} vs {target.data.shape}")
    diff = ad.sub(pred, target)
    return ad.mul(ad.tsum(ad.mul(diff, diff)), 1.0 / pred.data.size)


def adam_step(
    params: dict[str, Tensor],
    grads: dict[str, np.ndarray],
    state: AdamState,
    config: TrainConfig,
) -> tuple[dict[str, Tensor], AdamState]:
    """One bias-corrected Adam update; weight decay enters as an L2 gradient term."""
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    lr = config.learning_rate
    for name, p in params.items():
        g = grads[name]
        if config.weight_decay:
            g = g + config.weight_decay * p.data
        state.m[name] = b1 * state.m[name] + (1.0 - b1) * g
        state.v[name] = b2 * state.v[name] + (1.0 - b2) * g * g
        m_hat = state.m[name] / (1.0 - b1**t)
        v_hat = state.v[name] / (1.0 - b2**t)
        p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params, state


def batch_schedule(
    n_samples: int, batch_size: int, epochs: int, seed: int
) -> Iterator[list[np.ndarray]]:
    """Seeded per-epoch shuffles chunked into batches; reproducible run to run."""
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(2)[1])
    for _ in range(epochs):
        order = rng.permutation(n_samples)
        yield [order[i : i + batch_size] for i in range(0, n_samples, batch_size)]


@dataclass
class Checkpoint:
    """Best-validation snapshot of everything needed to resume or evaluate."""

    params: dict[str, np.ndarray]
    adam: AdamState
    config: dict
    epoch: int
    val_loss: float
    seed: int


def evaluate_mse(
    dataset: WindowedDataset,
    split: str,
    variant: str,
    params: m.ModelParams,
    cfg: m.ModelConfig,
    batch_size: int = 256,
) -> float:
    """Scaled-space MSE over one split, computed without recording gradients."""
    ts = dataset.splits[split]
    if len(ts) == 0:
        raise ConfigError(f"split {split!r} has no windows")
    total, count = 0.0, 0
    for i in range(0, len(ts), batch_size):
        batch = m.build_batch(dataset, ts[i : i + batch_size], variant)
        pred = m.forward_batch(batch, variant, params, cfg)
        total += float(np.sum((pred.data - batch.target) ** 2))
        count += batch.target.size
    return total / count


def train(
    dataset: WindowedDataset,
    variant: str,
    config: TrainConfig,
    model_config: m.ModelConfig | None = None,
    log_path=None,
    on_epoch: Callable[[int, float, float], None] | None = None,
) -> Checkpoint:
    """Train a variant with seeded shuffling and best-validation selection."""
    config.validate()
    cfg = model_config or m.ModelConfig()
    train_ts = dataset.splits["train"]
    val_ts = dataset.splits["val"]
    if len(train_ts) == 0 or len(val_ts) == 0:
        raise ConfigError("training requires non-empty train and val splits")

    init_rng = np.random.default_rng(np.random.SeedSequence(config.seed).spawn(2)[0])
    params = m.init_params(variant, dataset.n_regions, cfg, init_rng)
    named = params.named()
    state = AdamState.init(named)

    config_echo = {
        "format_version": format_version_string(),
        "variant": variant,
        "train": config.as_dict(),
        "model": cfg.as_dict(),
        "seq_len": dataset.seq_len,
        "n_regions": dataset.n_regions,
        "split_fractions": list(dataset.split_fractions),
    }

    best_val = np.inf
    best_epoch = -1
    best_params = params.copy_values()
    best_adam = state.copy()

    log_fh = open(log_path, "w", encoding="utf-8") if log_path is not None else None
    try:
        if log_fh:
            log_fh.write(LOG_HEADER + "\n")
        schedule = batch_schedule(len(train_ts), config.batch_size, config.epochs, config.seed)
        for epoch, batches in enumerate(schedule):
            t0 = time.perf_counter()
            train_sq, train_n = 0.0, 0
            for batch_idx, sel in enumerate(batches):
                batch = m.build_batch(dataset, train_ts[sel], variant)
                with Tape() as tape:
                    pred = m.forward_batch(batch, variant, params, cfg)
                    loss = mse_loss(pred, Tensor(batch.target))
                    if not np.isfinite(loss.data):
                        raise TrainingDivergedError(epoch, batch_idx)
                    params.zero_grad()
                    tape.backward(loss)
                grads = {k: t.grad for k, t in named.items()}
                adam_step(named, grads, state, config)
                train_sq += float(loss.data) * batch.target.size
                train_n += batch.target.size
            train_mse = train_sq / train_n
            val_mse = evaluate_mse(dataset, "val", variant, params, cfg)
            wall_ms = (time.perf_counter() - t0) * 1e3
            if log_fh and (epoch % config.report_every == 0 or epoch == config.epochs - 1):
                log_fh.write(f"{epoch}\t{train_mse:.10g}\t{val_mse:.10g}\t{wall_ms:.1f}\n")
            if on_epoch:
                on_epoch(epoch, train_mse, val_mse)
            if val_mse < best_val:
                best_val = val_mse
                best_epoch = epoch
                best_params = params.copy_values()
                best_adam = state.copy()
    finally:
        if log_fh:
            log_fh.close()

    return Checkpoint(
        params=best_params,
        adam=best_adam,
        config=config_echo,
        epoch=best_epoch,
        val_loss=float(best_val),
        seed=config.seed,
    )


def params_from_checkpoint(ckpt: Checkpoint, n_regions: int) -> tuple[m.ModelParams, m.ModelConfig]:
    """Rebuild live parameters and the model config from a checkpoint."""
    cfg = m.ModelConfig.from_dict(ckpt.config["model"])
    variant = ckpt.config["variant"]
    rng = np.random.default_rng(0)
    params = m.init_params(variant, n_regions, cfg, rng)
    params.load_values(ckpt.params)
    return params, cfg


# ---------------------------------------------------------------------------
# checkpoint container


def checkpoint_to_bytes(ckpt: Checkpoint) -> bytes:
    names = sorted(ckpt.params)
    header = {
        "format_version": format_version_string(),
        "kind": "checkpoint",
        "config": ckpt.config,
        "epoch": ckpt.epoch,
        "val_loss": ckpt.val_loss,
        "seed": ckpt.seed,
        "adam_step": ckpt.adam.step,
        "adam_betas": [ckpt.adam.beta1, ckpt.adam.beta2],
        "adam_eps": ckpt.adam.eps,
        "params": [{"name": k, "shape": list(ckpt.params[k].shape)} for k in names],
    }
    blocks = []
    for k in names:
        blocks.append(np.ascontiguousarray(ckpt.params[k], dtype="<f8").tobytes())
        blocks.append(np.ascontiguousarray(ckpt.adam.m[k], dtype="<f8").tobytes())
        blocks.append(np.ascontiguousarray(ckpt.adam.v[k], dtype="<f8").tobytes())
    return pack_container(CHECKPOINT_MAGIC, header, b"".join(blocks))


def checkpoint_from_bytes(blob: bytes) -> Checkpoint:
    header, payload = unpack_container(blob, CHECKPOINT_MAGIC)
    params: dict[str, np.ndarray] = {}
    moments_m: dict[str, np.ndarray] = {}
    moments_v: dict[str, np.ndarray] = {}
    offset = 0
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        size = int(np.prod(shape)) if shape else 1
        for store in (params, moments_m, moments_v):
            arr = np.frombuffer(payload, dtype="<f8", count=size, offset=offset)
            store[entry["name"]] = arr.reshape(shape).astype(np.float64)
            offset += size * 8
    if offset != len(payload):
        raise FormatError("checkpoint payload has trailing bytes")
    adam = AdamState(
        step=header["adam_step"],
        m=moments_m,
        v=moments_v,
        beta1=header["adam_betas"][0],
        beta2=header["adam_betas"][1],
        eps=header["adam_eps"],
    )
    return Checkpoint(
        params=params,
        adam=adam,
        config=header["config"],
        epoch=header["epoch"],
        val_loss=header["val_loss"],
        seed=header["seed"],
    )


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    write_atomic(Path(path), checkpoint_to_bytes(ckpt))


def load_checkpoint(path) -> Checkpoint:
    return checkpoint_from_bytes(Path(path).read_bytes())
