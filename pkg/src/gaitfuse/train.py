"""Toy-scale training of the fusion stack.

Decoupled-weight-decay Adam over the flattened parameter tree, cosine
learning-rate annealing, early stopping on a validation plateau. Batch-norm
running statistics are refreshed once per step from the batch's
pre-normalization activations with fixed momentum.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .model import FusionParams, sample_loss_graph
from .params import flatten, is_trainable, lift, map_leaves
from .tensor import Tensor, ValidationError

__all__ = ["TrainConfig", "AdamW", "train_head", "evaluate"]


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 16
    lr: float = 1e-4
    weight_decay: float = 1e-5
    lambda_fr: float = 0.1
    patience: int = 10
    cosine: bool = True
    bn_momentum: float = 0.1
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def lr_at(self, epoch: int) -> float:
        if not self.cosine or self.epochs <= 1:
            return self.lr
        return self.lr * 0.5 * (1.0 + math.cos(math.pi * epoch / self.epochs))


class AdamW:
    """Adam with decoupled weight decay over {path: array} state."""

    def __init__(self, state: dict[str, np.ndarray], cfg: TrainConfig):
        self.cfg = cfg
        self.m = {k: np.zeros_like(v) for k, v in state.items() if is_trainable(k)}
        self.v = {k: np.zeros_like(v) for k, v in state.items() if is_trainable(k)}
        self.t = 0

    def step(self, state: dict[str, np.ndarray], grads: dict[str, np.ndarray],
             lr: float) -> None:
        c = self.cfg
        self.t += 1
        bc1 = 1.0 - c.beta1 ** self.t
        bc2 = 1.0 - c.beta2 ** self.t
        for k in sorted(grads):
            g = grads[k]
            self.m[k] = c.beta1 * self.m[k] + (1.0 - c.beta1) * g
            self.v[k] = c.beta2 * self.v[k] + (1.0 - c.beta2) * (g * g)
            mhat = self.m[k] / bc1
            vhat = self.v[k] / bc2
            state[k] -= lr * (mhat / (np.sqrt(vhat) + c.eps) + c.weight_decay * state[k])


def _sample_arrays(sample):
    f4_rgb, f4_d, f5_rgb, f5_d, label = sample
    conv = lambda t: np.asarray(t.data if isinstance(t, Tensor) else t, dtype=np.float32)
    return conv(f4_rgb), conv(f4_d), conv(f5_rgb), conv(f5_d), int(label)


def _batch_pass(batch, lifted, var_map, lambda_fr: float, train: bool,
                bn_inputs: dict | None = None):
    """Forward (and backward when training) over a batch; returns (loss, acc)."""
    total_loss = 0.0
    correct = 0
    w = 1.0 / len(batch)
    for sample in batch:
        f4r, f4d, f5r, f5d, label = _sample_arrays(sample)
        leaves = {"f4_rgb": ad.leaf(f4r), "f4_d": ad.leaf(f4d),
                  "f5_rgb": ad.leaf(f5r), "f5_d": ad.leaf(f5d)}
        inter: dict = {}
        loss = sample_loss_graph(leaves, lifted, label, lambda_fr, inter)
        logits = inter["logits"]
        if int(np.argmax(logits.a)) == label:
            correct += 1
        total_loss += float(loss.a) * w
        if train:
            ad.backward(loss, np.asarray(w, dtype=loss.a.dtype))
        if bn_inputs is not None:
            for key, v in inter.items():
                if key.endswith(".in"):
                    bn_inputs.setdefault(key, []).append(v.a)
    return total_loss, correct / len(batch)


def _update_bn_stats(state: dict[str, np.ndarray], bn_inputs: dict, momentum: float):
    """Momentum update of running mean/var from the batch's pre-BN activations."""
    for key in sorted(bn_inputs):
        # "mlge.local.bn1.in" -> parameter prefix "mlge.local.bn1"
        prefix = key[: -len(".in")]
        stacked = np.concatenate([a.reshape(-1, a.shape[-1]) for a in bn_inputs[key]])
        mean = stacked.mean(axis=0)
        var = stacked.var(axis=0)
        state[f"{prefix}.running_mean"] = (
            (1.0 - momentum) * state[f"{prefix}.running_mean"] + momentum * mean
        ).astype(np.float32)
        state[f"{prefix}.running_var"] = (
            (1.0 - momentum) * state[f"{prefix}.running_var"] + momentum * var
        ).astype(np.float32)


def evaluate(dataset, params: FusionParams, lambda_fr: float = 0.0) -> tuple[float, float]:
    """Mean loss and accuracy of the current parameters over a dataset."""
    lifted, var_map = lift(params)
    return _batch_pass(dataset, lifted, var_map, lambda_fr, train=False)


def train_head(train_set, val_set, params: FusionParams, cfg: TrainConfig,
               log_path: str | Path | None = None):
    """Minibatch training of the full fusion stack.

    Returns (trained FusionParams, log records). Stops early after
    ``cfg.patience`` epochs without validation improvement; a non-finite
    loss aborts and returns the last finite-loss parameters.
    """
    if not train_set:
        raise ValidationError("training dataset is empty")
    rng = np.random.default_rng(cfg.seed)
    state = {path: np.array(t.data, dtype=np.float32, copy=True)
             for path, t in flatten(params).items()}
    optim = AdamW(state, cfg)
    log: list[dict] = []
    best_val = math.inf
    stale = 0
    last_good = {k: v.copy() for k, v in state.items()}

    def snapshot() -> FusionParams:
        return map_leaves(params, lambda path, _t: Tensor(state[path]))

    aborted = False
    for epoch in range(cfg.epochs):
        lr = cfg.lr_at(epoch)
        order = rng.permutation(len(train_set))
        epoch_loss = 0.0
        epoch_correct = 0.0
        n_batches = 0
        for start in range(0, len(order), cfg.batch_size):
            batch = [train_set[i] for i in order[start: start + cfg.batch_size]]
            lifted, var_map = lift(params, trainable=True, arrays=state)
            bn_inputs: dict = {}
            loss, acc = _batch_pass(batch, lifted, var_map, cfg.lambda_fr,
                                    train=True, bn_inputs=bn_inputs)
            if not math.isfinite(loss):
                state = last_good
                aborted = True
                break
            grads = {path: v.grad for path, v in var_map.items()
                     if v.requires and v.grad is not None}
            if cfg.lr > 0.0:
                optim.step(state, grads, lr)
                _update_bn_stats(state, bn_inputs, cfg.bn_momentum)
            last_good = {k: v.copy() for k, v in state.items()}
            epoch_loss += loss
            epoch_correct += acc
            n_batches += 1
        if aborted:
            log.append({"epoch": epoch, "split": "train", "loss": None,
                        "accuracy": None, "lr": lr, "aborted": "non-finite loss"})
            break
        log.append({"epoch": epoch, "split": "train",
                    "loss": epoch_loss / max(n_batches, 1),
                    "accuracy": epoch_correct / max(n_batches, 1), "lr": lr})
        if val_set:
            val_loss, val_acc = evaluate(val_set, snapshot(), cfg.lambda_fr)
            log.append({"epoch": epoch, "split": "val", "loss": val_loss,
                        "accuracy": val_acc, "lr": lr})
            if val_loss < best_val - 1e-6:
                best_val = val_loss
                stale = 0
            else:
                stale += 1
                if stale >= cfg.patience:
                    break

    if log_path is not None:
        Path(log_path).parent.mkdir(parents=True, exist_ok=True)
        with open(log_path, "w") as fh:
            for rec in log:
                fh.write(json.dumps(rec) + "\n")
    return snapshot(), log
