"""Mini-batch Adam training with validation-driven early stopping."""

import csv
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import numkernel as nk
from .evaluator import ModelScorer, evaluate
from .exceptions import DimensionError, TrainingError
from .model import attach_negatives

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 32
    max_epochs: int = 100
    patience: int = 5
    seed: int = 0
    l2: float = 1e-5
    n_negatives: int = 4
    resample_negatives: bool = True
    clip_norm: float = 5.0
    validation_negatives: int = 1000
    k: int = 10

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")


class AdamState:
    """First/second moment buffers keyed by parameter name."""

    def __init__(self, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step = 0
        self.m = {}
        self.v = {}


def adam_step(state, params, grads, lr):
    """One bias-corrected Adam update, in place on ``params`` arrays.

    ``params`` and ``grads`` map names to arrays; missing grads count as zero.
    """
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name, theta in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(theta)
        if g.shape != theta.shape:
            raise DimensionError(f"{name}: gradient {g.shape} vs parameter {theta.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(theta)
            state.v[name] = np.zeros_like(theta)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        theta -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def clip_by_global_norm(grads, max_norm):
    """Scale all grads so their joint L2 norm is at most ``max_norm``; returns the norm."""
    norm = float(np.sqrt(sum(float(np.vdot(g, g)) for g in grads.values())))
    if max_norm and norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


@dataclass
class TrainResult:
    store: object
    history: list = field(default_factory=list)
    best_epoch: int = 0
    best_metric: float = float("nan")


def _snapshot(store):
    return store.copy()


def train(network, ds, train_instances, valid_instances, config, valid_seed=0):
    """Fit ``network.store`` in place and return the best snapshot.

    Validation Recall@K (one repeat, fixed negatives) drives early stopping;
    without validation instances the mean training loss is used instead.
    """
    if not train_instances:
        raise TrainingError("no training instances")
    store = network.store
    adam = AdamState()
    history = []
    best, best_epoch, best_metric = _snapshot(store), 0, -np.inf
    stale = 0
    started = time.perf_counter()
    for epoch in range(1, config.max_epochs + 1):
        if config.resample_negatives and epoch > 1:
            attach_negatives(ds, train_instances, config.n_negatives, (config.seed, epoch))
        order = np.random.default_rng([config.seed, 0x7A1, epoch]).permutation(len(train_instances))
        losses = []
        for bno, start in enumerate(range(0, len(order), config.batch_size)):
            batch = [train_instances[j] for j in order[start:start + config.batch_size]]
            store.zero_grad()
            with nk.Tape() as tape:
                loss = network.loss(batch, config.l2, training=True)
            value = float(loss.data)
            if not np.isfinite(value):
                bad = [k for k, p in store.tensors.items() if not np.all(np.isfinite(p.data))]
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {bno}; "
                                    f"non-finite parameters: {', '.join(bad) or 'none'}")
            nk.backward(tape, loss)
            grads = {k: p.grad for k, p in store.tensors.items() if p.grad is not None}
            for name, g in grads.items():
                if not np.all(np.isfinite(g)):
                    raise TrainingError(f"non-finite gradient in {name} at epoch {epoch}, batch {bno}")
            clip_by_global_norm(grads, config.clip_norm)
            adam_step(adam, {k: p.data for k, p in store.tensors.items()}, grads, config.learning_rate)
            losses.append(value)
        train_loss = float(np.mean(losses))
        if valid_instances:
            report = evaluate(ModelScorer(network), ds, valid_instances,
                              n_negatives=config.validation_negatives, repeats=1,
                              seed=valid_seed, k=config.k)
            metric = report.recall
        else:
            metric = -train_loss
        history.append({"epoch": epoch, "train_loss": train_loss,
                        "valid_recall": metric if valid_instances else float("nan"),
                        "seconds": time.perf_counter() - started})
        log.info("epoch %d loss %.5f valid R@%d %.5f", epoch, train_loss, config.k, metric)
        if metric > best_metric:
            best, best_epoch, best_metric = _snapshot(store), epoch, metric
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    return TrainResult(best, history, best_epoch, float(best_metric))


def write_history(path, history):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_loss", "valid_recall@10", "seconds"])
        for row in history:
            w.writerow([row["epoch"], repr(row["train_loss"]), repr(row["valid_recall"]),
                        f"{row['seconds']:.3f}"])
