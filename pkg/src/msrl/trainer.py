"""End-to-end training: epoch loop over mini-batches, per-view forward,
consensus pseudolabels, total loss, analytic backward, one shared Adam
update, and deterministic checkpointing.

Determinism contract: (dataset bytes, config, seed) fully determine the
checkpoint bytes. All randomness is derived from (seed, epoch, batch,
view), so per-view work may be farmed out to threads without changing any
result, and resuming from a checkpoint reproduces the uninterrupted run
bit for bit.
"""

from __future__ import annotations

import json
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import consensus as cns
from . import fsrl
from .dataio import DTYPE_F64, FORMAT_VERSION, VIEW_MAGIC, make_batches
from .numerics import DELTA, AdamState, adam_step

CHECKPOINT_MAGIC = b"MVCK"


class TrainingDivergedError(RuntimeError):
    """Raised when a loss term stops being finite."""


@dataclass
class TrainConfig:
    alpha: float = 5.0
    beta: float = 1.0
    lr: float = 1e-3
    batch_size: int = 500
    epochs: int = 100
    seed: int = 0
    dropout_rate: float = 0.1
    row_normalize: bool = False
    delta_floor: float = DELTA

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be nonnegative")
        if self.lr < 0:
            raise ValueError("learning rate must be nonnegative")
        if self.epochs < 1:
            raise ValueError("need at least one epoch")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout rate must be in [0, 1)")


@dataclass
class Checkpoint:
    """Trained per-view models plus everything needed to resume training."""

    config: TrainConfig
    n_clusters: int
    models: list                 # ViewModel per view
    adam: AdamState
    epoch: int                   # epochs completed
    loss_trace: list = field(default_factory=list)  # per-epoch [Ls, La, Lc, total]
    backbones: list = field(default_factory=list)


def _pack(models):
    return np.concatenate([np.concatenate([m.W.ravel(), m.v]) for m in models])


def _unpack(flat, models):
    out = []
    pos = 0
    for m in models:
        w_size = m.W.size
        w = flat[pos:pos + w_size].reshape(m.W.shape)
        pos += w_size
        v = flat[pos:pos + m.v.size].copy()
        pos += m.v.size
        out.append(fsrl.ViewModel(
            W=w.copy(), v=v,
            dropout_rate=m.dropout_rate, row_normalize=m.row_normalize,
        ))
    return out


def _init_models(dataset, n_clusters, config):
    rng = np.random.default_rng([config.seed & 0xFFFFFFFF, 0x1717])
    models = []
    for view in dataset.views:
        m = view.dim
        # Small weights keep early assignments near-uniform, so pseudolabels
        # crystallize from the loss landscape instead of the random init.
        bound = 0.1 / np.sqrt(m)
        w = rng.uniform(-bound, bound, size=(m, n_clusters))
        models.append(fsrl.ViewModel(
            W=w, v=np.zeros(2 * n_clusters),
            dropout_rate=config.dropout_rate,
            row_normalize=config.row_normalize,
        ))
    return models


def _worker_count():
    raw = os.environ.get("MSRL_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _forward_all(models, features, training, rngs):
    """Per-view forward passes, optionally on a thread pool.

    Results are collected by view index, so the outcome is identical no
    matter how many workers run.
    """
    workers = _worker_count()
    if workers == 1 or len(models) == 1:
        return [
            fsrl.forward(m, x, training=training, rng=r)
            for m, x, r in zip(models, features, rngs)
        ]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [
            pool.submit(fsrl.forward, m, x, training, r)
            for m, x, r in zip(models, features, rngs)
        ]
        return [f.result() for f in futures]


def _check_finite(breakdown, epoch, batch_no):
    for term, value in (
        ("semantic", breakdown.semantic),
        ("diversity", breakdown.diversity),
        ("consistency", breakdown.consistency),
        ("total", breakdown.total),
    ):
        if not np.isfinite(value):
            raise TrainingDivergedError(
                f"non-finite {term} loss at epoch {epoch}, batch {batch_no}"
            )


def _run_epochs(dataset, checkpoint, first_epoch, last_epoch):
    config = checkpoint.config
    models = checkpoint.models
    adam = checkpoint.adam
    params = _pack(models)
    n = dataset.n

    for epoch in range(first_epoch, last_epoch):
        plan = make_batches(n, min(config.batch_size, n), config.seed, epoch)
        epoch_terms = np.zeros(4)
        for batch_no, idx in enumerate(plan.batches()):
            features = [v.data[idx] for v in dataset.views]
            rngs = [
                np.random.default_rng(
                    [config.seed & 0xFFFFFFFF, epoch, batch_no, l, 0xD0]
                )
                for l in range(len(models))
            ]
            traces = _forward_all(models, features, training=True, rngs=rngs)
            breakdown, grads_s = cns.total_loss(
                [t.S for t in traces], config.alpha, config.beta,
                delta=config.delta_floor,
            )
            _check_finite(breakdown, epoch, batch_no)

            grad_vecs = []
            for model, trace, g in zip(models, traces, grads_s):
                grads = fsrl.backward(model, trace, g)
                grad_vecs.append(
                    np.concatenate([grads["dW"].ravel(), grads["dv"]])
                )
            flat_grads = np.concatenate(grad_vecs)
            adam, params = adam_step(adam, params, flat_grads)
            models = _unpack(params, models)
            if config.row_normalize:
                for m in models:
                    m.W = fsrl.project_unit_columns(m.W)
                params = _pack(models)

            weight = len(idx) / n
            epoch_terms += weight * np.array([
                breakdown.semantic, breakdown.diversity,
                breakdown.consistency, breakdown.total,
            ])
        checkpoint.loss_trace.append(epoch_terms.tolist())

    checkpoint.models = models
    checkpoint.adam = adam
    checkpoint.epoch = last_epoch
    return checkpoint


def train(dataset, n_clusters, config):
    """Run the full optimization loop and return the final checkpoint."""
    if n_clusters < 2:
        raise ValueError("need at least 2 clusters")
    models = _init_models(dataset, n_clusters, config)
    adam = AdamState.init(sum(m.W.size + m.v.size for m in models), lr=config.lr)
    checkpoint = Checkpoint(
        config=config, n_clusters=n_clusters, models=models, adam=adam,
        epoch=0, loss_trace=[],
        backbones=[v.backbone_tag for v in dataset.views],
    )
    return _run_epochs(dataset, checkpoint, 0, config.epochs)


def resume_training(checkpoint, dataset, total_epochs):
    """Continue a checkpointed run until total_epochs epochs are complete.

    Because all per-epoch randomness is derived from (seed, epoch), the
    result is bit-identical to an uninterrupted run of total_epochs.
    """
    if total_epochs < checkpoint.epoch:
        raise ValueError("checkpoint already past the requested epoch count")
    _validate_dims(checkpoint, dataset)
    checkpoint.config.epochs = total_epochs
    return _run_epochs(dataset, checkpoint, checkpoint.epoch, total_epochs)


def _validate_dims(checkpoint, dataset):
    if len(checkpoint.models) != dataset.n_views:
        raise ValueError(
            f"checkpoint has {len(checkpoint.models)} views, "
            f"dataset has {dataset.n_views}"
        )
    for l, (model, view) in enumerate(zip(checkpoint.models, dataset.views)):
        if model.n_features != view.dim:
            raise ValueError(
                f"view {l}: checkpoint expects dim {model.n_features}, "
                f"dataset has {view.dim}"
            )


def predict(checkpoint, dataset, batch_size=None):
    """Evaluation-mode prediction: consensus distributions and labels.

    Batches are taken in natural order without shuffling; attention runs
    within each evaluation batch, so assignments depend on batch makeup
    (see prediction_flip_rate for the measured sensitivity).
    """
    _validate_dims(checkpoint, dataset)
    if batch_size is None:
        batch_size = checkpoint.config.batch_size
    batch_size = min(batch_size, dataset.n)
    n = dataset.n
    p_out = np.zeros((n, checkpoint.n_clusters))
    for start in range(0, n, batch_size):
        idx = np.arange(start, min(start + batch_size, n))
        features = [v.data[idx] for v in dataset.views]
        traces = _forward_all(
            checkpoint.models, features, training=False,
            rngs=[None] * len(checkpoint.models),
        )
        p_out[idx] = cns.consensus_dist([t.S for t in traces])
    return cns.pseudo_labels(p_out), p_out


def prediction_flip_rate(checkpoint, dataset, batch_size=None, seed=0, trials=2):
    """Max fraction of labels that flip when evaluation batches are composed
    randomly instead of in natural order. Surfaces the batch-composition
    sensitivity of attention instead of hiding it.
    """
    base, _ = predict(checkpoint, dataset, batch_size)
    if batch_size is None:
        batch_size = checkpoint.config.batch_size
    batch_size = min(batch_size, dataset.n)
    n = dataset.n
    worst = 0.0
    for t in range(trials):
        order = np.random.default_rng([seed & 0xFFFFFFFF, t, 0xF11]).permutation(n)
        labels = np.zeros(n, dtype=np.int64)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            features = [v.data[idx] for v in dataset.views]
            traces = _forward_all(
                checkpoint.models, features, training=False,
                rngs=[None] * len(checkpoint.models),
            )
            labels[idx] = cns.pseudo_labels(
                cns.consensus_dist([t_.S for t_ in traces])
            )
        worst = max(worst, float(np.mean(labels != base)))
    return worst


def _tensor_block(arr):
    arr = np.ascontiguousarray(arr, dtype="<f8")
    rows = arr.shape[0] if arr.ndim == 2 else 1
    cols = arr.shape[1] if arr.ndim == 2 else arr.shape[0]
    header = VIEW_MAGIC + struct.pack("<IQII", FORMAT_VERSION, rows, cols, DTYPE_F64)
    return header + arr.tobytes(order="C")


def _read_tensor_block(buf, pos):
    if buf[pos:pos + 4] != VIEW_MAGIC:
        raise ValueError("corrupt checkpoint: bad tensor magic")
    version, rows, cols, dtype_code = struct.unpack("<IQII", buf[pos + 4:pos + 24])
    if version != FORMAT_VERSION or dtype_code != DTYPE_F64:
        raise ValueError("corrupt checkpoint: unsupported tensor encoding")
    count = rows * cols
    end = pos + 24 + count * 8
    data = np.frombuffer(buf[pos + 24:end], dtype="<f8").reshape(rows, cols)
    return data, end


def checkpoint_bytes(checkpoint):
    """Serialize to the versioned binary container; byte-deterministic."""
    meta = {
        "config": asdict(checkpoint.config),
        "n_clusters": checkpoint.n_clusters,
        "epoch": checkpoint.epoch,
        "adam_step": checkpoint.adam.step,
        "adam_lr": checkpoint.adam.lr,
        "loss_trace": checkpoint.loss_trace,
        "backbones": checkpoint.backbones,
        "view_dims": [m.n_features for m in checkpoint.models],
    }
    meta_bytes = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode()
    blocks = [CHECKPOINT_MAGIC, struct.pack("<II", FORMAT_VERSION, len(meta_bytes)),
              meta_bytes]
    for model in checkpoint.models:
        blocks.append(_tensor_block(model.W))
        blocks.append(_tensor_block(model.v))
    blocks.append(_tensor_block(checkpoint.adam.m))
    blocks.append(_tensor_block(checkpoint.adam.v))
    return b"".join(blocks)


def save_checkpoint(checkpoint, path):
    with open(path, "wb") as f:
        f.write(checkpoint_bytes(checkpoint))


def load_checkpoint(path):
    buf = open(path, "rb").read()
    if buf[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    version, meta_len = struct.unpack("<II", buf[4:12])
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    meta = json.loads(buf[12:12 + meta_len].decode())
    config = TrainConfig(**meta["config"])
    pos = 12 + meta_len
    models = []
    for _ in meta["view_dims"]:
        w, pos = _read_tensor_block(buf, pos)
        v, pos = _read_tensor_block(buf, pos)
        models.append(fsrl.ViewModel(
            W=w, v=v[0],
            dropout_rate=config.dropout_rate,
            row_normalize=config.row_normalize,
        ))
    m, pos = _read_tensor_block(buf, pos)
    v, pos = _read_tensor_block(buf, pos)
    adam = AdamState(
        lr=meta["adam_lr"], step=meta["adam_step"], m=m.ravel(), v=v.ravel(),
    )
    return Checkpoint(
        config=config, n_clusters=meta["n_clusters"], models=models,
        adam=adam, epoch=meta["epoch"], loss_trace=meta["loss_trace"],
        backbones=meta.get("backbones", []),
    )
