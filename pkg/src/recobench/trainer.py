"""Small-encoder training loop for the contrastive objectives.

The encoder is a two-layer tanh MLP whose outputs are L2-normalized
(tanh keeps the whole forward smooth, so finite-difference gradient
checks stay clean).  Optimization is SGD with momentum under a cosine
learning-rate schedule decaying from ``lr_max`` to 0.  Training is
single-threaded and fully deterministic per seed.

Checkpoint format (little-endian): magic ``RCL1``, three uint32 layer
dims (input, hidden, output), then W1, b1, W2, b2 as row-major float64.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._util import atomic_write_bytes, atomic_write_text, fmt_float
from .losses import ClassCenters, EmbeddingBatch, combined, info_nce, paco, supcon
from .sampler import SamplerConfig, acceptance_matrix, draw_mask
from .taxonomy import build_similarity_table

OBJECTIVES = ("info_nce", "supcon", "paco", "reco_supcon", "reco_paco")

_MAGIC = b"RCL1"


class DivergenceError(RuntimeError):
    """Raised when the training loss stops being finite."""


@dataclass
class TrainConfig:
    objective: str = "supcon"
    alpha: float = 1.0
    lr_max: float = 0.1
    momentum: float = 0.9
    epochs: int = 50
    batch_size: int = 64
    temperature: float = 0.1
    seed: int = 0
    hidden_dim: int = 64
    embed_dim: int = 32
    weight_decay: float = 0.0
    view_jitter: float = 0.05
    resample_every_step: bool = True

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise ValueError(f"unknown objective {self.objective!r}; pick one of {OBJECTIVES}")
        if self.batch_size % 2 != 0 or self.batch_size < 4:
            raise ValueError("batch_size must be even and >= 4 (view pairs)")
        if self.lr_max < 0.0:
            raise ValueError("lr_max must be >= 0")
        if self.temperature <= 0.0:
            raise ValueError("temperature must be positive")


class Encoder:
    """Two-layer tanh MLP with unit-norm output rows."""

    def __init__(self, w1, b1, w2, b2):
        self.w1 = np.asarray(w1, dtype=np.float64)
        self.b1 = np.asarray(b1, dtype=np.float64)
        self.w2 = np.asarray(w2, dtype=np.float64)
        self.b2 = np.asarray(b2, dtype=np.float64)

    @classmethod
    def init(cls, d_in, hidden, d_out, seed=0):
        """Symmetric fan-in-scaled uniform weights, zero biases."""
        rng = np.random.default_rng((seed, 0))
        lim1 = 1.0 / math.sqrt(d_in)
        lim2 = 1.0 / math.sqrt(hidden)
        return cls(
            w1=rng.uniform(-lim1, lim1, (d_in, hidden)),
            b1=np.zeros(hidden),
            w2=rng.uniform(-lim2, lim2, (hidden, d_out)),
            b2=np.zeros(d_out),
        )

    @property
    def dims(self):
        return self.w1.shape[0], self.w1.shape[1], self.w2.shape[1]

    def params(self):
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}

    def forward(self, x):
        """Return (unit-norm embeddings, cache for backward)."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[1] != self.w1.shape[0]:
            raise ValueError(f"feature width {x.shape[1]} does not match encoder input {self.w1.shape[0]}")
        hidden = np.tanh(x @ self.w1 + self.b1)
        raw = hidden @ self.w2 + self.b2
        norms = np.linalg.norm(raw, axis=1, keepdims=True)
        if np.any(norms < 1e-12):
            raise FloatingPointError("encoder produced a zero-norm embedding")
        z = raw / norms
        return z, {"x": x, "hidden": hidden, "z": z, "norms": norms}

    def backward(self, cache, grad_z):
        """Gradients of the loss w.r.t. all parameters.

        Backpropagates through the row normalization: with z = u/|u|,
        dL/du = (g - (g.z) z) / |u|.
        """
        z, norms, hidden, x = cache["z"], cache["norms"], cache["hidden"], cache["x"]
        grad_raw = (grad_z - (grad_z * z).sum(axis=1, keepdims=True) * z) / norms
        grad_hidden = grad_raw @ self.w2.T
        grad_pre = grad_hidden * (1.0 - hidden * hidden)
        return {
            "w1": x.T @ grad_pre,
            "b1": grad_pre.sum(axis=0),
            "w2": hidden.T @ grad_raw,
            "b2": grad_raw.sum(axis=0),
        }

    def embed(self, features):
        z, _ = self.forward(features)
        return z

    def save(self, path):
        d_in, hidden, d_out = self.dims
        blob = bytearray(_MAGIC)
        blob += struct.pack("<III", d_in, hidden, d_out)
        for arr in (self.w1, self.b1, self.w2, self.b2):
            blob += np.ascontiguousarray(arr, dtype="<f8").tobytes()
        atomic_write_bytes(path, bytes(blob))

    @classmethod
    def load(cls, path):
        blob = Path(path).read_bytes()
        if blob[:4] != _MAGIC:
            raise ValueError(f"{path}: not a checkpoint (bad magic)")
        d_in, hidden, d_out = struct.unpack("<III", blob[4:16])
        sizes = [d_in * hidden, hidden, hidden * d_out, d_out]
        if len(blob) != 16 + 8 * sum(sizes):
            raise ValueError(f"{path}: truncated checkpoint")
        arrays, offset = [], 16
        for size in sizes:
            arrays.append(np.frombuffer(blob, dtype="<f8", count=size, offset=offset).copy())
            offset += 8 * size
        return cls(
            w1=arrays[0].reshape(d_in, hidden),
            b1=arrays[1],
            w2=arrays[2].reshape(hidden, d_out),
            b2=arrays[3],
        )


def embed(encoder, features) -> np.ndarray:
    """Unit-norm embeddings for a feature matrix."""
    return encoder.embed(features)


def lr_at(config, step, total_steps) -> float:
    """Cosine schedule value: lr_max at step 0, 0 at the final step."""
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    return config.lr_max * (1.0 + math.cos(math.pi * step / total_steps)) / 2.0


def momentum_update(param, grad, velocity, lr, momentum):
    """Textbook momentum SGD: v <- mu*v + g; theta <- theta - lr*v."""
    velocity = momentum * velocity + grad
    return param - lr * velocity, velocity


def _make_views(features, labels, source_rows, jitter, rng):
    """Two jittered views per source row, interleaved as (2k, 2k+1) pairs."""
    n = len(source_rows)
    base = features[source_rows]
    noise = rng.normal(0.0, jitter, (n, 2, base.shape[1])) if jitter > 0 else np.zeros((n, 2, base.shape[1]))
    x = np.empty((2 * n, base.shape[1]))
    x[0::2] = base + noise[:, 0]
    x[1::2] = base + noise[:, 1]
    return x, np.repeat(labels[source_rows], 2)


def _epoch_plan(n_train, batch_rows, seed, epoch):
    """Shuffled batch index lists and the jitter stream for one epoch."""
    rng = np.random.default_rng((seed, 1, epoch))
    perm = rng.permutation(n_train)
    pairs_per_batch = batch_rows // 2
    n_batches = n_train // pairs_per_batch
    batches = [perm[b * pairs_per_batch:(b + 1) * pairs_per_batch] for b in range(n_batches)]
    return batches, rng


def train(dataset, taxonomy, config):
    """Train an encoder on the dataset's train split.

    Returns ``(encoder, history)`` with one entry per epoch: the mean loss
    per contrastive term, which is robust to how classes happen to land in
    batches.  For the reco objectives the taxonomy supplies the class
    similarities that drive negative selection; paco variants carry
    learnable class centers initialized from the first batch's per-class
    embedding means.
    """
    train_rows = dataset.rows(split="train")
    if len(train_rows) == 0:
        raise ValueError("dataset has no train split")
    features = dataset.features[train_rows]
    labels = dataset.labels[train_rows]
    classes = sorted(set(labels.tolist()))

    needs_mask = config.objective in ("reco_supcon", "reco_paco")
    needs_centers = config.objective in ("paco", "reco_paco")
    table = None
    if needs_mask:
        if taxonomy is None:
            raise ValueError(f"objective {config.objective!r} requires a taxonomy")
        table = build_similarity_table(taxonomy, classes)

    n_train = len(train_rows)
    pairs_per_batch = config.batch_size // 2
    steps_per_epoch = n_train // pairs_per_batch
    if steps_per_epoch == 0:
        raise ValueError(f"train split ({n_train} samples) smaller than one batch of {pairs_per_batch} pairs")
    total_steps = config.epochs * steps_per_epoch

    encoder = Encoder.init(features.shape[1], config.hidden_dim, config.embed_dim, config.seed)
    velocity = {name: np.zeros_like(p) for name, p in encoder.params().items()}

    centers = None
    centers_velocity = None
    if needs_centers:
        batches0, rng0 = _epoch_plan(n_train, config.batch_size, config.seed, 0)
        x0, y0 = _make_views(features, labels, batches0[0], config.view_jitter, rng0)
        z0 = encoder.embed(x0)
        vectors = np.zeros((len(classes), config.embed_dim))
        for row, cid in enumerate(classes):
            hit = y0 == cid
            if np.any(hit):
                vectors[row] = z0[hit].mean(axis=0)
        centers = ClassCenters(class_ids=tuple(classes), vectors=vectors)
        centers_velocity = np.zeros_like(vectors)

    sampler_cfg = SamplerConfig(seed=config.seed, resample_every_step=config.resample_every_step)
    history = []
    step = 0
    for epoch in range(config.epochs):
        batches, rng = _epoch_plan(n_train, config.batch_size, config.seed, epoch)
        epoch_losses = []
        for source_rows in batches:
            x, y = _make_views(features, labels, source_rows, config.view_jitter, rng)
            z, cache = encoder.forward(x)
            batch = EmbeddingBatch.from_pairs(z, y)

            if config.objective == "info_nce":
                result = info_nce(batch, config.temperature)
            elif config.objective == "supcon":
                result = supcon(batch, config.temperature)
            elif config.objective == "paco":
                result = paco(batch, centers, config.temperature)
            else:
                mask_key = step if config.resample_every_step else epoch
                probs = acceptance_matrix(table, y)
                mask = draw_mask(probs, sampler_cfg, mask_key)
                base = "supcon" if config.objective == "reco_supcon" else "paco"
                result = combined(batch, centers, mask, base=base, alpha=config.alpha,
                                  temperature=config.temperature)

            if not math.isfinite(result.value):
                raise DivergenceError(f"non-finite loss at epoch {epoch}")
            epoch_losses.append(result.value / max(result.n_terms, 1))

            lr = lr_at(config, step, total_steps)
            grads = encoder.backward(cache, result.grad_z)
            params = encoder.params()
            for name in params:
                grad = grads[name]
                if config.weight_decay:
                    grad = grad + config.weight_decay * params[name]
                updated, velocity[name] = momentum_update(params[name], grad, velocity[name],
                                                          lr, config.momentum)
                setattr(encoder, name, updated)
            if needs_centers and result.grad_centers is not None:
                grad_c = result.grad_centers
                if config.weight_decay:
                    grad_c = grad_c + config.weight_decay * centers.vectors
                updated, centers_velocity = momentum_update(centers.vectors, grad_c,
                                                            centers_velocity, lr, config.momentum)
                centers = ClassCenters(class_ids=centers.class_ids, vectors=updated)
            step += 1
        history.append(float(np.mean(epoch_losses)))

    return encoder, history


def write_history_csv(history, path):
    lines = ["epoch,mean_loss"]
    for epoch, value in enumerate(history):
        lines.append(f"{epoch},{fmt_float(value)}")
    atomic_write_text(path, "\n".join(lines) + "\n")
