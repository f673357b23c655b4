"""Contrastive objectives with analytic gradients.

Implements four losses over a 2N-view batch plus their weighted
combination:

* ``info_nce``  — one positive per anchor (the sibling view), all other
  batch rows in the denominator.
* ``supcon``    — all same-class rows are positives.
* ``paco``      — supcon with learnable per-class centers: the anchor's
  own center joins the positives, every center joins the denominator.
* ``reco``      — supcon's numerator with a Bernoulli-selected negative
  set in the denominator (relation-aware negative sampling).
* ``combined``  — base loss (supcon or paco) plus ``alpha`` times reco.

All losses share one masked kernel, so the documented reduction
identities (reco with an all-true mask equals supcon, paco without
centers equals supcon, supcon with all-distinct classes equals info_nce)
hold bit for bit.  Gradients are hand-derived and cross-checked against
finite differences in the test suite; there is no autodiff here.

Equations print no temperature, so ``temperature`` defaults to 1.0 (the
literal form); training configs typically use 0.1.  Embeddings are
expected to be L2-normalized by the encoder; the losses themselves accept
arbitrary rows so gradients stay finite-difference testable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import contrastive_core
from ._util import atomic_write_text, fmt_float


@dataclass(frozen=True)
class EmbeddingBatch:
    """A 2N-view batch: embeddings, labels, and the sibling-view pairing.

    ``pair_index`` maps each row to the other augmented view of the same
    source sample; it must be a fixed-point-free involution and paired
    rows must share a label.
    """

    z: np.ndarray
    labels: np.ndarray
    pair_index: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.z, dtype=np.float64)
        labels = np.asarray(self.labels)
        pair = np.asarray(self.pair_index, dtype=np.intp)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "pair_index", pair)
        if z.ndim != 2:
            raise ValueError("embeddings must be a 2-D matrix")
        n = z.shape[0]
        if n % 2 != 0:
            raise ValueError("batch must hold an even number of views")
        if labels.shape != (n,) or pair.shape != (n,):
            raise ValueError("labels and pair_index must have one entry per row")
        idx = np.arange(n)
        if np.any(pair == idx):
            raise ValueError("pair_index may not map a view to itself")
        if np.any(pair[pair] != idx):
            raise ValueError("pair_index must be an involution")
        if np.any(labels[pair] != labels):
            raise ValueError("paired views must share a label")

    @classmethod
    def from_pairs(cls, z, labels):
        """Build a batch whose views are interleaved as (2k, 2k+1) pairs."""
        n = np.asarray(z).shape[0]
        pair = np.arange(n)
        pair[0::2] += 1
        pair[1::2] -= 1
        return cls(z=z, labels=labels, pair_index=pair)

    @property
    def size(self) -> int:
        """Number of views (2N)."""
        return self.z.shape[0]

    def positives(self) -> np.ndarray:
        """Boolean (2N, 2N) matrix of same-class candidates, self excluded."""
        same = self.labels[:, None] == self.labels[None, :]
        np.fill_diagonal(same, False)
        return same

    def candidates(self) -> np.ndarray:
        """Boolean (2N, 2N) matrix of all candidates A(i), self excluded."""
        out = np.ones((self.size, self.size), dtype=bool)
        np.fill_diagonal(out, False)
        return out


@dataclass(frozen=True)
class ClassCenters:
    """Learnable per-class center vectors, one row per class id."""

    class_ids: tuple
    vectors: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "class_ids", tuple(self.class_ids))
        vec = np.asarray(self.vectors, dtype=np.float64)
        object.__setattr__(self, "vectors", vec)
        if vec.ndim != 2 or vec.shape[0] != len(self.class_ids):
            raise ValueError("centers must be an (n_classes, dim) matrix")

    def __len__(self):
        return len(self.class_ids)

    def rows_for(self, labels) -> np.ndarray:
        index = {cid: i for i, cid in enumerate(self.class_ids)}
        try:
            return np.array([index[y] for y in labels], dtype=np.intp)
        except KeyError as exc:
            raise ValueError(f"missing center for batch label {exc.args[0]!r}") from None


@dataclass(frozen=True)
class NegativeMask:
    """Per-anchor accepted-negative matrix plus the seed that drew it."""

    mask: np.ndarray
    seed: int = 0

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool)
        object.__setattr__(self, "mask", mask)
        if mask.ndim != 2 or mask.shape[0] != mask.shape[1]:
            raise ValueError("mask must be square")
        if np.any(np.diag(mask)):
            raise ValueError("an anchor may not be its own negative")

    @classmethod
    def all_candidates(cls, n_views, seed=0):
        mask = np.ones((n_views, n_views), dtype=bool)
        np.fill_diagonal(mask, False)
        return cls(mask=mask, seed=seed)


@dataclass
class LossResult:
    """Scalar loss with analytic gradients and per-anchor values.

    ``n_terms`` counts the (anchor, positive) log terms summed into
    ``value``; dividing by it gives a batch-composition-robust mean.
    """

    value: float
    grad_z: np.ndarray
    grad_centers: np.ndarray | None = None
    per_anchor: np.ndarray | None = None
    n_terms: int = 0

    def write_csv(self, path):
        """Debug export, one row per anchor: ``anchor_index,value``."""
        lines = ["anchor_index,value"]
        for i, v in enumerate(self.per_anchor):
            lines.append(f"{i},{fmt_float(v)}")
        atomic_write_text(path, "\n".join(lines) + "\n")


def _check_temperature(temperature):
    if not temperature > 0.0:
        raise ValueError("temperature must be positive")


def _evaluate(batch, cols, pos_mask, den_mask, temperature, add_excluded_positive,
              anchor_weights=None):
    """Shared driver: logits, kernel call, and gradient assembly.

    ``cols`` is the candidate matrix (batch rows, optionally with center
    rows appended); gradients flow to anchors, to batch candidates, and to
    any center columns.
    """
    z = batch.z
    n = batch.size
    logits = (z @ cols.T) / temperature
    value, per_anchor, grad_logits = contrastive_core(
        logits, pos_mask, den_mask, add_excluded_positive
    )
    if anchor_weights is not None:
        per_anchor = per_anchor * anchor_weights
        value = float(per_anchor.sum())
        grad_logits = grad_logits * anchor_weights[:, None]
    grad_s = grad_logits / temperature
    gb = grad_s[:, :n]
    grad_z = gb @ z + gb.T @ z
    grad_centers = None
    if cols.shape[0] > n:
        gc = grad_s[:, n:]
        centers = cols[n:]
        grad_z = grad_z + gc @ centers
        grad_centers = gc.T @ z
    return LossResult(
        value=value, grad_z=grad_z, grad_centers=grad_centers, per_anchor=per_anchor,
        n_terms=int(pos_mask.sum()),
    )


def info_nce(batch, temperature=1.0) -> LossResult:
    """Instance-discrimination loss: the sibling view against the batch.

    Per anchor: ``-log(exp(z_i . z_j(i) / t) / sum_a exp(z_i . z_a / t))``
    over all other rows ``a``.  ``temperature=1`` is the literal form.
    """
    _check_temperature(temperature)
    if batch.size < 4:
        raise ValueError("info_nce needs at least two view pairs (4 rows)")
    pos = np.zeros((batch.size, batch.size), dtype=bool)
    pos[np.arange(batch.size), batch.pair_index] = True
    return _evaluate(batch, batch.z, pos, batch.candidates(), temperature, False)


def supcon(batch, temperature=1.0, mean_over_positives=False) -> LossResult:
    """Supervised contrastive loss: every same-class row is a positive.

    The plain per-anchor sum over positives is the default;
    ``mean_over_positives`` divides each anchor's sum by its positive
    count instead (the original formulation's convention).  The batch
    pairing guarantees each anchor at least one positive.
    """
    _check_temperature(temperature)
    pos = batch.positives()
    weights = None
    if mean_over_positives:
        weights = 1.0 / pos.sum(axis=1)
    return _evaluate(batch, batch.z, pos, batch.candidates(), temperature, False,
                     anchor_weights=weights)


def paco(batch, centers, temperature=1.0) -> LossResult:
    """Parametric contrastive loss: class centers join both sides.

    The anchor's own center is an extra positive; all centers enter every
    denominator.  With no centers at all this degenerates exactly to
    :func:`supcon` (``grad_centers`` is then an empty matrix).
    """
    _check_temperature(temperature)
    n = batch.size
    if centers is None or len(centers) == 0:
        result = supcon(batch, temperature)
        result.grad_centers = np.zeros((0, batch.z.shape[1]))
        return result
    rows = centers.rows_for(batch.labels)
    k = len(centers)
    cols = np.concatenate([batch.z, centers.vectors], axis=0)
    pos = np.zeros((n, n + k), dtype=bool)
    pos[:, :n] = batch.positives()
    pos[np.arange(n), n + rows] = True
    den = np.zeros((n, n + k), dtype=bool)
    den[:, :n] = batch.candidates()
    den[:, n:] = True
    return _evaluate(batch, cols, pos, den, temperature, False)


def reco(batch, mask, temperature=1.0, include_positive_in_denominator=True) -> LossResult:
    """Relation-masked contrastive loss: denominators range over accepted
    negatives only.

    With the default flag each positive's own term joins its denominator
    (set union, no double counting), so every log-ratio is a proper
    probability and the loss is bounded below by zero; an all-true mask
    then reproduces :func:`supcon` exactly.  With the flag off the
    denominator is the literal accepted-negative sum, which can go
    negative per term and requires every anchor to keep at least one
    accepted candidate.
    """
    _check_temperature(temperature)
    if isinstance(mask, NegativeMask):
        mask = mask.mask
    mask = np.asarray(mask, dtype=bool)
    n = batch.size
    if mask.shape != (n, n):
        raise ValueError(f"mask shape {mask.shape} does not match batch size {n}")
    if np.any(np.diag(mask)):
        raise ValueError("an anchor may not be its own negative")
    if not include_positive_in_denominator:
        empty = ~mask.any(axis=1)
        if np.any(empty):
            rows = np.flatnonzero(empty)
            raise ValueError(
                f"anchors {rows.tolist()} have every candidate masked out and no "
                "denominator term; enable include_positive_in_denominator or widen the mask"
            )
    return _evaluate(batch, batch.z, batch.positives(), mask, temperature,
                     include_positive_in_denominator)


def combined(batch, centers, mask, base="supcon", alpha=1.0, temperature=1.0,
             mean_over_positives=False,
             include_positive_in_denominator=True) -> LossResult:
    """Base objective plus ``alpha`` times the relation-masked loss.

    ``base`` selects supcon or paco; ``alpha`` defaults to 1, to which the
    combination is reported to be insensitive.
    """
    if base == "supcon":
        base_result = supcon(batch, temperature, mean_over_positives)
    elif base == "paco":
        base_result = paco(batch, centers, temperature)
    else:
        raise ValueError(f"unknown base loss {base!r} (expected 'supcon' or 'paco')")
    reco_result = reco(batch, mask, temperature, include_positive_in_denominator)
    return LossResult(
        value=base_result.value + alpha * reco_result.value,
        grad_z=base_result.grad_z + alpha * reco_result.grad_z,
        grad_centers=base_result.grad_centers,
        per_anchor=base_result.per_anchor + alpha * reco_result.per_anchor,
        n_terms=base_result.n_terms + reco_result.n_terms,
    )
