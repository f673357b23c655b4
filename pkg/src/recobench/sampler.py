"""Bernoulli negative selection driven by class-similarity acceptance.

Each batch entry (i, k) is accepted as a negative with probability
``1 - normalized_similarity(label_i, label_k)``, so semantically close
classes are rarely pushed apart and same-class candidates are never
accepted.

Draws use a counter-based generator: a chain of SplitMix64 avalanche
steps keyed by ``(seed, step, i, k)`` (Steele et al.'s SplitMix64
finalizer, the mixer behind SplittableRandom).  Every entry is a pure
function of its key, so masks are reproducible regardless of iteration
order and entries may be drawn in parallel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._util import atomic_write_text
from .losses import NegativeMask

_MASK64 = np.uint64(0xFFFFFFFFFFFFFFFF)
_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


@dataclass(frozen=True)
class SamplerConfig:
    """Seed plus the resampling cadence (fresh mask per step by default)."""

    seed: int = 0
    resample_every_step: bool = True


def _mix64(z):
    """SplitMix64 next/finalize step on uint64 scalars or arrays."""
    z = (z + _GAMMA) & _MASK64
    z = ((z ^ (z >> np.uint64(30))) * _MIX1) & _MASK64
    z = ((z ^ (z >> np.uint64(27))) * _MIX2) & _MASK64
    return z ^ (z >> np.uint64(31))


def keyed_uniform(seed, step, rows, cols) -> np.ndarray:
    """(rows, cols) matrix of uniforms in [0, 1), keyed by (seed, step, i, k)."""
    with np.errstate(over="ignore"):
        h = _mix64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF))
        h = _mix64(h ^ np.uint64(step & 0xFFFFFFFFFFFFFFFF))
        hi = _mix64(h ^ np.arange(rows, dtype=np.uint64)[:, None])
        hik = _mix64(hi ^ np.arange(cols, dtype=np.uint64)[None, :])
    return (hik >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))


def acceptance_matrix(table, labels) -> np.ndarray:
    """Per-entry Bernoulli acceptance for a batch's label sequence.

    Entry (i, k) is ``1 - normalized(label_i, label_k)``; the diagonal is
    zero (an anchor is never its own candidate).  Same-class off-diagonal
    entries are zero as well because normalized self-similarity is one.
    """
    index = table.index
    try:
        rows = np.array([index[y] for y in labels], dtype=np.intp)
    except KeyError as exc:
        raise ValueError(f"label {exc.args[0]!r} has no row in the similarity table") from None
    probs = table.accept_prob[np.ix_(rows, rows)].copy()
    np.fill_diagonal(probs, 0.0)
    return probs


def draw_mask(probs, config, step) -> NegativeMask:
    """One independent Bernoulli trial per entry, deterministic in (seed, step)."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[0] != probs.shape[1]:
        raise ValueError("probability matrix must be square")
    if np.any(probs < 0.0) or np.any(probs > 1.0):
        raise ValueError("acceptance probabilities must lie in [0, 1]")
    u = keyed_uniform(config.seed, step, probs.shape[0], probs.shape[1])
    mask = u < probs
    np.fill_diagonal(mask, False)
    return NegativeMask(mask=mask, seed=config.seed)


def write_mask(mask, path):
    """Debug export: one line per anchor, ``i: k1,k2,...``."""
    if isinstance(mask, NegativeMask):
        mask = mask.mask
    lines = []
    for i, row in enumerate(np.asarray(mask)):
        accepted = ",".join(str(k) for k in np.flatnonzero(row))
        lines.append(f"{i}: {accepted}")
    atomic_write_text(path, "\n".join(lines) + "\n")
