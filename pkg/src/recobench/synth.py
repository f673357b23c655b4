"""Synthetic hierarchical classification data.

Class means follow a Gaussian random walk down the taxonomy (each child's
mean is its parent's mean plus isotropic drift), so feature distance grows
monotonically with taxonomy distance: siblings differ by two walk steps in
expectation, classes that diverge higher up by proportionally more.
Samples add isotropic within-class noise around their class mean.

This is the desk-scale stand-in for "related concepts look related" in
real imagery; downstream training views are made by jittering features at
half the within-class noise scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._util import atomic_write_text, fmt_float


@dataclass(frozen=True)
class SynthSpec:
    """Generation parameters; classes are the taxonomy's is_class leaves."""

    taxonomy: object
    feature_dim: int = 16
    samples_per_class: int = 200
    drift_scale: float = 1.0
    noise_scale: float = 0.1
    seed: int = 0
    test_fraction: float = 0.25

    def __post_init__(self):
        if self.feature_dim < 2:
            raise ValueError("feature_dim must be >= 2")
        if self.drift_scale <= 0.0 or self.noise_scale <= 0.0:
            raise ValueError("drift_scale and noise_scale must be positive")
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError("test_fraction must lie strictly between 0 and 1")
        if self.samples_per_class < 2:
            raise ValueError("need at least 2 samples per class (train and test)")


@dataclass
class SynthDataset:
    """Generated samples with per-sample class, realm, and split."""

    ids: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    realms: np.ndarray
    split: np.ndarray
    class_ids: tuple[str, ...] = ()
    class_means: dict = field(default_factory=dict)
    noise_scale: float = 0.0

    def rows(self, split=None, realm=None) -> np.ndarray:
        """Indices of samples matching the given split and/or realm."""
        keep = np.ones(len(self.labels), dtype=bool)
        if split is not None:
            keep &= self.split == split
        if realm is not None:
            keep &= self.realms == realm
        return np.flatnonzero(keep)

    def write_csv(self, path):
        dim = self.features.shape[1]
        header = "id,label,realm,split," + ",".join(f"f{j}" for j in range(dim))
        lines = [header]
        for i in range(len(self.labels)):
            values = ",".join(fmt_float(v) for v in self.features[i])
            lines.append(f"{self.ids[i]},{self.labels[i]},{self.realms[i]},{self.split[i]},{values}")
        atomic_write_text(path, "\n".join(lines) + "\n")

    @classmethod
    def read_csv(cls, path):
        text = Path(path).read_text(encoding="utf-8").splitlines()
        if not text or not text[0].startswith("id,label,realm,split,"):
            raise ValueError(f"{path}: not a dataset CSV (bad header)")
        ids, labels, realms, split, rows = [], [], [], [], []
        for line in text[1:]:
            if not line.strip():
                continue
            parts = line.split(",")
            ids.append(parts[0])
            labels.append(parts[1])
            realms.append(parts[2])
            split.append(parts[3])
            rows.append([float(v) for v in parts[4:]])
        return cls(
            ids=np.array(ids),
            features=np.array(rows, dtype=np.float64),
            labels=np.array(labels),
            realms=np.array(realms),
            split=np.array(split),
            class_ids=tuple(sorted(set(labels))),
        )


def _realm_of(dag, class_id):
    """Depth-1 ancestor along minimum-depth parents (the class itself at depth 1)."""
    nid = class_id
    while dag.depth[nid] > 1:
        nid = dag.min_depth_parent(nid)
    return nid


def generate(spec: SynthSpec) -> SynthDataset:
    """Deterministically generate a dataset from a taxonomy.

    Walk increments are drawn in breadth-first (depth, id) order and
    per-class samples in sorted class order, so a fixed seed reproduces
    the dataset bit for bit.
    """
    dag = spec.taxonomy
    classes = sorted(cid for cid in dag.leaves() if dag.nodes[cid].is_class)
    if len(classes) < 2:
        raise ValueError("degenerate taxonomy: need at least 2 leaf classes")

    rng = np.random.default_rng(spec.seed)
    order = sorted(dag.nodes, key=lambda nid: (dag.depth[nid], nid))
    means = {dag.root_id: np.zeros(spec.feature_dim)}
    for nid in order:
        if nid == dag.root_id:
            continue
        parent = dag.min_depth_parent(nid)
        means[nid] = means[parent] + rng.normal(0.0, spec.drift_scale, spec.feature_dim)

    n_test = int(round(spec.samples_per_class * spec.test_fraction))
    n_test = min(max(n_test, 1), spec.samples_per_class - 1)

    ids, rows, labels, realms, split = [], [], [], [], []
    for cid in classes:
        realm = _realm_of(dag, cid)
        samples = means[cid] + rng.normal(0.0, spec.noise_scale,
                                          (spec.samples_per_class, spec.feature_dim))
        for j in range(spec.samples_per_class):
            ids.append(f"{cid}-{j:04d}")
            rows.append(samples[j])
            labels.append(cid)
            realms.append(realm)
            split.append("train" if j < spec.samples_per_class - n_test else "test")

    return SynthDataset(
        ids=np.array(ids),
        features=np.array(rows, dtype=np.float64),
        labels=np.array(labels),
        realms=np.array(realms),
        split=np.array(split),
        class_ids=tuple(classes),
        class_means={cid: means[cid] for cid in classes},
        noise_scale=spec.noise_scale,
    )
