"""Frozen-feature evaluation: per-realm linear probes and relative reports.

A probe is a multinomial logistic regression trained by full-batch
gradient descent with Armijo backtracking until the gradient norm drops
below 1e-6 (the objective is convex, so the result does not depend on the
start).  Reported metric is exact top-1 accuracy; model comparisons are
per-realm accuracy deltas against a baseline, in percentage points.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._util import atomic_write_text, fmt_float


@dataclass(frozen=True)
class ProbeResult:
    realm: str
    top1: float
    n_test: int


@dataclass(frozen=True)
class RelativeReport:
    """Per-realm candidate-minus-baseline deltas in percentage points."""

    realms: tuple[str, ...]
    deltas_pp: tuple[float, ...]
    average: float


@dataclass
class LinearProbe:
    """Fitted classifier: sorted class list and an augmented weight matrix."""

    classes: tuple
    weights: np.ndarray  # (dim + 1, n_classes); last row is the bias
    objective: float
    grad_norm: float
    n_iter: int

    def scores(self, features):
        features = np.asarray(features, dtype=np.float64)
        return features @ self.weights[:-1] + self.weights[-1]

    def predict(self, features):
        # np.argmax takes the first maximum, i.e. the lowest class index on ties.
        idx = np.argmax(self.scores(features), axis=1)
        return np.asarray(self.classes)[idx]


def _objective_and_grad(w, x_aug, onehot, l2):
    n = x_aug.shape[0]
    scores = x_aug @ w
    shifted = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    norm = e.sum(axis=1, keepdims=True)
    # mean cross-entropy in log-sum-exp form
    value = float(np.mean(np.log(norm[:, 0]) - (shifted * onehot).sum(axis=1)))
    penalty = w.copy()
    penalty[-1] = 0.0  # bias unpenalized
    value += 0.5 * l2 * float(np.sum(penalty * penalty))
    grad = x_aug.T @ (e / norm - onehot) / n + l2 * penalty
    return value, grad


def fit_linear_probe(train_features, train_labels, l2=1e-4, max_iter=500, init=None) -> LinearProbe:
    """Fit a multinomial logistic regression on frozen features.

    Runs full-batch gradient descent with backtracking line search until
    the gradient's L2 norm is below 1e-6 or ``max_iter`` steps.  Degenerate
    inputs (features carrying no between-class signal) are reported as a
    warning, not an error.
    """
    x = np.asarray(train_features, dtype=np.float64)
    y = np.asarray(train_labels)
    if x.ndim != 2 or len(y) != x.shape[0]:
        raise ValueError("features must be (n, d) with one label per row")
    if not np.all(np.isfinite(x)):
        raise ValueError("features must be finite")
    classes = tuple(sorted(set(y.tolist())))
    if len(classes) < 2:
        raise ValueError("need at least 2 classes to fit a probe")
    if np.ptp(x, axis=0).max() == 0.0:
        warnings.warn("degenerate probe input: all feature rows are identical", stacklevel=2)

    index = {c: i for i, c in enumerate(classes)}
    onehot = np.zeros((x.shape[0], len(classes)))
    onehot[np.arange(x.shape[0]), [index[c] for c in y]] = 1.0
    x_aug = np.concatenate([x, np.ones((x.shape[0], 1))], axis=1)

    w = np.zeros((x_aug.shape[1], len(classes))) if init is None else np.array(init, dtype=np.float64)
    value, grad = _objective_and_grad(w, x_aug, onehot, l2)
    step = 1.0
    iterations = 0
    for iterations in range(1, max_iter + 1):
        norm_sq = float(np.sum(grad * grad))
        if np.sqrt(norm_sq) < 1e-6:
            iterations -= 1
            break
        step = min(step * 2.0, 1e6)
        while True:  # Armijo backtracking
            candidate = w - step * grad
            cand_value, cand_grad = _objective_and_grad(candidate, x_aug, onehot, l2)
            if cand_value <= value - 1e-4 * step * norm_sq or step < 1e-18:
                break
            step *= 0.5
        w, value, grad = candidate, cand_value, cand_grad

    return LinearProbe(
        classes=classes,
        weights=w,
        objective=value,
        grad_norm=float(np.linalg.norm(grad)),
        n_iter=iterations,
    )


def evaluate(probe, test_features, test_labels, realm="") -> ProbeResult:
    """Exact top-1 accuracy; argmax ties resolve to the lowest class index."""
    test_labels = np.asarray(test_labels)
    if len(test_labels) == 0:
        raise ValueError("empty test set")
    predictions = probe.predict(test_features)
    correct = int(np.sum(predictions == test_labels))
    return ProbeResult(realm=realm, top1=correct / len(test_labels), n_test=len(test_labels))


def relative_report(candidate, baseline) -> RelativeReport:
    """Per-realm top-1 deltas (candidate minus baseline) in percentage points."""
    base_by_realm = {r.realm: r for r in baseline}
    cand_realms = [r.realm for r in candidate]
    if set(cand_realms) != set(base_by_realm) or len(cand_realms) != len(set(cand_realms)):
        raise ValueError("candidate and baseline must cover the same realm set")
    deltas = tuple((r.top1 - base_by_realm[r.realm].top1) * 100.0 for r in candidate)
    return RelativeReport(
        realms=tuple(cand_realms),
        deltas_pp=deltas,
        average=float(np.mean(deltas)),
    )


def write_results_csv(results, path):
    lines = ["realm,top1,n_test"]
    for r in results:
        lines.append(f"{r.realm},{fmt_float(r.top1)},{r.n_test}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_results_csv(path):
    text = Path(path).read_text(encoding="utf-8").splitlines()
    if not text or text[0] != "realm,top1,n_test":
        raise ValueError(f"{path}: not a probe results CSV")
    out = []
    for line in text[1:]:
        if not line.strip():
            continue
        realm, top1, n_test = line.split(",")
        out.append(ProbeResult(realm=realm, top1=float(top1), n_test=int(n_test)))
    return out


def write_report_csv(report, path):
    lines = ["realm,delta_pp"]
    for realm, delta in zip(report.realms, report.deltas_pp):
        lines.append(f"{realm},{fmt_float(delta)}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_report_svg(report, path, width=640, height=360):
    """Bar chart of per-realm deltas (hand-rolled SVG, no plotting deps)."""
    margin, axis_gap = 60, 24
    n = len(report.realms)
    plot_w, plot_h = width - 2 * margin, height - 2 * margin
    peak = max(1e-9, max(abs(d) for d in report.deltas_pp))
    zero_y = margin + plot_h / 2.0
    bar_w = plot_w / max(n, 1) * 0.7
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">'
        f'top-1 accuracy relative to baseline (avg {report.average:+.2f} pp)</text>',
        f'<line x1="{margin}" y1="{zero_y:.1f}" x2="{width - margin}" y2="{zero_y:.1f}" '
        'stroke="black" stroke-width="1"/>',
    ]
    for i, (realm, delta) in enumerate(zip(report.realms, report.deltas_pp)):
        cx = margin + plot_w * (i + 0.5) / max(n, 1)
        bar_h = abs(delta) / peak * (plot_h / 2.0)
        top = zero_y - bar_h if delta >= 0 else zero_y
        color = "#2c7fb8" if delta >= 0 else "#d95f0e"
        parts.append(
            f'<rect x="{cx - bar_w / 2:.1f}" y="{top:.1f}" width="{bar_w:.1f}" '
            f'height="{bar_h:.1f}" fill="{color}"/>'
        )
        parts.append(
            f'<text x="{cx:.1f}" y="{height - margin + axis_gap:.1f}" text-anchor="end" '
            f'font-size="10" transform="rotate(-45 {cx:.1f} {height - margin + axis_gap:.1f})">'
            f'{realm}</text>'
        )
        value_y = top - 4 if delta >= 0 else top + bar_h + 12
        parts.append(
            f'<text x="{cx:.1f}" y="{value_y:.1f}" text-anchor="middle" font-size="9">'
            f'{delta:+.1f}</text>'
        )
    parts.append("</svg>")
    atomic_write_text(path, "\n".join(parts) + "\n")
