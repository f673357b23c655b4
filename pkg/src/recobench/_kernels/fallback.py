"""Pure-NumPy contrastive-loss core (reference backend).

The single entry point :func:`contrastive_core` evaluates a masked
supervised-contrastive objective on a precomputed logit matrix and returns
its value together with the gradient w.r.t. the logits.  All four public
losses reduce to this kernel with different positive/denominator masks,
which is what makes their reduction identities exact.

Per anchor i the loss is

    L_i = sum over positives p of  -log( exp(l_ip) / D_ip )
    D_ip = sum over denominator candidates k of exp(l_ik)
           [+ exp(l_ip) if p is not already a denominator candidate and
            add_excluded_positive is set]

computed with per-anchor max subtraction for stability.  Entries outside
both masks contribute exactly zero gradient.
"""

import numpy as np


def contrastive_core(logits, pos_mask, den_mask, add_excluded_positive):
    """Masked contrastive loss and gradient on a logit matrix.

    Args:
        logits: (A, M) float64, similarities already divided by temperature.
        pos_mask: (A, M) bool, positive positions per anchor row.
        den_mask: (A, M) bool, denominator candidates per anchor row.
        add_excluded_positive: include each positive's own term in its
            denominator when the mask leaves it out (set-union semantics,
            so a positive already in the mask is not double counted).

    Returns:
        (value, per_anchor, grad_logits) where value = per_anchor.sum().
    """
    union = pos_mask | den_mask
    shift = np.where(union, logits, -np.inf).max(axis=1)
    shift = np.where(np.isfinite(shift), shift, 0.0)  # rows with no candidates
    e = np.exp(np.where(union, logits - shift[:, None], -np.inf))
    base = np.where(den_mask, e, 0.0).sum(axis=1)

    if add_excluded_positive:
        extra = pos_mask & ~den_mask
    else:
        extra = np.zeros_like(pos_mask)
    denom = np.where(extra, base[:, None] + e, base[:, None])

    # log only where a positive actually reads the denominator
    safe = np.where(pos_mask, denom, 1.0)
    terms = np.where(pos_mask, -(logits - shift[:, None]) + np.log(safe), 0.0)
    per_anchor = terms.sum(axis=1)

    inv = np.where(pos_mask, 1.0 / safe, 0.0)
    grad = np.where(den_mask, e * inv.sum(axis=1)[:, None], 0.0)
    grad += np.where(extra & pos_mask, e * inv, 0.0)
    grad -= pos_mask.astype(np.float64)

    return float(per_anchor.sum()), per_anchor, grad
