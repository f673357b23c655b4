"""Relational contrastive learning over concept taxonomies, desk scale.

Subpackages cover the full pipeline: taxonomy ingestion and semantic
similarity, contrastive objectives with analytic gradients, Bernoulli
negative selection, synthetic hierarchical data, encoder training,
linear-probe evaluation, and DHash de-duplication.
"""

from ._kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["KERNEL_BACKEND", "__version__"]
