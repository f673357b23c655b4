"""Concept taxonomy: loading, validation, semantic similarity, curation.

A taxonomy is a single-rooted acyclic hypernym graph (parent = broader
concept).  This module computes node depths, shortest undirected paths,
the depth-weighted class similarity

    s(m, n) = -log( (d_min(m, n) + 1) / (2 * max(depth_m, depth_n) + 1) )

and its per-anchor normalization to [0, 1], and runs the two curation
stages used to assemble realm-wise benchmark datasets: concept filtering
and realm (sub-tree) selection.

All structures are immutable after construction and safe to share across
threads.
"""

from __future__ import annotations

import collections
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._util import atomic_write_text, fmt_float

KNOWN_FLAGS = frozenset({"offensive", "non_visual"})

STATUS_SELECTED = "selected"
STATUS_TOO_SMALL = "rejected_too_small"
STATUS_COVERED = "rejected_covered"
STATUS_EXCLUDED = "rejected_excluded"

REASON_OFFENSIVE = "rule-1-offensive"
REASON_NON_VISUAL = "rule-2-non-visual"
REASON_NOT_LEAF = "rule-3-not-leaf"
REASON_TOO_FEW_IMAGES = "rule-4-insufficient-images"


class TaxonomyError(ValueError):
    """Raised for malformed taxonomy files or invalid queries."""


@dataclass(frozen=True)
class ConceptNode:
    """One concept: identity, label eligibility, and curation attributes."""

    id: str
    name: str
    is_class: bool = True
    image_count: int = 0
    flags: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self):
        if self.image_count < 0:
            raise TaxonomyError(f"concept {self.id!r}: image_count must be >= 0")
        unknown = set(self.flags) - KNOWN_FLAGS
        if unknown:
            raise TaxonomyError(f"concept {self.id!r}: unknown flags {sorted(unknown)}")


class TaxonomyDag:
    """Validated single-rooted concept DAG with cached depths.

    Depth of the root is 0; a multi-parent node takes the minimum depth
    over its parents.  Treat instances as immutable.
    """

    def __init__(self, nodes, edges):
        self.nodes: dict[str, ConceptNode] = {}
        for node in nodes:
            if node.id in self.nodes:
                raise TaxonomyError(f"duplicate concept id {node.id!r}")
            self.nodes[node.id] = node

        children: dict[str, list[str]] = {nid: [] for nid in self.nodes}
        parents: dict[str, list[str]] = {nid: [] for nid in self.nodes}
        self.edges = tuple(edges)
        seen_edges = set()
        for parent, child in self.edges:
            for endpoint in (parent, child):
                if endpoint not in self.nodes:
                    raise TaxonomyError(f"edge endpoint {endpoint!r} is not a declared concept")
            if (parent, child) in seen_edges:
                continue
            seen_edges.add((parent, child))
            children[parent].append(child)
            parents[child].append(parent)
        self.children = {nid: tuple(c) for nid, c in children.items()}
        self.parents = {nid: tuple(p) for nid, p in parents.items()}

        self._check_acyclic()
        roots = [nid for nid in self.nodes if not self.parents[nid]]
        if len(roots) != 1:
            raise TaxonomyError(
                f"taxonomy must have exactly one root, found {len(roots)}: {sorted(roots)[:5]}"
            )
        self.root_id = roots[0]
        self.depth = self._compute_depths()

    def _check_acyclic(self):
        # Kahn's algorithm; anything left over sits on a cycle.
        indeg = {nid: len(self.parents[nid]) for nid in self.nodes}
        queue = collections.deque(nid for nid, d in indeg.items() if d == 0)
        visited = 0
        while queue:
            nid = queue.popleft()
            visited += 1
            for child in self.children[nid]:
                indeg[child] -= 1
                if indeg[child] == 0:
                    queue.append(child)
        if visited != len(self.nodes):
            cyclic = sorted(nid for nid, d in indeg.items() if d > 0)
            raise TaxonomyError(f"cycle detected involving {cyclic[:5]}")

    def _compute_depths(self):
        # BFS level order from the root gives min-over-parents depths.
        depth = {self.root_id: 0}
        queue = collections.deque([self.root_id])
        while queue:
            nid = queue.popleft()
            for child in self.children[nid]:
                if child not in depth:
                    depth[child] = depth[nid] + 1
                    queue.append(child)
        if len(depth) != len(self.nodes):
            unreachable = sorted(set(self.nodes) - set(depth))
            raise TaxonomyError(f"concepts unreachable from root: {unreachable[:5]}")
        return depth

    def __len__(self):
        return len(self.nodes)

    def __contains__(self, concept_id):
        return concept_id in self.nodes

    def _require(self, concept_id):
        if concept_id not in self.nodes:
            raise TaxonomyError(f"unknown concept id {concept_id!r}")

    def is_leaf(self, concept_id) -> bool:
        self._require(concept_id)
        return not self.children[concept_id]

    def leaves(self) -> list[str]:
        return [nid for nid in self.nodes if not self.children[nid]]

    def descendants(self, concept_id) -> set[str]:
        """All concepts strictly below ``concept_id``."""
        self._require(concept_id)
        out: set[str] = set()
        queue = collections.deque(self.children[concept_id])
        while queue:
            nid = queue.popleft()
            if nid in out:
                continue
            out.add(nid)
            queue.extend(self.children[nid])
        return out

    def subtree(self, concept_id) -> set[str]:
        """``concept_id`` plus all of its descendants."""
        out = self.descendants(concept_id)
        out.add(concept_id)
        return out

    def min_depth_parent(self, concept_id) -> str | None:
        """Parent on a minimum-depth path (ties broken by id)."""
        self._require(concept_id)
        parents = self.parents[concept_id]
        if not parents:
            return None
        return min(parents, key=lambda p: (self.depth[p], p))

    def undirected_distances(self, source) -> dict[str, int]:
        """BFS hop counts from ``source`` treating edges as undirected."""
        self._require(source)
        dist = {source: 0}
        queue = collections.deque([source])
        while queue:
            nid = queue.popleft()
            for other in self.children[nid] + self.parents[nid]:
                if other not in dist:
                    dist[other] = dist[nid] + 1
                    queue.append(other)
        return dist

    def shortest_path(self, m, n) -> int:
        """Fewest undirected edges between concepts ``m`` and ``n``."""
        self._require(m)
        self._require(n)
        if m == n:
            return 0
        # Single-rooted and fully reachable, so a path always exists.
        return self.undirected_distances(m)[n]

    def raw_similarity(self, m, n) -> float:
        """Depth-weighted similarity s(m, n), in nats, always >= 0.

        Deeper pairs at the same hop distance score higher: the deeper a
        node sits, the more concrete it is, so proximity there means more.
        """
        d = self.shortest_path(m, n)
        peak = max(self.depth[m], self.depth[n])
        return -math.log((d + 1.0) / (2.0 * peak + 1.0))


@dataclass(frozen=True)
class SimilarityTable:
    """Pairwise class similarities and the acceptance probabilities 1 - s̃."""

    class_ids: tuple[str, ...]
    raw: np.ndarray
    normalized: np.ndarray
    accept_prob: np.ndarray

    @property
    def index(self) -> dict[str, int]:
        return {cid: i for i, cid in enumerate(self.class_ids)}

    def write_csv(self, raw_path, normalized_path):
        """Export matrices with a class-id header row (one file each)."""
        for matrix, path in ((self.raw, raw_path), (self.normalized, normalized_path)):
            lines = ["class_id," + ",".join(self.class_ids)]
            for cid, row in zip(self.class_ids, matrix):
                lines.append(cid + "," + ",".join(fmt_float(v) for v in row))
            atomic_write_text(path, "\n".join(lines) + "\n")


@dataclass(frozen=True)
class RealmSubtree:
    """Outcome of realm selection for one candidate sub-tree root."""

    root_concept: str
    valid_classes: tuple[str, ...]
    status: str


def _parse_flags(text, path, lineno):
    if text == "-":
        return frozenset()
    flags = frozenset(part.strip() for part in text.split(",") if part.strip())
    unknown = set(flags) - KNOWN_FLAGS
    if unknown:
        raise TaxonomyError(f"{path}:{lineno}: unknown flags {sorted(unknown)}")
    return flags


def load_taxonomy(edge_file, node_file) -> TaxonomyDag:
    """Load and validate a taxonomy from the two tab-separated files.

    Node file columns: ``id  name  is_class(0|1)  image_count  flags``
    where flags is ``-`` or a comma-separated subset of
    ``{offensive, non_visual}``.  Edge file lines: ``parent_id  child_id``.
    ``#``-prefixed and blank lines are ignored in both files.
    """
    nodes = []
    node_path = Path(node_file)
    for lineno, line in enumerate(node_path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.rstrip("\n").split("\t")
        if len(parts) != 5:
            raise TaxonomyError(f"{node_path}:{lineno}: expected 5 tab-separated fields, got {len(parts)}")
        cid, name, is_class, image_count, flags = parts
        if is_class not in ("0", "1"):
            raise TaxonomyError(f"{node_path}:{lineno}: is_class must be 0 or 1")
        try:
            count = int(image_count)
        except ValueError:
            raise TaxonomyError(f"{node_path}:{lineno}: image_count must be an integer") from None
        if count < 0:
            raise TaxonomyError(f"{node_path}:{lineno}: image_count must be >= 0")
        nodes.append(
            ConceptNode(
                id=cid,
                name=name,
                is_class=is_class == "1",
                image_count=count,
                flags=_parse_flags(flags, node_path, lineno),
            )
        )

    edges = []
    edge_path = Path(edge_file)
    for lineno, line in enumerate(edge_path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.rstrip("\n").split("\t")
        if len(parts) != 2:
            raise TaxonomyError(f"{edge_path}:{lineno}: expected 'parent<TAB>child'")
        edges.append((parts[0], parts[1]))

    return TaxonomyDag(nodes, edges)


def build_similarity_table(dag, class_ids, normalization="self") -> SimilarityTable:
    """All-pairs raw and normalized similarities for the given classes.

    ``normalization="self"`` (default) divides each anchor row by the
    anchor's self-similarity and clamps to [0, 1]; ``"minmax"`` rescales
    each row to [0, 1] by its own range.  Either way the diagonal is 1,
    so a class is never an acceptable negative for itself.  The "self"
    normalization is a ratio of logs and therefore log-base invariant.
    """
    if normalization not in ("self", "minmax"):
        raise ValueError(f"unknown normalization {normalization!r}")
    class_ids = tuple(class_ids)
    for cid in class_ids:
        dag._require(cid)
        if dag.depth[cid] == 0:
            raise TaxonomyError(
                f"class {cid!r} sits at depth 0; its self-similarity is zero (degenerate anchor)"
            )
    k = len(class_ids)
    raw = np.zeros((k, k))
    for i, cid in enumerate(class_ids):
        dist = dag.undirected_distances(cid)
        for j, other in enumerate(class_ids):
            peak = max(dag.depth[cid], dag.depth[other])
            raw[i, j] = -math.log((dist[other] + 1.0) / (2.0 * peak + 1.0))

    if normalization == "self":
        normalized = np.clip(raw / np.diag(raw)[:, None], 0.0, 1.0)
    else:
        lo = raw.min(axis=1, keepdims=True)
        span = raw.max(axis=1, keepdims=True) - lo
        with np.errstate(invalid="ignore"):
            normalized = np.where(span > 0.0, (raw - lo) / np.where(span > 0.0, span, 1.0), 1.0)
    np.fill_diagonal(normalized, 1.0)
    return SimilarityTable(
        class_ids=class_ids,
        raw=raw,
        normalized=normalized,
        accept_prob=1.0 - normalized,
    )


def filter_concepts(dag, min_images=200):
    """Select benchmark-eligible concepts by four ordered rules.

    A concept survives iff it (1) is not flagged offensive, (2) is not
    flagged non-visual, (3) is a leaf, and (4) has at least ``min_images``
    raw samples.  Returns ``(valid_ids, report)`` where ``report`` maps
    each rejected id to its first failing rule.
    """
    valid = []
    report: dict[str, str] = {}
    for cid, node in dag.nodes.items():
        if "offensive" in node.flags:
            report[cid] = REASON_OFFENSIVE
        elif "non_visual" in node.flags:
            report[cid] = REASON_NON_VISUAL
        elif dag.children[cid]:
            report[cid] = REASON_NOT_LEAF
        elif node.image_count < min_images:
            report[cid] = REASON_TOO_FEW_IMAGES
        else:
            valid.append(cid)
    return valid, report


def select_realms(dag, valid, candidates, excluded=(), min_classes=20):
    """Pick mutually non-nested sub-trees that each cover enough valid concepts.

    Three ordered principles decide each candidate's fate: (1) its sub-tree
    must contain at least ``min_classes`` valid concepts, (2) it must not be
    nested inside another surviving candidate's sub-tree, (3) it must not be
    on the caller-supplied exclusion list (human judgment externalized).
    The reported status is the first principle the candidate fails.

    Returns one :class:`RealmSubtree` per candidate, sorted by root id, so
    the output does not depend on candidate order.
    """
    for cid in list(candidates) + list(excluded):
        if cid not in dag.nodes:
            raise TaxonomyError(f"unknown candidate id {cid!r}")
    valid = list(valid)
    excluded = set(excluded)
    subtrees = {c: dag.subtree(c) for c in set(candidates)}
    valid_in = {c: tuple(v for v in valid if v in subtrees[c]) for c in subtrees}

    eligible = {c for c in subtrees if len(valid_in[c]) >= min_classes and c not in excluded}
    # Survivors are the maximal eligible sub-trees under strict containment.
    selected = {
        c for c in eligible
        if not any(d != c and c in subtrees[d] for d in eligible)
    }

    out = []
    for c in sorted(subtrees):
        if len(valid_in[c]) < min_classes:
            status = STATUS_TOO_SMALL
        elif any(d != c and c in subtrees[d] for d in selected):
            status = STATUS_COVERED
        elif c in excluded:
            status = STATUS_EXCLUDED
        else:
            status = STATUS_SELECTED
        out.append(RealmSubtree(root_concept=c, valid_classes=valid_in[c], status=status))
    return out
