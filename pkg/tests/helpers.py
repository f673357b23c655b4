"""Shared test utilities: oracles and generators kept independent of the
implementation paths they check."""

import numpy as np

from recobench.taxonomy import ConceptNode, TaxonomyDag


def dog_taxonomy():
    """root(0) -> mammal(1) -> dog(2) -> {husky, labrador}(3)."""
    nodes = [ConceptNode(i, i, True, 500)
             for i in ("root", "mammal", "dog", "husky", "labrador")]
    edges = [("root", "mammal"), ("mammal", "dog"),
             ("dog", "husky"), ("dog", "labrador")]
    return TaxonomyDag(nodes, edges)


def realm_taxonomy(n_realms=3, mids_per_realm=2, leaves_per_mid=2, image_count=500):
    """Balanced 3-level tree; leaves are classes."""
    nodes = [ConceptNode("root", "root", False, 0)]
    edges = []
    for r in range(n_realms):
        realm = f"realm{r}"
        nodes.append(ConceptNode(realm, realm, False, 0))
        edges.append(("root", realm))
        for m in range(mids_per_realm):
            mid = f"mid{r}{m}"
            nodes.append(ConceptNode(mid, mid, False, 0))
            edges.append((realm, mid))
            for l in range(leaves_per_mid):
                leaf = f"leaf{r}{m}{l}"
                nodes.append(ConceptNode(leaf, leaf, True, image_count))
                edges.append((mid, leaf))
    return TaxonomyDag(nodes, edges)


def random_dag(rng, max_nodes=50, multi_parent_prob=0.15, flag_prob=0.0):
    """Random single-rooted DAG: node i's parents have smaller index."""
    n = int(rng.integers(2, max_nodes + 1))
    names = [f"n{i}" for i in range(n)]
    nodes = []
    for name in names:
        flags = []
        if flag_prob and rng.random() < flag_prob:
            flags.append("offensive" if rng.random() < 0.5 else "non_visual")
        nodes.append(ConceptNode(name, name, bool(rng.random() < 0.8),
                                 int(rng.integers(0, 400)), frozenset(flags)))
    edges = []
    for i in range(1, n):
        parent = int(rng.integers(0, i))
        edges.append((names[parent], names[i]))
        if i >= 2 and rng.random() < multi_parent_prob:
            extra = int(rng.integers(0, i))
            if extra != parent:
                edges.append((names[extra], names[i]))
    return TaxonomyDag(nodes, edges)


def floyd_warshall_distances(dag):
    """O(n^3) all-pairs undirected hop counts (oracle for BFS paths)."""
    ids = list(dag.nodes)
    index = {nid: i for i, nid in enumerate(ids)}
    n = len(ids)
    dist = np.full((n, n), np.inf)
    np.fill_diagonal(dist, 0.0)
    for nid in ids:
        for child in dag.children[nid]:
            dist[index[nid], index[child]] = 1.0
            dist[index[child], index[nid]] = 1.0
    for k in range(n):
        dist = np.minimum(dist, dist[:, k:k + 1] + dist[k:k + 1, :])
    return ids, index, dist


def fd_grad(fn, x, h=1e-5):
    """Central finite differences of a scalar function of an array."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp = x.copy()
        xp[idx] += h
        xm = x.copy()
        xm[idx] -= h
        grad[idx] = (fn(xp) - fn(xm)) / (2.0 * h)
    return grad


def rel_error(analytic, numeric):
    return float(np.linalg.norm(analytic - numeric) / max(np.linalg.norm(numeric), 1e-12))


def random_batch(rng, n_pairs=3, dim=4, n_classes=2):
    """Random embeddings plus paired labels drawn from n_classes."""
    source = rng.choice([f"c{i}" for i in range(n_classes)], n_pairs)
    labels = np.repeat(source, 2)
    z = rng.normal(size=(2 * n_pairs, dim))
    return z, labels


def rankdata(values):
    """Average ranks (1-based) with ties shared."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    ordered = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and ordered[j + 1] == ordered[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(x, y):
    rx, ry = rankdata(x), rankdata(y)
    rx -= rx.mean()
    ry -= ry.mean()
    return float((rx * ry).sum() / np.sqrt((rx * rx).sum() * (ry * ry).sum()))
