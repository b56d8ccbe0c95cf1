"""Independent reference implementations and random instance generators.

Nothing here calls into the code under test except to construct inputs.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from sarp.corpus import CorpusImage, SceneGraphCorpus
from sarp.inference import PairwiseMarkovNetwork


def brute_force_phi(images, triplet):
    """Per-image scan of the counting rule, no indexes; returns (p11, p00, p01, p10)."""
    v, _, w = triplet
    either = both = rel = only_v = only_w = 0
    for img in images:
        has_v, has_w = v in img.labels, w in img.labels
        if has_v or has_w:
            either += 1
        if has_v and has_w:
            both += 1
            if tuple(triplet) in img.relations:
                rel += 1
        elif has_v:
            only_v += 1
        elif has_w:
            only_w += 1
    if either == 0:
        return (0.25, 0.25, 0.25, 0.25)
    return (rel / either, (both - rel) / either, only_w / either, only_v / either)


def random_corpus(rng, n_images=None, vocab=("a", "b", "c", "d", "e"), predicates=("on", "in")):
    n_images = int(rng.integers(0, 201)) if n_images is None else n_images
    images = []
    for i in range(n_images):
        labels = {l for l in vocab if rng.random() < rng.uniform(0.1, 0.7)}
        rels = set()
        for s, o in itertools.permutations(sorted(labels), 2):
            for p in predicates:
                if rng.random() < 0.3:
                    rels.add((s, p, o))
        images.append(CorpusImage(f"i{i}", frozenset(labels), frozenset(rels)))
    return SceneGraphCorpus(images)


def random_table(rng):
    return rng.uniform(0.0, 1.0, size=(2, 2)) + 1e-3


def random_tree(rng, n):
    edges, tables = [], []
    for child in range(1, n):
        parent = int(rng.integers(child))
        edges.append((parent, child))
        tables.append(random_table(rng))
    return PairwiseMarkovNetwork(n, edges, tables)


def random_loopy(rng, n=8, extra=3):
    """Random spanning tree plus ``extra`` chords, so at least one cycle."""
    tree = random_tree(rng, n)
    present = set(tree.edges)
    edges, tables = list(tree.edges), list(tree.tables)
    candidates = [(i, j) for i in range(n) for j in range(i + 1, n) if (i, j) not in present]
    for k in rng.choice(len(candidates), size=extra, replace=False):
        edges.append(candidates[k])
        tables.append(random_table(rng))
    return PairwiseMarkovNetwork(n, edges, tables)


def random_evidence(rng, n, max_nodes=3):
    k = int(rng.integers(0, min(max_nodes, n - 1) + 1))
    nodes = rng.choice(n, size=k, replace=False)
    return {int(i): int(rng.integers(2)) for i in nodes}


def enumerate_marginals(net, evidence=None):
    """Plain product-sum over all assignments (tiny networks only)."""
    evidence = evidence or {}
    n = net.n_nodes
    z = 0.0
    p1 = np.zeros(n)
    for x in itertools.product((0, 1), repeat=n):
        if any(x[i] != v for i, v in evidence.items()):
            continue
        w = math.prod(float(t[x[i], x[j]]) for (i, j), t in zip(net.edges, net.tables))
        z += w
        p1 += w * np.array(x)
    return p1 / z


def bayes_update(b, likelihood):
    post = [bi * li for bi, li in zip(b, likelihood)]
    s = sum(post)
    return [p / s for p in post]


def binomial_3sigma(p, n):
    sd = math.sqrt(n * p * (1 - p))
    return n * p - 3 * sd, n * p + 3 * sd
