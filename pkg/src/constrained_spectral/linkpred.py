"""Edge splits, negative sampling and the end-to-end link prediction run."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GraphValidationError
from .graph import Graph
from .net import LinkDataset, TrainConfig, auc_score, init_model, train

MIN_TEST_EDGES = 2
MIN_TRAIN_EDGES = 4


@dataclass
class LinkSplit:
    observed: Graph
    train: LinkDataset
    test: LinkDataset


def sample_non_edges(g: Graph, count, rng, exclude=()):
    """Uniform distinct non-edges (rejection sampling; falls back to enumeration)."""
    taken = set(exclude)
    total = g.n * (g.n - 1) // 2 - g.num_edges - len(taken)
    if count > total:
        raise GraphValidationError(f"only {total} non-edges available, need {count}")
    out = []
    if count > total // 2:
        pool = [(a, b) for a in range(g.n) for b in range(a + 1, g.n)
                if (a, b) not in g.edges and (a, b) not in taken]
        pick = rng.choice(len(pool), size=count, replace=False)
        return [pool[i] for i in sorted(pick)]
    while len(out) < count:
        a, b = (int(x) for x in rng.choice(g.n, size=2, replace=False))
        key = (min(a, b), max(a, b))
        if key in g.edges or key in taken:
            continue
        taken.add(key)
        out.append(key)
    return out


def split_links(g: Graph, test_frac=0.1, seed=0, max_train=None) -> LinkSplit:
    """Hold out ``test_frac`` of the edges plus as many sampled non-edges.

    Held-out edges are removed from the observed graph; training positives
    stay in it (their query edge is dropped at extraction time).
    """
    if not 0.0 < test_frac < 1.0:
        raise GraphValidationError(f"split fraction must be in (0, 1), got {test_frac}")
    rng = np.random.default_rng(seed)
    edges = g.sorted_edges()
    n_test = int(round(test_frac * len(edges)))
    n_train = len(edges) - n_test
    if n_test < MIN_TEST_EDGES or n_train < MIN_TRAIN_EDGES:
        raise GraphValidationError(
            f"graph with {len(edges)} edges too small for split {test_frac}")
    perm = rng.permutation(len(edges))
    test_pos = [edges[i] for i in sorted(perm[:n_test])]
    train_pos = [edges[i] for i in sorted(perm[n_test:])]
    if max_train is not None and len(train_pos) > max_train // 2:
        keep = rng.choice(len(train_pos), size=max_train // 2, replace=False)
        train_pos = [train_pos[i] for i in sorted(keep)]
    negs = sample_non_edges(g, len(test_pos) + len(train_pos), rng)
    test_neg, train_neg = negs[: len(test_pos)], negs[len(test_pos):]
    observed = Graph(g.n, g.edges - set(test_pos), g.features)
    train_set = LinkDataset(observed, train_pos + train_neg,
                            [1] * len(train_pos) + [0] * len(train_neg))
    test_set = LinkDataset(observed, test_pos + test_neg,
                           [1] * len(test_pos) + [0] * len(test_neg))
    return LinkSplit(observed, train_set, test_set)


def degree_product_auc(split: LinkSplit) -> float:
    deg = split.observed.degrees()
    scores = [deg[u] * deg[v] for u, v in split.test.pairs]
    return auc_score(scores, split.test.labels)


def run_link_prediction(g: Graph, cfg: TrainConfig, test_frac=0.1, max_train=None):
    """Split, build instances, train; returns ``(model, history, split)``."""
    split = split_links(g, test_frac, cfg.seed, max_train)
    model = init_model(channels=cfg.channels, pool_k=cfg.pool_k, seed=cfg.seed)
    model, history = train(model, split.train, cfg, split.test)
    return model, history, split
