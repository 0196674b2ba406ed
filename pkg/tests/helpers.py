"""Shared oracles for the test suite: brute-force enumeration over
order-consistent capped DAGs, finite differences, and synthetic tables."""

from __future__ import annotations

from itertools import product

import numpy as np

from arco_bci.core import make_order
from arco_bci.order_marginal import ParentSetTable, enumerate_parent_sets


def random_table(d: int, cap: int, rng: np.random.Generator, scale: float = 3.0) -> ParentSetTable:
    """Table over a random order with N(0, scale^2) synthetic log scores."""
    order = make_order(rng.permutation(d))
    sets_per_node, scores_per_node = [], []
    for pos in range(1, d + 1):
        sets = enumerate_parent_sets(pos, order, cap)
        sets_per_node.append(sets)
        scores_per_node.append(rng.normal(scale=scale, size=len(sets)))
    return ParentSetTable.from_scores(order, sets_per_node, scores_per_node)


def brute_force(table: ParentSetTable, mode: str, fn=None) -> float:
    """Exhaustive sum over all order-consistent capped DAGs.

    mode 'score' returns log sum of prior * exp(score) products; 'fact' and
    'sum' return the posterior expectation of a factorising / summing query.
    """
    per_node = []
    for sets, scores, lp in zip(table.parent_sets, table.log_scores, table.log_priors):
        per_node.append([(ps, np.exp(lp + s)) for ps, s in zip(sets, scores)])
    norm = 0.0
    accum = 0.0
    for combo in product(*per_node):
        weight = float(np.prod([w for _, w in combo]))
        norm += weight
        if mode == "fact":
            y = float(np.prod([fn(ps.node, ps.parents) for ps, _ in combo]))
        elif mode == "sum":
            y = float(np.sum([fn(ps.node, ps.parents) for ps, _ in combo]))
        else:
            continue
        accum += weight * y
    if mode == "score":
        return float(np.log(norm))
    return accum / norm


def finite_difference(fn, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function of a flat vector."""
    grad = np.zeros_like(x)
    for i in range(len(x)):
        xp = x.copy()
        xp[i] += h
        xm = x.copy()
        xm[i] -= h
        grad[i] = (fn(xp) - fn(xm)) / (2.0 * h)
    return grad
