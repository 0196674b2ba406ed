"""Everything conditional on a causal order.

Enumerates all parent sets of size <= K consistent with an order, scores them
through the mechanism cache, and computes order scores, per-node posterior
weights and closed-form expectations of queries that factorise or sum over
parent sets. All score arithmetic stays in log space with max-shifted
logsumexp; probabilities are materialised only at the final step.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Callable, Sequence

import numpy as np

from .core import CausalOrder, Dag, Dataset, ParentSet, make_parent_set
from .errors import AllNegInfiniteError, IndexOutOfRangeError
from .mechanisms import GP_FIT_LR, GP_FIT_STEPS, MechanismCache, NigPrior, local_score


def logsumexp(values: np.ndarray) -> float:
    values = np.asarray(values, dtype=float)
    m = values.max()
    if not np.isfinite(m):
        return float(m)
    return float(m + np.log(np.exp(values - m).sum()))


def enumerate_parent_sets(node_position: int, order: CausalOrder, cap: int) -> list[ParentSet]:
    """All subsets of the order prefix before `node_position` (1-based) up to size `cap`.

    Enumeration is deterministic: sizes ascending, lexicographic within a size,
    which keeps cache keys and categorical indices reproducible.
    """
    d = order.d
    if node_position < 1 or node_position > d:
        raise IndexOutOfRangeError(f"position {node_position} not in 1..{d}")
    node = order.sequence[node_position - 1]
    predecessors = sorted(order.sequence[: node_position - 1])
    out = []
    for size in range(0, min(cap, len(predecessors)) + 1):
        for combo in combinations(predecessors, size):
            out.append(make_parent_set(node, combo, d))
    return out


@dataclass(frozen=True)
class ParentSetTable:
    """Per node: admissible parent sets, log scores, log normaliser and posterior weights.

    Nodes appear in order-sequence position; `log_prior` is the uniform
    -log(#sets) prior over admissible sets, `log_alpha` the per-node logsumexp
    of prior + score, and `posterior` the normalised per-node weights
    exp(log_prior + score - log_alpha).
    """

    order: CausalOrder
    parent_sets: tuple[tuple[ParentSet, ...], ...]
    log_scores: tuple[np.ndarray, ...]
    log_priors: tuple[float, ...]
    log_alphas: tuple[float, ...]
    posteriors: tuple[np.ndarray, ...]

    @property
    def d(self) -> int:
        return self.order.d

    def node_index(self, node: int) -> int:
        return self.order.position_of[node]

    @staticmethod
    def from_scores(
        order: CausalOrder,
        sets_per_node: Sequence[Sequence[ParentSet]],
        scores_per_node: Sequence[np.ndarray],
    ) -> "ParentSetTable":
        """Assemble a table from explicit scores (one list per order position)."""
        log_priors, log_alphas, posteriors, scores, sets = [], [], [], [], []
        for node_sets, node_scores in zip(sets_per_node, scores_per_node):
            node_scores = np.asarray(node_scores, dtype=float)
            lp = -np.log(len(node_sets))
            la = logsumexp(lp + node_scores)
            log_priors.append(float(lp))
            log_alphas.append(la)
            posteriors.append(np.exp(lp + node_scores - la))
            scores.append(node_scores)
            sets.append(tuple(node_sets))
        return ParentSetTable(
            order=order,
            parent_sets=tuple(sets),
            log_scores=tuple(scores),
            log_priors=tuple(log_priors),
            log_alphas=tuple(log_alphas),
            posteriors=tuple(posteriors),
        )


class TableBuilder:
    """Builds parent-set tables against one dataset/cache, memoising per-node work.

    The per-node normaliser and posterior depend only on (node, set of
    predecessors, cap), not on the full order, so contexts are shared across
    all orders that agree on a node's predecessor set. Scores are immutable
    once cached, which keeps the memo consistent.
    """

    def __init__(
        self,
        cache: MechanismCache,
        data: Dataset,
        cap: int,
        nig_prior: NigPrior | None = None,
        gp_steps: int = GP_FIT_STEPS,
        gp_lr: float = GP_FIT_LR,
    ) -> None:
        self.cache = cache
        self.data = data
        self.cap = cap
        self.nig_prior = nig_prior
        self.gp_steps = gp_steps
        self.gp_lr = gp_lr
        self._contexts: dict[tuple[int, tuple[int, ...]], tuple] = {}

    def _node_context(self, node: int, predecessors: tuple[int, ...]) -> tuple:
        key = (node, predecessors)
        ctx = self._contexts.get(key)
        if ctx is not None:
            return ctx
        sets: list[ParentSet] = []
        scores: list[float] = []
        for size in range(0, min(self.cap, len(predecessors)) + 1):
            for combo in combinations(predecessors, size):
                sets.append(ParentSet(node=node, parents=combo))
                scores.append(
                    local_score(
                        self.cache,
                        node,
                        combo,
                        self.data,
                        nig_prior=self.nig_prior,
                        gp_steps=self.gp_steps,
                        gp_lr=self.gp_lr,
                    ).total
                )
        score_arr = np.array(scores)
        log_prior = -np.log(len(sets))
        log_alpha = logsumexp(log_prior + score_arr)
        posterior = np.exp(log_prior + score_arr - log_alpha)
        ctx = (tuple(sets), score_arr, float(log_prior), float(log_alpha), posterior)
        self._contexts[key] = ctx
        return ctx

    def table(self, order: CausalOrder) -> ParentSetTable:
        sets, scores, priors, alphas, posteriors = [], [], [], [], []
        for position in range(order.d):
            node = order.sequence[position]
            predecessors = tuple(sorted(order.sequence[:position]))
            ctx = self._node_context(node, predecessors)
            sets.append(ctx[0])
            scores.append(ctx[1])
            priors.append(ctx[2])
            alphas.append(ctx[3])
            posteriors.append(ctx[4])
        return ParentSetTable(
            order=order,
            parent_sets=tuple(sets),
            log_scores=tuple(scores),
            log_priors=tuple(priors),
            log_alphas=tuple(alphas),
            posteriors=tuple(posteriors),
        )


def build_table(
    order: CausalOrder,
    cache: MechanismCache,
    data: Dataset,
    cap: int,
    nig_prior: NigPrior | None = None,
    gp_steps: int = GP_FIT_STEPS,
    gp_lr: float = GP_FIT_LR,
) -> ParentSetTable:
    """Score every admissible parent set (through the cache) and normalise per node."""
    builder = TableBuilder(
        cache, data, cap, nig_prior=nig_prior, gp_steps=gp_steps, gp_lr=gp_lr
    )
    return builder.table(order)


def log_order_score(table: ParentSetTable) -> float:
    """log E_{G|order}[likelihood * hyperprior] = sum of per-node log normalisers."""
    return float(sum(table.log_alphas))


def importance_weights(log_scores: Sequence[float]) -> np.ndarray:
    """Self-normalised weights: softmax of the per-order log scores."""
    ls = np.asarray(log_scores, dtype=float)
    if ls.size == 0:
        raise AllNegInfiniteError("no log scores given")
    m = ls.max()
    if not np.isfinite(m):
        raise AllNegInfiniteError("all log scores are -inf")
    w = np.exp(ls - m)
    return w / w.sum()


def expectation_factorising(
    table: ParentSetTable, factors: Callable[[int, tuple[int, ...]], float]
) -> float:
    """E_{G|order}[w(G) * prod_i Y_i(Pa_i)] with per-node normalised posterior weights."""
    out = 1.0
    for sets, post in zip(table.parent_sets, table.posteriors):
        out *= float(
            sum(p * factors(ps.node, ps.parents) for ps, p in zip(sets, post))
        )
    return out


def expectation_summing(
    table: ParentSetTable, summands: Callable[[int, tuple[int, ...]], float]
) -> float:
    """E_{G|order}[w(G) * sum_i Y_i(Pa_i)]; the cross-node normaliser products cancel to 1."""
    out = 0.0
    for sets, post in zip(table.parent_sets, table.posteriors):
        out += float(
            sum(p * summands(ps.node, ps.parents) for ps, p in zip(sets, post))
        )
    return out


def sample_graph_given_order(table: ParentSetTable, rng: np.random.Generator) -> Dag:
    """One categorical draw per node over its parent sets; acyclic by construction."""
    chosen: dict[int, ParentSet] = {}
    for sets, post in zip(table.parent_sets, table.posteriors):
        u = rng.random()
        idx = int(np.searchsorted(np.cumsum(post), u))
        idx = min(idx, len(sets) - 1)
        ps = sets[idx]
        chosen[ps.node] = ps
    return Dag(tuple(chosen[i] for i in range(table.d)))


def edge_posterior_given_order(table: ParentSetTable) -> np.ndarray:
    """Matrix with entry (j, i) = P(X_j -> X_i | order, data); zero against the order."""
    d = table.d
    out = np.zeros((d, d))
    for sets, post in zip(table.parent_sets, table.posteriors):
        for ps, p in zip(sets, post):
            for parent in ps.parents:
                out[parent, ps.node] += p
    return out
