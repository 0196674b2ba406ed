"""Autoregressive distribution over causal orders.

A single-hidden-layer ReLU network maps the (flattened) prefix encoding of a
partially sampled order to one logit per variable. Orders are sampled by a
sequence of categorical draws over the not-yet-assigned variables; the exact
log-probability of an order is the sum of the per-step normalised logits.
Gradients are computed in closed form (reverse mode through the d softmax
steps and network passes), which keeps sampling, evaluation and training
bit-reproducible under a fixed seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import CausalOrder, make_order, prefix_encoding
from .errors import EmptyRemainingError, WeightMismatchError

HIDDEN_UNITS = 30
PRIOR_STD = 10.0


@dataclass(frozen=True)
class ArcoParams:
    """Weights of the logit network (input d*d, one hidden ReLU layer, output d)."""

    w1: np.ndarray  # (hidden, d*d)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (d, hidden)
    b2: np.ndarray  # (d,)
    prior_std: float = PRIOR_STD

    @property
    def d(self) -> int:
        return self.w2.shape[0]

    @property
    def hidden(self) -> int:
        return self.w1.shape[0]

    def tensors(self) -> dict[str, np.ndarray]:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}

    def to_json(self) -> str:
        payload = {
            "d": self.d,
            "hidden": self.hidden,
            "prior_std": self.prior_std,
            "w1": self.w1.ravel().tolist(),
            "b1": self.b1.tolist(),
            "w2": self.w2.ravel().tolist(),
            "b2": self.b2.tolist(),
        }
        return json.dumps(payload)

    @staticmethod
    def from_json(text: str) -> "ArcoParams":
        obj = json.loads(text)
        d, h = obj["d"], obj["hidden"]
        return ArcoParams(
            w1=np.array(obj["w1"], dtype=float).reshape(h, d * d),
            b1=np.array(obj["b1"], dtype=float),
            w2=np.array(obj["w2"], dtype=float).reshape(d, h),
            b2=np.array(obj["b2"], dtype=float),
            prior_std=float(obj["prior_std"]),
        )


def init_params(
    d: int,
    rng: np.random.Generator,
    hidden: int = HIDDEN_UNITS,
    prior_std: float = PRIOR_STD,
) -> ArcoParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialisation for both layers."""
    bound1 = 1.0 / np.sqrt(d * d)
    bound2 = 1.0 / np.sqrt(hidden)
    return ArcoParams(
        w1=rng.uniform(-bound1, bound1, size=(hidden, d * d)),
        b1=rng.uniform(-bound1, bound1, size=hidden),
        w2=rng.uniform(-bound2, bound2, size=(d, hidden)),
        b2=rng.uniform(-bound2, bound2, size=d),
        prior_std=prior_std,
    )


def zero_params(d: int, hidden: int = HIDDEN_UNITS, prior_std: float = PRIOR_STD) -> ArcoParams:
    return ArcoParams(
        w1=np.zeros((hidden, d * d)),
        b1=np.zeros(hidden),
        w2=np.zeros((d, hidden)),
        b2=np.zeros(d),
        prior_std=prior_std,
    )


def _forward(params: ArcoParams, inputs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batched forward pass. inputs (m, d*d) -> (logits (m, d), pre-activations (m, hidden))."""
    pre = inputs @ params.w1.T + params.b1
    hidden = np.maximum(pre, 0.0)
    return hidden @ params.w2.T + params.b2, pre


def logits(params: ArcoParams, encoding: np.ndarray) -> np.ndarray:
    """Logit vector for one prefix encoding (d x d matrix)."""
    out, _ = _forward(params, np.asarray(encoding, dtype=float).reshape(1, -1))
    return out[0]


def normalize_logits(raw: np.ndarray, remaining: Iterable[int]) -> np.ndarray:
    """Log-softmax restricted to `remaining`; assigned entries become -inf.

    The logsumexp is max-shifted over the remaining entries only, so -inf
    never reaches an exp.
    """
    raw = np.asarray(raw, dtype=float)
    idx = sorted(set(int(i) for i in remaining))
    if not idx:
        raise EmptyRemainingError("remaining set is empty")
    out = np.full(raw.shape, -np.inf)
    sub = raw[idx]
    m = sub.max()
    out[idx] = sub - (m + np.log(np.exp(sub - m).sum()))
    return out


def _mask_log_softmax(phi: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Row-wise log-softmax over entries where mask is True; others -inf."""
    neg = np.where(mask, phi, -np.inf)
    m = neg.max(axis=1, keepdims=True)
    shifted = np.where(mask, phi - m, -np.inf)
    lse = np.log(np.where(mask, np.exp(np.where(mask, shifted, 0.0)), 0.0).sum(axis=1, keepdims=True))
    return np.where(mask, shifted - lse, -np.inf)


def sample_orders(params: ArcoParams, count: int, rng: np.random.Generator) -> list[CausalOrder]:
    """Draw `count` orders by sequential categorical sampling (batched)."""
    d = params.d
    inputs = np.zeros((count, d * d))
    remaining = np.ones((count, d), dtype=bool)
    sequences = np.zeros((count, d), dtype=int)
    rows = np.arange(count)
    for k in range(d):
        phi, _ = _forward(params, inputs)
        logp = _mask_log_softmax(phi, remaining)
        probs = np.where(remaining, np.exp(np.where(remaining, logp, -np.inf)), 0.0)
        cdf = np.cumsum(probs, axis=1)
        u = rng.random(count)
        choice = (cdf < u[:, None]).sum(axis=1)
        choice = np.minimum(choice, d - 1)
        # guard against fp edge cases landing on an assigned slot
        bad = ~remaining[rows, choice]
        if bad.any():
            for m in np.nonzero(bad)[0]:
                choice[m] = int(np.argmax(probs[m]))
        sequences[:, k] = choice
        remaining[rows, choice] = False
        inputs[rows, choice * d + k] = 1.0
    return [make_order(seq) for seq in sequences]


def sample_order(params: ArcoParams, rng: np.random.Generator) -> CausalOrder:
    return sample_orders(params, 1, rng)[0]


def _batch_inputs(orders: Sequence[CausalOrder], d: int, k: int) -> np.ndarray:
    """Stacked flattened prefix encodings for step k (0-based)."""
    inputs = np.zeros((len(orders), d * d))
    for m, order in enumerate(orders):
        for slot, v in enumerate(order.sequence[:k]):
            inputs[m, v * d + slot] = 1.0
    return inputs


def log_prob_many(params: ArcoParams, orders: Sequence[CausalOrder]) -> np.ndarray:
    """Exact log p(order) for each order in the batch."""
    d = params.d
    count = len(orders)
    out = np.zeros(count)
    inputs = np.zeros((count, d * d))
    remaining = np.ones((count, d), dtype=bool)
    rows = np.arange(count)
    for k in range(d):
        phi, _ = _forward(params, inputs)
        logp = _mask_log_softmax(phi, remaining)
        chosen = np.array([o.sequence[k] for o in orders])
        out += logp[rows, chosen]
        remaining[rows, chosen] = False
        inputs[rows, chosen * d + k] = 1.0
    return out


def log_prob(params: ArcoParams, order: CausalOrder) -> float:
    return float(log_prob_many(params, [order])[0])


def weighted_grad_log_prob(
    params: ArcoParams, orders: Sequence[CausalOrder], coefficients: np.ndarray
) -> dict[str, np.ndarray]:
    """sum_m c_m * grad log p(order_m) over all network tensors.

    Reverse mode through every per-step restricted softmax: the logit
    gradient at step k is c_m * (onehot(chosen) - softmax over remaining).
    """
    d = params.d
    count = len(orders)
    coeff = np.asarray(coefficients, dtype=float)
    grads = {name: np.zeros_like(t) for name, t in params.tensors().items()}
    inputs = np.zeros((count, d * d))
    remaining = np.ones((count, d), dtype=bool)
    rows = np.arange(count)
    for k in range(d):
        phi, pre = _forward(params, inputs)
        logp = _mask_log_softmax(phi, remaining)
        probs = np.where(remaining, np.exp(np.where(remaining, logp, -np.inf)), 0.0)
        chosen = np.array([o.sequence[k] for o in orders])
        g_phi = -probs
        g_phi[rows, chosen] += 1.0
        g_phi *= coeff[:, None]
        hidden = np.maximum(pre, 0.0)
        grads["w2"] += g_phi.T @ hidden
        grads["b2"] += g_phi.sum(axis=0)
        delta = (g_phi @ params.w2) * (pre > 0.0)
        grads["w1"] += delta.T @ inputs
        grads["b1"] += delta.sum(axis=0)
        remaining[rows, chosen] = False
        inputs[rows, chosen * d + k] = 1.0
    return grads


def grad_log_prob(params: ArcoParams, order: CausalOrder) -> dict[str, np.ndarray]:
    """Exact gradient of log p(order) with respect to every parameter tensor."""
    return weighted_grad_log_prob(params, [order], np.ones(1))


def enumerate_orders(d: int) -> list[CausalOrder]:
    """All d! orders, lexicographic. Only sensible for small d."""
    import itertools

    return [make_order(p) for p in itertools.permutations(range(d))]


@dataclass
class ArcoTrainState:
    """Adam state plus the moving-average baseline of the score-function estimator."""

    params: ArcoParams
    learning_rate: float = 0.01
    ema_decay: float = 0.9
    baseline: float = 0.0
    step: int = 0
    m: dict[str, np.ndarray] | None = None
    v: dict[str, np.ndarray] | None = None

    def __post_init__(self):
        if not (0.0 < self.ema_decay < 1.0):
            raise WeightMismatchError("ema decay must lie in (0, 1)")
        if self.m is None:
            self.m = {k: np.zeros_like(t) for k, t in self.params.tensors().items()}
        if self.v is None:
            self.v = {k: np.zeros_like(t) for k, t in self.params.tensors().items()}


def _check_weights(orders: Sequence[CausalOrder], weights: np.ndarray) -> np.ndarray:
    weights = np.asarray(weights, dtype=float)
    if len(weights) != len(orders):
        raise WeightMismatchError(
            f"{len(orders)} orders but {len(weights)} weights"
        )
    total = weights.sum() if len(weights) else 0.0
    # all-zero weights are the degenerate "prior step only" case
    if len(weights) and abs(total - 1.0) > 1e-6 and abs(total) > 1e-6:
        raise WeightMismatchError(f"weights sum to {total}, expected 1 (or all zero)")
    return weights


def update_gradient(
    state: ArcoTrainState, orders: Sequence[CausalOrder], weights: np.ndarray
) -> dict[str, np.ndarray]:
    """Raw ascent direction: Gaussian prior gradient plus the baselined score term.

    Each sampled order contributes with coefficient (w_m - baseline / M),
    the baseline being the moving average of the batch-mean weight.
    """
    weights = _check_weights(orders, weights)
    params = state.params
    grads = {k: -t / params.prior_std**2 for k, t in params.tensors().items()}
    if len(orders):
        coeff = weights - state.baseline / len(orders)
        data = weighted_grad_log_prob(params, orders, coeff)
        for k in grads:
            grads[k] += data[k]
    return grads


def arco_update(
    state: ArcoTrainState,
    orders: Sequence[CausalOrder],
    weights: np.ndarray,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> ArcoTrainState:
    """One Adam ascent step on the posterior gradient; returns the new state."""
    weights = _check_weights(orders, weights)
    grads = update_gradient(state, orders, weights)
    t = state.step + 1
    new_m, new_v, new_tensors = {}, {}, {}
    tensors = state.params.tensors()
    for k, g in grads.items():
        new_m[k] = beta1 * state.m[k] + (1.0 - beta1) * g
        new_v[k] = beta2 * state.v[k] + (1.0 - beta2) * g * g
        m_hat = new_m[k] / (1.0 - beta1**t)
        v_hat = new_v[k] / (1.0 - beta2**t)
        new_tensors[k] = tensors[k] + state.learning_rate * m_hat / (np.sqrt(v_hat) + eps)
    new_params = replace(
        state.params,
        w1=new_tensors["w1"],
        b1=new_tensors["b1"],
        w2=new_tensors["w2"],
        b2=new_tensors["b2"],
    )
    # the baseline tracks the batch mean of the weights; tracking their sum
    # instead would anneal the data coefficient to zero and collapse
    # multi-modal targets to the uniform distribution
    batch_mean = float(np.mean(weights)) if len(weights) else 0.0
    new_baseline = state.ema_decay * state.baseline + (1.0 - state.ema_decay) * batch_mean
    return ArcoTrainState(
        params=new_params,
        learning_rate=state.learning_rate,
        ema_decay=state.ema_decay,
        baseline=new_baseline,
        step=t,
        m=new_m,
        v=new_v,
    )


def save_checkpoint(params: ArcoParams, path: str | Path) -> None:
    Path(path).write_text(params.to_json())


def load_checkpoint(path: str | Path) -> ArcoParams:
    return ArcoParams.from_json(Path(path).read_text())
