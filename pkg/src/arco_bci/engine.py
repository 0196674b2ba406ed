"""End-to-end learning and posterior query estimation.

The learning phase alternates between sampling order batches from the
autoregressive model, fitting (or retrieving) GP scores for every compatible
parent set, turning order scores into self-normalised importance weights and
taking one score-function ascent step. The inference phase freshly samples
orders from the trained model and answers queries either in closed form
(edge marginals, expected structural Hamming distance) or by nested
order/graph/mechanism sampling (interventional distributions).

Every stage is a pure function of (data, config.seed): checkpoints are
byte-for-byte reproducible and runs can be resumed mid-training.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .arco import (
    ArcoParams,
    ArcoTrainState,
    arco_update,
    init_params,
    sample_orders,
)
from .core import CausalOrder, Dag, Dataset, standardize
from .errors import ConfigError, UnknownVariableError
from .mechanisms import GpPredictor, MechanismCache, NigPosterior, sample_root
from .metrics import WeightedSampleSet
from .order_marginal import (
    ParentSetTable,
    TableBuilder,
    edge_posterior_given_order,
    expectation_summing,
    importance_weights,
    log_order_score,
    logsumexp,
    sample_graph_given_order,
)


@dataclass(frozen=True)
class EngineConfig:
    """Hyperparameters of the learning and inference loops."""

    max_parents: int = 2
    orders_per_step: int = 100
    max_steps: int = 400
    arco_lr: float = 0.01
    gp_steps: int = 100
    gp_lr: float = 0.05
    ema_decay: float = 0.9
    seed: int = 0
    early_stop_tol: float = 1e-4
    early_stop_window: int = 20

    def __post_init__(self):
        for name in ("max_parents", "orders_per_step", "max_steps", "gp_steps"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        for name in ("arco_lr", "gp_lr", "early_stop_tol"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if not (0.0 < self.ema_decay < 1.0):
            raise ConfigError("ema_decay must lie in (0, 1)")


@dataclass
class PosteriorModel:
    """Trained posterior: order-model parameters plus the mechanism score cache."""

    config: EngineConfig
    data: Dataset  # standardised, with the raw-unit transform attached
    train_state: ArcoTrainState
    cache: MechanismCache
    rng_state: dict
    plateau: dict
    training_log: list[dict] = field(default_factory=list)

    @property
    def arco(self) -> ArcoParams:
        return self.train_state.params

    @property
    def d(self) -> int:
        return self.data.d

    # -- serialisation -------------------------------------------------

    def to_json(self) -> str:
        ts = self.train_state
        payload = {
            "config": asdict(self.config),
            "standardization": {
                "mean": self.data.mean.tolist(),
                "std": self.data.std.tolist(),
                "constant_columns": list(self.data.constant_columns),
            },
            "data": self.data.values.ravel().tolist(),
            "n": self.data.n,
            "d": self.data.d,
            "arco": json.loads(ts.params.to_json()),
            "train_state": {
                "baseline": ts.baseline,
                "step": ts.step,
                "learning_rate": ts.learning_rate,
                "ema_decay": ts.ema_decay,
                "m": {k: v.ravel().tolist() for k, v in sorted(ts.m.items())},
                "v": {k: v.ravel().tolist() for k, v in sorted(ts.v.items())},
            },
            "cache": json.loads(self.cache.to_json()),
            "rng_state": self.rng_state,
            "plateau": self.plateau,
            "training_log": self.training_log,
        }
        return json.dumps(payload)

    @staticmethod
    def from_json(text: str) -> "PosteriorModel":
        obj = json.loads(text)
        config = EngineConfig(**obj["config"])
        n, d = obj["n"], obj["d"]
        data = Dataset(
            values=np.array(obj["data"], dtype=float).reshape(n, d),
            mean=np.array(obj["standardization"]["mean"], dtype=float),
            std=np.array(obj["standardization"]["std"], dtype=float),
            constant_columns=tuple(obj["standardization"]["constant_columns"]),
        )
        params = ArcoParams.from_json(json.dumps(obj["arco"]))
        shapes = {k: v.shape for k, v in params.tensors().items()}
        ts = obj["train_state"]
        train_state = ArcoTrainState(
            params=params,
            learning_rate=ts["learning_rate"],
            ema_decay=ts["ema_decay"],
            baseline=ts["baseline"],
            step=ts["step"],
            m={k: np.array(v, dtype=float).reshape(shapes[k]) for k, v in ts["m"].items()},
            v={k: np.array(v, dtype=float).reshape(shapes[k]) for k, v in ts["v"].items()},
        )
        return PosteriorModel(
            config=config,
            data=data,
            train_state=train_state,
            cache=MechanismCache.from_json(json.dumps(obj["cache"])),
            rng_state=obj["rng_state"],
            plateau=obj["plateau"],
            training_log=obj["training_log"],
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @staticmethod
    def load(path: str | Path) -> "PosteriorModel":
        return PosteriorModel.from_json(Path(path).read_text())


def _make_builder(cache: MechanismCache, data: Dataset, config: EngineConfig) -> TableBuilder:
    return TableBuilder(
        cache,
        data,
        config.max_parents,
        gp_steps=config.gp_steps,
        gp_lr=config.gp_lr,
    )


def _score_orders(
    orders: Sequence[CausalOrder], builder: TableBuilder
) -> tuple[list[ParentSetTable], np.ndarray]:
    """Tables and log order scores for a batch, building each unique table once."""
    tables: dict[tuple[int, ...], ParentSetTable] = {}
    for order in orders:
        if order.sequence not in tables:
            tables[order.sequence] = builder.table(order)
    per_order = [tables[o.sequence] for o in orders]
    log_scores = np.array([log_order_score(t) for t in per_order])
    return per_order, log_scores


def _plateaued(history: dict, tol: float, window: int) -> bool:
    max_w, log_ev = history["max_weight"], history["log_evidence"]
    if len(max_w) < window + 1:
        return False
    recent_w = np.abs(np.diff(max_w[-(window + 1):]))
    recent_e = np.abs(np.diff(log_ev[-(window + 1):]))
    return bool(recent_w.max() < tol and recent_e.max() < tol)


def learn(
    data: Dataset,
    config: EngineConfig,
    resume_from: PosteriorModel | None = None,
) -> PosteriorModel:
    """Run the learning phase (or continue one) until the step cap or a plateau.

    Hitting the step cap without a plateau is not an error; the model is
    returned as-is.
    """
    if data.n < 2:
        raise ConfigError("learning needs at least two observations")
    std = standardize(Dataset(values=data.values))
    if resume_from is None:
        rng = np.random.default_rng([config.seed, 0])
        params = init_params(std.d, rng)
        state = ArcoTrainState(
            params=params, learning_rate=config.arco_lr, ema_decay=config.ema_decay
        )
        cache = MechanismCache()
        plateau = {"max_weight": [], "log_evidence": []}
        log: list[dict] = []
    else:
        rng = np.random.default_rng()
        rng.bit_generator.state = resume_from.rng_state
        state = resume_from.train_state
        cache = resume_from.cache
        plateau = resume_from.plateau
        log = resume_from.training_log
        std = resume_from.data

    builder = _make_builder(cache, std, config)
    while state.step < config.max_steps:
        orders = sample_orders(state.params, config.orders_per_step, rng)
        _, log_scores = _score_orders(orders, builder)
        weights = importance_weights(log_scores)
        state = arco_update(state, orders, weights)
        log_evidence = logsumexp(log_scores) - math.log(len(orders))
        plateau["max_weight"].append(float(weights.max()))
        plateau["log_evidence"].append(float(log_evidence))
        keep = config.early_stop_window + 1
        plateau["max_weight"] = plateau["max_weight"][-keep:]
        plateau["log_evidence"] = plateau["log_evidence"][-keep:]
        log.append(
            {
                "step": state.step,
                "log_evidence": float(log_evidence),
                "max_weight": float(weights.max()),
                "baseline": float(state.baseline),
            }
        )
        if _plateaued(plateau, config.early_stop_tol, config.early_stop_window):
            break

    return PosteriorModel(
        config=config,
        data=std,
        train_state=state,
        cache=cache,
        rng_state=rng.bit_generator.state,
        plateau=plateau,
        training_log=log,
    )


# -- inference phase ----------------------------------------------------


def _inference_rng(model: PosteriorModel) -> np.random.Generator:
    return np.random.default_rng([model.config.seed, 1])


def inference_ensemble(
    model: PosteriorModel,
    n_orders: int | None = None,
    rng: np.random.Generator | None = None,
) -> tuple[list[CausalOrder], list[ParentSetTable], np.ndarray]:
    """Freshly sampled orders from the trained model with their weights and tables."""
    rng = rng or _inference_rng(model)
    n = n_orders or model.config.orders_per_step
    if not hasattr(model, "_builder"):
        model._builder = _make_builder(model.cache, model.data, model.config)
    orders = sample_orders(model.arco, n, rng)
    tables, log_scores = _score_orders(orders, model._builder)
    return orders, tables, importance_weights(log_scores)


def posterior_edge_marginals(model: PosteriorModel) -> np.ndarray:
    """Weighted average of per-order closed-form edge posteriors; diagonal is zero."""
    _, tables, weights = inference_ensemble(model)
    out = np.zeros((model.d, model.d))
    for table, w in zip(tables, weights):
        out += w * edge_posterior_given_order(table)
    return np.clip(out, 0.0, 1.0)


def shd_summands(reference: Dag):
    """Per-node symmetric-difference counts against a reference graph.

    A reversed edge contributes one unit at each endpoint node, so the total
    decomposes exactly over parent sets.
    """
    ref = {ps.node: set(ps.parents) for ps in reference.parent_sets}

    def summand(node: int, parents: tuple[int, ...]) -> float:
        return float(len(set(parents) ^ ref[node]))

    return summand


def expected_shd(model: PosteriorModel, reference: Dag) -> float:
    """Posterior-expected structural Hamming distance to the reference graph."""
    if reference.d != model.d:
        raise UnknownVariableError(
            f"reference has {reference.d} nodes, model has {model.d}"
        )
    _, tables, weights = inference_ensemble(model)
    summand = shd_summands(reference)
    return float(
        sum(w * expectation_summing(t, summand) for t, w in zip(tables, weights))
    )


def _resolve_variable(model: PosteriorModel, variable: int | str) -> int:
    if isinstance(variable, str):
        name = variable.strip()
        if not name.startswith("X"):
            raise UnknownVariableError(f"unknown variable {variable!r}")
        try:
            variable = int(name[1:])
        except ValueError as exc:
            raise UnknownVariableError(f"unknown variable {name!r}") from exc
    if not (0 <= variable < model.d):
        raise UnknownVariableError(f"variable {variable} not in 0..{model.d - 1}")
    return int(variable)


def sample_interventional(
    model: PosteriorModel,
    intervention: dict[int | str, float],
    n_orders: int = 100,
    n_graphs: int = 10,
    n_samples: int = 10,
    rng: np.random.Generator | None = None,
) -> WeightedSampleSet:
    """Nested order/graph/mechanism sampling under a hard intervention.

    Intervention values are given in raw data units and mapped to the
    standardised scale internally; the returned samples are mapped back.
    Each sample carries weight w_order / (n_graphs * n_samples).
    """
    rng = rng or _inference_rng(model)
    raw_values: dict[int, float] = {}
    clamped = {}
    for var, value in intervention.items():
        idx = _resolve_variable(model, var)
        if idx in clamped:
            raise UnknownVariableError(f"variable X{idx} intervened twice")
        raw_values[idx] = float(value)
        clamped[idx] = model.data.to_standardized_units(idx, float(value))

    orders, tables, weights = inference_ensemble(model, n_orders=n_orders, rng=rng)
    predictors: dict[tuple[int, tuple[int, ...]], GpPredictor | NigPosterior] = {}

    def predictor_for(node: int, parents: tuple[int, ...]):
        key = (node, parents)
        if key not in predictors:
            score = model.cache.get(node, parents)
            if score.kind == "root":
                predictors[key] = score.hyper
            else:
                predictors[key] = GpPredictor.build(score, model.data)
        return predictors[key]

    total = len(orders) * n_graphs * n_samples
    samples = np.zeros((total, model.d))
    sample_weights = np.zeros(total)
    row = 0
    for order, table, w in zip(orders, tables, weights):
        for _ in range(n_graphs):
            graph = sample_graph_given_order(table, rng)
            block = np.zeros((n_samples, model.d))
            for node in order.sequence:
                if node in clamped:
                    block[:, node] = clamped[node]
                    continue
                parents = graph.parent_sets[node].parents
                pred = predictor_for(node, parents)
                if isinstance(pred, NigPosterior):
                    block[:, node] = sample_root(pred, n_samples, rng)
                else:
                    block[:, node] = pred.sample(block[:, list(parents)], rng)
            samples[row : row + n_samples] = block
            sample_weights[row : row + n_samples] = w / (n_graphs * n_samples)
            row += n_samples
    raw = model.data.to_raw_units(samples)
    for idx, value in raw_values.items():
        raw[:, idx] = value  # exact clamping, no standardisation round-trip error
    return WeightedSampleSet(samples=raw, weights=sample_weights)


def ace(
    model: PosteriorModel,
    intervention: dict[int | str, float],
    target: int | str,
    n_orders: int = 100,
    n_graphs: int = 10,
    n_samples: int = 10,
    rng: np.random.Generator | None = None,
) -> float:
    """Posterior mean of the target variable under the intervention (raw units)."""
    target_idx = _resolve_variable(model, target)
    for var, value in intervention.items():
        if _resolve_variable(model, var) == target_idx:
            return float(value)  # clamped exactly, no estimation error
    draw = sample_interventional(
        model, intervention, n_orders=n_orders, n_graphs=n_graphs, n_samples=n_samples, rng=rng
    )
    return float(draw.weights @ draw.samples[:, target_idx])
