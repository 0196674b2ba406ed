"""Command line surface: simulate ground truths, train models, answer queries
and run benchmark grids.

Configs are flat `key = value` text files with `#` comments; unknown keys are
rejected with a line diagnostic. Every command is a pure function of
(config, input files, seed), so re-running reproduces identical outputs.
Exit codes: 0 success, 2 config error, 1 runtime error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import engine, metrics, simgen
from .core import Dag, load_csv, save_csv, standardize
from .errors import ArcoBciError, ConfigError, UnknownQueryError

_BOOL = {"true": True, "false": False, "yes": True, "no": False, "1": True, "0": False}

_KEY_TYPES = {
    "graph": str,            # er | sf
    "d": int,
    "degree": float,         # er expected degree
    "m": int,                # sf attachment count
    "mechanism": str,        # gp | sigmoid
    "n": int,                # observations per dataset
    "k": int,                # parent set cap
    "seeds": "int_list",
    "seed": int,
    "orders_per_step": int,
    "max_steps": int,
    "arco_lr": float,
    "gp_steps": int,
    "gp_lr": float,
    "ema_decay": float,
    "dataset": str,          # train: input CSV
    "checkpoint": str,       # query: trained model; train: optional resume source
    "query": str,            # query command spec
    "reference": str,        # eshd reference graph JSON
    "eval_interventions": "bool",
    "interventions_per_node": int,
    "intervention_draws": int,
    "kde_bandwidth": float,
}

_ENGINE_KEYS = ("orders_per_step", "max_steps", "arco_lr", "gp_steps", "gp_lr", "ema_decay")


@dataclass
class RunConfig:
    """Typed view of a parsed config file."""

    entries: dict = field(default_factory=dict)

    def get(self, key, default=None):
        return self.entries.get(key, default)

    def require(self, key):
        if key not in self.entries:
            raise ConfigError(f"missing required config key '{key}'")
        return self.entries[key]

    def engine_config(self, seed: int, k: int | None = None) -> engine.EngineConfig:
        overrides = {k2: self.entries[k2] for k2 in _ENGINE_KEYS if k2 in self.entries}
        return engine.EngineConfig(
            max_parents=k if k is not None else self.get("k", 2),
            seed=seed,
            **overrides,
        )


def parse_config(path: str | Path) -> RunConfig:
    entries: dict = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _KEY_TYPES:
            raise ConfigError(f"{path}:{lineno}: unknown key '{key}'")
        kind = _KEY_TYPES[key]
        try:
            if kind == "int_list":
                entries[key] = [int(v) for v in value.split(",") if v.strip()]
            elif kind == "bool":
                entries[key] = _BOOL[value.lower()]
            else:
                entries[key] = kind(value)
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for '{key}': {value!r}") from exc
    return RunConfig(entries=entries)


def _seeds(config: RunConfig, override: int | None) -> list[int]:
    if override is not None:
        return [override]
    seeds = config.get("seeds")
    if seeds is None:
        single = config.get("seed")
        seeds = [single] if single is not None else None
    if not seeds:
        raise ConfigError("config needs a nonempty 'seeds' list (or a 'seed')")
    return list(seeds)


def _simulate_one(config: RunConfig, seed: int) -> tuple[simgen.GroundTruthScm, Dataset]:
    rng = np.random.default_rng([seed, 100])
    kind = config.require("graph")
    d = config.require("d")
    if kind == "er":
        graph = simgen.sample_er_graph(d, config.get("degree", 2.0), rng)
    elif kind == "sf":
        graph = simgen.sample_sf_graph(d, config.get("m", 2), rng)
    else:
        raise ConfigError(f"graph must be 'er' or 'sf', got {kind!r}")
    scm = simgen.sample_gt_mechanisms(graph, config.get("mechanism", "gp"), rng)
    data = simgen.ancestral_sample(scm, config.require("n"), rng)
    return scm, data


def cmd_simulate(config: RunConfig, out: Path, seed_override: int | None) -> int:
    out.mkdir(parents=True, exist_ok=True)
    for seed in _seeds(config, seed_override):
        scm, data = _simulate_one(config, seed)
        scm.save(out / f"gt_seed{seed}.json")
        save_csv(data, out / f"data_raw_seed{seed}.csv")
        save_csv(standardize(data), out / f"data_std_seed{seed}.csv")
    return 0


def _write_training_log(model: engine.PosteriorModel, path: Path) -> None:
    lines = ["step,log_evidence,max_weight,baseline"]
    for row in model.training_log:
        lines.append(
            f"{row['step']},{row['log_evidence']!r},{row['max_weight']!r},{row['baseline']!r}"
        )
    path.write_text("\n".join(lines) + "\n")


def cmd_train(config: RunConfig, out: Path, seed_override: int | None) -> int:
    out.mkdir(parents=True, exist_ok=True)
    data = load_csv(config.require("dataset"))
    seed = _seeds(config, seed_override)[0]
    resume = None
    if config.get("checkpoint"):
        resume = engine.PosteriorModel.load(config.get("checkpoint"))
    model = engine.learn(data, config.engine_config(seed), resume_from=resume)
    model.save(out / "checkpoint.json")
    _write_training_log(model, out / "training_log.csv")
    return 0


_QUERY_RE = re.compile(r"^(?P<name>[a-z]+)(\((?P<args>.*)\))?$")


def _parse_query(spec: str) -> tuple[str, dict]:
    match = _QUERY_RE.match(spec.strip())
    if not match:
        raise UnknownQueryError(f"cannot parse query {spec!r}")
    name = match.group("name")
    args = match.group("args") or ""
    if name == "edges":
        return name, {}
    if name == "eshd":
        if not args:
            raise UnknownQueryError("eshd needs a reference graph path")
        return name, {"reference": args.strip()}
    if name in ("intervene", "ace"):
        parsed: dict = {"intervention": {}, "target": None}
        for part in filter(None, (p.strip() for p in args.split(","))):
            key, _, value = part.partition("=")
            key, value = key.strip(), value.strip()
            if key == "target":
                parsed["target"] = value
            else:
                parsed["intervention"][key] = float(value)
        if not parsed["intervention"]:
            raise UnknownQueryError(f"{name} needs at least one variable=value pair")
        if name == "ace" and parsed["target"] is None:
            raise UnknownQueryError("ace needs a target=X<i> entry")
        return name, parsed
    raise UnknownQueryError(f"unknown query {name!r}")


def _write_matrix_csv(matrix: np.ndarray, path: Path) -> None:
    d = matrix.shape[1]
    lines = [",".join(f"X{j}" for j in range(d))]
    for row in matrix:
        lines.append(",".join(repr(float(x)) for x in row))
    path.write_text("\n".join(lines) + "\n")


def cmd_query(config: RunConfig, out: Path, seed_override: int | None) -> int:
    out.mkdir(parents=True, exist_ok=True)
    model = engine.PosteriorModel.load(config.require("checkpoint"))
    name, args = _parse_query(config.require("query"))
    if name == "edges":
        _write_matrix_csv(engine.posterior_edge_marginals(model), out / "edge_marginals.csv")
        return 0
    if name == "eshd":
        reference = Dag.from_json(Path(args["reference"]).read_text())
        value = engine.expected_shd(model, reference)
        (out / "eshd.json").write_text(json.dumps({"eshd": value}))
        return 0
    rng = np.random.default_rng([_seeds(config, seed_override)[0], 2])
    if name == "ace":
        value = engine.ace(model, args["intervention"], args["target"], rng=rng)
        (out / "ace.json").write_text(
            json.dumps({"intervention": args["intervention"], "target": args["target"], "ace": value})
        )
        return 0
    draw = engine.sample_interventional(model, args["intervention"], rng=rng)
    rows = ["weight," + ",".join(f"X{j}" for j in range(model.d))]
    for w, x in zip(draw.weights, draw.samples):
        rows.append(repr(float(w)) + "," + ",".join(repr(float(v)) for v in x))
    (out / "interventional_samples.csv").write_text("\n".join(rows) + "\n")

    bandwidth = config.get("kde_bandwidth", 0.2)
    lo = draw.samples.min() - 4 * bandwidth
    hi = draw.samples.max() + 4 * bandwidth
    grid = np.linspace(lo, hi, 512)
    targets = (
        [args["target"]] if args["target"] is not None else [f"X{j}" for j in range(model.d)]
    )
    header = ["grid"] + [f"density_{t}" for t in targets]
    columns = [grid]
    for t in targets:
        j = int(t.lstrip("X"))
        weighted = metrics.WeightedSampleSet(draw.samples[:, [j]], draw.weights)
        columns.append(metrics.kde(weighted, bandwidth, grid))
    lines = [",".join(header)]
    for i in range(len(grid)):
        lines.append(",".join(repr(float(c[i])) for c in columns))
    (out / "kde.csv").write_text("\n".join(lines) + "\n")
    return 0


def _benchmark_seed(config: RunConfig, seed: int) -> dict:
    """Simulate, train and evaluate one seed; pure function of (config, seed)."""
    scm, raw = _simulate_one(config, seed)
    cfg = config.engine_config(seed)
    model = engine.learn(raw, cfg)
    marginals = engine.posterior_edge_marginals(model)
    bundle = metrics.structure_metrics(marginals, scm.graph)
    row = {
        "seed": seed,
        "eshd": engine.expected_shd(model, scm.graph),
        "auroc": bundle.auroc,
        "auprc": bundle.auprc,
        "tpr": bundle.tpr,
        "tnr": bundle.tnr,
        "edges": bundle.expected_edges,
    }
    if config.get("eval_interventions", False):
        per_node = config.get("interventions_per_node", 5)
        gt_draws = config.get("intervention_draws", 1000)
        rng = np.random.default_rng([seed, 3])
        mmds, l1s, l2s = [], [], []
        std = model.data
        for node in range(model.d):
            for t in rng.uniform(-1.0, 1.0, size=per_node):
                inferred = engine.sample_interventional(
                    model, {node: float(t)}, rng=np.random.default_rng([seed, 4, node])
                )
                truth = simgen.ancestral_sample(
                    scm, gt_draws, np.random.default_rng([seed, 5, node]), {node: float(t)}
                )
                # compare on the standardised scale of the training data
                left = metrics.WeightedSampleSet(
                    (inferred.samples - std.mean) / std.std, inferred.weights
                )
                right = (truth.values - std.mean) / std.std
                mmds.append(metrics.mmd(left, right))
                l1s.append(metrics.mean_distance(left, right, 1))
                l2s.append(metrics.mean_distance(left, right, 2))
        row.update(
            {"mmd": float(np.mean(mmds)), "l1": float(np.mean(l1s)), "l2": float(np.mean(l2s))}
        )
    return row


def _aggregate(rows: list[dict]) -> list[str]:
    keys = [k for k in rows[0] if k != "seed"]
    lines = ["metric,mean,ci95"]
    for key in keys:
        values = np.array([r[key] for r in rows if r[key] is not None], dtype=float)
        mean = values.mean()
        ci = 1.96 * values.std(ddof=1) / math.sqrt(len(values)) if len(values) > 1 else 0.0
        lines.append(f"{key},{mean!r},{ci!r}")
    return lines


def cmd_benchmark(config: RunConfig, out: Path, seed_override: int | None, threads: int) -> int:
    out.mkdir(parents=True, exist_ok=True)
    seeds = _seeds(config, seed_override)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(lambda s: _benchmark_seed(config, s), seeds))
    else:
        rows = [_benchmark_seed(config, s) for s in seeds]
    rows.sort(key=lambda r: r["seed"])
    keys = list(rows[0].keys())
    lines = [",".join(keys)]
    for row in rows:
        lines.append(",".join("" if row[k] is None else repr(row[k]) for k in keys))
    (out / "benchmark_per_seed.csv").write_text("\n".join(lines) + "\n")
    (out / "benchmark_summary.csv").write_text("\n".join(_aggregate(rows)) + "\n")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="arco-bci")
    parser.add_argument("command", choices=["simulate", "train", "query", "benchmark"])
    parser.add_argument("--config", required=True)
    parser.add_argument("--out", default="out")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--threads", type=int, default=None)
    args = parser.parse_args(argv)

    threads = args.threads
    if os.environ.get("ARCO_BCI_THREADS"):
        threads = int(os.environ["ARCO_BCI_THREADS"])
    if threads is None:
        threads = 1

    try:
        config = parse_config(args.config)
        out = Path(args.out)
        if args.command == "simulate":
            return cmd_simulate(config, out, args.seed)
        if args.command == "train":
            return cmd_train(config, out, args.seed)
        if args.command == "query":
            return cmd_query(config, out, args.seed)
        return cmd_benchmark(config, out, args.seed, threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ArcoBciError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
