"""Ground-truth SCM generation and simulation.

Random graphs come from an order-consistent Erdos-Renyi model or sequential
preferential attachment (scale-free). Mechanisms are either draws from the
rational-quadratic GP prior, frozen as the noiseless posterior-mean
interpolant through 50 support points, or additive sigmoids; roots carry a
mean/variance pair drawn once from a normal-inverse-gamma prior. Everything
is serialisable so a ground truth can be replayed exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import Dag, Dataset, dag_from_edges
from .errors import IndexOutOfRangeError, UnknownVariableError
from .mechanisms import RqHyper, rq_gram, sq_distances

# generation-side prior constants
GT_ROOT = {"mu0": 0.0, "kappa0": 1.0, "alpha0": 5.0, "beta0": 10.0}
GT_GP_GAMMAS = {"delta": (100.0, 10.0), "mixing": (20.0, 10.0), "noise": (50.0, 50.0)}
GT_LENGTHSCALE = (30.0, 30.0)  # shape scales with parent count
GT_SIGMOID_WEIGHT = (50.0, 10.0)
GT_SIGMOID_NOISE = (50.0, 50.0)
N_SUPPORT = 50
SUPPORT_RANGE = 10.0


@dataclass(frozen=True)
class RootMechanism:
    mean: float
    noise_var: float


@dataclass(frozen=True)
class GpMechanism:
    """Noiseless GP posterior-mean interpolant through frozen support points."""

    hyper: RqHyper
    support: np.ndarray  # (n_support, p)
    values: np.ndarray  # (n_support,)
    weights: np.ndarray  # interpolation coefficients
    noise_var: float

    def __call__(self, parents: np.ndarray) -> np.ndarray:
        k = rq_gram(sq_distances(np.atleast_2d(parents), self.support), self.hyper)
        return k @ self.weights


@dataclass(frozen=True)
class SigmoidMechanism:
    """Additive saturating mechanism: sum_j w_j * s_j(x_j + shift_j)/(1 + |s_j(x_j + shift_j)|)."""

    weights: np.ndarray
    slopes: np.ndarray
    shifts: np.ndarray
    noise_var: float

    def __call__(self, parents: np.ndarray) -> np.ndarray:
        z = self.slopes * (np.atleast_2d(parents) + self.shifts)
        return (self.weights * z / (1.0 + np.abs(z))).sum(axis=1)


Mechanism = RootMechanism | GpMechanism | SigmoidMechanism


@dataclass(frozen=True)
class GroundTruthScm:
    graph: Dag
    mechanisms: tuple[Mechanism, ...]

    @property
    def d(self) -> int:
        return self.graph.d

    def to_json(self) -> str:
        mechs = []
        for mech in self.mechanisms:
            if isinstance(mech, RootMechanism):
                mechs.append({"kind": "root", "mean": mech.mean, "noise_var": mech.noise_var})
            elif isinstance(mech, GpMechanism):
                mechs.append(
                    {
                        "kind": "gp",
                        "hyper": {
                            "delta": mech.hyper.delta,
                            "lengthscale": mech.hyper.lengthscale,
                            "mixing": mech.hyper.mixing,
                            "noise_var": mech.hyper.noise_var,
                        },
                        "support": mech.support.ravel().tolist(),
                        "p": mech.support.shape[1],
                        "values": mech.values.tolist(),
                        "noise_var": mech.noise_var,
                    }
                )
            else:
                mechs.append(
                    {
                        "kind": "sigmoid",
                        "weights": mech.weights.tolist(),
                        "slopes": mech.slopes.tolist(),
                        "shifts": mech.shifts.tolist(),
                        "noise_var": mech.noise_var,
                    }
                )
        return json.dumps({"graph": json.loads(self.graph.to_json()), "mechanisms": mechs})

    @staticmethod
    def from_json(text: str) -> "GroundTruthScm":
        obj = json.loads(text)
        graph = dag_from_edges(obj["graph"]["d"], [tuple(e) for e in obj["graph"]["edges"]])
        mechs: list[Mechanism] = []
        for m in obj["mechanisms"]:
            if m["kind"] == "root":
                mechs.append(RootMechanism(mean=m["mean"], noise_var=m["noise_var"]))
            elif m["kind"] == "gp":
                support = np.array(m["support"], dtype=float).reshape(-1, m["p"])
                values = np.array(m["values"], dtype=float)
                mechs.append(
                    _gp_mechanism(RqHyper(**m["hyper"]), support, values, m["noise_var"])
                )
            else:
                mechs.append(
                    SigmoidMechanism(
                        weights=np.array(m["weights"], dtype=float),
                        slopes=np.array(m["slopes"], dtype=float),
                        shifts=np.array(m["shifts"], dtype=float),
                        noise_var=m["noise_var"],
                    )
                )
        return GroundTruthScm(graph=graph, mechanisms=tuple(mechs))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @staticmethod
    def load(path: str | Path) -> "GroundTruthScm":
        return GroundTruthScm.from_json(Path(path).read_text())


def sample_er_graph(d: int, expected_degree: float, rng: np.random.Generator) -> Dag:
    """Orient a uniformly random order, then keep each forward edge with p = degree/(d-1)."""
    if d < 2 or not (0.0 < expected_degree < d - 1):
        raise IndexOutOfRangeError("need d >= 2 and 0 < expected_degree < d-1")
    order = rng.permutation(d)
    p = expected_degree / (d - 1)
    edges = []
    for a in range(d):
        for b in range(a + 1, d):
            if rng.random() < p:
                edges.append((int(order[a]), int(order[b])))
    return dag_from_edges(d, edges)


def sample_sf_graph(d: int, m: int, rng: np.random.Generator) -> Dag:
    """Preferential attachment: each new node picks min(existing, m) parents
    without replacement with probability proportional to out-degree + 1."""
    if not (d > m >= 1):
        raise IndexOutOfRangeError("need d > m >= 1")
    labels = rng.permutation(d)
    out_degree = np.zeros(d)
    edges = []
    for k in range(1, d):
        weights = out_degree[:k] + 1.0
        chosen: list[int] = []
        for _ in range(min(k, m)):
            w = weights.copy()
            w[chosen] = 0.0
            w /= w.sum()
            pick = int(rng.choice(k, p=w))
            chosen.append(pick)
        for pick in chosen:
            out_degree[pick] += 1.0
            edges.append((int(labels[pick]), int(labels[k])))
    return dag_from_edges(d, edges)


_EIG_CUT = 1e-12


def _gram_eig(hyper: RqHyper, support: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenpairs of the support Gram matrix above the conditioning cut."""
    gram = rq_gram(sq_distances(support, support), hyper)
    eigvals, eigvecs = np.linalg.eigh(gram)
    keep = eigvals > _EIG_CUT * eigvals.max()
    return eigvals[keep], eigvecs[:, keep]


def _gp_mechanism(
    hyper: RqHyper, support: np.ndarray, values: np.ndarray, noise_var: float
) -> GpMechanism:
    # smooth kernels make the Gram matrix numerically rank deficient; the
    # pseudo-inverse interpolant reproduces any draw from the retained
    # eigenspace exactly at the support points
    eigvals, eigvecs = _gram_eig(hyper, support)
    weights = eigvecs @ ((eigvecs.T @ values) / eigvals)
    return GpMechanism(
        hyper=hyper, support=support, values=values, weights=weights, noise_var=noise_var
    )


def _sample_gamma(shape_rate: tuple[float, float], rng: np.random.Generator) -> float:
    shape, rate = shape_rate
    return float(rng.gamma(shape, 1.0 / rate))


def sample_gt_mechanisms(graph: Dag, kind: str, rng: np.random.Generator) -> GroundTruthScm:
    """Draw and freeze one mechanism per node from the generation-side priors."""
    if kind not in ("gp", "sigmoid"):
        raise UnknownVariableError(f"unknown mechanism kind {kind!r}")
    mechanisms: list[Mechanism] = []
    for node in range(graph.d):
        parents = graph.parent_sets[node].parents
        if not parents:
            sigma2 = 1.0 / rng.gamma(GT_ROOT["alpha0"], 1.0 / GT_ROOT["beta0"])
            mean = GT_ROOT["mu0"] + math.sqrt(sigma2 / GT_ROOT["kappa0"]) * rng.standard_normal()
            mechanisms.append(RootMechanism(mean=float(mean), noise_var=float(sigma2)))
            continue
        p = len(parents)
        if kind == "gp":
            noise_var = _sample_gamma(GT_GP_GAMMAS["noise"], rng)
            hyper = RqHyper(
                delta=_sample_gamma(GT_GP_GAMMAS["delta"], rng),
                lengthscale=_sample_gamma((GT_LENGTHSCALE[0] * p, GT_LENGTHSCALE[1]), rng),
                mixing=_sample_gamma(GT_GP_GAMMAS["mixing"], rng),
                noise_var=noise_var,
            )
            support = rng.uniform(-SUPPORT_RANGE, SUPPORT_RANGE, size=(N_SUPPORT, p))
            draw = rng.standard_normal(N_SUPPORT)
            eigvals, eigvecs = _gram_eig(hyper, support)
            values = eigvecs @ (np.sqrt(eigvals) * draw[: len(eigvals)])
            mechanisms.append(_gp_mechanism(hyper, support, values, noise_var))
        else:
            signs = rng.choice([-1.0, 1.0], size=p)
            mechanisms.append(
                SigmoidMechanism(
                    weights=rng.gamma(GT_SIGMOID_WEIGHT[0], 1.0 / GT_SIGMOID_WEIGHT[1], size=p),
                    slopes=signs * rng.uniform(0.5, 2.0, size=p),
                    shifts=rng.uniform(-2.0, 2.0, size=p),
                    noise_var=_sample_gamma(GT_SIGMOID_NOISE, rng),
                )
            )
    return GroundTruthScm(graph=graph, mechanisms=tuple(mechanisms))


def ancestral_sample(
    scm: GroundTruthScm,
    n: int,
    rng: np.random.Generator,
    intervention: dict[int, float] | None = None,
) -> Dataset:
    """Sample n rows in topological order; intervened nodes are clamped constants."""
    intervention = intervention or {}
    for v in intervention:
        if not (0 <= v < scm.d):
            raise UnknownVariableError(f"variable {v} not in 0..{scm.d - 1}")
    values = np.zeros((n, scm.d))
    for node in scm.graph.topological_order():
        if node in intervention:
            values[:, node] = intervention[node]
            continue
        mech = scm.mechanisms[node]
        if isinstance(mech, RootMechanism):
            f = np.full(n, mech.mean)
        else:
            f = mech(values[:, list(scm.graph.parent_sets[node].parents)])
        values[:, node] = f + math.sqrt(mech.noise_var) * rng.standard_normal(n)
    return Dataset(values=values)
