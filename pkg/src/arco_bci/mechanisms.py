"""Mechanism scoring and sampling.

Non-root nodes are modelled by a zero-mean GP with a rational-quadratic
kernel and homoscedastic Gaussian noise; the log marginal likelihood is
available in closed form. Hyperparameters get a MAP type-II fit (log marginal
plus Gamma hyperpriors) by adaptive gradient ascent in log-space. Root nodes
use a conjugate normal-inverse-gamma model whose marginal and posterior
predictive are analytic. Scores are cached per (node, sorted parent set).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.linalg.lapack import dpotri
from scipy.special import gammaln

from .core import Dataset
from .errors import FactorizationError, NonFiniteObjectiveError

GP_FIT_STEPS = 100
GP_FIT_LR = 0.05
_RMS_DECAY = 0.99
_RMS_EPS = 1e-8
_GRAD_TOL = 1e-3


@dataclass(frozen=True)
class RqHyper:
    """Rational-quadratic kernel parameters plus the Gaussian noise variance."""

    delta: float
    lengthscale: float
    mixing: float
    noise_var: float

    def __post_init__(self):
        for name in ("delta", "lengthscale", "mixing", "noise_var"):
            if getattr(self, name) <= 0.0:
                raise NonFiniteObjectiveError(f"{name} must be strictly positive")

    def log_array(self) -> np.ndarray:
        return np.log([self.delta, self.lengthscale, self.mixing, self.noise_var])

    @staticmethod
    def from_log_array(values: np.ndarray) -> "RqHyper":
        d, l, g, s = np.exp(values)
        return RqHyper(delta=float(d), lengthscale=float(l), mixing=float(g), noise_var=float(s))


@dataclass(frozen=True)
class HyperPrior:
    """Gamma (shape, rate) hyperpriors on delta, lengthscale, mixing and noise."""

    alpha_delta: float = 100.0
    beta_delta: float = 10.0
    alpha_lengthscale: float = 30.0
    beta_lengthscale: float = 30.0
    alpha_mixing: float = 20.0
    beta_mixing: float = 10.0
    alpha_noise: float = 2.0
    beta_noise: float = 8.0

    def pairs(self) -> list[tuple[float, float]]:
        return [
            (self.alpha_delta, self.beta_delta),
            (self.alpha_lengthscale, self.beta_lengthscale),
            (self.alpha_mixing, self.beta_mixing),
            (self.alpha_noise, self.beta_noise),
        ]

    def mean_init(self) -> RqHyper:
        means = [a / b for a, b in self.pairs()]
        return RqHyper(*means)

    def log_pdf(self, hyper: RqHyper) -> float:
        vals = [hyper.delta, hyper.lengthscale, hyper.mixing, hyper.noise_var]
        out = 0.0
        for (a, b), x in zip(self.pairs(), vals):
            out += a * math.log(b) - gammaln(a) + (a - 1.0) * math.log(x) - b * x
        return float(out)


def default_hyper_prior(n_parents: int) -> HyperPrior:
    """Inference-time prior; the lengthscale shape scales with the parent count."""
    return HyperPrior(alpha_lengthscale=30.0 * max(1, n_parents))


@dataclass(frozen=True)
class NigPrior:
    mu0: float = 0.0
    kappa0: float = 1.0
    alpha0: float = 10.0
    beta0: float = 10.0


@dataclass(frozen=True)
class NigPosterior:
    mu: float
    kappa: float
    alpha: float
    beta: float

    def predictive(self) -> tuple[float, float, float]:
        """(degrees of freedom, location, scale) of the Student-t posterior predictive."""
        df = 2.0 * self.alpha
        scale = math.sqrt(self.beta * (self.kappa + 1.0) / (self.alpha * self.kappa))
        return df, self.mu, scale


def sq_distances(x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
    x1 = np.atleast_2d(np.asarray(x1, dtype=float))
    x2 = np.atleast_2d(np.asarray(x2, dtype=float))
    return ((x1[:, None, :] - x2[None, :, :]) ** 2).sum(axis=-1)


def rq_kernel(x1: np.ndarray, x2: np.ndarray, hyper: RqHyper) -> float:
    """delta * (1 + r^2 / (2 * gamma * lambda^2))^(-gamma) for a single pair."""
    r2 = float(np.sum((np.asarray(x1, dtype=float) - np.asarray(x2, dtype=float)) ** 2))
    base = 1.0 + r2 / (2.0 * hyper.mixing * hyper.lengthscale**2)
    return float(hyper.delta * base ** (-hyper.mixing))


def rq_gram(sqdist: np.ndarray, hyper: RqHyper) -> np.ndarray:
    base = 1.0 + sqdist / (2.0 * hyper.mixing * hyper.lengthscale**2)
    return hyper.delta * base ** (-hyper.mixing)


def chol_with_jitter(matrix: np.ndarray) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor, escalating relative jitter 1e-8..1e-4 on failure."""
    mean_diag = float(np.mean(np.diag(matrix)))
    for level in (0.0, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4):
        jitter = level * mean_diag
        try:
            k = matrix if jitter == 0.0 else matrix + jitter * np.eye(matrix.shape[0])
            return np.linalg.cholesky(k), jitter
        except np.linalg.LinAlgError:
            continue
    raise FactorizationError("covariance not positive definite after jitter escalation")


def _mvn_logpdf_chol(y: np.ndarray, lower: np.ndarray) -> float:
    alpha = solve_triangular(lower, y, lower=True)
    return float(
        -0.5 * alpha @ alpha
        - np.log(np.diag(lower)).sum()
        - 0.5 * len(y) * math.log(2.0 * math.pi)
    )


def gp_log_marginal(targets: np.ndarray, parent_values: np.ndarray, hyper: RqHyper) -> float:
    """Log density of targets under the zero-mean GP prior plus noise."""
    y = np.asarray(targets, dtype=float)
    k = rq_gram(sq_distances(parent_values, parent_values), hyper)
    k[np.diag_indices_from(k)] += hyper.noise_var
    lower, _ = chol_with_jitter(k)
    return _mvn_logpdf_chol(y, lower)


def rq_objective(
    targets: np.ndarray,
    parent_values: np.ndarray,
    log_hyper: np.ndarray,
    prior: HyperPrior,
    sqdist: np.ndarray | None = None,
) -> tuple[float, np.ndarray]:
    """MAP type-II objective (log marginal + log hyperprior) and its gradient.

    The gradient is taken with respect to the log-parameters
    (log delta, log lengthscale, log mixing, log noise variance).
    """
    hyper = RqHyper.from_log_array(log_hyper)
    y = np.asarray(targets, dtype=float)
    if sqdist is None:
        sqdist = sq_distances(parent_values, parent_values)
    n = len(y)
    # z = r^2 / (2 gamma lambda^2); kernel = delta * exp(-gamma * log(1 + z))
    z = sqdist / (2.0 * hyper.mixing * hyper.lengthscale**2)
    log_u = np.log1p(z)
    kf = hyper.delta * np.exp(-hyper.mixing * log_u)
    k = kf.copy()
    k[np.diag_indices_from(k)] += hyper.noise_var
    lower, _ = chol_with_jitter(k)
    alpha = cho_solve((lower, True), y)
    log_ml = float(
        -0.5 * y @ alpha - np.log(np.diag(lower)).sum() - 0.5 * n * math.log(2.0 * math.pi)
    )
    # lower-triangular half of K^-1 (upper stays zero from the factor)
    kinv_low, info = dpotri(lower, lower=1)
    if info != 0:
        raise FactorizationError(f"dpotri failed with info={info}")
    kinv_diag = np.diag(kinv_low).copy()

    def half_terms(dk: np.ndarray) -> float:
        # 0.5 * (alpha' dK alpha - tr(K^-1 dK)) for symmetric dK
        quad = alpha @ (dk @ alpha)
        trace = 2.0 * (kinv_low * dk).sum() - kinv_diag @ np.diag(dk)
        return 0.5 * (quad - trace)

    grad = np.empty(4)
    ku = kf / (1.0 + z)
    grad[0] = half_terms(kf)
    grad[1] = half_terms(2.0 * hyper.mixing * ku * z)
    grad[2] = half_terms(hyper.mixing * (ku * z - kf * log_u))
    grad[3] = 0.5 * hyper.noise_var * float(alpha @ alpha - kinv_diag.sum())

    vals = np.exp(log_hyper)
    for i, (a, b) in enumerate(prior.pairs()):
        grad[i] += (a - 1.0) - b * vals[i]
    obj = log_ml + prior.log_pdf(hyper)
    if not np.isfinite(obj):
        raise NonFiniteObjectiveError(f"objective is {obj}")
    return obj, grad


def fit_hyperparameters(
    node: int,
    parents: tuple[int, ...],
    data: Dataset,
    prior: HyperPrior | None = None,
    max_steps: int = GP_FIT_STEPS,
    learning_rate: float = GP_FIT_LR,
) -> RqHyper:
    """RMSprop ascent on the MAP type-II objective, started at the prior mean.

    Runs at most `max_steps` steps and returns the best iterate seen, so the
    result never scores below the initialisation.
    """
    if not parents:
        raise NonFiniteObjectiveError("GP route needs a nonempty parent set")
    if prior is None:
        prior = default_hyper_prior(len(parents))
    y = data.values[:, node]
    x = data.values[:, list(parents)]
    sqdist = sq_distances(x, x)
    theta = prior.mean_init().log_array()
    best_obj, grad = rq_objective(y, x, theta, prior, sqdist=sqdist)
    best_theta = theta.copy()
    accum = np.zeros(4)
    for _ in range(max_steps):
        if np.max(np.abs(grad)) < _GRAD_TOL:
            break
        accum = _RMS_DECAY * accum + (1.0 - _RMS_DECAY) * grad * grad
        theta = theta + learning_rate * grad / (np.sqrt(accum) + _RMS_EPS)
        obj, grad = rq_objective(y, x, theta, prior, sqdist=sqdist)
        if obj > best_obj:
            best_obj, best_theta = obj, theta.copy()
    return RqHyper.from_log_array(best_theta)


def nig_posterior(targets: np.ndarray, prior: NigPrior) -> NigPosterior:
    y = np.asarray(targets, dtype=float)
    n = len(y)
    mean = float(y.mean()) if n else 0.0
    kappa = prior.kappa0 + n
    mu = (prior.kappa0 * prior.mu0 + n * mean) / kappa
    alpha = prior.alpha0 + 0.5 * n
    beta = (
        prior.beta0
        + 0.5 * float(((y - mean) ** 2).sum())
        + 0.5 * prior.kappa0 * n * (mean - prior.mu0) ** 2 / kappa
    )
    return NigPosterior(mu=mu, kappa=kappa, alpha=alpha, beta=beta)


def nig_log_marginal(targets: np.ndarray, prior: NigPrior) -> float:
    """Closed-form marginal of i.i.d. Gaussians under the conjugate NIG prior."""
    y = np.asarray(targets, dtype=float)
    n = len(y)
    post = nig_posterior(y, prior)
    return float(
        gammaln(post.alpha)
        - gammaln(prior.alpha0)
        + prior.alpha0 * math.log(prior.beta0)
        - post.alpha * math.log(post.beta)
        + 0.5 * (math.log(prior.kappa0) - math.log(post.kappa))
        - 0.5 * n * math.log(2.0 * math.pi)
    )


def student_t_logpdf(y: float, df: float, loc: float, scale: float) -> float:
    z = (y - loc) / scale
    return float(
        gammaln(0.5 * (df + 1.0))
        - gammaln(0.5 * df)
        - 0.5 * math.log(df * math.pi * scale**2)
        - 0.5 * (df + 1.0) * math.log1p(z * z / df)
    )


def nig_predictive_logpdf(y: float, posterior: NigPosterior) -> float:
    df, loc, scale = posterior.predictive()
    return student_t_logpdf(y, df, loc, scale)


@dataclass(frozen=True)
class MechanismScore:
    """Fitted hyperparameters and log scores for one (node, parent set) pair."""

    node: int
    parents: tuple[int, ...]
    kind: str  # "gp" or "root"
    hyper: RqHyper | NigPosterior
    log_marginal: float
    log_hyper_prior: float

    @property
    def total(self) -> float:
        return self.log_marginal + self.log_hyper_prior

    def to_dict(self) -> dict:
        if self.kind == "gp":
            h = {
                "delta": self.hyper.delta,
                "lengthscale": self.hyper.lengthscale,
                "mixing": self.hyper.mixing,
                "noise_var": self.hyper.noise_var,
            }
        else:
            h = {
                "mu": self.hyper.mu,
                "kappa": self.hyper.kappa,
                "alpha": self.hyper.alpha,
                "beta": self.hyper.beta,
            }
        return {
            "node": self.node,
            "parents": list(self.parents),
            "kind": self.kind,
            "hyper": h,
            "log_marginal": self.log_marginal,
            "log_hyper_prior": self.log_hyper_prior,
        }

    @staticmethod
    def from_dict(obj: dict) -> "MechanismScore":
        hyper = (
            RqHyper(**obj["hyper"]) if obj["kind"] == "gp" else NigPosterior(**obj["hyper"])
        )
        return MechanismScore(
            node=int(obj["node"]),
            parents=tuple(int(p) for p in obj["parents"]),
            kind=obj["kind"],
            hyper=hyper,
            log_marginal=float(obj["log_marginal"]),
            log_hyper_prior=float(obj["log_hyper_prior"]),
        )


class MechanismCache:
    """Insert-if-absent map from (node, sorted parents) to immutable scores."""

    def __init__(self) -> None:
        self._entries: dict[tuple[int, tuple[int, ...]], MechanismScore] = {}

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, key: tuple[int, tuple[int, ...]]) -> bool:
        return key in self._entries

    def get(self, node: int, parents: tuple[int, ...]) -> MechanismScore | None:
        return self._entries.get((node, tuple(sorted(parents))))

    def insert_if_absent(self, score: MechanismScore) -> MechanismScore:
        return self._entries.setdefault((score.node, score.parents), score)

    def scores(self) -> list[MechanismScore]:
        return [self._entries[k] for k in sorted(self._entries)]

    def to_json(self) -> str:
        return json.dumps({"entries": [s.to_dict() for s in self.scores()]})

    @staticmethod
    def from_json(text: str) -> "MechanismCache":
        cache = MechanismCache()
        for obj in json.loads(text)["entries"]:
            cache.insert_if_absent(MechanismScore.from_dict(obj))
        return cache

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @staticmethod
    def load(path: str | Path) -> "MechanismCache":
        return MechanismCache.from_json(Path(path).read_text())


def local_score(
    cache: MechanismCache,
    node: int,
    parents: tuple[int, ...],
    data: Dataset,
    gp_prior: HyperPrior | None = None,
    nig_prior: NigPrior | None = None,
    gp_steps: int = GP_FIT_STEPS,
    gp_lr: float = GP_FIT_LR,
) -> MechanismScore:
    """Return the cached score for (node, parents), fitting it on first touch.

    Empty parent sets take the conjugate root route, whose marginal already
    integrates the prior, so their log_hyper_prior is 0.
    """
    parents = tuple(sorted(parents))
    hit = cache.get(node, parents)
    if hit is not None:
        return hit
    y = data.values[:, node]
    if not parents:
        prior = nig_prior or NigPrior()
        score = MechanismScore(
            node=node,
            parents=parents,
            kind="root",
            hyper=nig_posterior(y, prior),
            log_marginal=nig_log_marginal(y, prior),
            log_hyper_prior=0.0,
        )
    else:
        prior = gp_prior or default_hyper_prior(len(parents))
        hyper = fit_hyperparameters(
            node, parents, data, prior, max_steps=gp_steps, learning_rate=gp_lr
        )
        score = MechanismScore(
            node=node,
            parents=parents,
            kind="gp",
            hyper=hyper,
            log_marginal=gp_log_marginal(y, data.values[:, list(parents)], hyper),
            log_hyper_prior=prior.log_pdf(hyper),
        )
    return cache.insert_if_absent(score)


@dataclass
class GpPredictor:
    """Cached factorisation for drawing from a fitted GP posterior at query points."""

    hyper: RqHyper
    train_inputs: np.ndarray
    lower: np.ndarray
    alpha: np.ndarray

    @staticmethod
    def build(score: MechanismScore, train_data: Dataset) -> "GpPredictor":
        x = train_data.values[:, list(score.parents)]
        y = train_data.values[:, score.node]
        k = rq_gram(sq_distances(x, x), score.hyper)
        k[np.diag_indices_from(k)] += score.hyper.noise_var
        lower, _ = chol_with_jitter(k)
        return GpPredictor(
            hyper=score.hyper,
            train_inputs=x,
            lower=lower,
            alpha=cho_solve((lower, True), y),
        )

    def posterior(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Mean and variance of the latent function at each query row."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        ks = rq_gram(sq_distances(points, self.train_inputs), self.hyper)
        mean = ks @ self.alpha
        v = solve_triangular(self.lower, ks.T, lower=True)
        var = np.maximum(self.hyper.delta - (v * v).sum(axis=0), 0.0)
        return mean, var

    def sample(self, points: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Draw f at each query point from the posterior, then add observation noise."""
        mean, var = self.posterior(points)
        f = mean + np.sqrt(var) * rng.standard_normal(len(mean))
        return f + math.sqrt(self.hyper.noise_var) * rng.standard_normal(len(mean))


def sample_root(posterior: NigPosterior, count: int, rng: np.random.Generator) -> np.ndarray:
    df, loc, scale = posterior.predictive()
    return loc + scale * rng.standard_t(df, size=count)


def predictive_sample(
    score: MechanismScore,
    parent_values: np.ndarray,
    train_data: Dataset,
    rng: np.random.Generator,
) -> float:
    """One draw of the node value at a single query point (standardised units)."""
    if score.kind == "root":
        return float(sample_root(score.hyper, 1, rng)[0])
    predictor = GpPredictor.build(score, train_data)
    return float(predictor.sample(np.atleast_2d(parent_values), rng)[0])
