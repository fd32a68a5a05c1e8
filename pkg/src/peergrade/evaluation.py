"""Leave-one-out evaluation against ground-truth submissions.

Two-step protocol per ground-truth submission: (1) run inference on the
whole graph minus that submission's received grades, freezing each pool
grader's bias and precision and the data-driven priors; (2) repeatedly sample
a handful of grades from the submission's pool, form the closed-form
conditional posterior-mean estimate from the frozen parameters, and record
the residual against the true grade. Metrics aggregate the residuals. The
median-of-sampled-grades baseline runs on identical draws for paired
comparison.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .core import (
    GradingGraph,
    Hyperparameters,
    Model,
    PeerGrade,
    exclude_self_grades,
    prepare_graph,
    resolve_priors,
)
from .em import EmConfig, em_infer
from .gibbs import GibbsConfig, gibbs_infer

__all__ = [
    "TruthSource",
    "EvalConfig",
    "FrozenPrediction",
    "SubmissionEval",
    "EvaluationReport",
    "median_baseline",
    "fit_frozen",
    "simulate_frozen",
    "evaluate_model",
    "evaluate_baseline",
]

_MAX_SEED = 2**64 - 1

METRIC_ROWS = ("RMSE", "% Within 5pp", "% Within 10pp", "Mean Std", "Worst Grade")


class TruthSource(Enum):
    """What counts as a ground-truth submission's true grade."""

    CONSENSUS = "consensus"  # mean of its many peer grades
    STAFF = "staff"


@dataclass(frozen=True)
class EvalConfig:
    """Simulation settings for the leave-one-out protocol."""

    n_simulations: int = 3000
    grades_per_simulation: int = 4
    truth_source: TruthSource = TruthSource.CONSENSUS
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_simulations < 1:
            raise ValueError(f"n_simulations must be >= 1, got {self.n_simulations}")
        if self.grades_per_simulation < 1:
            raise ValueError(f"grades_per_simulation must be >= 1, got {self.grades_per_simulation}")
        if not (0 <= self.seed <= _MAX_SEED):
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")


@dataclass(frozen=True)
class FrozenPrediction:
    """Everything step 2 needs for one held-out submission, in percentage
    points: the grade pool, per-pool-grader bias/precision frozen from the
    reduced-graph fit (prior fallback for graders the reduced graph never
    saw grading), and the score prior."""

    assignment: int
    gradee: str
    index: int  # position among sorted ground-truth keys, fixes the RNG stream
    mu0: float
    gamma0: float
    pool: tuple[PeerGrade, ...]
    bias: dict[str, float]
    precision: dict[str, float]
    truth_consensus: float
    truth_staff: float | None

    def truth(self, source: TruthSource) -> float:
        if source is TruthSource.STAFF:
            if self.truth_staff is None:
                raise ValueError(
                    f"submission ({self.assignment}, {self.gradee!r}) has no staff score"
                )
            return self.truth_staff
        return self.truth_consensus

    def estimate(self, grades: Sequence[PeerGrade]) -> tuple[float, float]:
        """Conditional posterior mean and std of the true score given a grade
        sample, under the frozen grader parameters."""
        p = self.gamma0
        num = self.gamma0 * self.mu0
        for g in grades:
            t = self.precision[g.grader]
            p += t
            num += t * (g.score - self.bias[g.grader])
        return num / p, math.sqrt(1.0 / p)


@dataclass(frozen=True)
class SubmissionEval:
    """Per-submission simulation outcome."""

    assignment: int
    gradee: str
    truth: float
    estimates: np.ndarray
    sigmas: np.ndarray | None  # None for the baseline, which has no posterior

    @property
    def residuals(self) -> np.ndarray:
        return self.estimates - self.truth


@dataclass(frozen=True)
class EvaluationReport:
    """Pooled metrics over every ground-truth submission's residuals."""

    label: str
    n_simulations: int
    grades_per_simulation: int
    truth_source: TruthSource
    submissions: tuple[SubmissionEval, ...]

    @property
    def all_residuals(self) -> np.ndarray:
        return np.concatenate([s.residuals for s in self.submissions])

    @property
    def rmse(self) -> float:
        r = self.all_residuals
        return float(np.sqrt(np.mean(r * r)))

    @property
    def pct_within_5pp(self) -> float:
        r = np.abs(self.all_residuals)
        return float(100.0 * np.mean(r <= 5.0))

    @property
    def pct_within_10pp(self) -> float:
        r = np.abs(self.all_residuals)
        return float(100.0 * np.mean(r <= 10.0))

    @property
    def mean_std(self) -> float:
        return float(np.mean([np.std(s.residuals) for s in self.submissions]))

    @property
    def worst_grade(self) -> float:
        r = self.all_residuals
        return float(r[np.argmax(np.abs(r))])

    @property
    def metrics(self) -> dict[str, float]:
        return {
            "RMSE": self.rmse,
            "% Within 5pp": self.pct_within_5pp,
            "% Within 10pp": self.pct_within_10pp,
            "Mean Std": self.mean_std,
            "Worst Grade": self.worst_grade,
        }


def median_baseline(scores: Sequence[float]) -> float:
    """The deployed scoring rule: median grade, averaging the middle pair for
    even counts."""
    if len(scores) == 0:
        raise ValueError("median of an empty grade set is undefined")
    ordered = sorted(scores)
    n = len(ordered)
    mid = n // 2
    if n % 2 == 1:
        return float(ordered[mid])
    return 0.5 * (ordered[mid - 1] + ordered[mid])


def _gt_keys(graph: GradingGraph) -> list[tuple[int, str]]:
    keys = sorted(graph.ground_truth)
    if not keys:
        raise ValueError("graph has no ground-truth submissions to evaluate")
    return keys


def _default_gibbs_cfg(model: Model, cfg: GibbsConfig | None) -> GibbsConfig:
    if cfg is None:
        return GibbsConfig(model=model)
    if cfg.model is not model:
        raise ValueError(f"gibbs config is for {cfg.model.value}, evaluation asked for {model.value}")
    return cfg


def fit_frozen(
    graph: GradingGraph,
    hp: Hyperparameters,
    model: Model,
    key: tuple[int, str],
    index: int = 0,
    engine: str = "gibbs",
    gibbs_cfg: GibbsConfig | None = None,
    em_cfg: EmConfig | None = None,
) -> FrozenPrediction:
    """Step 1 for one held-out submission: reduced-graph inference, frozen
    grader parameters and priors in percentage points."""
    a, gradee = key
    truth = graph.ground_truth.get(key)
    if truth is None:
        raise KeyError(f"({a}, {gradee!r}) is not a ground-truth submission")
    clean, _ = exclude_self_grades(graph)
    pool = clean.graders_of(a, gradee)
    reduced = clean.without_received(a, gradee)

    # priors in pp for the reduced graph, mirroring what inference resolves
    normalized = model is Model.PG2
    work, norm = prepare_graph(reduced, model)
    resolved = resolve_priors(work, hp, normalized=normalized)[a]
    if normalized:
        p = norm.get(a)
        if p is None:
            raise ValueError(f"assignment {a} has no grades left to normalize after holding out {gradee!r}")
        mu0 = p.mean + p.std * resolved.mu0
        gamma0 = resolved.gamma0 / (p.std * p.std)
        prior_prec = (resolved.alpha0 / resolved.beta0) / (p.std * p.std)
    else:
        mu0, gamma0 = resolved.mu0, resolved.gamma0
        prior_prec = resolved.alpha0 / resolved.beta0

    if engine == "em":
        cfg = em_cfg or EmConfig(model=model)
        if cfg.model is not model:
            raise ValueError(f"em config is for {cfg.model.value}, evaluation asked for {model.value}")
        points = em_infer(reduced, hp, cfg)
        b_hat, tau_hat, s_hat = points.b, points.tau, points.s
        theta = None
    elif engine == "gibbs":
        cfg = _default_gibbs_cfg(model, gibbs_cfg)
        summary = gibbs_infer(reduced, hp, cfg)
        b_hat = {k: v.mean for k, v in summary.b.items()}
        tau_hat = {k: v.mean for k, v in summary.tau.items()}
        s_hat = {k: v.mean for k, v in summary.s.items()}
        theta = summary.theta
    else:
        raise ValueError(f"unknown engine {engine!r}; expected gibbs or em")

    bias: dict[str, float] = {}
    precision: dict[str, float] = {}
    for g in pool:
        v = g.grader
        bias[v] = b_hat.get((a, v), 0.0)
        if model is Model.PG1_BIAS:
            precision[v] = resolved.effective_tau_fixed
        elif model is Model.PG3:
            th0 = theta["theta0"].mean if theta else resolved.effective_theta0
            th1 = theta["theta1"].mean if theta else resolved.theta1
            precision[v] = max(th1 * s_hat[(a, v)] + th0, resolved.precision_floor)
        else:
            precision[v] = tau_hat.get((a, v), prior_prec)

    return FrozenPrediction(
        assignment=a,
        gradee=gradee,
        index=index,
        mu0=mu0,
        gamma0=gamma0,
        pool=pool,
        bias=bias,
        precision=precision,
        truth_consensus=truth.consensus_score,
        truth_staff=truth.staff_score,
    )


def _pool_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index,))))


def _draw_indices(rng: np.random.Generator, pool_size: int, k: int) -> np.ndarray:
    return rng.choice(pool_size, size=k, replace=False)


def simulate_frozen(fp: FrozenPrediction, cfg: EvalConfig) -> SubmissionEval:
    """Step 2: repeated grade draws without replacement, closed-form
    estimates. Each submission gets its own RNG stream derived from
    (cfg.seed, fp.index), so results do not depend on scheduling."""
    k = cfg.grades_per_simulation
    if len(fp.pool) < k:
        raise ValueError(
            f"submission ({fp.assignment}, {fp.gradee!r}) has a pool of {len(fp.pool)} grades, "
            f"cannot draw {k} without replacement"
        )
    rng = _pool_rng(cfg.seed, fp.index)
    estimates = np.empty(cfg.n_simulations)
    sigmas = np.empty(cfg.n_simulations)
    for i in range(cfg.n_simulations):
        chosen = _draw_indices(rng, len(fp.pool), k)
        est, sig = fp.estimate([fp.pool[j] for j in chosen])
        estimates[i] = est
        sigmas[i] = sig
    return SubmissionEval(
        assignment=fp.assignment,
        gradee=fp.gradee,
        truth=fp.truth(cfg.truth_source),
        estimates=estimates,
        sigmas=sigmas,
    )


def _run_indexed(tasks, max_workers: int):
    """Run callables preserving order; thread count never changes results."""
    if max_workers <= 1:
        return [t() for t in tasks]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        futures = [pool.submit(t) for t in tasks]
        return [f.result() for f in futures]


def evaluate_model(
    graph: GradingGraph,
    hp: Hyperparameters,
    model: Model,
    eval_cfg: EvalConfig,
    engine: str = "gibbs",
    gibbs_cfg: GibbsConfig | None = None,
    em_cfg: EmConfig | None = None,
    max_workers: int = 1,
) -> EvaluationReport:
    """Full protocol over every ground-truth submission."""
    keys = _gt_keys(graph)
    tasks = [
        (lambda key=key, i=i: simulate_frozen(
            fit_frozen(graph, hp, model, key, index=i, engine=engine,
                       gibbs_cfg=gibbs_cfg, em_cfg=em_cfg),
            eval_cfg,
        ))
        for i, key in enumerate(keys)
    ]
    subs = _run_indexed(tasks, max_workers)
    return EvaluationReport(
        label=f"{model.value}-{engine}",
        n_simulations=eval_cfg.n_simulations,
        grades_per_simulation=eval_cfg.grades_per_simulation,
        truth_source=eval_cfg.truth_source,
        submissions=tuple(subs),
    )


def evaluate_baseline(
    graph: GradingGraph,
    eval_cfg: EvalConfig,
    max_workers: int = 1,
) -> EvaluationReport:
    """Median-of-sampled-grades baseline on draws identical to the models'
    (same seed, same per-submission streams)."""
    keys = _gt_keys(graph)
    clean, _ = exclude_self_grades(graph)
    truth_map = graph.ground_truth

    def run_one(key: tuple[int, str], index: int) -> SubmissionEval:
        a, gradee = key
        pool = clean.graders_of(a, gradee)
        k = eval_cfg.grades_per_simulation
        if len(pool) < k:
            raise ValueError(
                f"submission ({a}, {gradee!r}) has a pool of {len(pool)} grades, "
                f"cannot draw {k} without replacement"
            )
        gt = truth_map[key]
        truth = gt.staff_score if eval_cfg.truth_source is TruthSource.STAFF else gt.consensus_score
        if truth is None:
            raise ValueError(f"submission ({a}, {gradee!r}) has no staff score")
        scores = np.array([g.score for g in pool])
        rng = _pool_rng(eval_cfg.seed, index)
        estimates = np.empty(eval_cfg.n_simulations)
        for i in range(eval_cfg.n_simulations):
            chosen = _draw_indices(rng, len(pool), k)
            estimates[i] = median_baseline(scores[chosen])
        return SubmissionEval(assignment=a, gradee=gradee, truth=truth,
                              estimates=estimates, sigmas=None)

    tasks = [(lambda key=key, i=i: run_one(key, i)) for i, key in enumerate(keys)]
    subs = _run_indexed(tasks, max_workers)
    return EvaluationReport(
        label="median-baseline",
        n_simulations=eval_cfg.n_simulations,
        grades_per_simulation=eval_cfg.grades_per_simulation,
        truth_source=eval_cfg.truth_source,
        submissions=tuple(subs),
    )
