"""Confidence calibration and rounds-of-grading experiments.

Calibration: run the leave-one-out simulation loop, convert each prediction's
posterior std into a confidence that the estimate lies within delta of the
truth, bin those confidences (20 bins of 5 percent), and measure each bin's
empirical pass rate. Rounds: restrict the graph to each grader's first k
grades (input order), rerun inference, and count submissions the model is
confident about; grading more rounds should grow that set.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import erf as _erf

from .core import GradingGraph, Hyperparameters, Model, exclude_self_grades
from .em import EmConfig
from .evaluation import EvalConfig, EvaluationReport, evaluate_model
from .gibbs import GibbsConfig, gibbs_infer

__all__ = [
    "DELTAS",
    "confidence",
    "empirical_confidence",
    "CalibrationBin",
    "CalibrationReport",
    "calibration_experiment",
    "RoundStat",
    "RoundsReport",
    "restrict_to_first_grades",
    "rounds_experiment",
]

DELTAS = (5.0, 7.0, 10.0)
N_BINS = 20


def confidence(posterior_mean: float, posterior_var: float, delta: float) -> float:
    """Probability that a N(mean, var) draw lies within +-delta of the mean,
    i.e. the model's belief that the true score is within delta of its
    estimate. The mean itself does not enter the central-interval mass; it is
    part of the signature because the prediction is the pair (mean, var)."""
    if not (posterior_var > 0):
        raise ValueError(f"posterior variance must be positive, got {posterior_var}")
    if delta < 0:
        raise ValueError(f"delta must be >= 0, got {delta}")
    if delta == 0:
        return 0.0
    return math.erf(delta / math.sqrt(2.0 * posterior_var))


def empirical_confidence(samples: np.ndarray, delta: float) -> float:
    """Sample-based alternative: fraction of posterior draws within delta of
    their mean."""
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise ValueError("empirical confidence needs at least one sample")
    return float(np.mean(np.abs(samples - samples.mean()) <= delta))


@dataclass(frozen=True)
class CalibrationBin:
    bin_lo: float
    bin_hi: float
    delta: float
    count: int
    passes: int

    @property
    def pass_rate(self) -> float:
        return self.passes / self.count if self.count else float("nan")


@dataclass(frozen=True)
class CalibrationReport:
    bins: tuple[CalibrationBin, ...]
    n_predictions: int  # per delta
    evaluation: EvaluationReport

    def bins_for(self, delta: float) -> tuple[CalibrationBin, ...]:
        return tuple(b for b in self.bins if b.delta == delta)


def calibration_experiment(
    graph: GradingGraph,
    hp: Hyperparameters,
    model: Model,
    eval_cfg: EvalConfig,
    deltas: tuple[float, ...] = DELTAS,
    n_bins: int = N_BINS,
    engine: str = "gibbs",
    gibbs_cfg: GibbsConfig | None = None,
    em_cfg: EmConfig | None = None,
    max_workers: int = 1,
) -> CalibrationReport:
    """Bin-and-test calibration over the leave-one-out simulations.

    Every prediction contributes once per delta: its confidence (closed-form
    Gaussian, from the frozen-parameter posterior std) picks the bin, and it
    passes when the realized |residual| <= delta.
    """
    report = evaluate_model(
        graph, hp, model, eval_cfg,
        engine=engine, gibbs_cfg=gibbs_cfg, em_cfg=em_cfg, max_workers=max_workers,
    )
    bins: list[CalibrationBin] = []
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    for delta in deltas:
        counts = np.zeros(n_bins, dtype=int)
        passes = np.zeros(n_bins, dtype=int)
        for sub in report.submissions:
            conf = _erf(delta / (np.sqrt(2.0) * sub.sigmas))
            idx = np.minimum((conf * n_bins).astype(int), n_bins - 1)
            ok = np.abs(sub.residuals) <= delta
            np.add.at(counts, idx, 1)
            np.add.at(passes, idx, ok.astype(int))
        for i in range(n_bins):
            bins.append(
                CalibrationBin(
                    bin_lo=float(edges[i]),
                    bin_hi=float(edges[i + 1]),
                    delta=float(delta),
                    count=int(counts[i]),
                    passes=int(passes[i]),
                )
            )
    n_pred = len(report.submissions) * eval_cfg.n_simulations
    return CalibrationReport(bins=tuple(bins), n_predictions=n_pred, evaluation=report)


@dataclass(frozen=True)
class RoundStat:
    round: int
    confident_count: int
    total: int

    @property
    def fraction(self) -> float:
        return self.confident_count / self.total if self.total else float("nan")


@dataclass(frozen=True)
class RoundsReport:
    rows: tuple[RoundStat, ...]
    delta: float
    threshold: float

    @property
    def final_unresolved_fraction(self) -> float:
        """Share of submissions still below the confidence bar after all rounds."""
        return 1.0 - self.rows[-1].fraction


def restrict_to_first_grades(graph: GradingGraph, k: int) -> GradingGraph:
    """Keep only each grader's first k grades per assignment, in input order."""
    if k < 1:
        raise ValueError(f"round must be >= 1, got {k}")
    counts: dict[tuple[int, str], int] = {}
    kept = []
    for g in graph.grades:
        key = (g.assignment, g.grader)
        seen = counts.get(key, 0)
        if seen < k:
            kept.append(g)
            counts[key] = seen + 1
    return graph.with_grades(kept)


def rounds_experiment(
    graph: GradingGraph,
    hp: Hyperparameters,
    model: Model,
    gibbs_cfg: GibbsConfig | None = None,
    delta: float = 10.0,
    threshold: float = 0.9,
    max_rounds: int | None = None,
    method: str = "closed_form",
    max_workers: int = 1,
) -> RoundsReport:
    """Simulate grading arriving in rounds: round k sees each grader's first k
    grades. Counts submissions whose posterior puts >= threshold probability
    within +-delta of the estimate; method "empirical" uses Gibbs-sample
    coverage instead of the Gaussian closed form."""
    if method not in ("closed_form", "empirical"):
        raise ValueError(f"unknown confidence method {method!r}")
    cfg = gibbs_cfg or GibbsConfig(model=model)
    if cfg.model is not model:
        raise ValueError(f"gibbs config is for {cfg.model.value}, experiment asked for {model.value}")
    clean, _ = exclude_self_grades(graph)
    per_grader: dict[tuple[int, str], int] = {}
    for g in clean.grades:
        per_grader[(g.assignment, g.grader)] = per_grader.get((g.assignment, g.grader), 0) + 1
    if not per_grader:
        raise ValueError("no grades to run rounds over")
    k_max = max(per_grader.values())
    if max_rounds is not None:
        k_max = min(k_max, max_rounds)
    total = sum(len(clean.submissions(a)) for a in clean.assignments)

    def run_round(k: int) -> RoundStat:
        restricted = restrict_to_first_grades(clean, k)
        summary = gibbs_infer(restricted, hp, cfg, collect_scores=(method == "empirical"))
        confident = 0
        for a in restricted.assignments:
            for u in restricted.submissions(a):
                if method == "empirical":
                    c = empirical_confidence(summary.score_samples[(a, u)], delta)
                else:
                    c = summary.confidence(a, u, delta)
                if c >= threshold:
                    confident += 1
        return RoundStat(round=k, confident_count=confident, total=total)

    rounds = list(range(1, k_max + 1))
    if max_workers <= 1:
        rows = [run_round(k) for k in rounds]
    else:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            futures = [pool.submit(run_round, k) for k in rounds]
            rows = [f.result() for f in futures]
    return RoundsReport(rows=tuple(rows), delta=delta, threshold=threshold)
