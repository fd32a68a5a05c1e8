"""Core data model for peer-grading networks.

Defines the grading graph (who graded whom, with what score), the model
identifiers, prior hyperparameters with data-driven resolution, latent-state
containers, posterior summaries, and per-assignment z-score normalization.
Scores are percentages on a 0..100 scale unless a graph has been normalized.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

__all__ = [
    "Model",
    "PeerGrade",
    "GroundTruth",
    "GradingGraph",
    "NormalizationParams",
    "Hyperparameters",
    "LatentState",
    "VariableStat",
    "PosteriorSummary",
    "exclude_self_grades",
    "zscore_normalize",
    "normalize_all",
    "denormalize",
    "prepare_graph",
    "resolve_priors",
]


class Model(Enum):
    """The four grading models, in increasing order of structure."""

    PG1_BIAS = "pg1bias"  # per-grader bias, shared fixed reliability
    PG1 = "pg1"  # per-grader bias and per-grader reliability
    PG2 = "pg2"  # grader bias follows a random walk across assignments
    PG3 = "pg3"  # reliability is an affine function of the grader's own score

    @classmethod
    def from_string(cls, name: str) -> "Model":
        try:
            return cls(name.strip().lower())
        except ValueError:
            valid = ", ".join(m.value for m in cls)
            raise ValueError(f"unknown model {name!r}; expected one of: {valid}") from None

    @property
    def has_reliability(self) -> bool:
        """Whether the model samples per-grader precision variables."""
        return self in (Model.PG1, Model.PG2)


@dataclass(frozen=True)
class PeerGrade:
    """One observed grade: grader scores gradee's submission in an assignment."""

    assignment: int
    grader: str
    gradee: str
    score: float
    seconds: float | None = None  # optional grading time, used by analytics only

    def __post_init__(self) -> None:
        if not isinstance(self.assignment, int) or isinstance(self.assignment, bool):
            raise ValueError(f"assignment id must be an int, got {self.assignment!r}")
        if self.assignment < 1:
            raise ValueError(f"assignment id must be >= 1, got {self.assignment}")
        if not self.grader or not self.gradee:
            raise ValueError("grader and gradee ids must be non-empty strings")
        if not math.isfinite(self.score):
            raise ValueError(f"grade score must be finite, got {self.score!r}")
        if self.seconds is not None and (not math.isfinite(self.seconds) or self.seconds < 0):
            raise ValueError(f"grading seconds must be finite and >= 0, got {self.seconds!r}")

    @property
    def is_self_grade(self) -> bool:
        return self.grader == self.gradee


@dataclass(frozen=True)
class GroundTruth:
    """Reference scores for one submission: staff grade and/or peer consensus."""

    consensus_score: float
    staff_score: float | None = None

    def __post_init__(self) -> None:
        if not math.isfinite(self.consensus_score):
            raise ValueError("consensus score must be finite")
        if self.staff_score is not None and not math.isfinite(self.staff_score):
            raise ValueError("staff score must be finite")


@dataclass(frozen=True)
class NormalizationParams:
    """Affine map for one assignment: z = (score - mean) / std."""

    mean: float
    std: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.mean) or not math.isfinite(self.std):
            raise ValueError("normalization parameters must be finite")
        if self.std <= 0:
            raise ValueError(f"normalization std must be positive, got {self.std}")


class GradingGraph:
    """Immutable bipartite-per-assignment grading network.

    Nodes are (assignment, student) submissions; edges are observed peer
    grades. The submission universe defaults to every student appearing as a
    grader or gradee, but can be given explicitly so that students (or whole
    assignments) without grades stay addressable, which leave-one-out
    evaluation and the random-walk bias chain rely on.
    """

    def __init__(
        self,
        grades: Iterable[PeerGrade],
        ground_truth: Mapping[tuple[int, str], GroundTruth] | None = None,
        submissions: Mapping[int, Iterable[str]] | None = None,
    ) -> None:
        self._grades: tuple[PeerGrade, ...] = tuple(grades)
        seen: set[tuple[int, str, str]] = set()
        derived: dict[int, set[str]] = {}
        for g in self._grades:
            key = (g.assignment, g.grader, g.gradee)
            if key in seen:
                raise ValueError(
                    f"duplicate grade: grader {g.grader!r} already graded "
                    f"{g.gradee!r} in assignment {g.assignment}"
                )
            seen.add(key)
            derived.setdefault(g.assignment, set()).update((g.grader, g.gradee))

        if submissions is not None:
            subs = {int(a): set(studs) for a, studs in submissions.items()}
            for a in subs:
                if a < 1:
                    raise ValueError(f"assignment id must be >= 1, got {a}")
            for a, studs in derived.items():
                if a not in subs:
                    raise ValueError(f"grades reference assignment {a} missing from the submission universe")
                missing = studs - subs[a]
                if missing:
                    raise ValueError(
                        f"grades reference students without submissions in assignment {a}: "
                        f"{sorted(missing)[:5]}"
                    )
        else:
            subs = derived
        self._submissions: dict[int, tuple[str, ...]] = {
            a: tuple(sorted(studs)) for a, studs in sorted(subs.items())
        }

        self._truth: dict[tuple[int, str], GroundTruth] = dict(ground_truth or {})
        for (a, student) in self._truth:
            if a not in self._submissions or student not in set(self._submissions[a]):
                raise ValueError(f"ground truth references unknown submission ({a}, {student!r})")

        # adjacency: grades indexed by receiving and by giving student
        self._received: dict[tuple[int, str], list[PeerGrade]] = {}
        self._given: dict[tuple[int, str], list[PeerGrade]] = {}
        for g in self._grades:
            self._received.setdefault((g.assignment, g.gradee), []).append(g)
            self._given.setdefault((g.assignment, g.grader), []).append(g)

    # -- basic views ------------------------------------------------------

    @property
    def grades(self) -> tuple[PeerGrade, ...]:
        """All grades in input order."""
        return self._grades

    @property
    def assignments(self) -> tuple[int, ...]:
        """Assignment ids in ascending order."""
        return tuple(self._submissions)

    @property
    def ground_truth(self) -> Mapping[tuple[int, str], GroundTruth]:
        return dict(self._truth)

    @property
    def n_grades(self) -> int:
        return len(self._grades)

    def submissions(self, assignment: int) -> tuple[str, ...]:
        """Students with a submission in the assignment, sorted by id."""
        try:
            return self._submissions[assignment]
        except KeyError:
            raise KeyError(f"unknown assignment {assignment}") from None

    def grades_in(self, assignment: int) -> tuple[PeerGrade, ...]:
        return tuple(g for g in self._grades if g.assignment == assignment)

    def graders_of(self, assignment: int, gradee: str) -> tuple[PeerGrade, ...]:
        """Grades received by a submission, in input order."""
        return tuple(self._received.get((assignment, gradee), ()))

    def gradees_of(self, assignment: int, grader: str) -> tuple[PeerGrade, ...]:
        """Grades given by a grader in an assignment, in input order."""
        return tuple(self._given.get((assignment, grader), ()))

    def scores_in(self, assignment: int) -> np.ndarray:
        return np.array([g.score for g in self._grades if g.assignment == assignment], dtype=float)

    # -- derived graphs ----------------------------------------------------

    def with_grades(self, grades: Iterable[PeerGrade]) -> "GradingGraph":
        """A copy holding different grades but the same universe and truth."""
        return GradingGraph(
            grades,
            ground_truth=self._truth,
            submissions={a: studs for a, studs in self._submissions.items()},
        )

    def without_received(self, assignment: int, gradee: str) -> "GradingGraph":
        """Drop every grade received by one submission (leave-one-out step)."""
        kept = [g for g in self._grades if not (g.assignment == assignment and g.gradee == gradee)]
        return self.with_grades(kept)

    def __len__(self) -> int:
        return len(self._grades)

    def __repr__(self) -> str:
        n_subs = sum(len(s) for s in self._submissions.values())
        return (
            f"GradingGraph(assignments={len(self._submissions)}, "
            f"submissions={n_subs}, grades={len(self._grades)}, "
            f"ground_truth={len(self._truth)})"
        )


def exclude_self_grades(graph: GradingGraph) -> tuple[GradingGraph, int]:
    """Remove grades where grader == gradee; returns (graph, removed count)."""
    kept = [g for g in graph.grades if not g.is_self_grade]
    removed = len(graph.grades) - len(kept)
    if removed == 0:
        return graph, 0
    return graph.with_grades(kept), removed


def zscore_normalize(graph: GradingGraph, assignment: int) -> tuple[GradingGraph, NormalizationParams]:
    """Z-score every grade of one assignment by its own mean and population std.

    Errors on assignments with fewer than two grades or zero score variance,
    where the transform is undefined.
    """
    scores = graph.scores_in(assignment)
    if scores.size < 2:
        raise ValueError(
            f"cannot normalize assignment {assignment}: needs at least 2 grades, has {scores.size}"
        )
    mean = float(np.mean(scores))
    std = float(np.std(scores))  # population std, ddof=0
    if std == 0.0:
        raise ValueError(f"degenerate assignment {assignment}: all grades equal ({mean})")
    params = NormalizationParams(mean=mean, std=std)
    out = [
        replace(g, score=(g.score - mean) / std) if g.assignment == assignment else g
        for g in graph.grades
    ]
    return graph.with_grades(out), params


def normalize_all(graph: GradingGraph) -> tuple[GradingGraph, dict[int, NormalizationParams]]:
    """Z-score every assignment that has grades; empty assignments pass through."""
    params: dict[int, NormalizationParams] = {}
    out = graph
    for a in graph.assignments:
        if graph.scores_in(a).size == 0:
            continue
        out, params[a] = zscore_normalize(out, a)
    return out, params


def denormalize(score: float, params: NormalizationParams) -> float:
    """Invert the z-score map: pp = mean + std * z."""
    return params.mean + params.std * score


@dataclass(frozen=True)
class Hyperparameters:
    """Prior hyperparameters shared by all models.

    mu0/gamma0 left as None are resolved per assignment from the observed
    grades (mean, and reciprocal population variance). tau_fixed and theta0
    default to the reliability prior mean alpha0/beta0.
    """

    mu0: float | None = None  # prior mean of true scores
    gamma0: float | None = None  # prior precision of true scores
    eta0: float = 1.0 / 25.0  # prior precision of grader bias
    alpha0: float = 2.0  # reliability Gamma shape
    beta0: float = 18.0  # reliability Gamma rate
    omega0: float = 1.0  # bias random-walk precision (z-score units)
    tau_fixed: float | None = None  # shared reliability when not inferred
    theta0: float | None = None  # reliability intercept (score-linked model)
    theta1: float = 0.0  # reliability slope on the grader's own score
    precision_floor: float = 1e-4  # lower clamp for any likelihood precision

    def __post_init__(self) -> None:
        for name in ("eta0", "alpha0", "beta0", "omega0", "precision_floor"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be finite and positive, got {v!r}")
        for name in ("gamma0", "tau_fixed"):
            v = getattr(self, name)
            if v is not None and not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be finite and positive, got {v!r}")
        for name in ("mu0", "theta0"):
            v = getattr(self, name)
            if v is not None and not math.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v!r}")
        if not math.isfinite(self.theta1):
            raise ValueError(f"theta1 must be finite, got {self.theta1!r}")

    @property
    def effective_tau_fixed(self) -> float:
        return self.tau_fixed if self.tau_fixed is not None else self.alpha0 / self.beta0

    @property
    def effective_theta0(self) -> float:
        return self.theta0 if self.theta0 is not None else self.alpha0 / self.beta0

    @property
    def is_resolved(self) -> bool:
        return self.mu0 is not None and self.gamma0 is not None

    def resolve(self, scores: np.ndarray) -> "Hyperparameters":
        """Fill mu0/gamma0 from observed grades where they were left data-driven."""
        if self.is_resolved:
            return self
        scores = np.asarray(scores, dtype=float)
        if scores.size < 2:
            raise ValueError(
                "cannot resolve data-driven priors from fewer than 2 grades; "
                "set mu0 and gamma0 explicitly"
            )
        var = float(np.var(scores))
        if var == 0.0:
            raise ValueError(
                "degenerate assignment: zero grade variance, cannot resolve gamma0; "
                "set mu0 and gamma0 explicitly"
            )
        mu0 = self.mu0 if self.mu0 is not None else float(np.mean(scores))
        gamma0 = self.gamma0 if self.gamma0 is not None else 1.0 / var
        return replace(self, mu0=mu0, gamma0=gamma0)


def prepare_graph(
    graph: GradingGraph,
    model: Model,
    assume_normalized: bool = False,
) -> tuple[GradingGraph, dict[int, NormalizationParams]]:
    """Shared inference preprocessing: drop self-grades, z-score for the chain model.

    Returns the working graph and, for the random-walk model, the per-assignment
    normalization parameters (identity when assume_normalized). Raises on a graph
    with no submissions at all.
    """
    if not graph.assignments:
        raise ValueError("empty graph: no submissions to infer over")
    work, _ = exclude_self_grades(graph)
    if model is not Model.PG2 or assume_normalized:
        return work, {}
    return normalize_all(work)


def resolve_priors(
    graph: GradingGraph,
    hp: Hyperparameters,
    normalized: bool = False,
) -> dict[int, Hyperparameters]:
    """Resolved hyperparameters per assignment on an already-prepared graph.

    With normalized=True (grades already z-scored), data-driven priors are
    exactly standard: mu0=0, gamma0=1. Otherwise they come from each
    assignment's observed grades, which must exist and vary.
    """
    out: dict[int, Hyperparameters] = {}
    for a in graph.assignments:
        if hp.is_resolved:
            out[a] = hp
            continue
        if normalized:
            out[a] = replace(
                hp,
                mu0=0.0 if hp.mu0 is None else hp.mu0,
                gamma0=1.0 if hp.gamma0 is None else hp.gamma0,
            )
            continue
        scores = graph.scores_in(a)
        if scores.size == 0:
            raise ValueError(
                f"assignment {a}: no grades to resolve data-driven priors from; "
                "set mu0 and gamma0 explicitly"
            )
        try:
            out[a] = hp.resolve(scores)
        except ValueError as e:
            raise ValueError(f"assignment {a}: {e}") from None
    return out


@dataclass
class LatentState:
    """One configuration of all latent variables, keyed by (assignment, student).

    s holds true scores for every submission; b holds biases for every grader
    with at least one given grade (the chain model keys every assignment of
    such graders); tau holds per-grader precisions where the model infers them.
    theta carries the score-linked reliability coefficients.
    """

    s: dict[tuple[int, str], float] = field(default_factory=dict)
    b: dict[tuple[int, str], float] = field(default_factory=dict)
    tau: dict[tuple[int, str], float] = field(default_factory=dict)
    theta: tuple[float, float] | None = None  # (theta0, theta1)

    def copy(self) -> "LatentState":
        return LatentState(dict(self.s), dict(self.b), dict(self.tau), self.theta)


@dataclass(frozen=True)
class VariableStat:
    """Moments of one latent variable: mean and population variance over samples."""

    mean: float
    var: float
    n: int


def _gaussian_within(delta: float, var: float) -> float:
    """P(|X - mean| <= delta) for X Gaussian with the given variance."""
    if delta == 0.0:
        return 0.0
    return math.erf(delta / math.sqrt(2.0 * var))


@dataclass
class PosteriorSummary:
    """Posterior moments per latent variable, always in percentage points.

    Produced by both the samplers (moments over retained sweeps) and the grid
    oracle (moments under the gridded posterior). mh_acceptance and
    theta_acceptance report Metropolis acceptance rates where applicable.
    """

    model: Model
    s: dict[tuple[int, str], VariableStat]
    b: dict[tuple[int, str], VariableStat]
    tau: dict[tuple[int, str], VariableStat]
    theta: dict[str, VariableStat] | None = None
    n_samples: int = 0
    mh_acceptance: float | None = None
    theta_acceptance: float | None = None
    score_samples: dict[tuple[int, str], np.ndarray] | None = None  # retained draws, pp

    def estimate(self, assignment: int, student: str) -> float:
        """Posterior-mean score of one submission."""
        return self.s[(assignment, student)].mean

    def confidence(self, assignment: int, student: str, delta: float) -> float:
        """Posterior probability the true score lies within +-delta of its mean."""
        stat = self.s[(assignment, student)]
        if stat.var <= 0:
            raise ValueError(f"nonpositive posterior variance for ({assignment}, {student!r})")
        if delta < 0:
            raise ValueError(f"delta must be >= 0, got {delta}")
        return _gaussian_within(delta, stat.var)
