"""File formats: grade/ground-truth CSV ingestion and result emission.

All emitted floats go through a 6-significant-digit format so outputs are
byte-stable across runs and platforms; JSON objects are written with sorted
keys. Ingestion validates headers and cell types with line-numbered errors.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .analytics import BinnedResidualTable, ResidualHeatmap, TemporalCorrelationReport
from .calibration import CalibrationReport, RoundsReport
from .core import GradingGraph, GroundTruth, PeerGrade, PosteriorSummary
from .em import PointEstimates
from .evaluation import METRIC_ROWS, EvaluationReport
from .gibbs import TraceRecorder
from .synth import IdentifiabilityRow, TrueLatents

__all__ = [
    "read_grades_csv",
    "read_truth_csv",
    "ingest",
    "describe",
    "write_grades_csv",
    "write_truth_csv",
    "write_latents_csv",
    "write_summary_json",
    "write_points_json",
    "write_trace_csv",
    "write_report",
    "write_residuals_csv",
    "write_calibration_csv",
    "write_rounds_csv",
    "write_binned_table_csv",
    "write_heatmap_csv",
    "write_temporal_csv",
    "write_identifiability_csv",
    "write_json",
]

log = logging.getLogger(__name__)

GRADE_HEADER = ["assignment", "grader", "gradee", "score"]
GRADE_HEADER_SECONDS = GRADE_HEADER + ["seconds"]
TRUTH_HEADER = ["assignment", "gradee", "staff_score", "consensus_score"]


def f6(x: float) -> str:
    """Canonical float cell: 6 significant digits."""
    if isinstance(x, float) and not math.isfinite(x):
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return format(float(x), ".6g")


def _round6(x: float) -> float:
    if not math.isfinite(x):
        return x
    return float(format(x, ".6g"))


def jsonable(obj):
    """Recursively convert to JSON-friendly values with rounded floats."""
    if obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (np.floating, float)):
        return _round6(float(obj))
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, Mapping):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(jsonable(obj), fh, sort_keys=True, indent=2)
        fh.write("\n")


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


# ---------------------------------------------------------------------------
# ingestion
# ---------------------------------------------------------------------------


def _parse_int(value: str, what: str, lineno: int) -> int:
    try:
        return int(value)
    except ValueError:
        raise ValueError(f"line {lineno}: {what} must be an integer, got {value!r}") from None


def _parse_float(value: str, what: str, lineno: int) -> float:
    try:
        return float(value)
    except ValueError:
        raise ValueError(f"line {lineno}: {what} must be a number, got {value!r}") from None


def read_grades_csv(path) -> list[PeerGrade]:
    """Parse a grades file (header assignment,grader,gradee,score with an
    optional trailing seconds column)."""
    grades: list[PeerGrade] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file, expected header {','.join(GRADE_HEADER)}") from None
        if header not in (GRADE_HEADER, GRADE_HEADER_SECONDS):
            raise ValueError(
                f"{path}: bad header {','.join(header)!r}; expected {','.join(GRADE_HEADER)}"
                " (optionally with a trailing seconds column)"
            )
        has_seconds = header == GRADE_HEADER_SECONDS
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(f"line {lineno}: expected {len(header)} cells, got {len(row)}")
            seconds = None
            if has_seconds and row[4].strip() != "":
                seconds = _parse_float(row[4], "seconds", lineno)
            try:
                grades.append(
                    PeerGrade(
                        assignment=_parse_int(row[0], "assignment", lineno),
                        grader=row[1],
                        gradee=row[2],
                        score=_parse_float(row[3], "score", lineno),
                        seconds=seconds,
                    )
                )
            except ValueError as e:
                raise ValueError(f"line {lineno}: {e}") from None
    return grades


def read_truth_csv(path) -> dict[tuple[int, str], GroundTruth]:
    """Parse a ground-truth file (staff_score may be empty)."""
    truth: dict[tuple[int, str], GroundTruth] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file, expected header {','.join(TRUTH_HEADER)}") from None
        if header != TRUTH_HEADER:
            raise ValueError(f"{path}: bad header {','.join(header)!r}; expected {','.join(TRUTH_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ValueError(f"line {lineno}: expected 4 cells, got {len(row)}")
            key = (_parse_int(row[0], "assignment", lineno), row[1])
            if key in truth:
                raise ValueError(f"line {lineno}: duplicate ground truth for {key}")
            staff = None if row[2].strip() == "" else _parse_float(row[2], "staff_score", lineno)
            consensus = _parse_float(row[3], "consensus_score", lineno)
            try:
                truth[key] = GroundTruth(consensus_score=consensus, staff_score=staff)
            except ValueError as e:
                raise ValueError(f"line {lineno}: {e}") from None
    return truth


def ingest(grades_path, truth_path=None) -> GradingGraph:
    """Build a validated graph from files; self-grades are dropped with a
    logged count (they never enter inference)."""
    grades = read_grades_csv(grades_path)
    truth = read_truth_csv(truth_path) if truth_path else None
    graph = GradingGraph(grades, ground_truth=truth)
    n_self = sum(1 for g in grades if g.is_self_grade)
    if n_self:
        log.info("excluded %d self-grades at ingestion", n_self)
        kept = [g for g in grades if not g.is_self_grade]
        graph = GradingGraph(
            kept,
            ground_truth=truth,
            submissions={a: graph.submissions(a) for a in graph.assignments},
        )
    return graph


def describe(graph: GradingGraph) -> str:
    """Small per-assignment summary table (submissions, graders, grades)."""
    lines = [f"{'assignment':>10} {'submissions':>12} {'graders':>8} {'grades':>8} {'truth':>6}"]
    total_subs = total_grades = total_truth = 0
    truth = graph.ground_truth
    for a in graph.assignments:
        graders = {g.grader for g in graph.grades_in(a)}
        n_subs = len(graph.submissions(a))
        n_grades = len(graph.grades_in(a))
        n_truth = sum(1 for (ta, _) in truth if ta == a)
        total_subs += n_subs
        total_grades += n_grades
        total_truth += n_truth
        lines.append(f"{a:>10} {n_subs:>12} {len(graders):>8} {n_grades:>8} {n_truth:>6}")
    lines.append(f"{'total':>10} {total_subs:>12} {'':>8} {total_grades:>8} {total_truth:>6}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# emission
# ---------------------------------------------------------------------------


def write_grades_csv(grades: Iterable[PeerGrade], path) -> None:
    grades = list(grades)
    with_seconds = any(g.seconds is not None for g in grades)
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(GRADE_HEADER_SECONDS if with_seconds else GRADE_HEADER)
        for g in grades:
            row = [g.assignment, g.grader, g.gradee, f6(g.score)]
            if with_seconds:
                row.append("" if g.seconds is None else f6(g.seconds))
            w.writerow(row)


def write_truth_csv(truth: Mapping[tuple[int, str], GroundTruth], path) -> None:
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(TRUTH_HEADER)
        for (a, gradee), gt in sorted(truth.items()):
            staff = "" if gt.staff_score is None else f6(gt.staff_score)
            w.writerow([a, gradee, staff, f6(gt.consensus_score)])


def write_latents_csv(latents: TrueLatents, path) -> None:
    keys = sorted(latents.s)
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["assignment", "student", "s_true", "b_true", "tau_true"])
        for key in keys:
            a, student = key
            w.writerow([a, student, f6(latents.s[key]), f6(latents.b[key]), f6(latents.tau[key])])


def _stats_dict(stats: Mapping[tuple[int, str], object]) -> dict:
    out: dict = {}
    for (a, student), st in sorted(stats.items()):
        out.setdefault(str(a), {})[student] = {"mean": st.mean, "var": st.var, "n": st.n}
    return out


def write_summary_json(summary: PosteriorSummary, path) -> None:
    doc = {
        "model": summary.model.value,
        "n_samples": summary.n_samples,
        "s": _stats_dict(summary.s),
        "b": _stats_dict(summary.b),
        "tau": _stats_dict(summary.tau),
    }
    if summary.theta is not None:
        doc["theta"] = {k: {"mean": v.mean, "var": v.var, "n": v.n} for k, v in summary.theta.items()}
    if summary.mh_acceptance is not None:
        doc["mh_acceptance"] = summary.mh_acceptance
    if summary.theta_acceptance is not None:
        doc["theta_acceptance"] = summary.theta_acceptance
    write_json(doc, path)


def write_points_json(points: PointEstimates, path) -> None:
    def plain(d: Mapping[tuple[int, str], float]) -> dict:
        out: dict = {}
        for (a, student), v in sorted(d.items()):
            out.setdefault(str(a), {})[student] = v
        return out

    doc = {
        "model": points.model.value,
        "s": plain(points.s),
        "b": plain(points.b),
        "tau": plain(points.tau),
        "n_iterations": {str(a): n for a, n in points.n_iterations.items()},
        "converged": {str(a): c for a, c in points.converged.items()},
        "log_joint": points.log_joint,
    }
    write_json(doc, path)


def write_trace_csv(trace: TraceRecorder, path) -> None:
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["sweep", "var_kind", "assignment", "student", "value"])
        for sweep_no, kind, a, student, value in trace.rows:
            w.writerow([sweep_no, kind, a, student, f6(value)])


def write_report(reports: Sequence[EvaluationReport], outdir) -> None:
    """report.json plus report.csv with one row per headline metric and one
    column per evaluated approach."""
    outdir = Path(outdir)
    doc = {}
    for rep in reports:
        doc[rep.label] = {
            "metrics": rep.metrics,
            "n_simulations": rep.n_simulations,
            "grades_per_simulation": rep.grades_per_simulation,
            "truth_source": rep.truth_source.value,
            "submissions": {
                f"{s.assignment}/{s.gradee}": {
                    "truth": s.truth,
                    "rmse": float(np.sqrt(np.mean(s.residuals**2))),
                    "std": float(np.std(s.residuals)),
                    "worst": float(s.residuals[np.argmax(np.abs(s.residuals))]),
                }
                for s in rep.submissions
            },
        }
    write_json(doc, outdir / "report.json")
    with open(outdir / "report.csv", "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["metric"] + [rep.label for rep in reports])
        for metric in METRIC_ROWS:
            w.writerow([metric] + [f6(rep.metrics[metric]) for rep in reports])


def write_residuals_csv(reports: Sequence[EvaluationReport], path) -> None:
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["label", "assignment", "gradee", "sim", "estimate", "residual"])
        for rep in reports:
            for sub in rep.submissions:
                for i, (est, res) in enumerate(zip(sub.estimates, sub.residuals)):
                    w.writerow([rep.label, sub.assignment, sub.gradee, i, f6(est), f6(res)])


def write_calibration_csv(report: CalibrationReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["bin_lo", "bin_hi", "delta", "count", "pass_rate"])
        for b in report.bins:
            w.writerow([f6(b.bin_lo), f6(b.bin_hi), f6(b.delta), b.count, f6(b.pass_rate)])


def write_rounds_csv(report: RoundsReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["round", "confident_count", "total"])
        for r in report.rows:
            w.writerow([r.round, r.confident_count, r.total])


def write_binned_table_csv(table: BinnedResidualTable, path) -> None:
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["bin_lo", "bin_hi", "count", "mean_residual", "std_residual", "flagged"])
        for b in table.bins:
            w.writerow([f6(b.lo), f6(b.hi), b.count, f6(b.mean_residual), f6(b.std_residual), int(b.flagged)])


def write_heatmap_csv(hm: ResidualHeatmap, path) -> None:
    n = hm.counts.shape[0]
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["grader_bin_lo", "grader_bin_hi", "gradee_bin_lo", "gradee_bin_hi", "count", "mean_residual_z"])
        for i in range(n):
            for j in range(n):
                w.writerow(
                    [
                        f6(hm.edges[i]), f6(hm.edges[i + 1]),
                        f6(hm.edges[j]), f6(hm.edges[j + 1]),
                        int(hm.counts[i, j]), f6(float(hm.mean_residual_z[i, j])),
                    ]
                )


def write_temporal_csv(report: TemporalCorrelationReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["assignment_prev", "assignment_next", "n_common", "pearson"])
        for p in report.pairs:
            w.writerow([p.assignment_prev, p.assignment_next, p.n_common, f6(p.pearson)])


def write_identifiability_csv(rows: Sequence[IdentifiabilityRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["grades_per_grader", "rmse_baseline", "rmse_pg1_bias", "rmse_pg1", "tau_recovery_pearson"])
        for r in rows:
            w.writerow(
                [
                    r.grades_per_grader,
                    f6(r.rmse_baseline),
                    f6(r.rmse_pg1_bias),
                    f6(r.rmse_pg1),
                    f6(r.tau_recovery_pearson),
                ]
            )
