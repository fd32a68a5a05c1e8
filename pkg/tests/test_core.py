import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from peergrade import (
    GradingGraph,
    GroundTruth,
    Hyperparameters,
    Model,
    PeerGrade,
    PosteriorSummary,
    VariableStat,
    denormalize,
    exclude_self_grades,
    normalize_all,
    resolve_priors,
    zscore_normalize,
)
from conftest import make_graph


class TestPeerGrade:
    def test_rejects_bad_assignment(self):
        with pytest.raises(ValueError, match="assignment"):
            PeerGrade(0, "v", "u", 80.0)

    def test_rejects_empty_ids(self):
        with pytest.raises(ValueError):
            PeerGrade(1, "", "u", 80.0)
        with pytest.raises(ValueError):
            PeerGrade(1, "v", "", 80.0)

    def test_rejects_nonfinite_score(self):
        with pytest.raises(ValueError, match="score"):
            PeerGrade(1, "v", "u", float("nan"))

    def test_rejects_negative_seconds(self):
        with pytest.raises(ValueError, match="seconds"):
            PeerGrade(1, "v", "u", 80.0, seconds=-1.0)

    def test_self_grade_flag(self):
        assert PeerGrade(1, "u", "u", 50.0).is_self_grade
        assert not PeerGrade(1, "v", "u", 50.0).is_self_grade


class TestGradingGraph:
    def test_duplicate_edge_rejected(self):
        with pytest.raises(ValueError, match="duplicate grade"):
            make_graph([(1, "v", "u", 80.0), (1, "v", "u", 70.0)])

    def test_universe_includes_graders_and_gradees(self):
        g = make_graph([(1, "v", "u", 80.0)])
        assert g.submissions(1) == ("u", "v")

    def test_explicit_universe_must_cover_grades(self):
        with pytest.raises(ValueError, match="without submissions"):
            make_graph([(1, "v", "u", 80.0)], submissions={1: ("u",)})

    def test_explicit_universe_allows_empty_assignment(self):
        g = make_graph([(1, "v", "u", 80.0)], submissions={1: ("u", "v"), 2: ()})
        assert g.assignments == (1, 2)
        assert g.submissions(2) == ()

    def test_ground_truth_must_reference_submission(self):
        with pytest.raises(ValueError, match="unknown submission"):
            make_graph([(1, "v", "u", 80.0)], ground_truth={(1, "x"): GroundTruth(consensus_score=70.0)})

    def test_adjacency(self):
        g = make_graph([(1, "v", "u", 80.0), (1, "w", "u", 70.0), (1, "v", "w", 60.0)])
        assert {x.grader for x in g.grades_in(1)} == {"v", "w"}
        assert [x.grader for x in g.graders_of(1, "u")] == ["v", "w"]
        assert [x.gradee for x in g.gradees_of(1, "v")] == ["u", "w"]
        assert list(g.scores_in(1)) == [80.0, 70.0, 60.0]
        assert g.n_grades == 3

    def test_without_received_keeps_universe(self):
        g = make_graph([(1, "v", "u", 80.0), (1, "w", "u", 70.0), (1, "v", "w", 60.0)])
        reduced = g.without_received(1, "u")
        assert len(reduced.grades) == 1
        assert reduced.submissions(1) == g.submissions(1)

    def test_exclude_self_grades(self):
        g = make_graph([(1, "v", "u", 80.0), (1, "u", "u", 99.0)])
        clean, removed = exclude_self_grades(g)
        assert removed == 1
        assert all(not x.is_self_grade for x in clean.grades)
        assert clean.submissions(1) == g.submissions(1)


class TestZscore:
    def test_known_values(self):
        g = make_graph([(1, "a", "u", 60.0), (1, "b", "u", 70.0), (1, "c", "u", 80.0), (1, "d", "u", 90.0)])
        normed, params = zscore_normalize(g, 1)
        assert params.mean == 75.0
        assert params.std == 11.180339887498949
        z = sorted(x.score for x in normed.grades)
        assert z == pytest.approx(
            [-1.3416407864998738, -0.4472135954999579, 0.4472135954999579, 1.3416407864998738]
        )

    def test_two_point_case(self):
        g = make_graph([(1, "a", "u", 70.0), (1, "b", "u", 90.0)])
        normed, params = zscore_normalize(g, 1)
        assert (params.mean, params.std) == (80.0, 10.0)
        assert sorted(x.score for x in normed.grades) == [-1.0, 1.0]

    def test_single_grade_errors(self):
        g = make_graph([(1, "a", "u", 70.0)])
        with pytest.raises(ValueError, match="at least 2 grades"):
            zscore_normalize(g, 1)

    def test_degenerate_errors(self):
        g = make_graph([(1, "a", "u", 70.0), (1, "b", "u", 70.0)])
        with pytest.raises(ValueError, match="degenerate"):
            zscore_normalize(g, 1)

    @given(st.lists(st.floats(5.0, 95.0), min_size=3, max_size=9, unique=True))
    def test_roundtrip(self, scores):
        rows = [(1, f"g{i}", "u", s) for i, s in enumerate(scores)]
        g = make_graph(rows)
        normed, params = normalize_all(g)
        back = [denormalize(x.score, params[1]) for x in normed.grades]
        assert back == pytest.approx([x.score for x in g.grades], abs=1e-9)

    def test_normalized_moments(self):
        g = make_graph([(1, "a", "u", 61.0), (1, "b", "u", 74.5), (1, "c", "w", 88.0)])
        normed, _ = zscore_normalize(g, 1)
        z = np.array([x.score for x in normed.grades])
        assert abs(z.mean()) < 1e-12
        assert np.std(z) == pytest.approx(1.0, abs=1e-12)


class TestHyperparameters:
    def test_defaults_resolve_tau_and_theta(self):
        hp = Hyperparameters()
        assert hp.effective_tau_fixed == pytest.approx(hp.alpha0 / hp.beta0)
        assert hp.effective_theta0 == pytest.approx(hp.alpha0 / hp.beta0)
        assert not hp.is_resolved

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            Hyperparameters(gamma0=0.0)
        with pytest.raises(ValueError):
            Hyperparameters(eta0=-1.0)
        with pytest.raises(ValueError):
            Hyperparameters(beta0=0.0)

    def test_resolve_from_scores(self):
        hp = Hyperparameters().resolve([70.0, 80.0, 90.0])
        assert hp.is_resolved
        assert hp.mu0 == pytest.approx(80.0)
        var = np.var([70.0, 80.0, 90.0])
        assert hp.gamma0 == pytest.approx(1.0 / var)

    def test_explicit_values_survive_resolution(self):
        hp = Hyperparameters(mu0=50.0, gamma0=0.1).resolve([70.0, 80.0])
        assert (hp.mu0, hp.gamma0) == (50.0, 0.1)


class TestResolvePriors:
    def test_data_driven_per_assignment(self):
        g = make_graph([(1, "a", "u", 60.0), (1, "b", "u", 80.0), (2, "a", "u", 90.0), (2, "b", "u", 70.0)])
        res = resolve_priors(g, Hyperparameters())
        assert res[1].mu0 == pytest.approx(70.0)
        assert res[2].mu0 == pytest.approx(80.0)

    def test_normalized_fills_standard_units(self):
        g = make_graph([(1, "a", "u", -1.0), (1, "b", "u", 1.0)])
        res = resolve_priors(g, Hyperparameters(), normalized=True)
        assert (res[1].mu0, res[1].gamma0) == (0.0, 1.0)

    def test_empty_assignment_needs_explicit_priors(self):
        g = make_graph([(1, "a", "u", 60.0), (1, "b", "u", 80.0)], submissions={1: ("a", "b", "u"), 2: ()})
        with pytest.raises(ValueError, match="no grades"):
            resolve_priors(g, Hyperparameters())
        res = resolve_priors(g, Hyperparameters(mu0=75.0, gamma0=0.01))
        assert res[2].mu0 == 75.0


class TestModel:
    def test_from_string(self):
        assert Model.from_string("pg1") is Model.PG1
        assert Model.from_string("pg1bias") is Model.PG1_BIAS
        with pytest.raises(ValueError, match="pg1bias"):
            Model.from_string("pg9")

    def test_has_reliability(self):
        assert Model.PG1.has_reliability
        assert Model.PG2.has_reliability
        assert not Model.PG1_BIAS.has_reliability
        assert not Model.PG3.has_reliability


class TestPosteriorSummary:
    def test_estimate_and_confidence(self):
        summ = PosteriorSummary(model=Model.PG1, s={(1, "u"): VariableStat(mean=80.0, var=4.0, n=100)}, b={}, tau={})
        assert summ.estimate(1, "u") == 80.0
        # delta = 2 sd: erf(2/sqrt(2))
        assert summ.confidence(1, "u", 4.0) == pytest.approx(math.erf(4.0 / (2.0 * math.sqrt(2.0))))

    def test_confidence_rejects_bad_inputs(self):
        summ = PosteriorSummary(model=Model.PG1, s={(1, "u"): VariableStat(mean=80.0, var=0.0, n=100)}, b={}, tau={})
        with pytest.raises(ValueError):
            summ.confidence(1, "u", 5.0)
