import numpy as np
import pytest

from peergrade import EmConfig, GradingGraph, Hyperparameters, Model, PeerGrade, em_infer
from conftest import make_graph

HP = Hyperparameters(mu0=75.0, gamma0=1 / 100, eta0=1 / 25, alpha0=2.0, beta0=18.0)


def linear_map_solution(graph: GradingGraph, hp: Hyperparameters, tau: float):
    """Exact MAP for the fixed-reliability model: the log joint is a quadratic
    in (scores, biases), so the argmax solves one symmetric linear system."""
    assert len(graph.assignments) == 1
    a = graph.assignments[0]
    students = list(graph.submissions(a))
    graders = sorted({g.grader for g in graph.grades})
    n, m = len(students), len(graders)
    si = {u: i for i, u in enumerate(students)}
    bi = {v: n + j for j, v in enumerate(graders)}
    P = np.zeros((n + m, n + m))
    rhs = np.zeros(n + m)
    for i in range(n):
        P[i, i] = hp.gamma0
        rhs[i] = hp.gamma0 * hp.mu0
    for j in range(n, n + m):
        P[j, j] = hp.eta0
    for g in graph.grades:
        i, j = si[g.gradee], bi[g.grader]
        P[i, i] += tau
        P[j, j] += tau
        P[i, j] += tau
        P[j, i] += tau
        rhs[i] += tau * g.score
        rhs[j] += tau * g.score
    x = np.linalg.solve(P, rhs)
    s = {(a, u): x[si[u]] for u in students}
    b = {(a, v): x[bi[v]] for v in graders}
    return s, b


def random_net(n_students: int, grades_each: int, seed: int) -> GradingGraph:
    rng = np.random.default_rng(seed)
    students = [f"s{i:03d}" for i in range(n_students)]
    rows = []
    for i, v in enumerate(students):
        others = [u for u in students if u != v]
        for u in rng.choice(others, size=grades_each, replace=False):
            rows.append((1, v, str(u), float(np.clip(rng.normal(75, 8), 0, 100))))
    return make_graph(rows)


class TestConfig:
    def test_rejects_pg3(self):
        with pytest.raises(ValueError, match="pg1bias and pg1 only"):
            EmConfig(model=Model.PG3)

    def test_rejects_pg2(self):
        with pytest.raises(ValueError):
            EmConfig(model=Model.PG2)

    def test_validation(self):
        with pytest.raises(ValueError):
            EmConfig(model=Model.PG1, max_iterations=0)
        with pytest.raises(ValueError):
            EmConfig(model=Model.PG1, tol=0.0)


class TestFixedReliabilityExactness:
    def test_three_node_matches_linear_solve(self):
        g = make_graph([(1, "a", "b", 81.0), (1, "b", "c", 68.0), (1, "c", "a", 74.0)])
        hp = Hyperparameters(mu0=75.0, gamma0=0.01, eta0=0.04, tau_fixed=0.2)
        pts = em_infer(g, hp, EmConfig(model=Model.PG1_BIAS, tol=1e-14))
        s_ref, b_ref = linear_map_solution(g, hp, tau=0.2)
        for k, v in s_ref.items():
            assert pts.s[k] == pytest.approx(v, abs=1e-8)
        for k, v in b_ref.items():
            assert pts.b[k] == pytest.approx(v, abs=1e-8)

    def test_fifty_node_matches_linear_solve(self):
        g = random_net(50, 4, seed=33)
        hp = Hyperparameters(mu0=75.0, gamma0=0.01, eta0=0.04, tau_fixed=0.15)
        pts = em_infer(g, hp, EmConfig(model=Model.PG1_BIAS, tol=1e-14))
        s_ref, b_ref = linear_map_solution(g, hp, tau=0.15)
        worst = max(abs(pts.s[k] - v) for k, v in s_ref.items())
        worst = max(worst, max(abs(pts.b[k] - v) for k, v in b_ref.items()))
        assert worst < 1e-8


class TestMonotonicity:
    @pytest.mark.parametrize("model", [Model.PG1_BIAS, Model.PG1])
    def test_objective_never_decreases(self, model):
        g = random_net(25, 3, seed=7)
        pts = em_infer(g, HP, EmConfig(model=model))
        trace = pts.objective_trace[1]
        diffs = np.diff(np.asarray(trace))
        assert np.all(diffs >= -1e-9), f"objective decreased by {diffs.min()}"
        assert pts.converged[1]


class TestStationarity:
    def test_pg1_fixed_point(self):
        """At convergence each coordinate block solves its own first-order
        condition; re-applying one exact block update must not move it."""
        g = random_net(20, 3, seed=11)
        pts = em_infer(g, HP, EmConfig(model=Model.PG1, tol=1e-13))
        a = 1
        for u in g.submissions(a):
            received = g.graders_of(a, u)
            p = HP.gamma0
            num = HP.gamma0 * HP.mu0
            for gr in received:
                t = pts.tau[(a, gr.grader)]
                p += t
                num += t * (gr.score - pts.b[(a, gr.grader)])
            assert pts.s[(a, u)] == pytest.approx(num / p, abs=1e-6)
        for (aa, v), tau in pts.tau.items():
            given = g.gradees_of(aa, v)
            rss = sum((gr.score - pts.s[(aa, gr.gradee)] - pts.b[(aa, v)]) ** 2 for gr in given)
            mode = (HP.alpha0 + len(given) / 2 - 1) / (HP.beta0 + rss / 2)
            assert tau == pytest.approx(max(mode, HP.precision_floor), abs=1e-6)


class TestOutputs:
    def test_noise_free_recovery(self):
        """With huge tau_fixed and dense grading, scores land on the observed
        grades and biases on zero."""
        rows = []
        truth = {"a": 70.0, "b": 80.0, "c": 90.0}
        for v in truth:
            for u in truth:
                if u != v:
                    rows.append((1, v, u, truth[u]))
        hp = Hyperparameters(mu0=80.0, gamma0=1e-6, eta0=1.0, tau_fixed=1e6)
        pts = em_infer(make_graph(rows), hp, EmConfig(model=Model.PG1_BIAS, tol=1e-14, max_iterations=2000))
        for u, t in truth.items():
            assert pts.s[(1, u)] == pytest.approx(t, abs=1e-3)
        for v in truth:
            assert pts.b[(1, v)] == pytest.approx(0.0, abs=1e-3)

    def test_log_joint_total(self):
        g = random_net(15, 3, seed=3)
        pts = em_infer(g, HP, EmConfig(model=Model.PG1))
        assert pts.log_joint == pytest.approx(pts.objective_trace[1][-1])

    def test_estimate_accessor(self):
        g = make_graph([(1, "v", "u", 80.0), (1, "w", "u", 74.0)])
        pts = em_infer(g, HP, EmConfig(model=Model.PG1))
        assert pts.estimate(1, "u") == pts.s[(1, "u")]
