"""End-to-end acceptance checks with pinned tolerances.

Each test prints one machine-readable line, visible in normal pytest runs:

    ACCEPTANCE <n> PASS|FAIL: <measured values vs thresholds>

The thresholds here are contractual; loosening them to make a red test green
is not an option.
"""
import filecmp
import math
import shutil
import subprocess
import sys
import time

import numpy as np
import pytest
from scipy import stats

from peergrade import (
    DELTAS,
    EmConfig,
    EvalConfig,
    GibbsConfig,
    GradingGraph,
    GridSpec,
    Hyperparameters,
    LatentState,
    Model,
    PeerGrade,
    SynthConfig,
    bias_temporal_correlation,
    calibration_experiment,
    cond_sample_bias,
    cond_sample_bias_chain,
    cond_sample_reliability,
    cond_sample_score,
    em_infer,
    evaluate_baseline,
    evaluate_model,
    generate,
    gibbs_infer,
    identifiability_experiment,
    oracle_posterior,
    rounds_experiment,
)
from conftest import make_graph
from test_em import linear_map_solution, random_net


def report(capsys, n: int, ok: bool, detail: str) -> None:
    with capsys.disabled():
        print(f"\nACCEPTANCE {n} {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, f"criterion {n}: {detail}"


# ---------------------------------------------------------------------------
# 1. Gibbs vs grid oracle on tiny networks
# ---------------------------------------------------------------------------

def _oracle_net(model: Model, seed: int):
    """A <=4-gridded-latent network per model, with priors tight enough that
    50k retained sweeps put the Monte Carlo error well inside the tolerance."""
    rng = np.random.default_rng(seed)
    common = dict(total_sweeps=50_500, burn_in=500, seed=seed)
    if model is Model.PG1_BIAS:
        z = 75.0 + rng.normal(0.0, 4.0, size=2)
        graph = make_graph([(1, "u", "v", float(z[0])), (1, "v", "u", float(z[1]))])
        hp = Hyperparameters(mu0=75.0, gamma0=1 / 16, eta0=1 / 4, tau_fixed=0.25)
        spec = GridSpec(points_per_dim=81, prior_std_span=6.0)
        cfg = GibbsConfig(model=model, **common)
    elif model is Model.PG1:
        z = 75.0 + rng.normal(0.0, 4.0, size=2)
        graph = make_graph([(1, "v", "u1", float(z[0])), (1, "v", "u2", float(z[1]))])
        hp = Hyperparameters(mu0=75.0, gamma0=1 / 16, eta0=1 / 4, alpha0=3.0, beta0=8.0)
        spec = GridSpec(points_per_dim=81, tau_points=61, prior_std_span=6.0,
                        tau_quantile_range=(1e-6, 1 - 1e-6))
        cfg = GibbsConfig(model=model, **common)
    elif model is Model.PG2:
        z = float(rng.normal(0.0, 1.0))
        graph = GradingGraph([PeerGrade(1, "v", "u1", z)],
                             submissions={1: ("u1", "v"), 2: ()})
        hp = Hyperparameters(mu0=0.0, gamma0=1.0, eta0=1.0, omega0=2.0, alpha0=3.0, beta0=3.0)
        spec = GridSpec(points_per_dim=81, tau_points=61, prior_std_span=6.0,
                        tau_quantile_range=(1e-6, 1 - 1e-6))
        cfg = GibbsConfig(model=model, assume_normalized=True, **common)
    else:
        z = 75.0 + rng.normal(0.0, 4.0, size=2)
        graph = make_graph([(1, "u", "v", float(z[0])), (1, "v", "u", float(z[1]))])
        hp = Hyperparameters(mu0=75.0, gamma0=1 / 16, eta0=1 / 4, theta0=0.05, theta1=0.003)
        spec = GridSpec(points_per_dim=81, prior_std_span=6.0)
        cfg = GibbsConfig(model=model, sample_theta=False, **common)
    return graph, hp, spec, cfg


def test_01_gibbs_matches_grid_oracle(capsys):
    t0 = time.time()
    worst_dmean = 0.0
    worst_dvar = 0.0
    nets = 0
    for model in (Model.PG1_BIAS, Model.PG1, Model.PG2, Model.PG3):
        for seed in range(1, 6):
            graph, hp, spec, cfg = _oracle_net(model, seed)
            want = oracle_posterior(graph, hp, model, grid=spec,
                                    assume_normalized=(model is Model.PG2))
            got = gibbs_infer(graph, hp, cfg)
            assert got.n_samples == 50_000
            for kind in ("s", "b", "tau"):
                w, g = getattr(want, kind), getattr(got, kind)
                assert set(w) == set(g), f"{model.value} {kind} latents differ"
                for key in w:
                    worst_dmean = max(worst_dmean, abs(w[key].mean - g[key].mean))
                    if w[key].var > 0:
                        worst_dvar = max(
                            worst_dvar, abs(w[key].var - g[key].var) / w[key].var)
            nets += 1
    elapsed = time.time() - t0
    ok = worst_dmean <= 0.05 and worst_dvar <= 0.10 and elapsed <= 300.0
    report(capsys, 1, ok,
           f"{nets} nets x 50000 retained sweeps: worst |dmean|={worst_dmean:.4f} "
           f"(<=0.05), worst var rel err={worst_dvar * 100:.2f}% (<=10%), "
           f"{elapsed:.0f}s (<=300s)")


# ---------------------------------------------------------------------------
# 2. KS tests for every closed-form conditional sampler
# ---------------------------------------------------------------------------

def _ks_configs():
    """Three conditioning configurations per sampler, each paired with its
    hand-derived conditional distribution."""
    hp = Hyperparameters(mu0=75.0, gamma0=0.01, eta0=0.04, alpha0=2.0, beta0=18.0)
    graph = make_graph([
        (1, "v", "u", 80.0), (1, "w", "u", 71.0),
        (1, "v", "p", 68.0), (1, "q", "r", 77.0),
    ])
    state = LatentState(
        s={(1, k): m for k, m in
           [("u", 78.0), ("p", 70.0), ("r", 76.0), ("v", 74.0), ("w", 72.0), ("q", 75.0)]},
        b={(1, "v"): 1.5, (1, "w"): -0.8, (1, "q"): 0.4, (1, "x"): 0.0},
        tau={(1, "v"): 0.2, (1, "w"): 0.12, (1, "q"): 0.3, (1, "x"): 0.1},
    )
    tv, tw = 0.2, 0.12
    bv, bw = 1.5, -0.8
    configs = []

    # scores: 2 grades received / 1 / none (prior)
    p = hp.gamma0 + tv + tw
    m = (hp.gamma0 * hp.mu0 + tv * (80.0 - bv) + tw * (71.0 - bw)) / p
    configs.append(("score/2-grades",
                    lambda r: cond_sample_score((1, "u"), state, graph, hp, r),
                    stats.norm(m, math.sqrt(1 / p))))
    p1 = hp.gamma0 + tv
    m1 = (hp.gamma0 * hp.mu0 + tv * (68.0 - bv)) / p1
    configs.append(("score/1-grade",
                    lambda r: cond_sample_score((1, "p"), state, graph, hp, r),
                    stats.norm(m1, math.sqrt(1 / p1))))
    configs.append(("score/prior-only",
                    lambda r: cond_sample_score((1, "v"), state, graph, hp, r),
                    stats.norm(hp.mu0, math.sqrt(1 / hp.gamma0))))

    # biases: 2 grades given / 1 / none (prior)
    pb = hp.eta0 + 2 * tv
    mb = tv * ((80.0 - 78.0) + (68.0 - 70.0)) / pb
    configs.append(("bias/2-grades",
                    lambda r: cond_sample_bias((1, "v"), state, graph, hp, r),
                    stats.norm(mb, math.sqrt(1 / pb))))
    pb1 = hp.eta0 + 0.3
    mb1 = 0.3 * (77.0 - 76.0) / pb1
    configs.append(("bias/1-grade",
                    lambda r: cond_sample_bias((1, "q"), state, graph, hp, r),
                    stats.norm(mb1, math.sqrt(1 / pb1))))
    configs.append(("bias/prior-only",
                    lambda r: cond_sample_bias((1, "x"), state, graph, hp, r),
                    stats.norm(0.0, math.sqrt(1 / hp.eta0))))

    # reliabilities: Gamma(alpha0 + n/2, beta0 + rss/2)
    rss2 = (80.0 - 78.0 - bv) ** 2 + (68.0 - 70.0 - bv) ** 2
    configs.append(("reliability/2-grades",
                    lambda r: cond_sample_reliability((1, "v"), state, graph, hp, r),
                    stats.gamma(hp.alpha0 + 1.0, scale=1 / (hp.beta0 + rss2 / 2))))
    rss1 = (77.0 - 76.0 - 0.4) ** 2
    configs.append(("reliability/1-grade",
                    lambda r: cond_sample_reliability((1, "q"), state, graph, hp, r),
                    stats.gamma(hp.alpha0 + 0.5, scale=1 / (hp.beta0 + rss1 / 2))))
    configs.append(("reliability/prior-only",
                    lambda r: cond_sample_reliability((1, "x"), state, graph, hp, r),
                    stats.gamma(hp.alpha0, scale=1 / hp.beta0)))

    # bias chain: anchored first link / interior / final assignment
    hpc = Hyperparameters(mu0=0.0, gamma0=1.0, eta0=1.0, omega0=2.0, alpha0=2.0, beta0=2.0)
    cgraph = make_graph([(1, "v", "u", 0.5), (2, "v", "u", -0.3), (3, "v", "u", 0.2)])
    cstate = LatentState(
        s={(1, "u"): 0.2, (2, "u"): -0.1, (3, "u"): 0.05,
           (1, "v"): 0.0, (2, "v"): 0.0, (3, "v"): 0.0},
        b={(1, "v"): 0.4, (2, "v"): -0.2, (3, "v"): 0.1},
        tau={(1, "v"): 1.5, (2, "v"): 1.5, (3, "v"): 1.5},
    )
    pc = hpc.eta0 + hpc.omega0 + 1.5
    mc = (hpc.omega0 * (-0.2) + 1.5 * (0.5 - 0.2)) / pc
    configs.append(("chain/anchor",
                    lambda r: cond_sample_bias_chain("v", 1, cstate, cgraph, hpc, r),
                    stats.norm(mc, math.sqrt(1 / pc))))
    pm = 2 * hpc.omega0 + 1.5
    mm = (hpc.omega0 * (0.4 + 0.1) + 1.5 * (-0.3 - (-0.1))) / pm
    configs.append(("chain/interior",
                    lambda r: cond_sample_bias_chain("v", 2, cstate, cgraph, hpc, r),
                    stats.norm(mm, math.sqrt(1 / pm))))
    pe = hpc.omega0 + 1.5
    me = (hpc.omega0 * (-0.2) + 1.5 * (0.2 - 0.05)) / pe
    configs.append(("chain/final",
                    lambda r: cond_sample_bias_chain("v", 3, cstate, cgraph, hpc, r),
                    stats.norm(me, math.sqrt(1 / pe))))
    return configs


def test_02_conditional_samplers_pass_ks(capsys):
    n_draws = 100_000
    alpha = 0.01
    worst = (1.0, "")
    for i, (name, draw, dist) in enumerate(_ks_configs()):
        rng = np.random.default_rng(9000 + i)
        samples = np.array([draw(rng) for _ in range(n_draws)])
        p = stats.kstest(samples, dist.cdf).pvalue
        if p < worst[0]:
            worst = (p, name)
        assert p >= alpha, f"{name}: KS p={p:.4g} < {alpha}"
    report(capsys, 2, worst[0] >= alpha,
           f"12 sampler configs x {n_draws} draws: min KS p-value={worst[0]:.3f} "
           f"at {worst[1]} (>=0.01)")


# ---------------------------------------------------------------------------
# 3. EM exactness against the direct linear MAP solve
# ---------------------------------------------------------------------------

def test_03_em_matches_linear_map(capsys):
    worst = 0.0
    min_diff = math.inf
    for graph, tau in (
        (make_graph([(1, "a", "b", 82.0), (1, "b", "c", 64.0), (1, "c", "a", 75.0)]), 0.2),
        (random_net(50, 4, seed=33), 0.15),
    ):
        hp = Hyperparameters(mu0=75.0, gamma0=0.01, eta0=0.04, tau_fixed=tau)
        pts = em_infer(graph, hp, EmConfig(model=Model.PG1_BIAS, tol=1e-14))
        s_ref, b_ref = linear_map_solution(graph, hp, tau=tau)
        worst = max(worst, max(abs(pts.s[k] - v) for k, v in s_ref.items()))
        worst = max(worst, max(abs(pts.b[k] - v) for k, v in b_ref.items()))
        diffs = np.diff(np.asarray(pts.objective_trace[1]))
        min_diff = min(min_diff, float(diffs.min()) if diffs.size else 0.0)
    ok = worst < 1e-8 and min_diff >= -1e-9
    report(capsys, 3, ok,
           f"3-node and 50-node nets: max |EM - linear solve|={worst:.2e} (<1e-8), "
           f"min per-iteration objective change={min_diff:.2e} (>=-1e-9)")


# ---------------------------------------------------------------------------
# 4. Gibbs and EM agree on evaluation RMSE at scale
# ---------------------------------------------------------------------------

def test_04_gibbs_em_rmse_agree(capsys, hci_shaped):
    graph, _ = hci_shaped
    hp = Hyperparameters(mu0=75.0, gamma0=1.0 / 100.0, theta0=0.02, theta1=0.0012)
    ecfg = EvalConfig(n_simulations=3000, grades_per_simulation=4, seed=17)
    t0 = time.time()
    rg = evaluate_model(graph, hp, Model.PG1, ecfg,
                        gibbs_cfg=GibbsConfig(model=Model.PG1, total_sweeps=800,
                                              burn_in=80, seed=5))
    re_ = evaluate_model(graph, hp, Model.PG1, ecfg, engine="em",
                         em_cfg=EmConfig(model=Model.PG1))
    elapsed = time.time() - t0
    rel = abs(rg.rmse - re_.rmse) / re_.rmse
    ok = rel <= 0.02 and elapsed <= 600.0
    report(capsys, 4, ok,
           f"gibbs RMSE={rg.rmse:.4f}, em RMSE={re_.rmse:.4f}, rel gap={rel * 100:.2f}% "
           f"(<=2%), {elapsed:.0f}s (<=600s)")


# ---------------------------------------------------------------------------
# 5. Model beats the median baseline by >=20% across seeds
# ---------------------------------------------------------------------------

def test_05_rmse_beats_baseline(capsys):
    reductions = []
    for seed in (0, 1, 2):
        cfg = SynthConfig(n_students=3600, n_assignments=1, grades_per_grader=4,
                          n_ground_truth=3, super_grades=160, model=Model.PG1, seed=seed)
        graph, _ = generate(cfg)
        ecfg = EvalConfig(n_simulations=3000, grades_per_simulation=4, seed=17)
        rb = evaluate_baseline(graph, ecfg)
        rg = evaluate_model(graph, cfg.hp, Model.PG1, ecfg,
                            gibbs_cfg=GibbsConfig(model=Model.PG1, total_sweeps=800,
                                                  burn_in=80, seed=5))
        reductions.append(1.0 - rg.rmse / rb.rmse)
    ok = all(r >= 0.20 for r in reductions)
    report(capsys, 5, ok,
           "RMSE reduction vs median baseline over seeds 0..2: "
           + ", ".join(f"{r * 100:.1f}%" for r in reductions) + " (each >=20%)")


# ---------------------------------------------------------------------------
# 6. Five sampled grades beat four, majority over simulation seeds
# ---------------------------------------------------------------------------

def test_06_five_grades_beat_four(capsys, hci_shaped):
    graph, _ = hci_shaped
    hp = Hyperparameters(mu0=75.0, gamma0=1.0 / 100.0, theta0=0.02, theta1=0.0012)
    gcfg = GibbsConfig(model=Model.PG1, total_sweeps=800, burn_in=80, seed=5)
    wins = 0
    pairs = []
    for seed in range(10, 15):
        r4 = evaluate_model(graph, hp, Model.PG1,
                            EvalConfig(n_simulations=3000, grades_per_simulation=4, seed=seed),
                            gibbs_cfg=gcfg)
        r5 = evaluate_model(graph, hp, Model.PG1,
                            EvalConfig(n_simulations=3000, grades_per_simulation=5, seed=seed),
                            gibbs_cfg=gcfg)
        wins += r5.rmse <= r4.rmse
        pairs.append(f"{r4.rmse:.3f}->{r5.rmse:.3f}")
    ok = wins >= 3
    report(capsys, 6, ok,
           f"5-grade RMSE <= 4-grade RMSE in {wins}/5 simulation seeds "
           f"(majority needed): {', '.join(pairs)}")


# ---------------------------------------------------------------------------
# 7. Reliability identifiability grows with grades per grader
# ---------------------------------------------------------------------------

def test_07_reliability_identifiability(capsys):
    base = SynthConfig(n_students=500, n_assignments=1, grades_per_grader=4,
                       n_ground_truth=3, super_grades=40, model=Model.PG1, seed=0)
    rows = identifiability_experiment(
        base, grade_counts=(4, 20),
        eval_cfg=EvalConfig(n_simulations=3000, grades_per_simulation=4, seed=17),
        gibbs_cfg=GibbsConfig(model=Model.PG1, total_sweeps=800, burn_in=80, seed=5),
    )
    r4, r20 = rows
    model_gap = abs(r4.rmse_pg1 - r4.rmse_pg1_bias)
    baseline_gap = r4.rmse_baseline - r4.rmse_pg1_bias
    ok = (r20.tau_recovery_pearson > r4.tau_recovery_pearson
          and model_gap < 0.25 * baseline_gap)
    report(capsys, 7, ok,
           f"tau recovery Pearson {r4.tau_recovery_pearson:.3f}@4 -> "
           f"{r20.tau_recovery_pearson:.3f}@20 (strictly up); model gap at 4 = "
           f"{model_gap:.3f} vs 25% of baseline gap = {0.25 * baseline_gap:.3f}")


# ---------------------------------------------------------------------------
# 8. Calibration stays conservative in every well-populated bin
# ---------------------------------------------------------------------------

def test_08_calibration_conservative(capsys, hci_shaped):
    graph, _ = hci_shaped
    hp = Hyperparameters(mu0=75.0, gamma0=1.0 / 100.0, theta0=0.02, theta1=0.0012)
    assert DELTAS == (5.0, 7.0, 10.0)
    rep = calibration_experiment(
        graph, hp, Model.PG1,
        EvalConfig(n_simulations=3000, grades_per_simulation=4, seed=17),
        engine="gibbs",
        gibbs_cfg=GibbsConfig(model=Model.PG1, total_sweeps=800, burn_in=80, seed=5),
    )
    checked = 0
    worst = math.inf
    for b in rep.bins:
        if b.count < 500:
            continue
        checked += 1
        se = math.sqrt(b.bin_lo * (1.0 - b.bin_lo) / b.count)
        margin = b.pass_rate - (b.bin_lo - 2.0 * se)
        worst = min(worst, margin)
    ok = checked > 0 and worst >= 0.0
    report(capsys, 8, ok,
           f"{checked} bins with >=500 predictions over deltas {DELTAS}: "
           f"worst pass-rate margin above (bin lower bound - 2 SE) = {worst:+.4f} (>=0)")


# ---------------------------------------------------------------------------
# 9. Confident-submission counts grow with grading rounds
# ---------------------------------------------------------------------------

def test_09_rounds_monotone(capsys):
    seeds = (0, 1, 2)
    counts = []
    for seed in seeds:
        cfg = SynthConfig(n_students=240, n_assignments=1, grades_per_grader=4,
                          n_ground_truth=3, super_grades=40, model=Model.PG1, seed=seed)
        graph, _ = generate(cfg)
        rep = rounds_experiment(
            graph, cfg.hp, Model.PG1,
            gibbs_cfg=GibbsConfig(model=Model.PG1, total_sweeps=800, burn_in=80, seed=seed),
            delta=10.0, threshold=0.9, max_rounds=5,
        )
        counts.append([r.confident_count for r in rep.rows])
    k_max = min(len(c) for c in counts)
    verdicts = []
    ok = True
    for k in range(k_max - 1):
        up = sum(c[k + 1] >= c[k] for c in counts)
        verdicts.append(f"k{k + 1}->k{k + 2}: {up}/{len(seeds)}")
        ok = ok and up * 2 > len(seeds)
    report(capsys, 9, ok,
           "non-decreasing confident counts (majority per transition): "
           + "; ".join(verdicts) + f"; counts={counts}")


# ---------------------------------------------------------------------------
# 10. Chain-model data shows the analytic lag-1 bias correlation
# ---------------------------------------------------------------------------

def test_10_temporal_bias_correlation(capsys):
    hp = Hyperparameters(mu0=75.0, gamma0=1 / 100, eta0=1 / 25, omega0=1 / 25,
                         alpha0=2.0, beta0=8.0)
    cfg = SynthConfig(n_students=2000, n_assignments=2, grades_per_grader=6,
                      n_ground_truth=0, super_grades=0, model=Model.PG2, hp=hp, seed=0)
    graph, _ = generate(cfg)
    v1 = 1.0 / hp.eta0
    analytic = math.sqrt(v1 / (v1 + 1.0 / hp.omega0))
    est = {}
    for a in graph.assignments:
        sub = GradingGraph([g for g in graph.grades if g.assignment == a],
                           submissions={a: graph.submissions(a)})
        summary = gibbs_infer(sub, hp, GibbsConfig(model=Model.PG1, total_sweeps=800,
                                                   burn_in=80, seed=3))
        for key, stat in summary.b.items():
            est[key] = stat.mean
    rep = bias_temporal_correlation(est)
    diff = abs(rep.pooled - analytic)
    ok = diff <= 0.10
    report(capsys, 10, ok,
           f"2000 students x 2 assignments: recovered lag-1 Pearson={rep.pooled:.3f} "
           f"vs analytic {analytic:.3f}, |diff|={diff:.3f} (<=0.10)")


# ---------------------------------------------------------------------------
# 11. CLI determinism: identical bytes across repeats and thread counts
# ---------------------------------------------------------------------------

def _run_cli(args) -> None:
    exe = shutil.which("peergrade")
    cmd = [exe] + args if exe else [
        sys.executable, "-c",
        "import sys; from peergrade.cli import main; sys.exit(main(sys.argv[1:]))",
    ] + args
    proc = subprocess.run(cmd, capture_output=True, text=True, timeout=600)
    assert proc.returncode == 0, proc.stderr


def _dirs_identical(a, b) -> list[str]:
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    return [n for n in names if not filecmp.cmp(a / n, b / n, shallow=False)]


def test_11_cli_byte_determinism(capsys, tmp_path):
    data = tmp_path / "data"
    _run_cli(["synth", "--students", "120", "--grades-per-grader", "4", "--gt", "2",
              "--super-grades", "20", "--seed", "11", "--out", str(data)])
    base = ["evaluate", "--grades", str(data / "grades.csv"),
            "--truth", str(data / "truth.csv"), "--model", "pg1",
            "--sweeps", "300", "--burnin", "50", "--sims", "400", "--seed", "3",
            "--dump-residuals"]
    infer = ["infer", "--grades", str(data / "grades.csv"), "--model", "pg1",
             "--sweeps", "300", "--burnin", "50", "--seed", "3"]
    for name, args in (("evalA", base + ["--threads", "1"]),
                       ("evalB", base + ["--threads", "1"]),
                       ("evalT8", base + ["--threads", "8"]),
                       ("inferA", infer), ("inferB", infer)):
        _run_cli(args + ["--out", str(tmp_path / name)])
    bad = (_dirs_identical(tmp_path / "evalA", tmp_path / "evalB")
           + _dirs_identical(tmp_path / "evalA", tmp_path / "evalT8")
           + _dirs_identical(tmp_path / "inferA", tmp_path / "inferB"))
    n = len(list((tmp_path / "evalA").iterdir())) + len(list((tmp_path / "inferA").iterdir()))
    report(capsys, 11, not bad,
           f"evaluate repeated, threads 1 vs 8, and infer repeated: "
           f"{n} output files byte-identical" + (f"; MISMATCH in {bad}" if bad else ""))


# ---------------------------------------------------------------------------
# 12. Wall-clock bounds at full scale
# ---------------------------------------------------------------------------

def test_12_runtime_bounds(capsys, hci_shaped):
    graph, _ = hci_shaped
    hp = Hyperparameters(mu0=75.0, gamma0=1.0 / 100.0, theta0=0.02, theta1=0.0012)
    t0 = time.time()
    gibbs_infer(graph, hp, GibbsConfig(model=Model.PG1, total_sweeps=800, burn_in=80, seed=5))
    t_gibbs = time.time() - t0
    t0 = time.time()
    em_infer(graph, hp, EmConfig(model=Model.PG1))
    t_em = time.time() - t0
    ok = t_gibbs <= 300.0 and t_em <= 10.0
    report(capsys, 12, ok,
           f"3600-student net: 800-sweep Gibbs {t_gibbs:.1f}s (<=300s), "
           f"EM {t_em:.1f}s (<=10s)")
