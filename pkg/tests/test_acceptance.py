"""Acceptance criteria 1-10, each at its stated tolerance.

Every test records one pass/fail line in ``RESULTS``; the lines are printed in
the pytest terminal summary, or directly when this file is run as a script.
"""
import itertools
import subprocess
import sys
import time
from functools import lru_cache

import numpy as np
import pytest

from _oracles import dd_grid_best_case, random_dd_toy
from ambisddp.ambiguity import best_case_distribution, drr_cut_coefficients, worst_case_distribution
from ambisddp.approx import McCormickApprox, dro_separation_cut, fragment_value
from ambisddp.ddwass import run_dd
from ambisddp.disjunctive import from_msip, hierarchy_relaxation, tight_extended_formulation
from ambisddp.dp import exact_value_dp
from ambisddp.harness import ExperimentSpec, corruption_world, run_corruption_study, run_out_of_sample
from ambisddp.instances import battery, random_instance
from ambisddp.interdiction import MfipParams, gen_mfip_world, grid_network, max_flow, mfip_stage
from ambisddp.lp import solve_lp
from ambisddp.approx import EpigraphApprox
from ambisddp.mip import solve_mip
from ambisddp.model import Cut, MultistageModel, ScenarioSupport, build_subproblem
from ambisddp.sddp import SolverConfig, run, variant_risk

RESULTS = {}
NAMES = {
    1: "oracle convergence", 2: "C/R variant agreement", 3: "risk ordering and radius monotonicity",
    4: "cut validity exhaustion", 5: "McCormick equivalence", 6: "max-flow dualization",
    7: "hull and hierarchy", 8: "decision-dependent cut validity", 9: "out-of-sample direction",
    10: "determinism",
}
SOLVER_VARIANTS = ("drr_c", "drr_r", "dro_c", "dro_r")
SLACK = 1e-6  # directional comparisons: ties within round-off count as holding


def record(k, ok, detail):
    RESULTS[k] = (bool(ok), detail)
    assert ok, f"criterion {k} ({NAMES[k]}): {detail}"


def report_lines():
    return [f"criterion {k:2d} {NAMES[k]:<40s} {'PASS' if ok else 'FAIL'}  {detail}"
            for k, (ok, detail) in sorted(RESULTS.items())]


@lru_cache(maxsize=1)
def battery_runs():
    out = []
    for k, (model, eps) in enumerate(battery()):
        for v in SOLVER_VARIANTS:
            exact = exact_value_dp(model, eps, variant_risk(v))
            t0 = time.perf_counter()
            _, log = run(model, eps, SolverConfig(variant=v, seed=0, max_iters=5000, tol_mip=1e-9))
            out.append((k, v, exact, log.lower_bound, len(log.records), time.perf_counter() - t0, log.status))
    return out


def test_criterion_01_oracle_convergence():
    runs = battery_runs()
    err = max(abs(lb - ex) for _, _, ex, lb, _, _, _ in runs)
    iters = max(r[4] for r in runs)
    secs = max(r[5] for r in runs)
    ok = err <= 1e-4 and iters <= 5000 and secs < 60.0 and all(r[6] == "converged_stall" for r in runs)
    record(1, ok, f"{len(runs)} runs, max |LB-exact| {err:.2e}, max iters {iters}, max time {secs:.1f}s")


def test_criterion_02_variant_agreement():
    lb = {(k, v): r for k, v, _, r, _, _, _ in battery_runs()}
    gaps = [abs(lb[k, a + "_c"] - lb[k, a + "_r"]) for k in range(12) for a in ("drr", "dro")]
    record(2, max(gaps) <= 1e-4, f"max |LB(c)-LB(r)| {max(gaps):.2e} over {len(gaps)} pairs")


def test_criterion_03_risk_ordering():
    worst = 0.0
    ok = True
    for model, eps in battery():
        neutral = exact_value_dp(model)
        drr = [exact_value_dp(model, e, "drr") for e in (0.0, 0.1, 0.5, 2.0)]
        dro = [exact_value_dp(model, e, "dro") for e in (0.0, 0.1, 0.5, 2.0)]
        ok &= abs(drr[0] - neutral) <= 1e-6 and abs(dro[0] - neutral) <= 1e-6
        ok &= all(d <= neutral + 1e-6 for d in drr) and all(d >= neutral - 1e-6 for d in dro)
        ok &= all(np.diff(dro) >= -1e-9) and all(np.diff(drr) <= 1e-9)
        lo, hi = exact_value_dp(model, eps, "drr"), exact_value_dp(model, eps, "dro")
        ok &= lo <= neutral + 1e-9 <= hi + 2e-9
        worst = max(worst, abs(drr[0] - neutral), abs(dro[0] - neutral))
    record(3, ok, f"12 instances, max |value(eps=0) - neutral| {worst:.1e}")


def _random_support(rng, N):
    return ScenarioSupport(np.round(rng.uniform(0, 2, (N, 1)), 1), rng.dirichlet(np.ones(N)))


def test_criterion_04_cut_validity():
    rng = np.random.default_rng(4)
    margin = np.inf
    for _ in range(200):
        d = int(rng.integers(1, 11))
        N = int(rng.integers(1, 5))
        sup = _random_support(rng, N)
        eps = float(rng.choice([0.0, 0.1, 0.5, 2.0]))
        alphas = rng.normal(size=(N, d))
        betas = rng.normal(size=N)
        x_hat = rng.integers(0, 2, d).astype(float)
        drr = drr_cut_coefficients(alphas, betas, x_hat, sup, eps)
        dro, _ = dro_separation_cut([Cut(1, a, b) for a, b in zip(alphas, betas)], x_hat, sup, eps)
        X = np.array(list(itertools.product((0.0, 1.0), repeat=d)))
        vals = X @ alphas.T + betas
        for x, v in zip(X, vals):
            margin = min(margin, best_case_distribution(v, sup, eps)[1] - drr.value(x),
                         worst_case_distribution(v, sup, eps)[1] - dro.value(x))
    record(4, margin >= -1e-7, f"200 tuples, min (exact - cut) {margin:.2e}")


def test_criterion_05_mccormick_equivalence():
    rng = np.random.default_rng(5)
    err = 0.0
    for _ in range(100):
        d = int(rng.integers(1, 5))
        N = int(rng.integers(1, 5))
        sup = _random_support(rng, N)
        eps = float(rng.choice([0.0, 0.1, 0.5, 2.0]))
        alphas = rng.normal(size=(N, d))
        betas = rng.normal(size=N)
        X = np.array(list(itertools.product((0.0, 1.0), repeat=d)))
        floor = float((X @ alphas.T + betas).min()) - 1.0
        approx = McCormickApprox(d, floor, sup, eps)
        for i in range(N):
            approx.add_cut(Cut(1, alphas[i], betas[i], scenario=i))
        for x in X:
            direct = best_case_distribution(alphas @ x + betas, sup, eps)[1]
            err = max(err, abs(fragment_value(approx, x) - direct))
    record(5, err <= 1e-7, f"100 tuples, max |linearized - direct| {err:.2e}")


def test_criterion_06_max_flow_dualization():
    rng = np.random.default_rng(6)
    err = 0.0
    for _ in range(100):
        rows, cols = int(rng.integers(1, 6)), int(rng.integers(2, 5))
        net = grid_network(rows, cols, rng, 0.8)
        caps = rng.integers(1, 60, net.n_finite).astype(float)
        x = (rng.random(net.n_interdictable) < 0.3).astype(float)
        st = mfip_stage(net, caps[None, :], budget=float(net.n_interdictable))
        model = MultistageModel([st], [ScenarioSupport.singleton(caps)], np.zeros(net.n_interdictable))
        sub = build_subproblem(model, 0, np.zeros(net.n_interdictable), 0)
        sub.mip.base.lower[sub.x_cols] = x
        sub.mip.base.upper[sub.x_cols] = x
        inner = solve_mip(sub.mip, 1e-12).objective
        err = max(err, abs(inner - max_flow(net, caps, x)))
    record(6, err <= 1e-6, f"100 grids up to 5x4, max |MIP - augmenting path| {err:.2e}")


def _stage_case(rng, k, d):
    model = random_instance(300 + k, 3, 2, d)
    x_prev = rng.integers(0, 2, d).astype(float)
    approx = EpigraphApprox(d, 0.0)
    cuts = [(np.zeros(d), 0.0)]
    for _ in range(2):
        c = Cut(1, rng.uniform(-3, 1, d), rng.uniform(0, 5))
        approx.add_cut(c)
        cuts.append((c.alpha, c.beta))
    i = int(rng.integers(2))
    mip = solve_mip(build_subproblem(model, 1, x_prev, i, approx).mip, 1e-12).objective
    return model, x_prev, cuts, i, mip


def test_criterion_07_hull_and_hierarchy():
    rng = np.random.default_rng(7)
    hull_err = 0.0
    for k in range(100):
        d = int(rng.integers(1, 5))
        model, x_prev, cuts, i, mip = _stage_case(rng, k, d)
        hull = solve_lp(tight_extended_formulation(from_msip(model).stages[1], cuts, x_prev, i)).objective
        hull_err = max(hull_err, abs(hull - mip))
    chain_ok, top_err = True, 0.0
    for k in range(50):
        d = int(rng.integers(1, 5))
        model, x_prev, cuts, i, mip = _stage_case(rng, 1000 + k, d)
        vals = [solve_lp(hierarchy_relaxation(model.stages[1], cuts, x_prev, i, s)).objective
                for s in range(d + 1)]
        chain_ok &= bool(np.all(np.diff(vals) >= -1e-9))
        top_err = max(top_err, abs(vals[-1] - mip))
    ok = hull_err <= 1e-6 and chain_ok and top_err <= 1e-6
    record(7, ok, f"hull vs MIP {hull_err:.1e} (100 stages); chain monotone {chain_ok}, "
                  f"top level vs MIP {top_err:.1e} (50 stages)")


def test_criterion_08_decision_dependent_cuts():
    margin = np.inf
    n_cuts = 0
    for seed in range(5):
        rng = np.random.default_rng(800 + seed)
        toys = [random_dd_toy(rng, d=2, N=2) for _ in range(3)]
        stages = [t[0] for t in toys]
        sups = [t[1] for t in toys]
        rads = [t[2] for t in toys]
        cuts, _ = run_dd(stages, sups, rads, np.zeros(2), iterations=6, seed=seed)
        # more next-stage cuts only raise the value, so the final lists give valid references
        for t in range(2):
            nxt = cuts[t + 1] if t + 1 < 2 else [(np.zeros(2), 0.0)]
            for x_prev in itertools.product((0.0, 1.0), repeat=2):
                oracle = dd_grid_best_case(stages[t + 1], sups[t + 1], rads[t + 1], nxt, np.array(x_prev))
                for pi, g in cuts[t][1:]:
                    margin = min(margin, oracle - (pi @ np.array(x_prev) + g))
            n_cuts += len(cuts[t]) - 1
    record(8, margin >= -1e-4, f"{n_cuts} cuts at 4 states, 1e4-point grid, min (oracle - cut) {margin:.2e}")


def test_criterion_09_out_of_sample_direction():
    dro_wins = drr_wins = 0
    for seed in range(5):
        p = MfipParams(rows=3, cols=3, horizon=3, n_scen=10, capacity_law="truncnorm", cap_mean=30.0,
                       cap_sd=5.0, cap_lo=10.0, cap_hi=50.0, seed=seed)
        world = gen_mfip_world(p)
        spec = ExperimentSpec(oos_paths=500, oos_seed=seed, stall_iters=20)
        pols = {key: run(world.model, key[1], spec.config(key[0]))
                for key in [("neutral", 0.0), ("dro_c", 0.1), ("dro_c", 0.3), ("drr_c", 0.1), ("drr_c", 0.5)]}
        rep = run_out_of_sample(world, spec, pols)
        n90, n5 = rep.percentile("neutral", 0.0, 90), rep.percentile("neutral", 0.0, 5)
        dro_wins += all(rep.percentile("dro_c", e, 90) <= n90 + SLACK for e in (0.1, 0.3))
        drr_wins += all(rep.percentile("drr_c", e, 5) <= n5 + SLACK for e in (0.1, 0.5))
    corr_wins = 0
    gaps = []
    for seed in range(5):
        rep = run_corruption_study(corruption_world(seed), [0.4], [40.0], ("drr_c", "dro_c"),
                                   n_eval=1000, seed=seed)
        drr, dro = rep.row(0.4, 40.0, "drr_c").clean_mean, rep.row(0.4, 40.0, "dro_c").clean_mean
        corr_wins += drr <= dro + SLACK
        gaps.append(dro - drr)
    ok = dro_wins >= 4 and drr_wins >= 4 and corr_wins >= 4
    record(9, ok, f"DRO p90 <= neutral in {dro_wins}/5, DRR p5 <= neutral in {drr_wins}/5, "
                  f"corrupted DRR mean <= DRO in {corr_wins}/5 (gaps {', '.join(f'{g:.1f}' for g in gaps)})")


def _cli_solve(inst, out, threads):
    cmd = [sys.executable, "-m", "ambisddp.cli", "solve", str(inst), "--variant", "drr-c", "--seed", "3",
           "--stall-iters", "30", "--threads", str(threads), "--out", str(out)]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    return (out / "bounds.csv").read_bytes()


def test_criterion_10_determinism(tmp_path):
    from ambisddp.ambiguity import AmbiguitySpec
    from ambisddp.io import save_model

    model, eps = battery()[9]
    inst = tmp_path / "inst.json"
    save_model(inst, model, AmbiguitySpec("wasserstein_finite", eps))
    a = _cli_solve(inst, tmp_path / "a", 1)
    b = _cli_solve(inst, tmp_path / "b", 1)
    c = _cli_solve(inst, tmp_path / "c", 4)
    d = _cli_solve(inst, tmp_path / "d", 4)
    last = lambda csv: csv.decode().strip().splitlines()[-1].split(",")[1]
    ok = a == b and c == d and last(a) == last(c)
    record(10, ok, f"same threads byte-identical: {a == b and c == d}; LB 1 vs 4 threads {last(a)} / {last(c)}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
