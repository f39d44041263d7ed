"""Experiment orchestration: training sweeps, out-of-sample evaluation, corruption study.

Every evaluated path is drawn once and shared by all policies, so differences
between policies are not sampling noise. CSV floats use 9 significant digits.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ModelError
from .interdiction import (MfipParams, MfipWorld, critical_arcs, corrupt_samples, gen_mfip_world,
                           mean_capacities, two_path_network)
from .sddp import SolverConfig, evaluate_policy_path, normalize_variant, run, sample_path

DEFAULT_PERCENTILES = (5.0, 10.0, 50.0, 90.0, 95.0)


def nearest_rank(values, q: float) -> float:
    """Smallest value with at least ``q`` percent of the sample at or below it."""
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        raise ModelError("no values")
    if not 0.0 < q < 100.0:
        raise ModelError("percentiles must lie in (0, 100)")
    k = max(1, math.ceil(q / 100.0 * v.size - 1e-9))
    return float(v[k - 1])


def _fmt(x) -> str:
    return f"{float(x):.9g}"


@dataclass
class ExperimentSpec:
    variants: list = field(default_factory=lambda: ["neutral"])
    epsilons: list = field(default_factory=lambda: [0.0])
    oos_paths: int = 500
    oos_seed: int = 0
    percentiles: tuple = DEFAULT_PERCENTILES
    train_seed: int = 0
    max_iters: int = 5000
    stall_iters: int = 100
    threads: int = 1
    out_dir: str | None = None

    def __post_init__(self):
        self.variants = [normalize_variant(v) for v in self.variants]
        if self.oos_paths < 1:
            raise ModelError("oos_paths must be at least 1")
        if any(not 0.0 < q < 100.0 for q in self.percentiles):
            raise ModelError("percentiles must lie in (0, 100)")

    def grid(self):
        """``(variant, epsilon)`` pairs; the neutral variant runs once at epsilon 0."""
        out = []
        for v in self.variants:
            for e in ([0.0] if v == "neutral" else self.epsilons):
                out.append((v, float(e)))
        return out

    def config(self, variant) -> SolverConfig:
        return SolverConfig(variant=variant, seed=self.train_seed, max_iters=self.max_iters,
                            stall_iters=self.stall_iters, threads=self.threads)


@dataclass
class OosReport:
    percentiles: tuple
    objectives: dict = field(default_factory=dict)

    def percentile(self, variant, epsilon, q) -> float:
        return nearest_rank(self.objectives[(variant, float(epsilon))], q)

    def mean(self, variant, epsilon) -> float:
        return float(np.mean(self.objectives[(variant, float(epsilon))]))

    def oos_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["path", "variant", "epsilon", "objective"])
        for (v, e), objs in self.objectives.items():
            for k, o in enumerate(objs):
                w.writerow([k, v, _fmt(e), _fmt(o)])
        return buf.getvalue()

    def summary_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["variant", "epsilon", "mean"] + [f"p{q:g}" for q in self.percentiles])
        for (v, e), objs in self.objectives.items():
            w.writerow([v, _fmt(e), _fmt(np.mean(objs))] + [_fmt(nearest_rank(objs, q)) for q in self.percentiles])
        return buf.getvalue()

    def write(self, out_dir):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "oos.csv").write_text(self.oos_csv(), encoding="utf-8")
        (out / "summary.csv").write_text(self.summary_csv(), encoding="utf-8")


def train_policies(model, spec: ExperimentSpec) -> dict:
    """``{(variant, epsilon): (policy, log)}`` over the experiment grid."""
    return {(v, e): run(model, e, spec.config(v)) for v, e in spec.grid()}


def run_out_of_sample(world, spec: ExperimentSpec, policies=None) -> OosReport:
    """Evaluate trained policies on ``spec.oos_paths`` fresh paths.

    ``world`` is an ``MfipWorld`` (paths from its generating law) or a plain
    model (paths from its reference distributions).
    """
    model = world.model if isinstance(world, MfipWorld) else world
    if policies is None:
        policies = train_policies(model, spec)
    rng = np.random.Generator(np.random.PCG64(spec.oos_seed))
    if isinstance(world, MfipWorld):
        paths = [world.sample_path_data(rng) for _ in range(spec.oos_paths)]
        evaluate = lambda pol, p: evaluate_policy_path(pol, stage_data=p)
    else:
        paths = [sample_path(rng, model) for _ in range(spec.oos_paths)]
        evaluate = lambda pol, p: evaluate_policy_path(pol, path=p)
    report = OosReport(tuple(spec.percentiles))
    for key, value in policies.items():
        pol = value[0] if isinstance(value, tuple) else value
        report.objectives[key] = np.array([evaluate(pol, p) for p in paths])
    if spec.out_dir is not None:
        report.write(spec.out_dir)
    return report


# ---------------------------------------------------------------------------
# corruption study


def corruption_world(seed: int, n_scen: int = 30, upper_mean: float = 40.0, lower_mean: float = 20.0,
                     budget: float = 1.0) -> MfipWorld:
    """Two-stage world on two parallel routes; interdicting the upper route is uniquely best.

    At mean capacities, removing the upper arc leaves ``lower_mean`` units of
    flow and removing the lower arc leaves ``upper_mean``.
    """
    p = MfipParams(rows=1, cols=2, horizon=2, n_scen=n_scen, budget=budget, cap_lo=0.0, cap_hi=1e6,
                   epsilon=0.0, seed=seed, two_stage=True, arc_means=(upper_mean, lower_mean))
    return gen_mfip_world(p, two_path_network())


@dataclass
class CorruptionRow:
    alpha: float
    epsilon: float
    variant: str
    solution: tuple
    clean_mean: float
    objectives: np.ndarray = field(repr=False)


@dataclass
class CorruptionReport:
    critical: tuple
    rows: list = field(default_factory=list)

    def row(self, alpha, epsilon, variant) -> CorruptionRow:
        for r in self.rows:
            if r.alpha == alpha and r.epsilon == epsilon and r.variant == variant:
                return r
        raise KeyError((alpha, epsilon, variant))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["alpha", "epsilon", "variant", "solution", "clean_mean"])
        for r in self.rows:
            w.writerow([_fmt(r.alpha), _fmt(r.epsilon), r.variant, " ".join(map(str, r.solution)),
                        _fmt(r.clean_mean)])
        return buf.getvalue()


def run_corruption_study(world: MfipWorld, alphas, epsilons, variants=("drr_c", "dro_c", "neutral"),
                         n_eval: int = 1000, seed: int = 0, stall_iters: int = 20,
                         out_dir=None) -> CorruptionReport:
    """Corrupt the training samples, train each variant, evaluate on clean paths.

    The first-stage interdiction of every trained policy is reported by
    interdictable-arc position; evaluation uses ``n_eval`` paths from the
    clean generating law.
    """
    if world.model.horizon != 2 or world.model.stages[0].d_y != 0:
        raise ModelError("the corruption study needs a two-stage world with interdiction only first")
    variants = [normalize_variant(v) for v in variants]
    mean_caps = mean_capacities(world.params, world.net.n_finite)
    crit = critical_arcs(world.net, mean_caps, world.params.budget)
    rng = np.random.Generator(np.random.PCG64(seed))
    clean = [world.sample_path_data(rng) for _ in range(n_eval)]
    report = CorruptionReport(tuple(int(c) for c in crit))
    for a in alphas:
        bad = corrupt_samples(world, a, crit, seed)
        for e in epsilons:
            for v in variants:
                cfg = SolverConfig(variant=v, seed=seed, stall_iters=stall_iters)
                pol, _ = run(bad.model, 0.0 if v == "neutral" else e, cfg)
                _, sol = pol.solve_stage(0, bad.model.x0, 0)
                x = np.round(sol.primal[pol.subproblem(0, bad.model.x0, 0).x_cols])
                objs = np.array([evaluate_policy_path(pol, stage_data=p) for p in clean])
                report.rows.append(CorruptionRow(float(a), float(e), v,
                                                 tuple(int(k) for k in np.flatnonzero(x > 0.5)),
                                                 float(objs.mean()), objs))
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "corruption.csv").write_text(report.to_csv(), encoding="utf-8")
    return report
