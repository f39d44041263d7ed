"""Sampling-based nested decomposition for ambiguity-aware multistage binary programs.

Each iteration samples a scenario path from the reference probabilities, runs
the stage subproblems forward along it, then walks backward: at every stage
``t >= 1`` the subproblem is solved for each realization at the state the
forward pass produced for stage ``t-1``, and the resulting cuts refine the
approximation held by stage ``t-1``. Even iterations produce integer
optimality cuts (exact at the visited state), odd iterations strengthened
Benders cuts. How the per-realization cuts enter the approximation depends
on the variant:

========  ===================================================================
drr_c     aggregated cut on the best-case expectation over the ball
drr_r     per-realization cuts inside a linearized best-case expectation
dro_c     cut weighted by the worst-case distribution at the visited state
dro_r     per-realization cuts inside the dual of the worst-case expectation
neutral   cut weighted by the reference probabilities
========  ===================================================================
"""
from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .ambiguity import as_specs, drr_cut_coefficients
from .approx import (EpigraphApprox, McCormickApprox, WassersteinDualApprox, dro_separation_cut,
                     expected_cut, integer_optimality_cut, strengthened_benders_cut)
from .errors import Infeasible, ModelError
from .lp import solve_lp
from .mip import TOL_MIP, lp_relaxation, solve_mip
from .model import Cut, MultistageModel, build_subproblem

VARIANTS = ("drr_c", "drr_r", "dro_c", "dro_r", "neutral")
CONVERGED, ITER_LIMIT, TIME_LIMIT = "converged_stall", "iter_limit", "time_limit"


def variant_risk(variant: str) -> str:
    return {"drr_c": "drr", "drr_r": "drr", "dro_c": "dro", "dro_r": "dro", "neutral": "neutral"}[variant]


def normalize_variant(name: str) -> str:
    v = name.replace("-", "_").lower()
    if v not in VARIANTS:
        raise ModelError(f"unknown variant {name!r}")
    return v


@dataclass
class SolverConfig:
    variant: str = "neutral"
    seed: int = 0
    max_iters: int = 5000
    time_limit: float = math.inf
    stall_iters: int = 100
    stall_tol: float = 1e-6
    paths_per_iter: int = 1
    tol_mip: float = TOL_MIP
    threads: int = 1

    def __post_init__(self):
        self.variant = normalize_variant(self.variant)
        if self.stall_iters < 1 or self.paths_per_iter < 1:
            raise ModelError("stall_iters and paths_per_iter must be at least 1")


@dataclass
class IterationRecord:
    iteration: int
    path: list
    fwd_obj: float
    lb: float
    time_s: float
    cuts_added: int


@dataclass
class SolveLog:
    records: list = field(default_factory=list)
    status: str = ITER_LIMIT

    @property
    def lower_bound(self) -> float:
        return self.records[-1].lb if self.records else -math.inf

    def to_csv(self, with_time: bool = False) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iter", "lb", "fwd_obj", "time_s", "cuts_added"])
        for r in self.records:
            w.writerow([r.iteration, f"{r.lb:.9g}", f"{r.fwd_obj:.9g}",
                        f"{r.time_s:.9g}" if with_time else "", r.cuts_added])
        return buf.getvalue()


@dataclass
class Trajectory:
    states: list
    costs: list
    first_stage_bound: float

    @property
    def objective(self) -> float:
        return float(sum(self.costs))


def stage_lower_bounds(model: MultistageModel, margin: float = 0.01) -> list:
    """Lower bounds on every stage value function over all binary incoming states.

    ``L[t]`` is the smallest LP relaxation value of stage ``t`` over its
    realizations with the incoming state relaxed to ``[0, 1]`` and the
    cost-to-go bounded by ``L[t+1]``, less a relative safety margin.
    """
    T = model.horizon
    L = [0.0] * (T + 1)
    for t in range(T - 1, 0, -1):
        d = model.stages[t].d_x
        approx = EpigraphApprox(d, L[t + 1]) if t < T - 1 else None
        vals = []
        for i in range(model.stages[t].n_scen):
            sub = build_subproblem(model, t, np.zeros(model.stages[t].d_prev), i, approx,
                                   copy_alpha=np.zeros(model.stages[t].d_prev))
            sol = solve_lp(lp_relaxation(sub.mip))
            if not sol.optimal:
                raise ModelError(f"stage {t} relaxation is {sol.status} for realization {i}")
            vals.append(sol.objective)
        v = min(vals)
        L[t] = v - margin * abs(v) - 1e-6
    return L[:T]


class Policy:
    """Stage models plus the cost-to-go approximation each stage holds.

    ``approx[t]`` approximates the aggregated cost-to-go of stage ``t+1``; the
    last stage holds none.
    """

    def __init__(self, model: MultistageModel, ambiguity=None, variant: str = "neutral",
                 tol_mip: float = TOL_MIP, lower_bounds=None):
        self.model = model
        self.variant = normalize_variant(variant)
        self.specs = as_specs(ambiguity, model.horizon)
        self.tol_mip = tol_mip
        self.L = list(lower_bounds) if lower_bounds is not None else stage_lower_bounds(model)
        T = model.horizon
        self.approx = []
        for t in range(T - 1):
            d = model.stages[t].d_x
            sup = model.supports[t + 1]
            eps = self.specs[t + 1].radius
            if self.variant == "drr_r":
                a = McCormickApprox(d, self.L[t + 1], sup, eps)
            elif self.variant == "dro_r":
                a = WassersteinDualApprox(d, self.L[t + 1], sup, eps)
            else:
                a = EpigraphApprox(d, self.L[t + 1])
            self.approx.append(a)
        self.approx.append(None)

    @property
    def risk(self) -> str:
        return variant_risk(self.variant)

    def num_cuts(self) -> int:
        return sum(a.num_cuts for a in self.approx if a is not None)

    def subproblem(self, t, x_prev, scenario):
        return build_subproblem(self.model, t, x_prev, scenario, self.approx[t])

    def solve_stage(self, t, x_prev, scenario):
        sub = self.subproblem(t, x_prev, scenario)
        try:
            sol = solve_mip(sub.mip, self.tol_mip)
        except Infeasible:
            raise ModelError(f"stage {t} infeasible at incoming state {np.asarray(x_prev)}") from None
        return sub, sol

    def lower_bound(self) -> float:
        _, sol = self.solve_stage(0, self.model.x0, 0)
        return sol.incumbent_bound

    def stage_cut(self, t, x_hat, scenario, iteration) -> Cut:
        """Cut on the stage-``t`` value function of realization ``scenario`` at ``x_hat``."""
        if iteration % 2 == 0:
            _, sol = self.solve_stage(t, x_hat, scenario)
            q = sol.incumbent_bound
            return integer_optimality_cut(q, x_hat, min(self.L[t], q), t, scenario, iteration)
        cut, _ = strengthened_benders_cut(self.model, t, x_hat, scenario, self.approx[t],
                                          self.tol_mip, iteration)
        return cut

    def refine(self, t, cuts, x_hat, iteration) -> int:
        """Fold the stage-``t`` realization cuts into ``approx[t-1]``; returns cuts added."""
        target = self.approx[t - 1]
        sup = self.model.supports[t]
        eps = self.specs[t].radius
        if self.variant in ("drr_r", "dro_r"):
            return sum(target.add_cut(c) for c in cuts)
        if self.variant == "drr_c":
            agg = drr_cut_coefficients([c.alpha for c in cuts], [c.beta for c in cuts], x_hat,
                                       sup, eps, t, iteration)
        elif self.variant == "dro_c":
            agg, _ = dro_separation_cut(cuts, x_hat, sup, eps, t, iteration)
        else:
            agg = expected_cut(cuts, sup.probs, t, iteration)
        return int(target.add_cut(agg))

    # serialization -------------------------------------------------------
    def to_dict(self) -> dict:
        stages = []
        for t, a in enumerate(self.approx[:-1]):
            if isinstance(a, EpigraphApprox):
                cuts = a.cuts
            else:
                cuts = [c for lst in a.cuts for c in lst]
            stages.append({"stage": t, "lower": a.lower, "cuts": [
                {"stage": c.stage, "scenario": c.scenario, "kind": c.kind, "iteration": c.iteration,
                 "alpha": [float(v) for v in c.alpha], "beta": float(c.beta)} for c in cuts]})
        return {"variant": self.variant, "tol_mip": self.tol_mip,
                "epsilon": [s.radius for s in self.specs],
                "lower_bounds": [float(v) for v in self.L], "stages": stages}

    @classmethod
    def from_dict(cls, model: MultistageModel, data: dict) -> "Policy":
        pol = cls(model, list(data["epsilon"]), data["variant"], data["tol_mip"], data["lower_bounds"])
        for st in data["stages"]:
            for c in st["cuts"]:
                pol.approx[st["stage"]].add_cut(Cut(c["stage"], c["alpha"], c["beta"], c["kind"],
                                                    c["scenario"], c["iteration"]))
        return pol


def sample_path(rng: np.random.Generator, model: MultistageModel) -> list:
    """One realization index per stage, drawn independently from the reference probabilities."""
    path = [0]
    for sup in model.supports[1:]:
        path.append(int(rng.choice(sup.size, p=sup.probs)) if sup.size > 1 else 0)
    return path


def forward_pass(policy: Policy, path, stage_data=None) -> Trajectory:
    """Solve the stages in order along ``path`` (or explicit per-stage ``ScenarioData``)."""
    model = policy.model
    x_prev = model.x0
    states, costs = [], []
    first = math.nan
    for t in range(model.horizon):
        scen = stage_data[t] if stage_data is not None else path[t]
        sub, sol = policy.solve_stage(t, x_prev, scen)
        if t == 0:
            first = sol.incumbent_bound
        x = np.round(sol.primal[sub.x_cols])
        costs.append(sub.stage_objective(sol.primal))
        states.append(x)
        x_prev = x
    return Trajectory(states, costs, first)


def backward_pass(policy: Policy, traj: Trajectory, iteration: int, executor=None) -> int:
    """Refine every stage approximation along ``traj``; returns the number of cuts added."""
    model = policy.model
    added = 0
    for t in range(model.horizon - 1, 0, -1):
        x_hat = traj.states[t - 1]
        scen = range(model.stages[t].n_scen)
        def one(i, t=t, x_hat=x_hat):
            return policy.stage_cut(t, x_hat, i, iteration)
        cuts = list(executor.map(one, scen)) if executor is not None else [one(i) for i in scen]
        added += policy.refine(t, cuts, x_hat, iteration)
    return added


def evaluate_policy_path(policy: Policy, path=None, stage_data=None) -> float:
    """Realized total stage cost of following the policy along a path."""
    return forward_pass(policy, path, stage_data).objective


def run(model: MultistageModel, ambiguity=None, config: SolverConfig | None = None,
        on_iteration=None):
    """Train a policy. Returns ``(policy, log)``; limits are reported in ``log.status``."""
    cfg = config or SolverConfig()
    policy = Policy(model, ambiguity, cfg.variant, cfg.tol_mip)
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    log = SolveLog()
    start = time.perf_counter()
    executor = ThreadPoolExecutor(cfg.threads) if cfg.threads > 1 else None
    lb = -math.inf
    try:
        for it in range(1, cfg.max_iters + 1):
            fwd, added, path = 0.0, 0, None
            for _ in range(cfg.paths_per_iter):
                path = sample_path(rng, model)
                traj = forward_pass(policy, path)
                fwd += traj.objective / cfg.paths_per_iter
                added += backward_pass(policy, traj, it, executor)
            # Any valid bound may be kept; the running maximum stays valid.
            lb = max(lb, policy.lower_bound())
            rec = IterationRecord(it, path, fwd, lb, time.perf_counter() - start, added)
            log.records.append(rec)
            if on_iteration is not None:
                on_iteration(rec)
            if it > cfg.stall_iters and lb - log.records[-1 - cfg.stall_iters].lb < cfg.stall_tol:
                log.status = CONVERGED
                break
            if rec.time_s >= cfg.time_limit:
                log.status = TIME_LIMIT
                break
        else:
            log.status = ITER_LIMIT
    finally:
        if executor is not None:
            executor.shutdown()
    return policy, log
