"""Stages whose feasible set is a disjunction of polyhedra, and their convex hulls.

A disjunctive stage lists disjuncts ``h``, each a polyhedron
``A^h x + B^h y + C^h x_prev (rel) b^h`` over ``0 <= x <= 1`` and the local
bounds. For a binary incoming state the convex hull of the union (with the
cost-to-go cuts ``phi >= pi @ x + gamma`` imposed inside every disjunct) is
the projection of the lifted polyhedron

    sum_h zeta0_h = 1,  sum_h zeta3_h = x_prev,
    A^h zeta1_h + B^h zeta2_h + C^h zeta3_h - b^h zeta0_h (rel) 0,
    zeta1_h <= zeta0_h,  zeta3_h <= zeta0_h,  local bounds scaled by zeta0_h,
    zeta4_h - pi @ zeta1_h - gamma zeta0_h >= 0       for every cut,

with ``x = sum zeta1``, ``y = sum zeta2``, ``phi = sum zeta4``. Minimizing the
stage cost over it is an LP whose optimum equals the disjunctive optimum, and
the duals of the two aggregation rows give a cut that is tight at the
incoming state.

A binary stage becomes disjunctive by fixing coordinates: the disjuncts
indexed by pairs ``(J0, J1)`` with ``x_j = 0`` on ``J0`` and ``x_j = 1`` on
``J1``, ``|J0 u J1| = s``, form a hierarchy running from the LP relaxation
(``s = 0``) to the integer hull (``s = d_x``).
"""
from __future__ import annotations

import itertools
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .ambiguity import as_specs, drr_cut_coefficients
from .approx import _known, dro_separation_cut, expected_cut
from .builder import LpBuilder
from .errors import DimensionMismatch, EmptyDisjunct, ModelError, TooManyDisjuncts
from .lp import solve_lp
from .model import Cut, MultistageModel, ScenarioSupport, StageTemplate, _per_scenario
from .sddp import (CONVERGED, ITER_LIMIT, TIME_LIMIT, IterationRecord, SolveLog, SolverConfig,
                   sample_path, variant_risk)

MAX_DISJUNCTS = 10_000


@dataclass
class Disjunct:
    """Rows of one disjunct, stored per scenario: ``A`` is ``(N, m, d_x)`` and so on."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    b: np.ndarray
    relations: list


class DisjunctiveStage:
    """Stage data with a list of disjuncts sharing costs and variable bounds."""

    def __init__(self, n_scen, cost_x, cost_y, disjuncts, d_prev, y_lower=None, y_upper=None,
                 name="", validate=True):
        self.n_scen = n = int(n_scen)
        cost_x = np.asarray(cost_x, dtype=float)
        cost_y = np.asarray(cost_y, dtype=float)
        d_x = cost_x.shape[-1]
        d_y = cost_y.shape[-1] if cost_y.ndim else 0
        self.cost_x = _per_scenario(cost_x, n, (d_x,), "cost_x")
        self.cost_y = _per_scenario(cost_y, n, (d_y,), "cost_y")
        self.d_prev = int(d_prev)
        self.disjuncts = []
        for k, dj in enumerate(disjuncts):
            rel = list(dj.relations)
            m = len(rel)
            try:
                self.disjuncts.append(Disjunct(
                    _per_scenario(dj.A, n, (m, d_x), "A"), _per_scenario(dj.B, n, (m, d_y), "B"),
                    _per_scenario(dj.C, n, (m, self.d_prev), "C"), _per_scenario(dj.b, n, (m,), "b"),
                    rel))
            except ModelError as exc:
                raise DimensionMismatch(f"disjunct {k}: {exc}") from None
        if not self.disjuncts:
            raise ModelError("a disjunctive stage needs at least one disjunct")
        if len(self.disjuncts) > MAX_DISJUNCTS:
            raise TooManyDisjuncts(f"{len(self.disjuncts)} disjuncts exceed {MAX_DISJUNCTS}")
        self.y_lower = np.zeros(d_y) if y_lower is None else np.asarray(y_lower, dtype=float).reshape(d_y)
        self.y_upper = np.full(d_y, np.inf) if y_upper is None else np.asarray(y_upper, dtype=float).reshape(d_y)
        if np.any(~np.isfinite(self.y_lower)):
            raise ModelError("local columns need finite lower bounds")
        self.name = name
        if validate:
            for h in range(len(self.disjuncts)):
                for i in range(n):
                    if not disjunct_feasible(self, h, i):
                        raise EmptyDisjunct(f"disjunct {h} is empty under realization {i}")

    d_x = property(lambda self: self.cost_x.shape[1])
    d_y = property(lambda self: self.cost_y.shape[1])

    @property
    def num_disjuncts(self) -> int:
        return len(self.disjuncts)


def disjunct_feasible(stage: DisjunctiveStage, h: int, scenario: int, x_prev=None) -> bool:
    """Whether disjunct ``h`` has a point; ``x_prev=None`` lets the state range over ``[0, 1]``."""
    dj = stage.disjuncts[h]
    bld = LpBuilder()
    x = bld.add_vars(stage.d_x, 0.0, 0.0, 1.0)
    y = bld.add_vars(stage.d_y, 0.0, stage.y_lower, stage.y_upper)
    if x_prev is None:
        z = bld.add_vars(stage.d_prev, 0.0, 0.0, 1.0)
        bld.add_rows(np.concatenate([x, y, z]),
                     np.hstack([dj.A[scenario], dj.B[scenario], dj.C[scenario]]),
                     dj.relations, dj.b[scenario])
    else:
        bld.add_rows(np.concatenate([x, y]), np.hstack([dj.A[scenario], dj.B[scenario]]),
                     dj.relations, dj.b[scenario] - dj.C[scenario] @ np.asarray(x_prev, dtype=float))
    return solve_lp(bld.build_lp()).status != "infeasible"


def _cut_pairs(cuts):
    out = []
    for c in cuts:
        if isinstance(c, Cut):
            out.append((c.alpha, c.beta))
        else:
            out.append((np.asarray(c[0], dtype=float).ravel(), float(c[1])))
    return out


class LiftedLp:
    """Persistent lifted LP of one stage under one realization.

    Cut copies are appended with ``add_cut``; the incoming state is changed
    with ``set_state``. ``x_prev=None`` relaxes the state to ``[0, 1]``.
    """

    def __init__(self, stage: DisjunctiveStage, scenario: int, x_prev=None, cuts=None,
                 has_phi: bool = True):
        self.stage = stage
        self.scenario = i = scenario
        bld = self.bld = LpBuilder()
        d, dy, dp = stage.d_x, stage.d_y, stage.d_prev
        ylo, yup = stage.y_lower, stage.y_upper
        self.z0, self.z1, self.z2, self.z3, self.z4 = [], [], [], [], []
        for dj in stage.disjuncts:
            z0 = bld.add_vars(1, 0.0, 0.0)[0]
            z1 = bld.add_vars(d, stage.cost_x[i], 0.0)
            z2 = bld.add_vars(dy, stage.cost_y[i], np.where(ylo < 0, -np.inf, 0.0))
            z3 = bld.add_vars(dp, 0.0, 0.0)
            z4 = bld.add_vars(1, 1.0, -np.inf)[0] if has_phi else None
            bld.add_rows(np.concatenate([z1, z2, z3, [z0]]),
                         np.hstack([dj.A[i], dj.B[i], dj.C[i], -dj.b[i][:, None]]), dj.relations, 0.0)
            for j in range(d):
                bld.add_row([z1[j], z0], [1.0, -1.0], "<=", 0.0)
            for j in range(dp):
                bld.add_row([z3[j], z0], [1.0, -1.0], "<=", 0.0)
            for j in range(dy):
                if ylo[j] != 0.0:
                    bld.add_row([z2[j], z0], [1.0, -ylo[j]], ">=", 0.0)
                if np.isfinite(yup[j]):
                    bld.add_row([z2[j], z0], [1.0, -yup[j]], "<=", 0.0)
            self.z0.append(z0)
            self.z1.append(z1)
            self.z2.append(z2)
            self.z3.append(z3)
            self.z4.append(z4)
        self.has_phi = has_phi
        self.row_one = bld.add_row(self.z0, np.ones(len(self.z0)), "=", 1.0)
        self.rows_state = None
        if x_prev is not None:
            self.rows_state = np.array([bld.add_row([z[j] for z in self.z3], np.ones(len(self.z3)), "=", 0.0)
                                        for j in range(dp)], dtype=np.int64)
            self.set_state(x_prev)
        self.cuts = []
        for pi, g in _cut_pairs(cuts or []):
            self.add_cut(pi, g)

    def set_state(self, x_prev):
        x_prev = np.asarray(x_prev, dtype=float).ravel()
        if self.rows_state is None or x_prev.size != self.rows_state.size:
            raise DimensionMismatch("state rows missing or of the wrong size")
        for r, v in zip(self.rows_state, x_prev):
            self.bld.set_rhs(r, v)
        self.x_prev = x_prev

    def add_cut(self, pi, gamma) -> bool:
        if not self.has_phi:
            raise ModelError("the last stage has no cost-to-go")
        pi = np.asarray(pi, dtype=float).ravel()
        cut = Cut(0, pi, gamma)
        if _known([Cut(0, p, g) for p, g in self.cuts], cut):
            return False
        self.cuts.append((pi, float(gamma)))
        for z0, z1, z4 in zip(self.z0, self.z1, self.z4):
            self.bld.add_row(np.concatenate([[z4, z0], z1]), np.concatenate([[1.0, -gamma], -pi]), ">=", 0.0)
        return True

    def problem(self):
        return self.bld.build_lp()

    def solve(self) -> "LiftedSolution":
        sol = solve_lp(self.problem())
        if not sol.optimal:
            raise ModelError(f"lifted stage LP is {sol.status}")
        p = sol.primal
        w = np.array([p[z] for z in self.z0])
        x = sum(p[z] for z in self.z1)
        y = sum(p[z] for z in self.z2) if self.stage.d_y else np.zeros(0)
        if np.any(np.abs(x - np.round(x)) > 1e-6):
            # fall back to the dominant disjunct's point
            h = int(np.argmax(w))
            x = p[self.z1[h]] / w[h]
            y = p[self.z2[h]] / w[h]
        phi = float(sum(p[z] for z in self.z4)) if self.has_phi else 0.0
        sigma_state = sol.duals[self.rows_state] if self.rows_state is not None else None
        return LiftedSolution(sol.objective, sol.objective - phi, x, y, float(sol.duals[self.row_one]),
                              sigma_state, w)


@dataclass
class LiftedSolution:
    objective: float
    stage_cost: float
    x: np.ndarray
    y: np.ndarray
    sigma_one: float
    sigma_state: np.ndarray | None
    weights: np.ndarray

    def cut(self, stage: int, scenario=None, iteration: int = 0) -> Cut:
        """Dual cut ``value(x_prev) >= sigma_state @ x_prev + sigma_one``."""
        return Cut(stage, self.sigma_state, self.sigma_one, "benders", scenario, iteration)


def tight_extended_formulation(stage: DisjunctiveStage, cuts, x_prev, scenario: int,
                               check: bool = True):
    """Lifted LP of the stage at a binary incoming state, as an ``LpProblem``.

    With ``check`` every disjunct must be nonempty at ``x_prev``.
    """
    x_prev = np.asarray(x_prev, dtype=float).ravel()
    if np.any((x_prev != 0) & (x_prev != 1)):
        raise ModelError("the incoming state must be binary")
    if check:
        for h in range(stage.num_disjuncts):
            if not disjunct_feasible(stage, h, scenario, x_prev):
                raise EmptyDisjunct(f"disjunct {h} is empty at incoming state {x_prev}")
    cuts = _cut_pairs(cuts or [])
    return LiftedLp(stage, scenario, x_prev, cuts, has_phi=bool(cuts)).problem()


def fixing_pairs(d: int, s: int):
    """All ``(J0, J1)`` with disjoint index sets and ``|J0| + |J1| = s``."""
    for support in itertools.combinations(range(d), s):
        for ones in itertools.product((False, True), repeat=s):
            yield (tuple(j for j, o in zip(support, ones) if not o),
                   tuple(j for j, o in zip(support, ones) if o))


def hierarchy_stage(template: StageTemplate, s: int, cap: int = MAX_DISJUNCTS,
                    validate: bool = False) -> DisjunctiveStage:
    """Disjunctive stage fixing ``s`` state coordinates in every possible way.

    Binary local columns are relaxed. The number of disjuncts,
    ``C(d_x, s) 2**s``, must not exceed ``cap``.
    """
    d = template.d_x
    if not 0 <= s <= d:
        raise ModelError(f"s must lie in [0, {d}]")
    count = math.comb(d, s) * 2 ** s
    if count > cap:
        raise TooManyDisjuncts(f"{count} disjuncts exceed the cap of {cap}")
    n, m = template.n_scen, template.n_rows
    dy, dp = template.d_y, template.d_prev
    disjuncts = []
    for J0, J1 in fixing_pairs(d, s):
        fixed = list(J0) + list(J1)
        k = len(fixed)
        A = np.zeros((n, m + k, d))
        A[:, :m] = template.A
        A[:, m + np.arange(k), fixed] = 1.0
        B = np.zeros((n, m + k, dy))
        B[:, :m] = template.B
        C = np.zeros((n, m + k, dp))
        C[:, :m] = template.C
        b = np.zeros((n, m + k))
        b[:, :m] = template.b
        b[:, m + len(J0):] = 1.0
        disjuncts.append(Disjunct(A, B, C, b, list(template.relations) + ["="] * k))
    return DisjunctiveStage(n, template.cost_x, template.cost_y, disjuncts, dp,
                            template.y_lower, template.y_upper, template.name, validate)


def hierarchy_relaxation(template: StageTemplate, cuts, x_prev, scenario: int, s: int,
                         cap: int = MAX_DISJUNCTS):
    """Level-``s`` relaxation of a binary stage as an ``LpProblem``."""
    stage = hierarchy_stage(template, s, cap)
    cuts = _cut_pairs(cuts or [])
    return LiftedLp(stage, scenario, x_prev, cuts, has_phi=bool(cuts)).problem()


@dataclass(eq=False)
class DisjunctiveModel:
    stages: list
    supports: list
    x0: np.ndarray
    name: str = ""

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float).ravel()
        if len(self.stages) != len(self.supports) or not self.stages:
            raise ModelError("need one support per stage")
        d_prev = self.x0.size
        for t, (st, sup) in enumerate(zip(self.stages, self.supports)):
            if st.d_prev != d_prev:
                raise DimensionMismatch(f"stage {t} expects {st.d_prev} incoming states, got {d_prev}")
            if st.n_scen != sup.size:
                raise DimensionMismatch(f"stage {t} has {st.n_scen} realizations, support {sup.size}")
            d_prev = st.d_x
        if self.supports[0].size != 1:
            raise ModelError("the first stage must be deterministic")

    @property
    def horizon(self) -> int:
        return len(self.stages)


def from_msip(model: MultistageModel, s=None) -> DisjunctiveModel:
    """Encode a binary multistage model stage by stage as disjunctions.

    ``s`` defaults to every state coordinate, which makes each lifted LP the
    integer hull. Disjuncts that are empty for every incoming state and
    realization are dropped. Stages with binary local columns are rejected.
    """
    stages = []
    for t, st in enumerate(model.stages):
        if st.y_binary.any():
            raise ModelError(f"stage {t} has binary local columns")
        if np.any(st.x_upper != 1):
            raise ModelError(f"stage {t} has general integer states; binary-expand first")
        ds = hierarchy_stage(st, st.d_x if s is None else s)
        keep = [h for h in range(ds.num_disjuncts)
                if any(disjunct_feasible(ds, h, i) for i in range(ds.n_scen))]
        if not keep:
            raise EmptyDisjunct(f"stage {t} has no feasible disjunct")
        stages.append(DisjunctiveStage(st.n_scen, st.cost_x, st.cost_y,
                                       [ds.disjuncts[h] for h in keep], st.d_prev,
                                       st.y_lower, st.y_upper, st.name, validate=False))
    return DisjunctiveModel(stages, list(model.supports), model.x0, model.name)


def disjunctive_lower_bounds(model: DisjunctiveModel, margin: float = 0.01) -> list:
    """Per-stage lower bounds from the lifted LPs with the state relaxed to ``[0, 1]``."""
    T = model.horizon
    L = [0.0] * (T + 1)
    for t in range(T - 1, 0, -1):
        st = model.stages[t]
        last = t == T - 1
        cuts = None if last else [(np.zeros(st.d_x), L[t + 1])]
        v = min(LiftedLp(st, i, None, cuts, has_phi=not last).solve().objective
                for i in range(st.n_scen))
        L[t] = v - margin * abs(v) - 1e-6
    return L[:T]


class DisjunctivePolicy:
    """Lifted LPs for every stage and realization plus the cuts they share."""

    def __init__(self, model: DisjunctiveModel, ambiguity=None, variant: str = "neutral"):
        self.model = model
        self.variant = variant
        self.risk = variant_risk(variant)
        self.specs = as_specs(ambiguity, model.horizon)
        self.L = disjunctive_lower_bounds(model)
        T = model.horizon
        self.lifted = []
        for t, st in enumerate(model.stages):
            last = t == T - 1
            cuts = None if last else [(np.zeros(st.d_x), self.L[t + 1])]
            x_init = model.x0 if t == 0 else np.zeros(st.d_prev)
            self.lifted.append([LiftedLp(st, i, x_init, cuts, has_phi=not last)
                                for i in range(st.n_scen)])

    def num_cuts(self) -> int:
        return sum(len(lps[0].cuts) for lps in self.lifted[:-1])

    def solve_stage(self, t, x_prev, scenario) -> LiftedSolution:
        lp = self.lifted[t][scenario]
        lp.set_state(x_prev)
        return lp.solve()

    def lower_bound(self) -> float:
        return self.solve_stage(0, self.model.x0, 0).objective

    def aggregate(self, t, cuts, x_hat, iteration) -> Cut:
        sup = self.model.supports[t]
        eps = self.specs[t].radius
        if self.risk == "drr":
            return drr_cut_coefficients([c.alpha for c in cuts], [c.beta for c in cuts], x_hat,
                                        sup, eps, t, iteration)
        if self.risk == "dro":
            return dro_separation_cut(cuts, x_hat, sup, eps, t, iteration)[0]
        return expected_cut(cuts, sup.probs, t, iteration)

    def add_cut(self, t, cut: Cut) -> int:
        added = [lp.add_cut(cut.alpha, cut.beta) for lp in self.lifted[t]]
        return int(any(added))


def dasddp_dp_run(model: DisjunctiveModel, ambiguity=None, config: SolverConfig | None = None,
                  on_iteration=None):
    """Train on the lifted LPs. Returns ``(policy, log)`` like ``sddp.run``.

    Realization solves at one stage run on a thread pool when
    ``config.threads > 1``; their cuts are combined in realization order.
    """
    cfg = config or SolverConfig()
    policy = DisjunctivePolicy(model, ambiguity, cfg.variant)
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    log = SolveLog()
    T = model.horizon
    start = time.perf_counter()
    executor = ThreadPoolExecutor(cfg.threads) if cfg.threads > 1 else None
    lb = -math.inf
    try:
        for it in range(1, cfg.max_iters + 1):
            path = sample_path(rng, model)
            x_prev, states, fwd = model.x0, [], 0.0
            for t in range(T):
                res = policy.solve_stage(t, x_prev, path[t])
                fwd += res.stage_cost
                x_prev = np.round(res.x)
                states.append(x_prev)
            added = 0
            for t in range(T - 1, 0, -1):
                x_hat = states[t - 1]

                def one(i, t=t, x_hat=x_hat):
                    return policy.solve_stage(t, x_hat, i).cut(t, i, it)

                n = model.stages[t].n_scen
                cuts = list(executor.map(one, range(n))) if executor else [one(i) for i in range(n)]
                added += policy.add_cut(t - 1, policy.aggregate(t, cuts, x_hat, it))
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
