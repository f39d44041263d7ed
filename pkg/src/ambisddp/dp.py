"""Exact backward recursion over all binary states (desk-scale ground truth).

The per-stage immediate costs ``g[t][k_prev, k, i]`` (best local decision for
incoming state ``k_prev``, outgoing state ``k`` and scenario ``i``) do not
depend on the risk posture or the radius, so they are tabulated once per
model and reused.
"""
from __future__ import annotations

import weakref

import numpy as np

from .ambiguity import AmbiguitySpec, as_specs, best_case_distribution, worst_case_distribution
from .builder import LpBuilder
from .errors import Infeasible, ModelError, TooLarge
from .lp import StandardForm, relation_codes, solve_standard
from .mip import MipProblem, solve_mip
from .model import MultistageModel

MAX_DX = 12
MAX_T = 4
MAX_N = 4

NEUTRAL, DRO, DRR = "neutral", "dro", "drr"

_tables: "weakref.WeakKeyDictionary[MultistageModel, list]" = weakref.WeakKeyDictionary()


def binary_states(d: int) -> np.ndarray:
    """All points of ``{0,1}^d``; row ``k`` has bit ``j`` equal to ``(k >> j) & 1``."""
    k = np.arange(2 ** d)
    return ((k[:, None] >> np.arange(d)) & 1).astype(float)


def state_index(x) -> int:
    x = np.asarray(x).round().astype(int)
    return int((x << np.arange(x.size)).sum())


def _check_size(model: MultistageModel):
    if not model.is_binary:
        raise ModelError("exact recursion needs binary states; apply binary_expand first")
    if model.horizon > MAX_T:
        raise TooLarge(f"horizon {model.horizon} > {MAX_T}")
    for t, st in enumerate(model.stages):
        if st.d_x > MAX_DX:
            raise TooLarge(f"stage {t} has {st.d_x} states > {MAX_DX}")
        if st.n_scen > MAX_N:
            raise TooLarge(f"stage {t} has {st.n_scen} scenarios > {MAX_N}")


def _feasible_rows(lhs, rhs, codes, tol=1e-9):
    scale = tol * (1.0 + np.abs(rhs))
    ok_le = lhs <= rhs + scale
    ok_ge = lhs >= rhs - scale
    ok_eq = np.abs(lhs - rhs) <= scale
    return np.where(codes < 0, ok_le, np.where(codes > 0, ok_ge, ok_eq)).all(axis=-1)


def stage_cost_table(model: MultistageModel, t: int, prev_states=None) -> np.ndarray:
    """``g[k_prev, k, i]`` = min over local variables of the stage cost (``inf`` if infeasible)."""
    st = model.stages[t]
    if prev_states is None:
        prev_states = model.x0[None, :] if t == 0 else binary_states(st.d_prev)
    X = binary_states(st.d_x)
    codes = relation_codes(st.relations)
    out = np.full((prev_states.shape[0], X.shape[0], st.n_scen), np.inf)
    for i in range(st.n_scen):
        # rows: A x + B y (rel) b - C x_prev
        base = st.b[i][None, None, :] - (prev_states @ st.C[i].T)[:, None, :] - (X @ st.A[i].T)[None, :, :]
        xcost = X @ st.cost_x[i]
        if st.d_y == 0:
            feas = _feasible_rows(np.zeros_like(base), base, codes)
            out[:, :, i] = np.where(feas, xcost[None, :], np.inf)
            continue
        bld = LpBuilder()
        y = bld.add_vars(st.d_y, st.cost_y[i], st.y_lower, st.y_upper, integer=st.y_binary)
        bld.add_rows(y, st.B[i], list(st.relations), np.zeros(st.n_rows))
        if st.y_binary.any():
            mip = bld.build_mip()
            for a in range(base.shape[0]):
                for k in range(base.shape[1]):
                    mip.base.rhs = base[a, k]
                    try:
                        val = solve_mip(MipProblem(mip.base, mip.integer_columns), 1e-9).incumbent_bound
                    except Infeasible:
                        continue
                    out[a, k, i] = xcost[k] + val
        else:
            sf = StandardForm(bld.build_lp())
            for a in range(base.shape[0]):
                for k in range(base.shape[1]):
                    sol = solve_standard(sf.with_rhs(base[a, k]))
                    if sol.optimal:
                        out[a, k, i] = xcost[k] + sol.objective
                    elif sol.status != "infeasible":
                        raise ModelError(f"stage {t} local problem is {sol.status}")
    return out


def cost_tables(model: MultistageModel) -> list:
    tabs = _tables.get(model)
    if tabs is None:
        _check_size(model)
        tabs = [stage_cost_table(model, t) for t in range(model.horizon)]
        _tables[model] = tabs
    return tabs


def _inner(values, support, spec: AmbiguitySpec, risk):
    if risk == NEUTRAL:
        return float(support.probs @ values)
    if risk == DRO:
        return worst_case_distribution(values, support, spec.radius)[1]
    if risk == DRR:
        return best_case_distribution(values, support, spec.radius)[1]
    raise ModelError(f"unknown risk posture {risk!r}")


def value_functions(model: MultistageModel, ambiguity=None, risk: str = NEUTRAL):
    """Backward recursion. Returns ``(Q, EQ)``.

    ``Q[t][k_prev, i]`` is the stage-``t`` value at incoming state ``k_prev``
    and scenario ``i``; ``EQ[t][k]`` is the aggregated cost-to-go of stage
    ``t+1`` seen from outgoing state ``k`` of stage ``t`` (zero at the end).
    """
    specs = as_specs(ambiguity, model.horizon)
    tabs = cost_tables(model)
    T = model.horizon
    Q = [None] * T
    EQ = [None] * T
    nxt = np.zeros(2 ** model.stages[-1].d_x)
    for t in range(T - 1, -1, -1):
        EQ[t] = nxt
        Q[t] = (tabs[t] + nxt[None, :, None]).min(axis=1)
        if not np.all(np.isfinite(Q[t])):
            bad = np.argwhere(~np.isfinite(Q[t]))[0]
            raise ModelError(f"stage {t} infeasible for incoming state #{bad[0]}, scenario {bad[1]}")
        if t > 0:
            sup = model.supports[t]
            nxt = np.array([_inner(Q[t][k], sup, specs[t], risk) for k in range(Q[t].shape[0])])
    return Q, EQ


def exact_value_dp(model: MultistageModel, ambiguity=None, risk: str = NEUTRAL) -> float:
    """Optimal first-stage value under the given risk posture ("neutral", "dro", "drr")."""
    Q, _ = value_functions(model, ambiguity, risk)
    return float(Q[0][0, 0])


def optimal_first_state(model: MultistageModel, ambiguity=None, risk: str = NEUTRAL) -> np.ndarray:
    Q, EQ = value_functions(model, ambiguity, risk)
    tab = cost_tables(model)[0][0, :, 0] + EQ[0]
    return binary_states(model.stages[0].d_x)[int(np.argmin(tab))]
