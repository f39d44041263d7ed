"""Multistage stochastic binary-state programs and their stage subproblems.

Stages are indexed from 0. Stage ``t`` in scenario ``i`` reads::

    min  cost_x[i] @ x + cost_y[i] @ y (+ phi)
    s.t. A[i] @ x + B[i] @ y + C[i] @ x_prev  (rel)  b[i]
         x binary, y_lower <= y <= y_upper, y[y_binary] integer

where ``x_prev`` is the previous stage's state (``x0`` for stage 0) and
``phi`` carries the approximation of the expected cost-to-go of stage ``t+1``.
Stage 0 has a single scenario.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .builder import LpBuilder
from .errors import DimensionMismatch, ModelError, UnboundedInteger
from .lp import relation_codes
from .mip import MipProblem

CUT_KINDS = ("benders", "strengthened_benders", "integer_optimality",
             "drr_aggregate", "dro_aggregate", "expected", "dd_wasserstein", "constant")


@dataclass(frozen=True)
class ScenarioSupport:
    """Finite support of one stage: realizations ``(N, d_omega)`` and reference probabilities."""

    realizations: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.realizations, dtype=float)
        if r.ndim == 1:
            r = r[:, None]
        p = np.asarray(self.probs, dtype=float).ravel()
        object.__setattr__(self, "realizations", r)
        object.__setattr__(self, "probs", p)
        if r.shape[0] < 1 or r.shape[0] != p.size:
            raise DimensionMismatch(f"{r.shape[0]} realizations but {p.size} probabilities")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
            raise ModelError("reference probabilities must be nonnegative and sum to 1")

    @property
    def size(self) -> int:
        return self.probs.size

    @cached_property
    def distances(self) -> np.ndarray:
        """Pairwise l1 distances between realizations."""
        r = self.realizations
        return np.abs(r[:, None, :] - r[None, :, :]).sum(axis=2)

    @classmethod
    def singleton(cls, realization=(0.0,)) -> "ScenarioSupport":
        return cls(np.atleast_2d(np.asarray(realization, dtype=float)), np.ones(1))


@dataclass(frozen=True)
class ScenarioData:
    """All data of one stage under one realization."""

    cost_x: np.ndarray
    cost_y: np.ndarray
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    b: np.ndarray


def _per_scenario(a, n_scen, tail_shape, name):
    a = np.asarray(a, dtype=float)
    if a.size == 0 and 0 in (n_scen,) + tail_shape:
        return np.zeros((n_scen,) + tail_shape)
    if a.shape == tail_shape:
        a = np.broadcast_to(a, (n_scen,) + tail_shape)
    if a.shape != (n_scen,) + tail_shape:
        raise DimensionMismatch(f"{name} has shape {a.shape}, expected {(n_scen,) + tail_shape}")
    return np.array(a, dtype=float)


class StageTemplate:
    """Data of one stage, stored densely per scenario index.

    Arguments given without a leading scenario axis are shared by every
    scenario. ``x_upper`` above 1 marks general integer states, which must be
    removed with ``binary_expand`` before solving.
    """

    def __init__(self, n_scen, cost_x, cost_y, A, B, C, b, relations,
                 y_lower=None, y_upper=None, y_binary=None, x_upper=None, name=""):
        self.n_scen = n = int(n_scen)
        cost_x = np.asarray(cost_x, dtype=float)
        cost_y = np.asarray(cost_y, dtype=float)
        C = np.asarray(C, dtype=float)
        rel = list(relations)
        m = len(rel)
        d_x = cost_x.shape[-1]
        d_y = cost_y.shape[-1] if cost_y.ndim else 0
        d_prev = C.shape[-1] if C.ndim >= 2 else 0
        self.cost_x = _per_scenario(cost_x, n, (d_x,), "cost_x")
        self.cost_y = _per_scenario(cost_y, n, (d_y,), "cost_y")
        self.A = _per_scenario(A, n, (m, d_x), "A")
        self.B = _per_scenario(B, n, (m, d_y), "B")
        self.C = _per_scenario(C, n, (m, d_prev), "C")
        self.b = _per_scenario(b, n, (m,), "b")
        self.relations = np.array(rel, dtype="<U2")
        relation_codes(self.relations)
        self.y_lower = np.zeros(d_y) if y_lower is None else np.asarray(y_lower, dtype=float).reshape(d_y)
        self.y_upper = np.full(d_y, np.inf) if y_upper is None else np.asarray(y_upper, dtype=float).reshape(d_y)
        self.y_binary = np.zeros(d_y, dtype=bool) if y_binary is None else np.asarray(y_binary, dtype=bool).reshape(d_y)
        self.x_upper = np.ones(d_x) if x_upper is None else np.asarray(x_upper, dtype=float).reshape(d_x)
        if np.any(self.y_lower > self.y_upper):
            raise ModelError("y_lower exceeds y_upper")
        yb = self.y_binary
        if np.any(~np.isfinite(self.y_lower[yb])) or np.any(~np.isfinite(self.y_upper[yb])):
            raise ModelError("integer local columns need finite bounds")
        self.name = name

    d_x = property(lambda self: self.cost_x.shape[1])
    d_y = property(lambda self: self.cost_y.shape[1])
    d_prev = property(lambda self: self.C.shape[2])
    n_rows = property(lambda self: self.relations.size)

    @property
    def is_binary(self) -> bool:
        return bool(np.all(self.x_upper <= 1))

    def scenario(self, i: int) -> ScenarioData:
        return ScenarioData(self.cost_x[i], self.cost_y[i], self.A[i], self.B[i], self.C[i], self.b[i])

    def replace(self, **kw) -> "StageTemplate":
        args = dict(n_scen=self.n_scen, cost_x=self.cost_x, cost_y=self.cost_y, A=self.A, B=self.B,
                    C=self.C, b=self.b, relations=self.relations, y_lower=self.y_lower,
                    y_upper=self.y_upper, y_binary=self.y_binary, x_upper=self.x_upper, name=self.name)
        args.update(kw)
        return StageTemplate(**args)


@dataclass(eq=False)
class MultistageModel:
    """Stages, per-stage supports and the initial state.

    ``supports[0]`` is the singleton holding the first-stage data. Randomness
    is stage-wise independent by construction: one support per stage.
    ``state_maps`` is set by ``binary_expand`` to decode expanded states.
    """

    stages: list
    supports: list
    x0: np.ndarray
    state_maps: list | None = None
    name: str = ""

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float).ravel()
        if len(self.stages) != len(self.supports):
            raise DimensionMismatch("one support per stage is required")
        if not self.stages:
            raise ModelError("model needs at least one stage")
        if self.stages[0].n_scen != 1 or self.supports[0].size != 1:
            raise ModelError("the first stage must have a single realization")
        prev = self.x0.size
        for t, (st, sup) in enumerate(zip(self.stages, self.supports)):
            if st.n_scen != sup.size:
                raise DimensionMismatch(f"stage {t}: {st.n_scen} data scenarios vs support of {sup.size}")
            if st.d_prev != prev:
                raise DimensionMismatch(f"stage {t}: C has {st.d_prev} columns, previous state has {prev}")
            prev = st.d_x

    @property
    def horizon(self) -> int:
        return len(self.stages)

    @property
    def is_binary(self) -> bool:
        return all(st.is_binary for st in self.stages)


@dataclass
class Cut:
    """Affine minorant ``value(x) >= alpha @ x + beta`` of a stage-``stage`` value function.

    ``scenario`` is the realization index, or ``None`` for an aggregated cut.
    """

    stage: int
    alpha: np.ndarray
    beta: float
    kind: str = "benders"
    scenario: int | None = None
    iteration: int = 0

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=float).ravel()
        self.beta = float(self.beta)

    def value(self, x) -> float:
        return float(self.alpha @ np.asarray(x, dtype=float) + self.beta)


@dataclass
class Subproblem:
    """A stage subproblem plus the bookkeeping needed to derive cuts from it."""

    mip: MipProblem
    x_cols: np.ndarray
    y_cols: np.ndarray
    phi_col: int | None
    link_rows: np.ndarray
    C: np.ndarray
    x_prev: np.ndarray
    copy_cols: np.ndarray | None = None
    stage_cost: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def stage_objective(self, primal) -> float:
        """Stage cost without the cost-to-go term."""
        cols = np.concatenate([self.x_cols, self.y_cols])
        return float(self.stage_cost @ primal[cols])


def build_subproblem(model: MultistageModel, t: int, x_prev, scenario, approx=None,
                     copy_alpha=None) -> Subproblem:
    """Assemble the stage-``t`` MIP.

    ``scenario`` is a realization index or a ``ScenarioData``. ``approx`` is
    a cost-to-go approximation exposing ``add_to(builder, x_cols) -> phi col``;
    it must be ``None`` at the last stage. With ``copy_alpha`` the incoming
    state becomes a continuous copy ``z`` in ``[0, 1]`` priced at
    ``-copy_alpha`` (the Lagrangian used for strengthened Benders intercepts).
    """
    st = model.stages[t]
    data = st.scenario(scenario) if not isinstance(scenario, ScenarioData) else scenario
    x_prev = np.asarray(x_prev, dtype=float).ravel()
    if x_prev.size != st.d_prev:
        raise DimensionMismatch(f"stage {t} expects {st.d_prev} incoming states, got {x_prev.size}")
    if t == model.horizon - 1 and approx is not None:
        raise ModelError("the last stage has no cost-to-go")
    bld = LpBuilder()
    x = bld.add_vars(st.d_x, data.cost_x, 0.0, st.x_upper, integer=True)
    y = bld.add_vars(st.d_y, data.cost_y, st.y_lower, st.y_upper, integer=st.y_binary)
    copy_cols = None
    if copy_alpha is None:
        rhs = data.b - data.C @ x_prev
        cols = np.concatenate([x, y])
        M = np.hstack([data.A, data.B])
    else:
        copy_cols = bld.add_vars(st.d_prev, -np.asarray(copy_alpha, dtype=float), 0.0, 1.0)
        rhs = data.b
        cols = np.concatenate([x, y, copy_cols])
        M = np.hstack([data.A, data.B, data.C])
    link = bld.add_rows(cols, M, list(st.relations), rhs)
    phi = approx.add_to(bld, x) if approx is not None else None
    return Subproblem(bld.build_mip(), x, y, phi, link, data.C, x_prev, copy_cols,
                      np.concatenate([data.cost_x, data.cost_y]))


# ---------------------------------------------------------------------------
# binary expansion


def _bits_for(U: int) -> int:
    return int(np.ceil(np.log2(U + 1))) if U > 0 else 0


def binary_expand(model: MultistageModel, column_ranges=None) -> MultistageModel:
    """Replace bounded integer states by binary digits.

    ``column_ranges[t][j]`` is the integer upper bound of state column ``j``
    of stage ``t`` (defaults to the stage's ``x_upper``; ``None`` or infinite
    entries raise ``UnboundedInteger``). A column with range ``[0, U]`` becomes
    ``ceil(log2(U+1))`` binaries weighted ``1, 2, 4, ...``; when ``2^k - 1 > U``
    a row keeps the encoded value at most ``U``. Use ``decode_state`` to map
    expanded states back.
    """
    T = model.horizon
    if column_ranges is None:
        column_ranges = [st.x_upper for st in model.stages]
    maps = []
    for t in range(T):
        rng = column_ranges[t]
        if rng is None or len(rng) != model.stages[t].d_x:
            raise UnboundedInteger(f"stage {t}: missing state ranges")
        ws = []
        for j, U in enumerate(rng):
            if U is None or not np.isfinite(U):
                raise UnboundedInteger(f"stage {t}, state column {j}: no finite range")
            ws.append(int(round(U)))
        maps.append(ws)

    def weights(Us):
        W = np.zeros((len(Us), sum(_bits_for(U) for U in Us)))
        k = 0
        for j, U in enumerate(Us):
            for bit in range(_bits_for(U)):
                W[j, k] = 2.0 ** bit
                k += 1
        return W

    x0 = model.x0
    x0_ranges = [max(int(round(v)), 1) if v > 0 else 0 for v in x0]
    W0 = weights(x0_ranges)
    new_x0 = np.zeros(W0.shape[1])
    k = 0
    for j, U in enumerate(x0_ranges):
        v = int(round(x0[j]))
        for bit in range(_bits_for(U)):
            new_x0[k] = (v >> bit) & 1
            k += 1

    stages = []
    W_prev = W0
    state_maps = []
    for t, st in enumerate(model.stages):
        Us = maps[t]
        W = weights(Us)
        A = st.A @ W
        C = st.C @ W_prev
        cost_x = st.cost_x @ W
        b = st.b
        rel = list(st.relations)
        B = st.B
        extra = []
        for j, U in enumerate(Us):
            nb = _bits_for(U)
            if nb and 2 ** nb - 1 > U:
                extra.append((W[j], float(U)))
        if extra:
            n = st.n_scen
            A = np.concatenate([A, np.broadcast_to(np.array([e[0] for e in extra]), (n, len(extra), W.shape[1]))], axis=1)
            B = np.concatenate([B, np.zeros((n, len(extra), st.d_y))], axis=1)
            C = np.concatenate([C, np.zeros((n, len(extra), C.shape[2]))], axis=1)
            b = np.concatenate([b, np.broadcast_to(np.array([e[1] for e in extra]), (n, len(extra)))], axis=1)
            rel = rel + ["<="] * len(extra)
        stages.append(st.replace(cost_x=cost_x, A=A, B=B, C=C, b=b, relations=rel,
                                 x_upper=np.ones(W.shape[1])))
        state_maps.append(W)
        W_prev = W
    return MultistageModel(stages, list(model.supports), new_x0, state_maps, model.name)


def decode_state(model: MultistageModel, t: int, x) -> np.ndarray:
    """Map an expanded stage-``t`` state back to the original integer columns."""
    if model.state_maps is None:
        return np.asarray(x, dtype=float)
    return model.state_maps[t] @ np.asarray(x, dtype=float)


def encode_state(model: MultistageModel, t: int, values) -> np.ndarray:
    """Binary digits of original integer state values (inverse of ``decode_state``)."""
    W = model.state_maps[t]
    out = np.zeros(W.shape[1])
    for j, v in enumerate(np.asarray(values).round().astype(int)):
        cols = np.flatnonzero(W[j])
        for bit, k in enumerate(cols):
            out[k] = (v >> bit) & 1
    return out
