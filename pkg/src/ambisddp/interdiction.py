"""Multistage interdiction families: maximum-flow (MFIP) and facility location (FLIP).

MFIP: an interdictor removes arcs of a capacitated network, one budget per
stage, and removals persist. The network user's maximum flow is dualized to a
minimum-cut LP with node potentials ``u`` in ``[0, 1]`` and arc multipliers
``w`` in ``[0, 1]``; the objective ``sum c_a (1 - x_a) w_a`` is linearized
with ``v_a = x_a w_a`` (exact for binary ``x``), so every stage is a single
mixed-binary minimization whose value is the flow left after interdiction.

FLIP: an interdictor removes facilities; every demand point is served by its
closest surviving facility and the interdictor maximizes the demand-weighted
service distance. Stages are stored negated so that the solver minimizes.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri

from .builder import LpBuilder
from .errors import BadGrid, DegenerateGeometry, ModelError
from .lp import solve_lp
from .mip import solve_mip
from .model import MultistageModel, ScenarioData, ScenarioSupport, StageTemplate


def truncated_normal(rng: np.random.Generator, mean, sd, lo, hi, size=None) -> np.ndarray:
    """Inverse-CDF sampling on ``[lo, hi]``; one uniform draw per value."""
    mean = np.asarray(mean, dtype=float)
    sd = np.asarray(sd, dtype=float)
    a = ndtr((lo - mean) / sd)
    b = ndtr((hi - mean) / sd)
    u = rng.uniform(size=size if size is not None else mean.shape)
    return np.clip(mean + sd * ndtri(a + u * (b - a)), lo, hi)


# ---------------------------------------------------------------------------
# networks


@dataclass(frozen=True)
class Arc:
    tail: int
    head: int
    finite: bool = True
    interdictable: bool = False
    cost: float = 1.0


@dataclass
class Network:
    """Directed network with source ``source`` and sink ``sink``.

    The return arc from sink to source is implicit. Capacities are given per
    finite arc (in ``finite_arcs`` order); interdiction vectors per
    interdictable arc (in ``interdictable_arcs`` order).
    """

    n_nodes: int
    arcs: list
    source: int = 0
    sink: int = 1
    finite_arcs: np.ndarray = field(init=False)
    interdictable_arcs: np.ndarray = field(init=False)

    def __post_init__(self):
        for a in self.arcs:
            if not (0 <= a.tail < self.n_nodes and 0 <= a.head < self.n_nodes) or a.tail == a.head:
                raise ModelError(f"bad arc {a}")
            if a.interdictable and not a.finite:
                raise ModelError("an interdictable arc needs a finite capacity")
        self.finite_arcs = np.array([k for k, a in enumerate(self.arcs) if a.finite], dtype=np.int64)
        self.interdictable_arcs = np.array([k for k, a in enumerate(self.arcs) if a.interdictable],
                                           dtype=np.int64)
        pos = {k: i for i, k in enumerate(self.finite_arcs)}
        self.interdictable_pos = np.array([pos[k] for k in self.interdictable_arcs], dtype=np.int64)

    @property
    def n_finite(self) -> int:
        return self.finite_arcs.size

    @property
    def n_interdictable(self) -> int:
        return self.interdictable_arcs.size

    def interdiction_costs(self) -> np.ndarray:
        return np.array([self.arcs[k].cost for k in self.interdictable_arcs], dtype=float)

    def arc_capacities(self, caps, interdicted=None) -> np.ndarray:
        """Capacity of every arc: finite arcs from ``caps``, zero where interdicted."""
        full = np.full(len(self.arcs), np.inf)
        full[self.finite_arcs] = np.asarray(caps, dtype=float)
        if interdicted is not None:
            x = np.asarray(interdicted, dtype=float)
            full[self.interdictable_arcs[x > 0.5]] = 0.0
        return full


def grid_network(rows: int, cols: int, rng: np.random.Generator, fraction: float = 0.8) -> Network:
    """Grid network: source feeds the first column, the last column feeds the sink.

    Source and sink connections have infinite capacity and cannot be
    interdicted. Horizontal arcs point right, vertical arcs on the first and
    last columns point down, other vertical arcs get a random direction. A
    ``round(fraction * n)`` subset of the ``n`` grid arcs is interdictable.
    """
    if rows < 1 or cols < 2:
        raise BadGrid(f"a {rows}x{cols} grid has no finite path from source to sink")
    if not 0.0 <= fraction <= 1.0:
        raise BadGrid("the interdictable fraction must lie in [0, 1]")
    node = lambda i, j: 2 + i * cols + j
    ends = []
    for i in range(rows):
        ends.append((0, node(i, 0)))
        ends.append((node(i, cols - 1), 1))
    grid = []
    for i in range(rows):
        for j in range(cols - 1):
            grid.append((node(i, j), node(i, j + 1)))
    for i in range(rows - 1):
        for j in range(cols):
            if j in (0, cols - 1) or rng.random() < 0.5:
                grid.append((node(i, j), node(i + 1, j)))
            else:
                grid.append((node(i + 1, j), node(i, j)))
    k = int(round(fraction * len(grid)))
    chosen = set(rng.choice(len(grid), size=k, replace=False).tolist()) if k else set()
    arcs = [Arc(t, h, finite=False) for t, h in ends]
    arcs += [Arc(t, h, True, g in chosen) for g, (t, h) in enumerate(grid)]
    return Network(2 + rows * cols, arcs)


def max_flow(net: Network, caps, interdicted=None) -> float:
    """Augmenting-path (shortest path first) maximum flow; interdicted arcs carry nothing."""
    cap = net.arc_capacities(caps, interdicted)
    if np.any(cap < 0):
        raise ModelError("capacities must be nonnegative")
    n = net.n_nodes
    # residual graph as edge lists; edge 2k is forward, 2k+1 its reverse
    head, res, adj = [], [], [[] for _ in range(n)]
    for a, c in zip(net.arcs, cap):
        adj[a.tail].append(len(head))
        head.append(a.head)
        res.append(c)
        adj[a.head].append(len(head))
        head.append(a.tail)
        res.append(0.0)
    total = 0.0
    s, r = net.source, net.sink
    while True:
        prev = [-1] * n
        prev[s] = -2
        queue = deque([s])
        while queue and prev[r] == -1:
            u = queue.popleft()
            for e in adj[u]:
                if res[e] > 1e-12 and prev[head[e]] == -1:
                    prev[head[e]] = e
                    queue.append(head[e])
        if prev[r] == -1:
            return total
        push, v = math.inf, r
        while v != s:
            e = prev[v]
            push = min(push, res[e])
            v = head[e ^ 1]
        if math.isinf(push):
            raise ModelError("unbounded flow: a source-sink path has no finite arc")
        v = r
        while v != s:
            e = prev[v]
            res[e] -= push
            res[e ^ 1] += push
            v = head[e ^ 1]
        total += push


# ---------------------------------------------------------------------------
# MFIP stages


@dataclass
class MfipParams:
    rows: int = 3
    cols: int = 3
    horizon: int = 3
    n_scen: int = 5
    budget: float = 1.0
    cap_lo: float = 30.0
    cap_hi: float = 60.0
    fraction: float = 0.8
    epsilon: float = 30.0
    seed: int = 0
    capacity_law: str = "uniform"
    cap_mean: float = 30.0
    cap_sd: float = 5.0
    two_stage: bool = False
    arc_means: tuple | None = None
    arc_sd_ratio: float = 0.25

    def __post_init__(self):
        if not 0.0 <= self.fraction <= 1.0:
            raise BadGrid("fraction must lie in [0, 1]")
        if self.cap_lo > self.cap_hi:
            raise BadGrid("cap_lo exceeds cap_hi")
        if self.capacity_law not in ("uniform", "truncnorm"):
            raise ModelError(f"unknown capacity law {self.capacity_law!r}")
        if self.horizon < 1 or self.n_scen < 1:
            raise ModelError("horizon and n_scen must be positive")


def sample_capacities(rng: np.random.Generator, params: MfipParams, n: int, n_arcs: int) -> np.ndarray:
    """``n`` capacity vectors from the generating law (integers for the uniform law)."""
    if params.arc_means is not None:
        mu = np.broadcast_to(np.asarray(params.arc_means, dtype=float), (n_arcs,))
        v = truncated_normal(rng, mu, params.arc_sd_ratio * mu, params.cap_lo, params.cap_hi, (n, n_arcs))
        return np.round(v, 2)
    if params.capacity_law == "uniform":
        return rng.integers(int(params.cap_lo), int(params.cap_hi) + 1, (n, n_arcs)).astype(float)
    v = truncated_normal(rng, params.cap_mean, params.cap_sd, params.cap_lo, params.cap_hi, (n, n_arcs))
    return np.round(v, 2)


def mfip_stage(net: Network, caps, budget: float, with_flow: bool = True, fail=None,
               name: str = "") -> StageTemplate:
    """One interdiction stage for every capacity row of ``caps``.

    ``fail`` (``n_scen x n_interdictable`` booleans) marks arcs whose
    interdiction has no effect in a realization.
    """
    caps = np.atleast_2d(np.asarray(caps, dtype=float))
    N = caps.shape[0]
    d = net.n_interdictable
    f = net.interdiction_costs()
    rows_A, rows_B, rows_C, rhs, rel = [], [], [], [], []
    n_u, n_w = (net.n_nodes, net.n_finite) if with_flow else (0, 0)
    d_y = n_u + n_w + (d if with_flow else 0)

    def row(ax=None, by=None, cx=None, r=">=", b=0.0):
        rows_A.append(np.zeros(d) if ax is None else ax)
        rows_B.append(np.zeros(d_y) if by is None else by)
        rows_C.append(np.zeros(d) if cx is None else cx)
        rel.append(r)
        rhs.append(b)

    for k in range(d):
        e = np.zeros(d)
        e[k] = 1.0
        row(ax=e, cx=-e)
    row(ax=f, cx=-f, r="<=", b=budget)
    cost_y = np.zeros((N, d_y))
    y_lo, y_up = np.zeros(d_y), np.ones(d_y)
    if with_flow:
        fin_pos = {k: i for i, k in enumerate(net.finite_arcs)}
        y_up[net.source] = 0.0
        y_lo[net.sink] = 1.0
        for k, a in enumerate(net.arcs):
            by = np.zeros(d_y)
            by[a.tail] += 1.0
            by[a.head] -= 1.0
            if a.finite:
                by[n_u + fin_pos[k]] = 1.0
            row(by=by)
        for j, p in enumerate(net.interdictable_pos):
            vw = np.zeros(d_y)
            vw[n_u + n_w + j] = 1.0
            vw[n_u + p] = -1.0
            ex = np.zeros(d)
            ex[j] = 1.0
            row(by=vw, r="<=")
            vx = np.zeros(d_y)
            vx[n_u + n_w + j] = 1.0
            row(ax=-ex, by=vx, r="<=")
            row(ax=-ex, by=vw, r=">=", b=-1.0)
        cost_y[:, n_u:n_u + n_w] = caps
        v_cost = -caps[:, net.interdictable_pos]
        if fail is not None:
            v_cost = np.where(np.asarray(fail, dtype=bool), 0.0, v_cost)
        cost_y[:, n_u + n_w:] = v_cost
    m = len(rel)
    A = np.array(rows_A).reshape(m, d)
    B = np.array(rows_B).reshape(m, d_y)
    C = np.array(rows_C).reshape(m, d)
    return StageTemplate(N, np.zeros((N, d)), cost_y, A, B, C, np.array(rhs), rel,
                         y_lower=y_lo, y_upper=y_up, name=name)


@dataclass(eq=False)
class MfipWorld:
    """A generated MFIP instance together with its network and generating law."""

    model: MultistageModel
    net: Network
    params: MfipParams

    def sample_path_data(self, rng: np.random.Generator) -> list:
        """Stage data of one fresh path drawn from the generating law."""
        out = [self.model.stages[0].scenario(0)]
        for t in range(1, self.model.horizon):
            caps = sample_capacities(rng, self.params, 1, self.net.n_finite)[0]
            out.append(mfip_scenario_data(self.model.stages[t], self.net, caps))
        return out


def mfip_scenario_data(template: StageTemplate, net: Network, caps, fail=None) -> ScenarioData:
    base = template.scenario(0)
    cost_y = np.zeros_like(base.cost_y)
    if cost_y.size:
        n_u, n_w = net.n_nodes, net.n_finite
        caps = np.asarray(caps, dtype=float)
        cost_y[n_u:n_u + n_w] = caps
        v = -caps[net.interdictable_pos]
        if fail is not None:
            v = np.where(np.asarray(fail, dtype=bool), 0.0, v)
        cost_y[n_u + n_w:] = v
    return ScenarioData(base.cost_x, cost_y, base.A, base.B, base.C, base.b)


def gen_mfip_world(p: MfipParams, net: Network | None = None) -> MfipWorld:
    """Generate network (unless given) and per-stage capacity supports."""
    rng = np.random.default_rng(p.seed)
    if net is None:
        net = grid_network(p.rows, p.cols, rng, p.fraction)
    stages, supports = [], []
    for t in range(p.horizon):
        n = 1 if t == 0 else p.n_scen
        caps = sample_capacities(rng, p, n, net.n_finite)
        if p.two_stage:
            flow, budget = t > 0, (p.budget if t == 0 else 0.0)
        else:
            flow, budget = True, p.budget
        stages.append(mfip_stage(net, caps, budget, flow, name=f"mfip{t}"))
        supports.append(ScenarioSupport(caps, np.full(n, 1.0 / n)))
    model = MultistageModel(stages, supports, np.zeros(net.n_interdictable),
                            name=f"mfip-{p.rows}x{p.cols}-T{p.horizon}-N{p.n_scen}-s{p.seed}")
    return MfipWorld(model, net, p)


def gen_mfip_instance(p: MfipParams) -> MultistageModel:
    return gen_mfip_world(p).model


def fixed_state_value(template: StageTemplate, data: ScenarioData, x, x_prev) -> float:
    """Stage cost at fixed ``x`` (local columns optimized as an LP)."""
    x = np.asarray(x, dtype=float)
    x_prev = np.asarray(x_prev, dtype=float)
    bld = LpBuilder()
    y = bld.add_vars(template.d_y, data.cost_y, template.y_lower, template.y_upper)
    bld.add_rows(y, data.B, list(template.relations), data.b - data.A @ x - data.C @ x_prev)
    sol = solve_lp(bld.build_lp())
    if not sol.optimal:
        raise ModelError(f"stage with fixed state is {sol.status}")
    return float(data.cost_x @ x + sol.objective)


def mean_capacities(params: MfipParams, n_arcs: int) -> np.ndarray:
    """Mean of the generating law per finite arc (the truncation is ignored)."""
    if params.arc_means is not None:
        return np.broadcast_to(np.asarray(params.arc_means, dtype=float), (n_arcs,)).copy()
    if params.capacity_law == "uniform":
        return np.full(n_arcs, 0.5 * (params.cap_lo + params.cap_hi))
    return np.full(n_arcs, float(params.cap_mean))


def critical_arcs(net: Network, mean_caps, budget: float) -> np.ndarray:
    """Interdictable positions chosen by the deterministic single-stage problem at ``mean_caps``."""
    st = mfip_stage(net, np.asarray(mean_caps, dtype=float)[None, :], budget)
    model = MultistageModel([st], [ScenarioSupport.singleton(np.asarray(mean_caps))],
                            np.zeros(net.n_interdictable))
    from .model import build_subproblem

    sub = build_subproblem(model, 0, model.x0, 0)
    sol = solve_mip(sub.mip, 1e-9)
    return np.flatnonzero(np.round(sol.primal[sub.x_cols]) > 0.5)


def corrupt_samples(world: MfipWorld, alpha_bar: float, critical, seed: int = 0) -> MfipWorld:
    """Make interdiction of ``critical`` fail in a ``ceil(alpha_bar N)`` subset of realizations.

    Every stage after the first is rewritten with its own random subset.
    """
    if not 0.0 <= alpha_bar <= 1.0:
        raise ModelError("alpha_bar must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    crit = np.asarray(critical, dtype=np.int64)
    model, net = world.model, world.net
    stages = [model.stages[0]]
    for t in range(1, model.horizon):
        st = model.stages[t]
        N = st.n_scen
        k = math.ceil(alpha_bar * N - 1e-12)
        fail = np.zeros((N, net.n_interdictable), dtype=bool)
        if k and crit.size:
            rows = rng.choice(N, size=k, replace=False)
            fail[np.ix_(rows, crit)] = True
        caps = model.supports[t].realizations
        stages.append(_with_fail(st, net, caps, fail))
    new = MultistageModel(stages, list(model.supports), model.x0, name=model.name + f"-corrupt{alpha_bar}")
    return MfipWorld(new, net, world.params)


def _with_fail(st: StageTemplate, net: Network, caps, fail) -> StageTemplate:
    if st.d_y == 0:
        return st
    n_u, n_w = net.n_nodes, net.n_finite
    cost_y = st.cost_y.copy()
    v = -np.asarray(caps, dtype=float)[:, net.interdictable_pos]
    cost_y[:, n_u + n_w:] = np.where(fail, 0.0, v)
    return st.replace(cost_y=cost_y)


def corrupted_count(world: MfipWorld, t: int) -> int:
    """Realizations of stage ``t`` where some interdiction has no effect."""
    st = world.model.stages[t]
    n_u, n_w = world.net.n_nodes, world.net.n_finite
    return int(np.sum(np.any(st.cost_y[:, n_u + n_w:] == 0.0, axis=1)))


def two_path_network() -> Network:
    """Two parallel source-sink routes, each through one interdictable arc.

    Nodes: 0 source, 1 sink, 2 and 3 the route heads. Arc positions:
    interdictable 0 on the upper route, 1 on the lower route.
    """
    return Network(4, [Arc(0, 2, False), Arc(0, 3, False),
                       Arc(2, 1, True, True), Arc(3, 1, True, True)])


# ---------------------------------------------------------------------------
# FLIP


@dataclass
class FlipParams:
    n_demand: int = 4
    n_facilities: int = 4
    horizon: int = 2
    n_scen: int = 3
    budget: int = 1
    epsilon: float = 10.0
    seed: int = 0
    demand_lo: float = 1.0
    demand_hi: float = 60.0

    def __post_init__(self):
        if self.n_demand < 1 or self.n_facilities < 1:
            raise ModelError("need at least one demand point and one facility")
        if self.budget * self.horizon > self.n_facilities - 1:
            raise ModelError("the interdiction budgets would remove every facility")


def flip_distances(demand_pts, facility_pts) -> np.ndarray:
    d = np.linalg.norm(np.asarray(demand_pts, float)[:, None, :] - np.asarray(facility_pts, float)[None, :, :],
                       axis=2)
    if np.any(d <= 0.0):
        raise DegenerateGeometry("a facility coincides with a demand point")
    return d


def farther_sets(dist) -> list:
    """``S[l][m]``: facilities strictly farther from ``l`` than ``m`` is."""
    L, M = dist.shape
    return [[np.flatnonzero(dist[l] > dist[l, m]) for m in range(M)] for l in range(L)]


def flip_stage(dist, demands, budget: int, name: str = "") -> StageTemplate:
    """Negated interdiction-median stage: ``min -sum a_l d_lm y_lm`` over assignments."""
    demands = np.atleast_2d(np.asarray(demands, dtype=float))
    N = demands.shape[0]
    L, M = dist.shape
    d_y = L * M
    S = farther_sets(dist)
    A, B, C, rhs, rel = [], [], [], [], []
    for l in range(L):
        by = np.zeros(d_y)
        by[l * M:(l + 1) * M] = 1.0
        A.append(np.zeros(M)); B.append(by); C.append(np.zeros(M)); rel.append("="); rhs.append(1.0)
    for m in range(M):
        e = np.zeros(M)
        e[m] = 1.0
        A.append(e); B.append(np.zeros(d_y)); C.append(-e); rel.append(">="); rhs.append(0.0)
    A.append(np.ones(M)); B.append(np.zeros(d_y)); C.append(-np.ones(M)); rel.append("="); rhs.append(float(budget))
    for l in range(L):
        for m in range(M):
            if S[l][m].size == 0:
                continue
            by = np.zeros(d_y)
            by[l * M + S[l][m]] = 1.0
            e = np.zeros(M)
            e[m] = -1.0
            A.append(e); B.append(by); C.append(np.zeros(M)); rel.append("<="); rhs.append(0.0)
    cost_y = -(demands[:, :, None] * dist[None, :, :]).reshape(N, d_y)
    return StageTemplate(N, np.zeros((N, M)), cost_y, np.array(A), np.array(B), np.array(C),
                         np.array(rhs), rel, y_upper=np.ones(d_y), y_binary=np.ones(d_y, dtype=bool),
                         name=name)


def closest_assignment_value(dist, demands, interdicted) -> float:
    """Demand-weighted distance to the closest surviving facility (lowest index on ties)."""
    alive = np.asarray(interdicted, dtype=float) < 0.5
    if not alive.any():
        raise ModelError("every facility is interdicted")
    nearest = np.where(alive[None, :], dist, np.inf).min(axis=1)
    return float(np.asarray(demands, dtype=float) @ nearest)


def gen_flip_instance(p: FlipParams, return_geometry: bool = False):
    rng = np.random.default_rng(p.seed)
    cells = rng.choice(100 * 100, size=p.n_demand + p.n_facilities, replace=False)
    pts = np.stack([cells // 100, cells % 100], axis=1).astype(float)
    dist = flip_distances(pts[:p.n_demand], pts[p.n_demand:])
    mu = rng.integers(20, 41, p.n_demand).astype(float)
    stages, supports = [], []
    for t in range(p.horizon):
        n = 1 if t == 0 else p.n_scen
        dem = np.round(truncated_normal(rng, mu, mu / 4, p.demand_lo, p.demand_hi, (n, p.n_demand)), 2)
        stages.append(flip_stage(dist, dem, p.budget, name=f"flip{t}"))
        supports.append(ScenarioSupport(dem, np.full(n, 1.0 / n)))
    model = MultistageModel(stages, supports, np.zeros(p.n_facilities),
                            name=f"flip-L{p.n_demand}-M{p.n_facilities}-T{p.horizon}-s{p.seed}")
    if return_geometry:
        return model, dist
    return model
