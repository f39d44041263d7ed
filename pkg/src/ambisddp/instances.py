"""Seeded random multistage instances small enough for the exact recursion.

Each stage is a small capacity-planning problem: binary units ``x`` are kept
on at a scenario-dependent running cost, switching a unit on costs a start-up
fee (the link to the previous state), a weight budget limits the units, and
demand not covered is either bought at a penalty or, optionally, by a binary
emergency unit. Demand and running costs scale with a scalar realization in
``[0, 2]``.
"""
from __future__ import annotations

import numpy as np

from .model import MultistageModel, ScenarioSupport, StageTemplate


def capacity_stage(rng, d, omegas, d_prev, emergency=False, name=""):
    n = len(omegas)
    omegas = np.asarray(omegas, dtype=float)
    cap = rng.integers(2, 7, d).astype(float)
    run = rng.uniform(1.0, 4.0, d).round(2)
    start = rng.uniform(0.5, 3.0, d).round(2)
    weight = rng.integers(1, 4, d).astype(float)
    budget = float(max(weight.max(), np.floor(0.7 * weight.sum())))
    penalty = round(float(rng.uniform(3.0, 5.0)), 2)
    demand0 = 0.6 * cap.sum()
    d_y = 1 + d_prev + int(emergency)
    m = 2 + d_prev
    cost_x = np.outer(0.6 + 0.4 * omegas, run)
    cost_y = np.zeros((n, d_y))
    cost_y[:, 0] = penalty
    cost_y[:, 1:1 + d_prev] = start[:d_prev]
    A = np.zeros((m, d))
    B = np.zeros((m, d_y))
    C = np.zeros((m, d_prev))
    b = np.zeros((n, m))
    rel = [">=", "<="] + [">="] * d_prev
    A[0] = cap
    B[0, 0] = 1.0
    if emergency:
        B[0, -1] = float(np.ceil(0.4 * cap.sum()))
        cost_y[:, -1] = float(penalty * 0.5 * B[0, -1])
    b[:, 0] = (demand0 * (0.4 + 0.6 * omegas)).round(3)
    A[1] = weight
    b[:, 1] = budget
    # start-up indicator: s_j >= x_j - x_prev_j
    for j in range(d_prev):
        if j < d:
            A[2 + j, j] = -1.0
        B[2 + j, 1 + j] = 1.0
        C[2 + j, j] = 1.0
    y_upper = np.full(d_y, np.inf)
    y_binary = np.zeros(d_y, dtype=bool)
    if emergency:
        y_upper[-1] = 1.0
        y_binary[-1] = True
    return StageTemplate(n, cost_x, cost_y, np.broadcast_to(A, (n, m, d)), B, C, b, rel,
                         y_upper=y_upper, y_binary=y_binary, name=name)


def random_instance(seed: int, horizon: int = 3, n_scen: int = 2, d_x: int = 3,
                    emergency: bool = False) -> MultistageModel:
    """Random capacity-planning instance; realizations are drawn on a 0.1 grid in ``[0, 2]``."""
    rng = np.random.default_rng(seed)
    stages, supports = [], []
    for t in range(horizon):
        if t == 0:
            omegas = np.array([1.0])
        else:
            omegas = np.sort(rng.choice(np.arange(0, 21) / 10.0, size=n_scen, replace=False))
        stages.append(capacity_stage(rng, d_x, omegas, d_x, emergency, name=f"stage{t}"))
        supports.append(ScenarioSupport(omegas[:, None], np.full(omegas.size, 1.0 / omegas.size)))
    return MultistageModel(stages, supports, np.zeros(d_x), name=f"cap-s{seed}-T{horizon}-N{n_scen}-d{d_x}")


# (seed, T, N, d_x, emergency, epsilon)
BATTERY = [
    (101, 2, 2, 2, False, 0.0),
    (102, 2, 3, 3, True, 0.2),
    (103, 2, 2, 4, False, 1.0),
    (104, 2, 3, 5, False, 0.2),
    (105, 2, 2, 6, False, 1.0),
    (106, 2, 3, 6, False, 0.0),
    (107, 3, 2, 2, True, 0.2),
    (108, 3, 3, 2, False, 1.0),
    (109, 3, 2, 3, False, 0.0),
    (110, 3, 3, 3, True, 1.0),
    (111, 3, 2, 4, False, 0.2),
    (112, 3, 3, 4, False, 1.0),
]


def battery():
    """The fixed list of ``(model, epsilon)`` pairs used by the oracle acceptance checks."""
    return [(random_instance(s, T, N, d, e), eps) for s, T, N, d, e, eps in BATTERY]
