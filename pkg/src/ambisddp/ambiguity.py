"""Ambiguity sets over finite supports and the inner optimization over them.

The finite-support Wasserstein ball around the reference probabilities
``pbar`` with l1 ground distance ``D`` is the polytope of ``p`` for which a
transport plan ``v >= 0`` exists with::

    sum_j v[i, j] = p[i],   sum_i v[i, j] = pbar[j],   sum_ij D[i, j] v[i, j] <= eps,
    sum_i p[i] = 1
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .builder import LpBuilder
from .errors import NegativeRadius, ModelError
from .lp import StandardForm, solve_standard
from .model import Cut, ScenarioSupport

SINGLETON = "singleton"
WASSERSTEIN = "wasserstein_finite"
WASSERSTEIN_DD = "wasserstein_dd_continuous"


@dataclass(frozen=True)
class AmbiguitySpec:
    kind: str = WASSERSTEIN
    epsilon: float = 0.0
    norm: str = "l1"

    def __post_init__(self):
        if self.kind not in (SINGLETON, WASSERSTEIN, WASSERSTEIN_DD):
            raise ModelError(f"unknown ambiguity kind {self.kind!r}")
        if self.norm != "l1":
            raise ModelError("only the l1 ground norm is supported")
        if self.kind != WASSERSTEIN_DD and self.epsilon < 0:
            raise NegativeRadius(f"epsilon = {self.epsilon}")

    @property
    def radius(self) -> float:
        return 0.0 if self.kind == SINGLETON else float(self.epsilon)


def as_specs(ambiguity, horizon: int) -> list[AmbiguitySpec]:
    """Normalize a single spec, a float radius, or a per-stage list into one spec per stage.

    Entry ``t`` governs the distribution of stage ``t``'s realization; entry 0 is unused.
    """
    if ambiguity is None:
        ambiguity = AmbiguitySpec(SINGLETON)
    if isinstance(ambiguity, (int, float)):
        ambiguity = AmbiguitySpec(WASSERSTEIN, float(ambiguity))
    if isinstance(ambiguity, AmbiguitySpec):
        return [ambiguity] * horizon
    specs = list(ambiguity)
    if len(specs) == horizon - 1:
        specs = [AmbiguitySpec(SINGLETON)] + specs
    if len(specs) != horizon:
        raise ModelError(f"need {horizon - 1} or {horizon} ambiguity entries, got {len(specs)}")
    return [AmbiguitySpec(WASSERSTEIN, float(s)) if isinstance(s, (int, float)) else s for s in specs]


def wasserstein_polytope(support: ScenarioSupport, epsilon: float, builder: LpBuilder | None = None):
    """Add the transport description of the ball to ``builder``.

    Returns ``(builder, p_cols, v_cols)`` with ``v_cols`` shaped ``(N, N)``.
    """
    if epsilon < 0:
        raise NegativeRadius(f"epsilon = {epsilon}")
    bld = builder if builder is not None else LpBuilder()
    N = support.size
    p = bld.add_vars(N, 0.0, 0.0, 1.0)
    v = bld.add_vars(N * N, 0.0, 0.0, np.inf).reshape(N, N)
    for i in range(N):
        bld.add_row(np.concatenate([v[i], [p[i]]]), np.concatenate([np.ones(N), [-1.0]]), "=", 0.0)
    for j in range(N):
        bld.add_row(v[:, j], np.ones(N), "=", support.probs[j])
    bld.add_row(v.ravel(), support.distances.ravel(), "<=", float(epsilon))
    bld.add_row(p, np.ones(N), "=", 1.0)
    return bld, p, v


class _PolytopeLp:
    """The ball as a prepared standard form; re-solved with different objectives."""

    _cache: dict = {}

    def __init__(self, support: ScenarioSupport, epsilon: float):
        bld, self.p, self.v = wasserstein_polytope(support, epsilon)
        self.sf = StandardForm(bld.build_lp())
        self.n = bld.num_cols

    @classmethod
    def get(cls, support, epsilon):
        key = (id(support), float(epsilon))
        hit = cls._cache.get(key)
        if hit is None or hit[0] is not support:
            if len(cls._cache) > 256:
                cls._cache.clear()
            hit = (support, cls(support, epsilon))
            cls._cache[key] = hit
        return hit[1]

    def optimize(self, weights, maximize: bool):
        c = np.zeros(self.n)
        c[self.p] = -weights if maximize else weights
        sol = solve_standard(self.sf.with_cost(c))
        if not sol.optimal:  # pragma: no cover - the ball always contains pbar
            raise ModelError(f"ambiguity LP {sol.status}")
        p = np.clip(sol.primal[self.p], 0.0, None)
        return p, float(p @ weights)


def _distinct(support: ScenarioSupport) -> bool:
    """No two realizations coincide, so a zero radius pins every probability."""
    D = support.distances
    return bool(np.all(D[~np.eye(support.size, dtype=bool)] > 0))


def _inner(values, support, epsilon, maximize):
    values = np.asarray(values, dtype=float).ravel()
    if values.size != support.size:
        raise ModelError(f"{values.size} values for {support.size} scenarios")
    if epsilon < 0:
        raise NegativeRadius(f"epsilon = {epsilon}")
    if support.size == 1 or (epsilon == 0 and _distinct(support)):
        p = support.probs.copy()
        return p, float(p @ values)
    return _PolytopeLp.get(support, epsilon).optimize(values, maximize)


def worst_case_distribution(values, support: ScenarioSupport, epsilon: float):
    """Maximize ``sum_i p_i values_i`` over the ball; returns ``(p, value)``."""
    return _inner(values, support, epsilon, True)


def best_case_distribution(values, support: ScenarioSupport, epsilon: float):
    """Minimize ``sum_i p_i values_i`` over the ball; returns ``(p, value)``."""
    return _inner(values, support, epsilon, False)


def transport_feasible(p, support: ScenarioSupport, epsilon: float, tol: float = 1e-7) -> bool:
    """Whether ``p`` lies in the ball (minimum transport cost LP)."""
    p = np.asarray(p, dtype=float)
    if np.any(p < -tol) or abs(p.sum() - 1.0) > tol:
        return False
    N = support.size
    bld = LpBuilder()
    v = bld.add_vars(N * N, support.distances.ravel(), 0.0).reshape(N, N)
    for i in range(N):
        bld.add_row(v[i], np.ones(N), "=", p[i])
    for j in range(N):
        bld.add_row(v[:, j], np.ones(N), "=", support.probs[j])
    sol = solve_standard(StandardForm(bld.build_lp()))
    return sol.optimal and sol.objective <= epsilon + tol


def drr_cut_coefficients(alphas, betas, x_hat, support: ScenarioSupport, epsilon: float,
                         stage: int = 0, iteration: int = 0) -> Cut:
    """Aggregate one cut per scenario into a cut on the best-case expectation.

    Coordinate ``j`` of the slope minimizes ``sum_i p_i alphas[i, j]`` over the
    ball when ``x_hat[j] = 0`` and maximizes it when ``x_hat[j] = 1``; the
    level ``gamma`` is the best-case expectation of the cut values at
    ``x_hat``. The result ``phi >= pi @ (x - x_hat) + gamma`` is returned as
    ``alpha = pi``, ``beta = gamma - pi @ x_hat``.
    """
    alphas = np.atleast_2d(np.asarray(alphas, dtype=float))
    betas = np.asarray(betas, dtype=float).ravel()
    x_hat = np.asarray(x_hat, dtype=float).ravel()
    N, d = alphas.shape
    if N != support.size or betas.size != N or x_hat.size != d:
        raise ModelError("cut data does not match the support")
    pi = np.empty(d)
    for j in range(d):
        col = alphas[:, j]
        if x_hat[j] > 0.5:
            pi[j] = worst_case_distribution(col, support, epsilon)[1]
        else:
            pi[j] = best_case_distribution(col, support, epsilon)[1]
    gamma = best_case_distribution(alphas @ x_hat + betas, support, epsilon)[1]
    return Cut(stage, pi, gamma - pi @ x_hat, "drr_aggregate", None, iteration)
