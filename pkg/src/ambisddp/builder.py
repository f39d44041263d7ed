"""Incremental assembly of LP/MIP problems column block by column block."""
from __future__ import annotations

import numpy as np

from .lp import LpProblem
from .mip import MipProblem


class LpBuilder:
    """Collects columns and rows, then emits a dense ``LpProblem``/``MipProblem``.

    Rows are stored sparsely as ``(cols, coefs, relation, rhs)`` until ``build``.
    """

    def __init__(self):
        self._cost: list[np.ndarray] = []
        self._lo: list[np.ndarray] = []
        self._up: list[np.ndarray] = []
        self._int: list[np.ndarray] = []
        self._rows: list[tuple[np.ndarray, np.ndarray, str, float]] = []
        self.num_cols = 0

    @property
    def num_rows(self) -> int:
        return len(self._rows)

    def add_vars(self, n, cost=0.0, lower=0.0, upper=np.inf, integer=False) -> np.ndarray:
        idx = np.arange(self.num_cols, self.num_cols + n)
        self._cost.append(np.broadcast_to(np.asarray(cost, dtype=float), (n,)).copy())
        self._lo.append(np.broadcast_to(np.asarray(lower, dtype=float), (n,)).copy())
        self._up.append(np.broadcast_to(np.asarray(upper, dtype=float), (n,)).copy())
        self._int.append(np.broadcast_to(np.asarray(integer, dtype=bool), (n,)).copy())
        self.num_cols += n
        return idx

    def add_row(self, cols, coefs, relation, rhs) -> int:
        self._rows.append((np.asarray(cols, dtype=np.int64).ravel(),
                           np.asarray(coefs, dtype=float).ravel(), relation, float(rhs)))
        return len(self._rows) - 1

    def add_rows(self, cols, M, relations, rhs) -> np.ndarray:
        """Add ``M[k] @ x[cols] (rel) rhs[k]`` for every row of the dense block ``M``."""
        M = np.atleast_2d(np.asarray(M, dtype=float))
        rhs = np.broadcast_to(np.asarray(rhs, dtype=float), (M.shape[0],))
        if isinstance(relations, str):
            relations = [relations] * M.shape[0]
        start = len(self._rows)
        cols = np.asarray(cols, dtype=np.int64)
        for k in range(M.shape[0]):
            self._rows.append((cols, M[k], relations[k], float(rhs[k])))
        return np.arange(start, len(self._rows))

    def set_rhs(self, row, value):
        cols, coefs, rel, _ = self._rows[row]
        self._rows[row] = (cols, coefs, rel, float(value))

    def set_cost(self, col, value):
        blk, off = self._locate(col)
        self._cost[blk][off] = value

    def _locate(self, col):
        start = 0
        for k, c in enumerate(self._cost):
            if col < start + c.size:
                return k, col - start
            start += c.size
        raise IndexError(col)

    def build_lp(self, maximize=False) -> LpProblem:
        n = self.num_cols
        m = len(self._rows)
        A = np.zeros((m, n))
        rel = []
        rhs = np.zeros(m)
        for i, (cols, coefs, r, b) in enumerate(self._rows):
            np.add.at(A[i], cols, coefs)
            rel.append(r)
            rhs[i] = b
        cat = (lambda xs: np.concatenate(xs)) if self._cost else (lambda xs: np.zeros(0))
        return LpProblem(cat(self._cost), A, rel, rhs, cat(self._lo), cat(self._up), maximize)

    def build_mip(self, maximize=False) -> MipProblem:
        lp = self.build_lp(maximize)
        ints = np.flatnonzero(np.concatenate(self._int)) if self._int else np.zeros(0, dtype=np.int64)
        return MipProblem(lp, ints)
