"""Pure-Python bounded-variable simplex iteration loop.

Reference implementation of the kernel in ``_simplex_ext.pyx``. Both operate
in place on a dense tableau and must follow the same pivoting rules.

Arrays
------
T : (m, n) float64, current ``B^-1 A``
beta : (m,) float64, values of the basic variables
d : (n,) float64, reduced costs
basis : (m,) int64, column index basic in each row
state : (n,) int8, 0 basic, 1 nonbasic at lower (0), 2 nonbasic at upper
upper : (n,) float64, upper bounds (``inf`` allowed); lower bounds are 0
can_enter : (n,) int8, columns allowed to enter the basis
ctrl : (2,) int64, ``[stall count, bland flag]`` carried across calls so the
    anti-cycling rule survives periodic refactorization

Returns ``(status, iterations)`` with status 0 optimal, 1 unbounded,
2 iteration limit.
"""
import numpy as np

OPTIMAL = 0
UNBOUNDED = 1
ITER_LIMIT = 2


def iterate(T, beta, d, basis, state, upper, can_enter, ctrl, max_iter,
            bland_after, piv_tol=1e-9, opt_tol=1e-9):
    m, n = T.shape
    stall = int(ctrl[0])
    bland = bool(ctrl[1])
    it = 0
    enter_mask = can_enter.astype(bool)
    while True:
        if it >= max_iter:
            ctrl[0], ctrl[1] = stall, int(bland)
            return ITER_LIMIT, it
        elig = enter_mask & (((state == 1) & (d < -opt_tol)) | ((state == 2) & (d > opt_tol)))
        if not elig.any():
            ctrl[0], ctrl[1] = stall, int(bland)
            return OPTIMAL, it
        if bland:
            q = int(np.argmax(elig))
        else:
            q = int(np.argmax(np.where(elig, np.abs(d), -1.0)))
        dirn = 1.0 if state[q] == 1 else -1.0
        col = T[:, q] * dirn

        ratios = np.full(m, np.inf)
        ub = upper[basis]
        pos = col > piv_tol
        ratios[pos] = np.maximum(beta[pos], 0.0) / col[pos]
        neg = (col < -piv_tol) & np.isfinite(ub)
        ratios[neg] = np.maximum(ub[neg] - beta[neg], 0.0) / (-col[neg])
        r = -1
        tmin = np.inf
        if m:
            tmin = ratios.min()
        if np.isfinite(tmin):
            ties = np.flatnonzero(ratios <= tmin * (1.0 + 1e-9) + 1e-12)
            if bland:
                r = int(ties[np.argmin(basis[ties])])
            else:
                r = int(ties[np.argmax(np.abs(col[ties]))])
        flip = upper[q]
        if r < 0 and not np.isfinite(flip):
            ctrl[0], ctrl[1] = stall, int(bland)
            return UNBOUNDED, it
        dq = abs(d[q])
        if r < 0 or flip <= ratios[r]:
            step = flip
            beta -= step * col
            state[q] = 3 - state[q]
        else:
            step = ratios[r]
            beta -= step * col
            leaving = basis[r]
            state[leaving] = 1 if col[r] > 0 else 2
            start = 0.0 if dirn > 0 else upper[q]
            beta[r] = start + dirn * step
            prow = T[r] / T[r, q]
            T -= np.outer(T[:, q], prow)
            T[r] = prow
            d -= d[q] * prow
            T[:, q] = 0.0
            T[r, q] = 1.0
            d[q] = 0.0
            basis[r] = q
            state[q] = 0
        it += 1
        if step * dq <= 1e-12:
            stall += 1
            if stall > bland_after:
                bland = True
        else:
            stall = 0
