# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled bounded-variable simplex iteration loop.

Mirrors ``_simplex_py.iterate`` exactly; runs without the GIL.
"""
from libc.math cimport fabs, INFINITY, isfinite


cdef int _iterate(double[:, ::1] T, double[::1] beta, double[::1] d,
                  long long[::1] basis, signed char[::1] state,
                  double[::1] upper, signed char[::1] can_enter,
                  long long[::1] ctrl, long max_iter, long bland_after, double piv_tol,
                  double opt_tol, long *iters) noexcept nogil:
    cdef Py_ssize_t m = T.shape[0]
    cdef Py_ssize_t n = T.shape[1]
    cdef Py_ssize_t i, j, q, r
    cdef bint bland = ctrl[1] != 0
    cdef long stall = <long>ctrl[0]
    cdef long it = 0
    cdef double best, dirn, ratio, tmin, thresh, ub, flip, step, piv, f, dq
    cdef double a, besta, start
    cdef long long leaving, bestidx
    while True:
        if it >= max_iter:
            iters[0] = it
            ctrl[0] = stall
            ctrl[1] = bland
            return 2
        q = -1
        best = -1.0
        for j in range(n):
            if not can_enter[j]:
                continue
            if (state[j] == 1 and d[j] < -opt_tol) or (state[j] == 2 and d[j] > opt_tol):
                if bland:
                    q = j
                    break
                if fabs(d[j]) > best:
                    best = fabs(d[j])
                    q = j
        if q < 0:
            iters[0] = it
            ctrl[0] = stall
            ctrl[1] = bland
            return 0
        dirn = 1.0 if state[q] == 1 else -1.0

        tmin = INFINITY
        for i in range(m):
            a = T[i, q] * dirn
            if a > piv_tol:
                ratio = beta[i] if beta[i] > 0.0 else 0.0
                ratio = ratio / a
            elif a < -piv_tol and isfinite(upper[basis[i]]):
                ratio = upper[basis[i]] - beta[i]
                if ratio < 0.0:
                    ratio = 0.0
                ratio = ratio / (-a)
            else:
                continue
            if ratio < tmin:
                tmin = ratio
        r = -1
        if isfinite(tmin):
            thresh = tmin * (1.0 + 1e-9) + 1e-12
            besta = -1.0
            bestidx = -1
            for i in range(m):
                a = T[i, q] * dirn
                if a > piv_tol:
                    ratio = beta[i] if beta[i] > 0.0 else 0.0
                    ratio = ratio / a
                elif a < -piv_tol and isfinite(upper[basis[i]]):
                    ratio = upper[basis[i]] - beta[i]
                    if ratio < 0.0:
                        ratio = 0.0
                    ratio = ratio / (-a)
                else:
                    continue
                if ratio <= thresh:
                    if bland:
                        if bestidx < 0 or basis[i] < bestidx:
                            bestidx = basis[i]
                            r = i
                    elif fabs(a) > besta:
                        besta = fabs(a)
                        r = i
        flip = upper[q]
        if r < 0 and not isfinite(flip):
            iters[0] = it
            ctrl[0] = stall
            ctrl[1] = bland
            return 1
        dq = fabs(d[q])
        if r >= 0:
            a = T[r, q] * dirn
            if a > 0:
                ratio = (beta[r] if beta[r] > 0.0 else 0.0) / a
            else:
                ratio = upper[basis[r]] - beta[r]
                if ratio < 0.0:
                    ratio = 0.0
                ratio = ratio / (-a)
        if r < 0 or flip <= ratio:
            step = flip
            for i in range(m):
                beta[i] -= step * T[i, q] * dirn
            state[q] = 3 - state[q]
        else:
            step = ratio
            for i in range(m):
                beta[i] -= step * T[i, q] * dirn
            leaving = basis[r]
            state[leaving] = 1 if T[r, q] * dirn > 0 else 2
            start = 0.0 if dirn > 0 else upper[q]
            beta[r] = start + dirn * step
            piv = T[r, q]
            for j in range(n):
                T[r, j] /= piv
            for i in range(m):
                if i == r:
                    continue
                f = T[i, q]
                if f != 0.0:
                    for j in range(n):
                        T[i, j] -= f * T[r, j]
            f = d[q]
            if f != 0.0:
                for j in range(n):
                    d[j] -= f * T[r, j]
            for i in range(m):
                T[i, q] = 0.0
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


def iterate(double[:, ::1] T, double[::1] beta, double[::1] d,
            long long[::1] basis, signed char[::1] state, double[::1] upper,
            signed char[::1] can_enter, long long[::1] ctrl, long max_iter,
            long bland_after, double piv_tol=1e-9, double opt_tol=1e-9):
    cdef long iters = 0
    cdef int status
    with nogil:
        status = _iterate(T, beta, d, basis, state, upper, can_enter, ctrl,
                          max_iter, bland_after, piv_tol, opt_tol, &iters)
    return status, iters
