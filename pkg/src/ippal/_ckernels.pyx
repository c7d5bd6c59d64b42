# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled planning kernels. Mirrors ippal._pykernels."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, floor, hypot, fabs

cnp.import_array()


def summed_area(a):
    sat = np.zeros((a.shape[0] + 1, a.shape[1] + 1), dtype=np.float64)
    np.cumsum(np.cumsum(a, axis=0), axis=1, out=sat[1:, 1:])
    return sat


cdef inline double _rect(const double[:, ::1] sat, Py_ssize_t r, Py_ssize_t c,
                         Py_ssize_t h, Py_ssize_t w) nogil:
    return sat[r + h, c + w] - sat[r, c + w] - sat[r + h, c] + sat[r, c]


cdef inline double _flight_time(double d, double v, double a) nogil:
    if d <= 0.0:
        return 0.0
    if d >= v * v / a:
        return d / v + v / a
    return 2.0 * sqrt(d / a)


def flight_time(double d, double v, double a):
    return _flight_time(d, v, a)


def rect_sums(const double[:, ::1] sat, r0, c0, Py_ssize_t h, Py_ssize_t w):
    cdef cnp.int64_t[::1] rr = np.ascontiguousarray(r0, dtype=np.int64).ravel()
    cdef cnp.int64_t[::1] cc = np.ascontiguousarray(c0, dtype=np.int64).ravel()
    cdef Py_ssize_t n = rr.shape[0], i
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for i in range(n):
            o[i] = _rect(sat, rr[i], cc[i], h, w)
    return out.reshape(np.shape(r0))


def path_objective(const double[:, ::1] sat_s, const double[:, ::1] sat_t,
                   r0, c0, costs, Py_ssize_t h, Py_ssize_t w, double eps):
    cdef cnp.int64_t[:, ::1] rr = np.ascontiguousarray(r0, dtype=np.int64)
    cdef cnp.int64_t[:, ::1] cc = np.ascontiguousarray(c0, dtype=np.int64)
    cdef double[:, ::1] cost = np.ascontiguousarray(costs, dtype=np.float64)
    cdef Py_ssize_t n = rr.shape[0], P = rr.shape[1], p, i, j
    cdef double s, t, total
    cdef Py_ssize_t dr, dc
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for p in range(n):
            total = 0.0
            for i in range(P):
                s = _rect(sat_s, rr[p, i], cc[p, i], h, w)
                t = _rect(sat_t, rr[p, i], cc[p, i], h, w)
                for j in range(i):
                    dr = h - (rr[p, j] - rr[p, i] if rr[p, j] > rr[p, i] else rr[p, i] - rr[p, j])
                    dc = w - (cc[p, j] - cc[p, i] if cc[p, j] > cc[p, i] else cc[p, i] - cc[p, j])
                    if dr > 0 and dc > 0:
                        t += dr * dc
                total += s / (cost[p, i] * (t + eps))
            o[p] = total
    return out


def mcts_rollout(const double[:, ::1] sat_s, const double[:, ::1] sat_t,
                 hist_r0, hist_c0, double x, double y, double budget, Py_ssize_t steps,
                 act_dx, act_dy, uniforms, bounds, double gsd,
                 Py_ssize_t h, Py_ssize_t w, double v, double a,
                 double cost_floor, double eps):
    cdef double[::1] dx = np.ascontiguousarray(act_dx, dtype=np.float64)
    cdef double[::1] dy = np.ascontiguousarray(act_dy, dtype=np.float64)
    cdef double[::1] u = np.ascontiguousarray(uniforms, dtype=np.float64)
    cdef Py_ssize_t n_hist = len(hist_r0)
    cdef cnp.int64_t[::1] hr = np.empty(n_hist + steps, dtype=np.int64)
    cdef cnp.int64_t[::1] hc = np.empty(n_hist + steps, dtype=np.int64)
    cdef Py_ssize_t n_act = dx.shape[0]
    cdef cnp.int64_t[::1] feas = np.empty(max(n_act, 1), dtype=np.int64)
    cdef double[::1] fcost = np.empty(max(n_act, 1), dtype=np.float64)
    cdef double x0 = bounds[0], x1 = bounds[1], y0 = bounds[2], y1 = bounds[3]
    cdef Py_ssize_t i, k, j, nf, step, n = n_hist, r, c, dr, dc
    cdef double nx, ny, cst, s, t, total = 0.0
    for i in range(n_hist):
        hr[i] = hist_r0[i]
        hc[i] = hist_c0[i]
    with nogil:
        for step in range(steps):
            nf = 0
            for k in range(n_act):
                nx = x + dx[k]
                ny = y + dy[k]
                if nx < x0 - 1e-9 or nx > x1 + 1e-9 or ny < y0 - 1e-9 or ny > y1 + 1e-9:
                    continue
                cst = _flight_time(hypot(dx[k], dy[k]), v, a)
                if cst > budget:
                    continue
                feas[nf] = k
                fcost[nf] = cst
                nf += 1
            if nf == 0:
                break
            j = <Py_ssize_t>(u[step] * nf)
            if j >= nf:
                j = nf - 1
            k = feas[j]
            cst = fcost[j]
            x += dx[k]
            y += dy[k]
            budget -= cst
            r = <Py_ssize_t>floor(y / gsd - h / 2.0 + 0.5)
            c = <Py_ssize_t>floor(x / gsd - w / 2.0 + 0.5)
            s = _rect(sat_s, r, c, h, w)
            t = _rect(sat_t, r, c, h, w)
            for i in range(n):
                dr = h - (hr[i] - r if hr[i] > r else r - hr[i])
                dc = w - (hc[i] - c if hc[i] > c else c - hc[i])
                if dr > 0 and dc > 0:
                    t += dr * dc
            total += s / ((cst if cst > cost_floor else cost_floor) * (t + eps))
            hr[n] = r
            hc[n] = c
            n += 1
    return total
