"""Pure-Python/numpy versions of the planning kernels.

Same signatures as the compiled ``_ckernels`` module; used when the
extension is not built or ``IPPAL_PURE_PYTHON=1`` is set.
"""

import math

import numpy as np


def summed_area(a):
    sat = np.zeros((a.shape[0] + 1, a.shape[1] + 1), dtype=np.float64)
    np.cumsum(np.cumsum(a, axis=0), axis=1, out=sat[1:, 1:])
    return sat


def rect_sums(sat, r0, c0, h, w):
    r0 = np.asarray(r0, dtype=np.int64)
    c0 = np.asarray(c0, dtype=np.int64)
    r1, c1 = r0 + h, c0 + w
    return sat[r1, c1] - sat[r0, c1] - sat[r1, c0] + sat[r0, c0]


def flight_time(d, v, a):
    if d <= 0.0:
        return 0.0
    if d >= v * v / a:
        return d / v + v / a
    return 2.0 * math.sqrt(d / a)


def path_objective(sat_s, sat_t, r0, c0, costs, h, w, eps):
    """Sum over waypoints of score / (cost * (forward-simulated counts + eps)).

    ``r0``, ``c0`` and ``costs`` have shape (n_paths, P); the count of an
    earlier waypoint's footprint is added over its overlap with later ones.
    """
    r0 = np.asarray(r0, dtype=np.int64)
    c0 = np.asarray(c0, dtype=np.int64)
    s = rect_sums(sat_s, r0, c0, h, w)
    t = rect_sums(sat_t, r0, c0, h, w)
    n, P = r0.shape
    extra = np.zeros((n, P))
    for i in range(1, P):
        dr = np.maximum(0, h - np.abs(r0[:, :i] - r0[:, i : i + 1]))
        dc = np.maximum(0, w - np.abs(c0[:, :i] - c0[:, i : i + 1]))
        extra[:, i] = (dr * dc).sum(axis=1)
    return (s / (np.asarray(costs) * (t + extra + eps))).sum(axis=1)


def _origin(x, gsd, half):
    return int(math.floor(x / gsd - half + 0.5))


def mcts_rollout(
    sat_s, sat_t, hist_r0, hist_c0, x, y, budget, steps,
    act_dx, act_dy, uniforms, bounds, gsd, h, w, v, a, cost_floor, eps,
):
    """Uniform random rollout; returns the summed edge reward.

    At each step the feasible actions (inside ``bounds`` and affordable)
    are enumerated in index order and ``uniforms[i]`` picks one. Stops
    after ``steps`` actions or when nothing is feasible.
    """
    x0, x1, y0, y1 = bounds
    hr = [int(r) for r in hist_r0]
    hc = [int(c) for c in hist_c0]
    total = 0.0
    n_act = len(act_dx)
    feas = [0] * n_act
    fcost = [0.0] * n_act
    for step in range(steps):
        nf = 0
        for k in range(n_act):
            nx = x + act_dx[k]
            ny = y + act_dy[k]
            if nx < x0 - 1e-9 or nx > x1 + 1e-9 or ny < y0 - 1e-9 or ny > y1 + 1e-9:
                continue
            c = flight_time(math.hypot(act_dx[k], act_dy[k]), v, a)
            if c > budget:
                continue
            feas[nf] = k
            fcost[nf] = c
            nf += 1
        if nf == 0:
            break
        j = int(uniforms[step] * nf)
        if j >= nf:
            j = nf - 1
        k = feas[j]
        c = fcost[j]
        x += act_dx[k]
        y += act_dy[k]
        budget -= c
        r = _origin(y, gsd, h / 2.0)
        cc = _origin(x, gsd, w / 2.0)
        s = sat_s[r + h, cc + w] - sat_s[r, cc + w] - sat_s[r + h, cc] + sat_s[r, cc]
        t = sat_t[r + h, cc + w] - sat_t[r, cc + w] - sat_t[r + h, cc] + sat_t[r, cc]
        for i in range(len(hr)):
            dr = h - abs(hr[i] - r)
            dc = w - abs(hc[i] - cc)
            if dr > 0 and dc > 0:
                t += dr * dc
        total += s / (max(c, cost_floor) * (t + eps))
        hr.append(r)
        hc.append(cc)
    return total
