"""Pure-Python SSA kernel, used when the compiled extension is unavailable.

Same signature, same draw order and same floating-point sequence as the
compiled kernel, so trajectories agree bit for bit.
"""

import math

import numpy as np

HORIZON, ABSORBED, PREDICATE, TRUNCATED = 0, 1, 2, 3


def _propensity(k, x, kappa, rptr, rsp, rmult):
    a = kappa[k]
    for p in range(rptr[k], rptr[k + 1]):
        xi = x[rsp[p]]
        for j in range(rmult[p]):
            a = a * float(xi - j) / float(j + 1)
    return a


def _pred_value(x, cnt, ws, wr):
    v = 0.0
    for i in range(len(x)):
        v += ws[i] * float(x[i])
    for i in range(len(cnt)):
        v += wr[i] * float(cnt[i])
    return v


def run(cn, x0, counts0, t0, horizon, max_events, method, bitgen,
        record, grid, pred_ws, pred_wr, pred_level, use_pred, pred_fn=None):
    """``pred_fn(t, x, counts)``, if given, replaces the linear predicate."""
    S, R = cn.n_species, cn.n_reactions
    # plain lists are much faster than numpy scalars in a Python loop
    kappa = [float(v) for v in cn.kappa]
    rptr, rsp, rmult = cn.react_ptr.tolist(), cn.react_sp.tolist(), cn.react_mult.tolist()
    dptr, dsp, dval = cn.delta_ptr.tolist(), cn.delta_sp.tolist(), cn.delta_val.tolist()
    depptr, deprx = cn.dep_ptr.tolist(), cn.dep_rx.tolist()
    x = [int(v) for v in x0]
    cnt = [int(v) for v in counts0]
    gridl = [float(g) for g in grid]
    ws = [float(w) for w in pred_ws]
    wr = [float(w) for w in pred_wr]
    G = len(gridl)
    gx = np.zeros((G, S), dtype=np.int64)
    gc = np.zeros((G, R), dtype=np.int64)

    rand = np.random.Generator(bitgen).random
    log1p = math.log1p
    t = float(t0)
    n_events = 0
    status = HORIZON
    gi = 0
    hit_time = -1.0
    jt, jc = [], []

    if pred_fn is not None:
        use_pred = True

        def hit():
            return bool(pred_fn(t, np.array(x, dtype=np.int64), np.array(cnt, dtype=np.int64)))
    else:
        def hit():
            return _pred_value(x, cnt, ws, wr) >= pred_level

    a = [_propensity(k, x, kappa, rptr, rsp, rmult) for k in range(R)]
    T = [0.0] * R
    P = [0.0] * R
    done = False
    if use_pred and hit():
        status, hit_time, done = PREDICATE, t, True
    if method == 1 and not done:
        for k in range(R):
            P[k] = -log1p(-rand())
    while not done:
        if method == 0:
            a0 = 0.0
            for k in range(R):
                a0 += a[k]
            if a0 <= 0.0:
                status, t = ABSORBED, horizon
                break
            t_new = t + (-log1p(-rand()) / a0)
            if t_new > horizon:
                status, t = HORIZON, horizon
                break
            if n_events >= max_events:
                status = TRUNCATED
                break
            r = rand() * a0
            cum = 0.0
            mu = -1
            for k in range(R):
                cum += a[k]
                if a[k] > 0.0:
                    mu = k
                    if r < cum:
                        break
        else:
            mu = -1
            best = math.inf
            for k in range(R):
                if a[k] > 0.0:
                    dt = (P[k] - T[k]) / a[k]
                    if dt < best:
                        best, mu = dt, k
            if mu < 0:
                status, t = ABSORBED, horizon
                break
            t_new = t + best
            if t_new > horizon:
                status, t = HORIZON, horizon
                break
            if n_events >= max_events:
                status = TRUNCATED
                break
            for k in range(R):
                T[k] = T[k] + a[k] * best
            P[mu] = P[mu] - log1p(-rand())

        while gi < G and gridl[gi] < t_new:
            gx[gi] = x
            gc[gi] = cnt
            gi += 1
        t = t_new
        for p in range(dptr[mu], dptr[mu + 1]):
            x[dsp[p]] += dval[p]
        cnt[mu] += 1
        n_events += 1
        for p in range(depptr[mu], depptr[mu + 1]):
            k = deprx[p]
            a[k] = _propensity(k, x, kappa, rptr, rsp, rmult)
        if record:
            jt.append(t)
            jc.append(mu)
        if use_pred and hit():
            status, hit_time = PREDICATE, t
            break

    if status != TRUNCATED:
        while gi < G and gridl[gi] <= t:
            gx[gi] = x
            gc[gi] = cnt
            gi += 1

    return (t, np.array(x, dtype=np.int64), np.array(cnt, dtype=np.int64), n_events, status,
            np.array(jt, dtype=np.float64), np.array(jc, dtype=np.int64), gx, gc, gi, hit_time)
