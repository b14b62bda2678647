# cython: language_level=3
"""Compiled exact-SSA kernel (direct and modified next-reaction methods).

Mirrors ``_ssa_py.run`` draw for draw: both consume ``next_double`` from the
numpy bit generator in the same order and use the same floating-point
operation sequence, so the two backends yield bit-identical trajectories.
"""

import numpy as np
cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport log1p, INFINITY
from libc.stdlib cimport malloc, realloc, free
from numpy.random cimport bitgen_t

cnp.import_array()

cdef enum:
    HORIZON = 0
    ABSORBED = 1
    PREDICATE = 2
    TRUNCATED = 3


cdef inline double _propensity(long k, const long *x, const double *kappa,
                               const long *rptr, const long *rsp, const long *rmult) noexcept nogil:
    cdef double a = kappa[k]
    cdef long p, j, xi
    for p in range(rptr[k], rptr[k + 1]):
        xi = x[rsp[p]]
        for j in range(rmult[p]):
            a = a * <double>(xi - j) / <double>(j + 1)
    return a


cdef inline double _pred_value(const long *x, const long *cnt, long S, long R,
                               const double *ws, const double *wr) noexcept nogil:
    cdef double v = 0.0
    cdef long i
    for i in range(S):
        v += ws[i] * <double>x[i]
    for i in range(R):
        v += wr[i] * <double>cnt[i]
    return v


def run(cn, x0, counts0, double t0, double horizon, long max_events, int method, bitgen,
        bint record, grid, pred_ws, pred_wr, double pred_level, bint use_pred):
    cdef long S = cn.n_species
    cdef long R = cn.n_reactions
    cdef cnp.ndarray[double] kappa_a = np.ascontiguousarray(cn.kappa, dtype=np.float64)
    cdef cnp.ndarray[long] rptr_a = np.ascontiguousarray(cn.react_ptr, dtype=np.int64)
    cdef cnp.ndarray[long] rsp_a = np.ascontiguousarray(cn.react_sp, dtype=np.int64)
    cdef cnp.ndarray[long] rmult_a = np.ascontiguousarray(cn.react_mult, dtype=np.int64)
    cdef cnp.ndarray[long] dptr_a = np.ascontiguousarray(cn.delta_ptr, dtype=np.int64)
    cdef cnp.ndarray[long] dsp_a = np.ascontiguousarray(cn.delta_sp, dtype=np.int64)
    cdef cnp.ndarray[long] dval_a = np.ascontiguousarray(cn.delta_val, dtype=np.int64)
    cdef cnp.ndarray[long] depptr_a = np.ascontiguousarray(cn.dep_ptr, dtype=np.int64)
    cdef cnp.ndarray[long] deprx_a = np.ascontiguousarray(cn.dep_rx, dtype=np.int64)
    cdef cnp.ndarray[long] x_a = np.array(x0, dtype=np.int64, copy=True)
    cdef cnp.ndarray[long] cnt_a = np.array(counts0, dtype=np.int64, copy=True)
    cdef cnp.ndarray[double] grid_a = np.ascontiguousarray(grid, dtype=np.float64)
    cdef cnp.ndarray[double] ws_a = np.ascontiguousarray(pred_ws, dtype=np.float64)
    cdef cnp.ndarray[double] wr_a = np.ascontiguousarray(pred_wr, dtype=np.float64)
    cdef long G = grid_a.shape[0]
    cdef cnp.ndarray[long, ndim=2] gx_a = np.zeros((G, S), dtype=np.int64)
    cdef cnp.ndarray[long, ndim=2] gc_a = np.zeros((G, R), dtype=np.int64)
    cdef cnp.ndarray[double] a_a = np.zeros(R, dtype=np.float64)
    cdef cnp.ndarray[double] T_a = np.zeros(R, dtype=np.float64)
    cdef cnp.ndarray[double] P_a = np.zeros(R, dtype=np.float64)

    cdef const double *kappa = &kappa_a[0] if R > 0 else NULL
    cdef const long *rptr = &rptr_a[0]
    cdef const long *rsp = &rsp_a[0] if rsp_a.shape[0] > 0 else NULL
    cdef const long *rmult = &rmult_a[0] if rmult_a.shape[0] > 0 else NULL
    cdef const long *dptr = &dptr_a[0]
    cdef const long *dsp = &dsp_a[0] if dsp_a.shape[0] > 0 else NULL
    cdef const long *dval = &dval_a[0] if dval_a.shape[0] > 0 else NULL
    cdef const long *depptr = &depptr_a[0]
    cdef const long *deprx = &deprx_a[0] if deprx_a.shape[0] > 0 else NULL
    cdef long *x = &x_a[0] if S > 0 else NULL
    cdef long *cnt = &cnt_a[0] if R > 0 else NULL
    cdef const double *gridp = &grid_a[0] if G > 0 else NULL
    cdef const double *ws = &ws_a[0] if S > 0 else NULL
    cdef const double *wr = &wr_a[0] if R > 0 else NULL
    cdef long *gx = &gx_a[0, 0] if G > 0 and S > 0 else NULL
    cdef long *gc = &gc_a[0, 0] if G > 0 and R > 0 else NULL
    cdef double *a = &a_a[0] if R > 0 else NULL
    cdef double *T = &T_a[0] if R > 0 else NULL
    cdef double *P = &P_a[0] if R > 0 else NULL

    cdef bitgen_t *rng = <bitgen_t *> PyCapsule_GetPointer(bitgen.capsule, "BitGenerator")

    cdef double t = t0
    cdef double t_new, a0, u, r, cum, dt, best
    cdef long n_events = 0
    cdef int status = HORIZON
    cdef long gi = 0
    cdef long k, mu, p, i
    cdef double hit_time = -1.0
    cdef long cap = 1024
    cdef long n_rec = 0
    cdef double *jt = NULL
    cdef int *jc = NULL
    cdef bint done = False
    cdef double *jt2
    cdef int *jc2

    if record:
        jt = <double *> malloc(cap * sizeof(double))
        jc = <int *> malloc(cap * sizeof(int))
        if jt == NULL or jc == NULL:
            free(jt); free(jc)
            raise MemoryError()

    bitgen.lock.acquire()
    with nogil:
        for k in range(R):
            a[k] = _propensity(k, x, kappa, rptr, rsp, rmult)
        if use_pred and _pred_value(x, cnt, S, R, ws, wr) >= pred_level:
            status = PREDICATE
            hit_time = t
            done = True
        if method == 1 and not done:
            for k in range(R):
                P[k] = -log1p(-rng.next_double(rng.state))
                T[k] = 0.0
        while not done:
            if method == 0:
                a0 = 0.0
                for k in range(R):
                    a0 += a[k]
                if a0 <= 0.0:
                    status = ABSORBED
                    t = horizon
                    break
                u = rng.next_double(rng.state)
                dt = -log1p(-u) / a0
                t_new = t + dt
                if t_new > horizon:
                    t = horizon
                    status = HORIZON
                    break
                if n_events >= max_events:
                    status = TRUNCATED
                    break
                u = rng.next_double(rng.state)
                r = u * a0
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
                best = INFINITY
                for k in range(R):
                    if a[k] > 0.0:
                        dt = (P[k] - T[k]) / a[k]
                        if dt < best:
                            best = dt
                            mu = k
                if mu < 0:
                    status = ABSORBED
                    t = horizon
                    break
                t_new = t + best
                if t_new > horizon:
                    t = horizon
                    status = HORIZON
                    break
                if n_events >= max_events:
                    status = TRUNCATED
                    break
                for k in range(R):
                    T[k] = T[k] + a[k] * best
                P[mu] = P[mu] - log1p(-rng.next_double(rng.state))

            # grid points strictly before the jump see the pre-jump state
            while gi < G and gridp[gi] < t_new:
                for i in range(S):
                    gx[gi * S + i] = x[i]
                for i in range(R):
                    gc[gi * R + i] = cnt[i]
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
                if n_rec == cap:
                    cap *= 2
                    jt2 = <double *> realloc(jt, cap * sizeof(double))
                    if jt2 != NULL:
                        jt = jt2
                    jc2 = <int *> realloc(jc, cap * sizeof(int))
                    if jc2 != NULL:
                        jc = jc2
                    if jt2 == NULL or jc2 == NULL:
                        status = -1
                        break
                jt[n_rec] = t
                jc[n_rec] = <int> mu
                n_rec += 1
            if use_pred and _pred_value(x, cnt, S, R, ws, wr) >= pred_level:
                status = PREDICATE
                hit_time = t
                break

        if status != TRUNCATED and status != -1:
            while gi < G and gridp[gi] <= t:
                for i in range(S):
                    gx[gi * S + i] = x[i]
                for i in range(R):
                    gc[gi * R + i] = cnt[i]
                gi += 1

    bitgen.lock.release()
    if status == -1:
        free(jt); free(jc)
        raise MemoryError()

    jump_times = np.empty(n_rec, dtype=np.float64)
    jump_channels = np.empty(n_rec, dtype=np.int64)
    for i in range(n_rec):
        jump_times[i] = jt[i]
        jump_channels[i] = jc[i]
    free(jt)
    free(jc)
    return (t, x_a, cnt_a, n_events, status, jump_times, jump_channels, gx_a, gc_a, gi, hit_time)
