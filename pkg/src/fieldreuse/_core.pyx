# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: DFE recursions, RLS channel tracking, Viterbi.

Mirrors ``_pycore`` exactly; see that module for argument conventions.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, sin, cos, isfinite

cnp.import_array()

ctypedef double complex cplx


cdef inline double _abs2(cplx z) noexcept nogil:
    return z.real * z.real + z.imag * z.imag


cdef inline cplx _conj(cplx z) noexcept nogil:
    return z.real - 1j * z.imag


cdef inline cplx _rdiv(cplx z, double d) noexcept nogil:
    # same result as complex division by d + 0j, without the general algorithm
    return z.real / d + 1j * (z.imag / d)


cdef inline Py_ssize_t _nearest(cplx z, const cplx[::1] points) noexcept nogil:
    cdef Py_ssize_t j, best = 0
    cdef double d, dbest = _abs2(z - points[0])
    for j in range(1, points.shape[0]):
        d = _abs2(z - points[j])
        if d < dbest:
            dbest = d
            best = j
    return best


def dfe_run(y, qf, qb, Py_ssize_t n0, Py_ssize_t n_out, dither, points, train,
            double mu=0.0):
    cdef cplx[:, ::1] yv = np.ascontiguousarray(y, dtype=np.complex128)
    qf_a = np.array(qf, dtype=np.complex128, copy=True, order="C")
    qb_a = np.array(qb, dtype=np.complex128, copy=True, order="C")
    cdef cplx[:, ::1] f = qf_a
    cdef cplx[::1] b = qb_a
    cdef const cplx[::1] m = np.ascontiguousarray(dither, dtype=np.complex128)
    cdef const cplx[::1] pts = np.ascontiguousarray(points, dtype=np.complex128)
    cdef const cplx[::1] tr = np.ascontiguousarray(train, dtype=np.complex128)
    cdef Py_ssize_t K = f.shape[0], Lf = f.shape[1], Lb = b.shape[0]
    cdef Py_ssize_t Ny = yv.shape[1], n_train = tr.shape[0]
    fhat_a = np.zeros(n_out, dtype=np.complex128)
    err_a = np.zeros(n_out, dtype=np.complex128)
    dec_a = np.zeros(n_out, dtype=np.int64)
    cdef cplx[::1] fhat = fhat_a
    cdef cplx[::1] err = err_a
    cdef cnp.int64_t[::1] dec = dec_a
    fb_a = np.zeros(max(Lb, 1), dtype=np.complex128)
    cdef cplx[::1] fb = fb_a
    cdef Py_ssize_t t, k, i, idx, n
    cdef cplx ghat, fh, ref, e, ce, yy
    with nogil:
        for t in range(n_out):
            n = t + n0
            ghat = 0
            for k in range(K):
                for i in range(Lf):
                    idx = n - i
                    if 0 <= idx < Ny:
                        ghat = ghat + _conj(f[k, i]) * yv[k, idx]
            for i in range(Lb):
                ghat = ghat - _conj(b[i]) * fb[i]
            fh = ghat - m[t]
            idx = _nearest(fh, pts)
            if t < n_train:
                ref = tr[t]
            else:
                ref = pts[idx]
            e = ref - fh
            fhat[t] = fh
            dec[t] = idx
            err[t] = e
            if mu != 0.0:
                ce = _conj(e)
                for k in range(K):
                    for i in range(Lf):
                        idx = n - i
                        if 0 <= idx < Ny:
                            f[k, i] = f[k, i] + mu * yv[k, idx] * ce
                for i in range(Lb):
                    b[i] = b[i] - mu * fb[i] * ce
            if Lb > 0:
                for i in range(Lb - 1, 0, -1):
                    fb[i] = fb[i - 1]
                fb[0] = ref + m[t]
    return fhat_a, dec_a, err_a, qf_a, qb_a


def rls_dfe(y, Py_ssize_t Lf, Py_ssize_t Lb, Py_ssize_t n0, Py_ssize_t n_out,
            double lam, double delta, dither, points, train,
            double pll_k1=0.0, double pll_k2=0.0):
    cdef cplx[:, ::1] yv = np.ascontiguousarray(y, dtype=np.complex128)
    cdef Py_ssize_t K = yv.shape[0], Ny = yv.shape[1]
    cdef Py_ssize_t N = K * Lf + Lb
    cdef const cplx[::1] m = np.ascontiguousarray(dither, dtype=np.complex128)
    cdef const cplx[::1] pts = np.ascontiguousarray(points, dtype=np.complex128)
    cdef const cplx[::1] tr = np.ascontiguousarray(train, dtype=np.complex128)
    cdef Py_ssize_t n_train = tr.shape[0]
    w_a = np.zeros(N, dtype=np.complex128)
    P_a = np.eye(N, dtype=np.complex128) / delta
    cdef cplx[::1] w = w_a
    cdef cplx[:, ::1] P = P_a
    u_a = np.zeros(N, dtype=np.complex128)
    pi_a = np.zeros(N, dtype=np.complex128)
    cdef cplx[::1] u = u_a
    cdef cplx[::1] pi = pi_a
    theta_a = np.zeros(K)
    nu_a = np.zeros(K)
    parts_a = np.zeros(K, dtype=np.complex128)
    cdef double[::1] theta = theta_a
    cdef double[::1] nu = nu_a
    cdef cplx[::1] parts = parts_a
    fhat_a = np.zeros(n_out, dtype=np.complex128)
    err_a = np.zeros(n_out, dtype=np.complex128)
    dec_a = np.zeros(n_out, dtype=np.int64)
    phase_a = np.zeros((K, n_out))
    cdef cplx[::1] fhat = fhat_a
    cdef cplx[::1] err = err_a
    cdef cnp.int64_t[::1] dec = dec_a
    cdef double[:, ::1] phase = phase_a
    fb_a = np.zeros(max(Lb, 1), dtype=np.complex128)
    cdef cplx[::1] fb = fb_a
    cdef Py_ssize_t t, k, i, j, idx, n, bad = -1
    cdef cplx ghat, fh, ref, e, ce, rot, acc, kap
    cdef double den, phi
    cdef bint do_pll = (pll_k1 != 0.0) or (pll_k2 != 0.0)
    with nogil:
        for t in range(n_out):
            n = t + n0
            for k in range(K):
                rot = cos(theta[k]) - 1j * sin(theta[k])
                acc = 0
                for i in range(Lf):
                    idx = n - i
                    if 0 <= idx < Ny:
                        u[k * Lf + i] = yv[k, idx] * rot
                    else:
                        u[k * Lf + i] = 0
                    acc = acc + _conj(w[k * Lf + i]) * u[k * Lf + i]
                parts[k] = acc
            for i in range(Lb):
                u[K * Lf + i] = -fb[i]
            ghat = 0
            for j in range(N):
                ghat = ghat + _conj(w[j]) * u[j]
            fh = ghat - m[t]
            idx = _nearest(fh, pts)
            if t < n_train:
                ref = tr[t]
            else:
                ref = pts[idx]
            e = ref - fh
            fhat[t] = fh
            dec[t] = idx
            err[t] = e
            den = lam
            for i in range(N):
                acc = 0
                for j in range(N):
                    acc = acc + P[i, j] * u[j]
                pi[i] = acc
                den = den + (_conj(u[i]) * acc).real
            if not isfinite(den) or den <= 0:
                bad = t
                break
            ce = _conj(e)
            for i in range(N):
                w[i] = w[i] + _rdiv(pi[i], den) * ce
            for i in range(N):
                kap = _rdiv(pi[i], den)
                P[i, i] = (P[i, i] - kap * _conj(pi[i])).real / lam
                for j in range(i + 1, N):
                    P[i, j] = _rdiv(P[i, j] - kap * _conj(pi[j]), lam)
                    P[j, i] = _conj(P[i, j])
            if do_pll:
                for k in range(K):
                    phi = (parts[k] * _conj(parts[k] + e)).imag
                    nu[k] = nu[k] + pll_k2 * phi
                    theta[k] = theta[k] + pll_k1 * phi + nu[k]
            for k in range(K):
                phase[k, t] = theta[k]
            if Lb > 0:
                for i in range(Lb - 1, 0, -1):
                    fb[i] = fb[i - 1]
                fb[0] = ref + m[t]
    if bad >= 0:
        fhat_a[bad:] = np.nan
    return fhat_a, dec_a, err_a, phase_a, w_a, bad < 0


def rls_track(y, g, Py_ssize_t L, double lam, double delta):
    cdef cplx[:, ::1] yv = np.ascontiguousarray(y, dtype=np.complex128)
    cdef const cplx[::1] gv = np.ascontiguousarray(g, dtype=np.complex128)
    cdef Py_ssize_t K = yv.shape[0], N = yv.shape[1]
    taps_a = np.zeros((K, N, L), dtype=np.complex128)
    pred_a = np.zeros((K, N), dtype=np.complex128)
    cdef cplx[:, :, ::1] taps = taps_a
    cdef cplx[:, ::1] pred = pred_a
    P_a = np.eye(L, dtype=np.complex128) / delta
    cdef cplx[:, ::1] P = P_a
    w_a = np.zeros((K, L), dtype=np.complex128)
    cdef cplx[:, ::1] w = w_a
    u_a = np.zeros(L, dtype=np.complex128)
    pi_a = np.zeros(L, dtype=np.complex128)
    cdef cplx[::1] u = u_a
    cdef cplx[::1] pi = pi_a
    cdef Py_ssize_t n, k, i, j
    cdef cplx acc, yp, e, kap
    cdef double den
    with nogil:
        for n in range(N):
            for i in range(L - 1, 0, -1):
                u[i] = u[i - 1]
            u[0] = gv[n]
            den = lam
            for i in range(L):
                acc = 0
                for j in range(L):
                    acc = acc + P[i, j] * u[j]
                pi[i] = acc
                den = den + (_conj(u[i]) * acc).real
            for k in range(K):
                yp = 0
                for i in range(L):
                    yp = yp + _conj(w[k, i]) * u[i]
                pred[k, n] = yp
                e = yv[k, n] - yp
                for i in range(L):
                    w[k, i] = w[k, i] + _rdiv(pi[i], den) * _conj(e)
                    taps[k, n, i] = _conj(w[k, i])
            for i in range(L):
                kap = _rdiv(pi[i], den)
                P[i, i] = (P[i, i] - kap * _conj(pi[i])).real / lam
                for j in range(i + 1, L):
                    P[i, j] = _rdiv(P[i, j] - kap * _conj(pi[j]), lam)
                    P[j, i] = _conj(P[i, j])
    return taps_a, pred_a


def viterbi_hard(r, Py_ssize_t n_info, gens, Py_ssize_t K):
    cdef const cnp.int64_t[::1] rv = np.ascontiguousarray(r, dtype=np.int64)
    cdef Py_ssize_t n_out = len(gens)
    cdef Py_ssize_t n_states = 1 << (K - 1)
    cdef Py_ssize_t steps = n_info + K - 1
    out_a = np.zeros((n_states, 2, n_out), dtype=np.int64)
    nxt_a = np.zeros((n_states, 2), dtype=np.int64)
    cdef Py_ssize_t s, bb, j, reg
    for s in range(n_states):
        for bb in range(2):
            reg = (bb << (K - 1)) | s
            for j in range(n_out):
                out_a[s, bb, j] = bin(reg & int(gens[j])).count("1") & 1
            nxt_a[s, bb] = reg >> 1
    cdef cnp.int64_t[:, :, ::1] out = out_a
    cdef cnp.int64_t[:, ::1] nxt = nxt_a
    cdef cnp.int64_t INF = np.iinfo(np.int64).max // 4
    metric_a = np.full(n_states, INF, dtype=np.int64)
    metric_a[0] = 0
    new_a = np.zeros(n_states, dtype=np.int64)
    cdef cnp.int64_t[::1] metric = metric_a
    cdef cnp.int64_t[::1] new = new_a
    ss_a = np.zeros((steps, n_states), dtype=np.int64)
    sb_a = np.zeros((steps, n_states), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] surv_state = ss_a
    cdef cnp.int64_t[:, ::1] surv_bit = sb_a
    cdef Py_ssize_t t, ns, nb
    cdef cnp.int64_t mm
    with nogil:
        for t in range(steps):
            for s in range(n_states):
                new[s] = INF
            nb = 1 if t >= n_info else 2
            for s in range(n_states):
                if metric[s] >= INF:
                    continue
                for bb in range(nb):
                    ns = nxt[s, bb]
                    mm = metric[s]
                    for j in range(n_out):
                        if out[s, bb, j] != rv[t * n_out + j]:
                            mm += 1
                    if mm < new[ns]:
                        new[ns] = mm
                        surv_state[t, ns] = s
                        surv_bit[t, ns] = bb
            for s in range(n_states):
                metric[s] = new[s]
    bits = np.zeros(steps, dtype=np.uint8)
    s = 0
    for t in range(steps - 1, -1, -1):
        bits[t] = sb_a[t, s]
        s = ss_a[t, s]
    return bits[:n_info]
