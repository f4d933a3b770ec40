"""Pure-Python reference kernels.

Same signatures and results as the compiled ``_core`` extension. Used when
the extension is not built, or when ``FIELDREUSE_PURE=1`` is set.
"""

import numpy as np


def _nearest(z, points):
    d = np.abs(points - z)
    return int(np.argmin(d))  # argmin returns the lowest index on ties


def _regressor(y, n, Lf):
    K, Ny = y.shape
    u = np.zeros((K, Lf), dtype=np.complex128)
    for i in range(Lf):
        idx = n - i
        if 0 <= idx < Ny:
            u[:, i] = y[:, idx]
    return u


def dfe_run(y, qf, qb, n0, n_out, dither, points, train, mu=0.0):
    """Symbol-spaced DFE with subtractive dither and optional LMS adaptation.

    ``y`` is (K, Ny); ``qf`` is (K, Lf); ``qb`` is (Lb,). The feedforward
    output is formed on the g-domain (physically transmitted) signal; the
    dither is removed before slicing and re-added to the fed-back decision.
    """
    y = np.ascontiguousarray(y, dtype=np.complex128)
    qf = np.array(qf, dtype=np.complex128, copy=True)
    qb = np.array(qb, dtype=np.complex128, copy=True)
    K, Lf = qf.shape
    Lb = qb.shape[0]
    n_train = len(train)
    fhat = np.zeros(n_out, dtype=np.complex128)
    err = np.zeros(n_out, dtype=np.complex128)
    dec = np.zeros(n_out, dtype=np.int64)
    fb = np.zeros(Lb, dtype=np.complex128)  # g-domain past symbols, newest first
    for t in range(n_out):
        u = _regressor(y, t + n0, Lf)
        ghat = np.sum(np.conj(qf) * u) - np.sum(np.conj(qb) * fb)
        fh = ghat - dither[t]
        idx = _nearest(fh, points)
        ref = train[t] if t < n_train else points[idx]
        e = ref - fh
        fhat[t] = fh
        dec[t] = idx
        err[t] = e
        if mu != 0.0:
            qf += mu * u * np.conj(e)
            qb -= mu * fb * np.conj(e)
        if Lb:
            fb[1:] = fb[:-1]
            fb[0] = ref + dither[t]
    return fhat, dec, err, qf, qb


def _hermitian_upper(P):
    # keep the inverse correlation exactly Hermitian; round-off otherwise
    # accumulates into an indefinite matrix at small forgetting factors
    U = np.triu(P, 1)
    return U + U.conj().T + np.diag(P.diagonal().real)


def rls_dfe(y, Lf, Lb, n0, n_out, lam, delta, dither, points, train,
            pll_k1=0.0, pll_k2=0.0):
    """Multichannel RLS-DFE with a per-channel phase-locked loop.

    Returns ``(fhat, dec, err, phase, w, ok)``; ``ok`` is False when the
    inverse correlation matrix stopped being finite.
    """
    y = np.ascontiguousarray(y, dtype=np.complex128)
    K = y.shape[0]
    N = K * Lf + Lb
    w = np.zeros(N, dtype=np.complex128)
    P = np.eye(N, dtype=np.complex128) / delta
    theta = np.zeros(K)
    nu = np.zeros(K)
    n_train = len(train)
    fhat = np.zeros(n_out, dtype=np.complex128)
    err = np.zeros(n_out, dtype=np.complex128)
    dec = np.zeros(n_out, dtype=np.int64)
    phase = np.zeros((K, n_out))
    fb = np.zeros(Lb, dtype=np.complex128)
    ok = True
    for t in range(n_out):
        raw = _regressor(y, t + n0, Lf)
        rot = np.exp(-1j * theta)[:, None]
        u = np.empty(N, dtype=np.complex128)
        u[:K * Lf] = (raw * rot).ravel()
        u[K * Lf:] = -fb
        parts = np.array([np.vdot(w[k * Lf:(k + 1) * Lf], u[k * Lf:(k + 1) * Lf])
                          for k in range(K)])
        ghat = np.vdot(w, u)
        fh = ghat - dither[t]
        idx = _nearest(fh, points)
        ref = train[t] if t < n_train else points[idx]
        e = ref - fh
        fhat[t] = fh
        dec[t] = idx
        err[t] = e
        pi = P @ u
        den = lam + np.real(np.vdot(u, pi))
        if not np.isfinite(den) or den <= 0:
            ok = False
            fhat[t:] = np.nan
            break
        kappa = pi / den
        w = w + kappa * np.conj(e)
        P = _hermitian_upper((P - np.outer(kappa, np.conj(pi))) / lam)
        if pll_k1 != 0.0 or pll_k2 != 0.0:
            target = parts + e
            phi = np.imag(parts * np.conj(target))
            nu += pll_k2 * phi
            theta += pll_k1 * phi + nu
        phase[:, t] = theta
        if Lb:
            fb[1:] = fb[:-1]
            fb[0] = ref + dither[t]
    return fhat, dec, err, phase, w, ok


def rls_track(y, g, L, lam, delta):
    """Exponentially weighted LS tracking of a FIR channel from a known probe.

    Model ``y[k, n] = sum_l h[k, n, l] g[n - l]``. Returns the a-posteriori
    taps (K, N, L) and the a-priori prediction (K, N) made with the taps
    from time n - 1.
    """
    y = np.ascontiguousarray(y, dtype=np.complex128)
    g = np.ascontiguousarray(g, dtype=np.complex128)
    K, N = y.shape
    taps = np.zeros((K, N, L), dtype=np.complex128)
    pred = np.zeros((K, N), dtype=np.complex128)
    P = np.eye(L, dtype=np.complex128) / delta
    w = np.zeros((K, L), dtype=np.complex128)  # conj(h)
    u = np.zeros(L, dtype=np.complex128)
    for n in range(N):
        u[1:] = u[:-1]
        u[0] = g[n]
        pi = P @ u
        den = lam + np.real(np.vdot(u, pi))
        kappa = pi / den
        for k in range(K):
            yp = np.vdot(w[k], u)
            pred[k, n] = yp
            e = y[k, n] - yp
            w[k] += kappa * np.conj(e)
            taps[k, n] = np.conj(w[k])
        P = _hermitian_upper((P - np.outer(kappa, np.conj(pi))) / lam)
    return taps, pred


def viterbi_hard(r, n_info, gens, K):
    """Hard-decision Viterbi for a zero-terminated rate-1/n feedforward code."""
    r = np.asarray(r, dtype=np.int64)
    n_out = len(gens)
    n_states = 1 << (K - 1)
    steps = n_info + K - 1
    # output bits for (state, input)
    out = np.zeros((n_states, 2, n_out), dtype=np.int64)
    nxt = np.zeros((n_states, 2), dtype=np.int64)
    for s in range(n_states):
        for b in range(2):
            reg = (b << (K - 1)) | s
            for j, gpoly in enumerate(gens):
                out[s, b, j] = bin(reg & gpoly).count("1") & 1
            nxt[s, b] = reg >> 1
    inf = np.iinfo(np.int64).max // 4
    metric = np.full(n_states, inf, dtype=np.int64)
    metric[0] = 0
    surv_state = np.zeros((steps, n_states), dtype=np.int64)
    surv_bit = np.zeros((steps, n_states), dtype=np.int64)
    for t in range(steps):
        seg = r[t * n_out:(t + 1) * n_out]
        new = np.full(n_states, inf, dtype=np.int64)
        allowed = (0,) if t >= n_info else (0, 1)
        for s in range(n_states):
            if metric[s] >= inf:
                continue
            for b in allowed:
                ns = nxt[s, b]
                m = metric[s] + int(np.sum(out[s, b] != seg))
                if m < new[ns]:
                    new[ns] = m
                    surv_state[t, ns] = s
                    surv_bit[t, ns] = b
        metric = new
    bits = np.zeros(steps, dtype=np.uint8)
    s = 0
    for t in range(steps - 1, -1, -1):
        bits[t] = surv_bit[t, s]
        s = surv_state[t, s]
    return bits[:n_info]
