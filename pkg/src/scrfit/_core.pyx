# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled session kernel for the marginal likelihood.

See scrfit._fallback.session_kernel for the reference implementation; both
return the same tuple.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, log1p, expm1, INFINITY, fabs

cnp.import_array()


cdef inline double _log_expit(double x) noexcept nogil:
    if x >= 0:
        return -log1p(exp(-x))
    return x - log1p(exp(x))


def session_kernel(const double[:, ::1] d2, const double[:, ::1] eta_p, double log_sigma,
                   const double[::1] logd, double area, const long long[::1] det_ptr,
                   const long long[::1] det_jk, bint want_grad=True):
    cdef Py_ssize_t J = d2.shape[0], G = d2.shape[1], K = eta_p.shape[1]
    cdef Py_ssize_t JK = J * K
    cdef Py_ssize_t n = det_ptr.shape[0] - 1
    cdef Py_ssize_t j, k, u, jk, i, t, row
    cdef double inv2s2 = 0.5 * exp(-2.0 * log_sigma)

    cdef double[:, ::1] lo = np.empty((JK, G))
    cdef double[:, ::1] pm = np.empty((JK, G))
    cdef double[:, ::1] qm = np.empty((JK, G))
    cdef double[::1] base = np.zeros(G)
    cdef double[::1] p0 = np.empty(JK)
    cdef double[::1] q0 = np.empty(JK)
    cdef double[::1] logp0 = np.empty(JK)
    cdef double[::1] lse = np.empty(n)
    cdef double[::1] v = np.empty(G)
    cdef double[::1] R = np.zeros(G)
    cdef double[:, ::1] Q = np.zeros((JK, G)) if want_grad else np.zeros((1, 1))
    cdef double[::1] c0 = np.empty(G)
    cdef double[::1] dlogd = np.zeros(G)
    cdef double[::1] ed = np.empty(G)
    cdef double[::1] Ac = np.empty(G)
    cdef double[::1] deta = np.zeros(JK)
    cdef double logh, h, em1, lq = 0.0, p, q, m, s, r, e, acc, comp, y, tt, dsig, gsum, g
    cdef double value

    with nogil:
        for j in range(J):
            for k in range(K):
                jk = j * K + k
                e = eta_p[j, k]
                logp0[jk] = _log_expit(e)
                p0[jk] = exp(logp0[jk])
                q0[jk] = exp(_log_expit(-e))
        for j in range(J):
            for u in range(G):
                logh = -d2[j, u] * inv2s2
                h = exp(logh)
                em1 = expm1(logh)
                for k in range(K):
                    jk = j * K + k
                    if k > 0 and p0[jk] == p0[jk - 1]:
                        # occasions sharing p0 share everything below
                        pm[jk, u] = pm[jk - 1, u]
                        qm[jk, u] = qm[jk - 1, u]
                        lo[jk, u] = lo[jk - 1, u]
                        base[u] += lq
                        continue
                    p = p0[jk] * h
                    q = q0[jk] - p0[jk] * em1
                    lq = log(q)
                    pm[jk, u] = p
                    qm[jk, u] = q
                    lo[jk, u] = logp0[jk] + logh - lq
                    base[u] += lq

        # compensated sum of per-individual log marginals
        acc = 0.0
        comp = 0.0
        for i in range(n):
            m = -INFINITY
            for u in range(G):
                s = logd[u] + base[u]
                for t in range(det_ptr[i], det_ptr[i + 1]):
                    s += lo[det_jk[t], u]
                v[u] = s
                if s > m:
                    m = s
            s = 0.0
            for u in range(G):
                v[u] = exp(v[u] - m)
                s += v[u]
            lse[i] = m + log(s)
            y = lse[i] - comp
            tt = acc + y
            comp = (tt - acc) - y
            acc = tt
            if want_grad:
                s = 1.0 / s
                for u in range(G):
                    r = v[u] * s
                    R[u] += r
                    for t in range(det_ptr[i], det_ptr[i + 1]):
                        Q[det_jk[t], u] += r

        value = 0.0
        for u in range(G):
            c0[u] = exp(base[u])
            ed[u] = area * exp(logd[u])
            value += ed[u] * (-expm1(base[u]))
        value -= acc

        dsig = 0.0
        if want_grad:
            for u in range(G):
                Ac[u] = ed[u] * c0[u]
                dlogd[u] = ed[u] - Ac[u] - R[u]
                Ac[u] += R[u]
            for j in range(J):
                for k in range(K):
                    jk = j * K + k
                    gsum = 0.0
                    for u in range(G):
                        g = (Ac[u] * pm[jk, u] - Q[jk, u]) / qm[jk, u]
                        gsum += g
                        dsig += g * 2.0 * inv2s2 * d2[j, u]
                    deta[jk] = q0[jk] * gsum

    return (value, np.asarray(lse), np.asarray(c0), np.asarray(dlogd),
            np.asarray(deta).reshape(J, K), dsig)
