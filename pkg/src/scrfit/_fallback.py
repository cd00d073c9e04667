"""Pure NumPy session kernel, used when the compiled extension is unavailable."""
import math

import numpy as np
from scipy.special import log_expit


def session_kernel(d2, eta_p, log_sigma, logd, area, det_ptr, det_jk, want_grad=True):
    """Marginal-likelihood pieces for one session.

    Returns ``(value, lse, c0, dlogd, deta, dlogsigma)`` where ``value`` is
    sum_u area*d_u*(1 - c0_u) - sum_i lse_i, ``lse_i`` is the log of the
    density-weighted (unnormalized) sum over points of individual i's
    conditional likelihood, and ``c0_u`` is the probability of never being
    detected from point u. The gradients are of ``value`` with respect to
    log density per point, the p0 linear predictor per (trap, occasion), and
    log sigma.
    """
    J, G = d2.shape
    K = eta_p.shape[1]
    n = len(det_ptr) - 1
    inv2s2 = 0.5 * math.exp(-2.0 * log_sigma)

    logh = -d2 * inv2s2                                   # J x G
    logp0 = log_expit(eta_p).reshape(J, K, 1)
    p0 = np.exp(logp0)
    q0 = np.exp(log_expit(-eta_p)).reshape(J, K, 1)
    p = p0 * np.exp(logh)[:, None, :]                     # J x K x G
    q = q0 - p0 * np.expm1(logh)[:, None, :]
    logq = np.log(q)
    lo = (logp0 + logh[:, None, :] - logq).reshape(J * K, G)
    base = logq.reshape(J * K, G).sum(axis=0)

    if n:
        owner = np.repeat(np.arange(n), np.diff(det_ptr))
        v = np.add.reduceat(lo[det_jk], det_ptr[:-1], axis=0) + (logd + base)
        m = v.max(axis=1, keepdims=True)
        lse = (m + np.log(np.exp(v - m).sum(axis=1, keepdims=True))).ravel()
    else:
        lse = np.zeros(0)

    c0 = np.exp(base)
    e = area * np.exp(logd)
    value = float(np.sum(e * -np.expm1(base))) - math.fsum(lse)
    if not want_grad:
        return value, lse, c0, np.zeros(G), np.zeros((J, K)), 0.0

    if n:
        r = np.exp(v - lse[:, None])
        R = r.sum(axis=0)
        Q = np.zeros((J * K, G))
        np.add.at(Q, det_jk, r[owner])
    else:
        R = np.zeros(G)
        Q = np.zeros((J * K, G))
    A = e * c0
    dlogd = e - A - R
    g = ((R + A) * p.reshape(J * K, G) - Q) / q.reshape(J * K, G)
    g = g.reshape(J, K, G)
    deta = q0[..., 0] * g.sum(axis=2)
    dsig = float(np.sum(g.sum(axis=1) * (2.0 * inv2s2) * d2))
    return value, lse, c0, dlogd, deta, dsig
