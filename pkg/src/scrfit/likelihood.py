"""Marginal likelihood for multi-session spatial capture-recapture data.

Detection follows a half-normal decay from the latent activity centre,
which is marginalized over the discrete state space. The unobserved
individuals are integrated out analytically under a Poisson population
size, so each session contributes

    area*sum_u d_u (1 - c0_u) - sum_i log sum_u d_u c_iu - n log(area) + log n!

with d_u the density (per km²) at point u, c_iu the conditional probability
of individual i's history from point u, and c0_u that of the all-zero
history. Normalizing d_u over the points recovers the textbook form with a
d-weighted mixture (uniform when density is constant) and lambda = area*sum d.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.special import gammaln, logsumexp

from .encounters import EncounterData
from .geometry import StateSpace, squared_distances
from .kernels import get_kernel
from .model import ETA_CLAMP, DesignBundle, Dims, link_density, link_p0, link_sigma

M2_PER_KM2 = 1e6


def detection_prob(p0, sigma, dist):
    """Half-normal detection probability at distance ``dist`` (metres)."""
    dist = np.asarray(dist, dtype=float)
    return p0 * np.exp(-dist ** 2 / (2.0 * sigma ** 2))


def bernoulli_logpmf(y, p):
    y = np.asarray(y)
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(y == 1, np.log(p), np.log1p(-p))


def conditional_log_pmf(y_i, p_u) -> float:
    """log prod_{j,k} Bernoulli(y_ijk; p_jk) for one candidate centre.

    ``y_i`` and ``p_u`` are both (J, K). Returns -inf when a detection has
    probability zero.
    """
    return float(np.sum(bernoulli_logpmf(y_i, p_u)))


def marginal_log_pmf(y_i, p, weights=None) -> float:
    """Log of the mixture over centres of the conditional pmf.

    ``p`` is (J, K, G); ``weights`` default to uniform 1/G.
    """
    G = p.shape[-1]
    cond = np.array([conditional_log_pmf(y_i, p[..., u]) for u in range(G)])
    if weights is None:
        logw = np.full(G, -math.log(G))
    else:
        w = np.asarray(weights, dtype=float)
        logw = np.log(w / w.sum())
    return float(logsumexp(cond + logw))


class LikelihoodContext:
    """Precomputed pieces for evaluating the likelihood of one data set
    under one design."""

    def __init__(self, data: EncounterData, statespace: StateSpace, design: DesignBundle,
                 backend: str | None = None):
        dims = design.dims
        expect = Dims(statespace.n_points, data.traps.n_traps, data.n_occasions, data.n_sessions)
        if dims != expect:
            raise ValueError(f"design dimensions {dims} do not match data {expect}")
        self.data = data
        self.statespace = statespace
        self.design = design
        self.d2 = np.ascontiguousarray(squared_distances(data.traps.xy, statespace.xy))
        self.area_km2 = statespace.cell_area / M2_PER_KM2
        self.kernel = get_kernel(backend)
        self.backend = backend
        self.det = []
        K = data.n_occasions
        for block in data.sessions:
            ptr = [0]
            jk = []
            for row in block.y:
                jj, kk = np.nonzero(row)
                jk.extend((jj * K + kk).tolist())
                ptr.append(len(jk))
            self.det.append((np.asarray(ptr, dtype=np.int64), np.asarray(jk, dtype=np.int64)))
        self.n = np.array(data.counts())

    @property
    def n_params(self) -> int:
        return self.design.n_params

    def linear_predictors(self, theta):
        a, g, b = self.design.split(theta)
        return self.design.eta_p0(a), self.design.eta_sigma(g), self.design.eta_density(b)

    def session_parts(self, theta, want_grad=True):
        eta_p, eta_s, eta_d = self.linear_predictors(theta)
        out = []
        for s in range(self.data.n_sessions):
            ptr, jk = self.det[s]
            res = self.kernel(self.d2, np.ascontiguousarray(np.clip(eta_p[s], -ETA_CLAMP, ETA_CLAMP)),
                              float(np.clip(eta_s[s], -ETA_CLAMP, ETA_CLAMP)),
                              np.ascontiguousarray(np.clip(eta_d[s], -ETA_CLAMP, ETA_CLAMP)),
                              self.area_km2, ptr, jk, want_grad)
            out.append(res)
        return out, (eta_p, eta_s, eta_d)

    def session_nll(self, theta, session: int) -> float:
        parts, _ = self.session_parts(theta, want_grad=False)
        return self._session_value(parts[session][0], session)

    def _session_value(self, value, s):
        n = self.n[s]
        return value - n * math.log(self.area_km2) + float(gammaln(n + 1))

    def nll(self, theta) -> float:
        return self.nll_and_grad(theta, want_grad=False)[0]

    def nll_and_grad(self, theta, want_grad=True):
        theta = np.asarray(theta, dtype=float)
        parts, (eta_p, eta_s, eta_d) = self.session_parts(theta, want_grad)
        des = self.design
        dims = des.dims
        total = 0.0
        grad = np.zeros(des.n_params)
        sa, sg, sb = des.slices()
        JK, G = dims.n_traps * dims.n_occasions, dims.n_points
        for s, (value, lse, c0, dlogd, deta, dsig) in enumerate(parts):
            v = self._session_value(value, s)
            if not math.isfinite(v):
                self._diagnose(s, lse, c0, theta)
            total += v
            if want_grad:
                rows_p = slice(s * JK, (s + 1) * JK)
                rows_d = slice(s * G, (s + 1) * G)
                mp = np.abs(eta_p[s].ravel()) < ETA_CLAMP
                md = np.abs(eta_d[s]) < ETA_CLAMP
                ms = abs(eta_s[s]) < ETA_CLAMP
                grad[sa] += des.X_p0[rows_p].T @ (deta.ravel() * mp)
                grad[sg] += des.X_sigma[s] * (dsig * ms)
                grad[sb] += des.X_density[rows_d].T @ (dlogd * md)
        return total, grad

    def _diagnose(self, s, lse, c0, theta):
        bad = [self.data.sessions[s].individual_ids[i] for i in np.flatnonzero(~np.isfinite(lse))]
        msg = f"non-finite likelihood in session {self.data.sessions[s].session_id}"
        if bad:
            msg += f"; individuals with impossible histories: {bad[:10]}"
        if np.all(c0 >= 1.0) and self.n[s] > 0:
            msg += "; detection probability is zero everywhere but individuals were seen"
        raise FloatingPointError(msg + f" (theta={np.array2string(np.asarray(theta), precision=4)})")

    # -- reference quantities on the probability scale ------------------

    def session_arrays(self, theta, s):
        """(p, weights, lambda) for session s: p is J x K x G detection
        probabilities, weights the normalized density over points."""
        eta_p, eta_s, eta_d = self.linear_predictors(theta)
        p0 = link_p0(eta_p[s])
        sigma = float(link_sigma(eta_s[s]))
        d = link_density(eta_d[s])
        h = np.exp(-self.d2 / (2 * sigma ** 2))
        p = p0[:, :, None] * h[:, None, :]
        lam = float(self.area_km2 * d.sum())
        return p, d / d.sum(), lam

    def pi0(self, theta, s) -> float:
        p, w, _ = self.session_arrays(theta, s)
        return float(np.sum(w * np.prod(1 - p, axis=(0, 1))))

    def expected_population(self, theta) -> np.ndarray:
        _, _, eta_d = self.linear_predictors(theta)
        return self.area_km2 * link_density(eta_d).sum(axis=1)


def session_nll_truncated(ctx: LikelihoodContext, theta, s: int, n_max: int | None = None) -> float:
    """Session NLL by explicitly summing the Poisson mixture over population size.

    Used to cross-check the closed form. The sum runs to
    lambda + 10 sqrt(lambda) + n + 50 unless ``n_max`` is given.
    """
    p, w, lam = ctx.session_arrays(theta, s)
    block = ctx.data.sessions[s]
    n = block.n
    log_m = sum(marginal_log_pmf(block.y[i], p, w) for i in range(n))
    pi0 = float(np.sum(w * np.prod(1 - p, axis=(0, 1))))
    if n_max is None:
        n_max = int(math.ceil(lam + 10 * math.sqrt(lam) + n + 50))
    Ns = np.arange(n, n_max + 1)
    n0 = Ns - n
    with np.errstate(divide="ignore"):
        log_pi0 = math.log(pi0) if pi0 > 0 else -math.inf
    terms = (gammaln(Ns + 1) - gammaln(n + 1) - gammaln(n0 + 1)
             + np.where(n0 > 0, n0 * log_pi0, 0.0)
             + Ns * math.log(lam) - lam - gammaln(Ns + 1))
    return -(log_m + float(logsumexp(terms)))


def session_nll_closed(ctx: LikelihoodContext, theta, s: int) -> float:
    """Closed-form session NLL written in the textbook mixture notation."""
    p, w, lam = ctx.session_arrays(theta, s)
    block = ctx.data.sessions[s]
    n = block.n
    pi0 = float(np.sum(w * np.prod(1 - p, axis=(0, 1))))
    if pi0 >= 1.0 and n > 0:
        return math.inf
    log_m = sum(marginal_log_pmf(block.y[i], p, w) for i in range(n))
    lam_obs = lam * (1 - pi0)
    return -(n * math.log(lam_obs) - lam_obs - float(gammaln(n + 1)) + log_m - n * math.log1p(-pi0))
