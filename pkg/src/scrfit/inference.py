"""Maximum-likelihood fitting, Wald inference and derived quantities."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.stats import norm

from .likelihood import LikelihoodContext
from .model import DesignBundle, design_row, link_p0, link_sigma, logit

CHI2_95_2DF = 5.99
Z95 = 1.959963984540054


@dataclass
class FitOptions:
    n_starts: int = 3
    jitter: float = 0.5
    seed: int = 0
    gtol: float = 1e-5
    ftol: float = 1e-9
    maxiter: int = 1000
    threads: int = 1
    start: np.ndarray | None = None


@dataclass
class FitResult:
    names: list[str]
    estimates: np.ndarray
    nll: float
    vcov: np.ndarray
    se: np.ndarray
    converged: bool
    status: str
    message: str
    iterations: int
    grad_norm: float
    hessian_ok: bool
    start_nlls: list[float]
    formula: str
    design: DesignBundle | None = field(default=None, repr=False)
    context: LikelihoodContext | None = field(default=None, repr=False)

    @property
    def n_params(self) -> int:
        return len(self.names)

    @property
    def aic(self) -> float:
        return aic(self.nll, self.n_params)

    def wald(self) -> list[dict]:
        return wald_rows(self.names, self.estimates, self.se)

    def to_dict(self) -> dict:
        return {
            "formula": self.formula,
            "names": list(self.names),
            "estimates": _floats(self.estimates),
            "se": _floats(self.se),
            "vcov": [_floats(r) for r in self.vcov],
            "nll": self.nll,
            "K": self.n_params,
            "aic": self.aic,
            "wald": [{k: (_float(v) if isinstance(v, float) else v) for k, v in r.items()} for r in self.wald()],
            "diagnostics": {
                "converged": bool(self.converged),
                "status": self.status,
                "message": self.message,
                "iterations": self.iterations,
                "grad_norm": self.grad_norm,
                "hessian_ok": bool(self.hessian_ok),
                "start_nlls": _floats(self.start_nlls),
            },
        }


def _float(x):
    x = float(x)
    return x if math.isfinite(x) else None


def _floats(xs):
    return [_float(x) for x in np.asarray(xs, dtype=float).ravel()]


def aic(nll: float, k: int) -> float:
    return 2.0 * nll + 2.0 * k


def wald_rows(names, estimates, se) -> list[dict]:
    """Estimate, SE, z and two-tailed normal p-value per parameter.

    Undefined standard errors give nan z and p rather than an exception.
    """
    rows = []
    for name, est, s in zip(names, np.asarray(estimates, float), np.asarray(se, float)):
        if math.isfinite(s) and s > 0:
            z = est / s
            p = float(2.0 * norm.sf(abs(z)))
        else:
            z = p = math.nan
        rows.append({"name": name, "estimate": float(est), "se": float(s), "z": float(z), "p": p})
    return rows


def wald_table(fit: FitResult) -> list[dict]:
    return fit.wald()


def default_start(ctx: LikelihoodContext) -> np.ndarray:
    """Documented starting point: p0 = 0.01, sigma = 2.5 x mean trap spacing,
    density = observed count per unit area; other coefficients zero."""
    des = ctx.design
    theta = np.zeros(des.n_params)
    sa, sg, sb = des.slices()
    theta[sa.start] = float(logit(0.01))
    spacing = ctx.data.traps.mean_spacing()
    if not math.isfinite(spacing) or spacing <= 0:
        spacing = math.sqrt(ctx.statespace.area) / 10.0
    theta[sg.start] = math.log(0.5 * spacing * 5.0)
    n_bar = max(float(np.mean(ctx.n)), 1.0)
    theta[sb.start] = math.log(n_bar / (ctx.area_km2 * ctx.statespace.n_points))
    return theta


def _objective(ctx):
    def f(theta):
        try:
            v, g = ctx.nll_and_grad(theta)
        except FloatingPointError:
            return 1e300, np.zeros_like(theta)
        if not math.isfinite(v):
            return 1e300, np.zeros_like(theta)
        return v, g
    return f


def _minimize(ctx, x0, opts: FitOptions):
    return minimize(_objective(ctx), x0, jac=True, method="L-BFGS-B",
                    options={"maxiter": opts.maxiter, "gtol": opts.gtol, "ftol": opts.ftol,
                             "maxcor": 20})


def numerical_hessian(ctx: LikelihoodContext, theta) -> np.ndarray:
    """Central differences of the analytic gradient, step max(1e-4, 1e-4|theta_i|)."""
    theta = np.asarray(theta, dtype=float)
    P = len(theta)
    H = np.empty((P, P))
    for i in range(P):
        h = max(1e-4, 1e-4 * abs(theta[i]))
        e = np.zeros(P)
        e[i] = h
        gp = ctx.nll_and_grad(theta + e)[1]
        gm = ctx.nll_and_grad(theta - e)[1]
        H[:, i] = (gp - gm) / (2 * h)
    return 0.5 * (H + H.T)


def covariance(H):
    """Inverse Hessian and standard errors; undefined SEs come back as nan."""
    P = H.shape[0]
    try:
        V = np.linalg.inv(H)
    except np.linalg.LinAlgError:
        return np.full((P, P), np.nan), np.full(P, np.nan), False
    V = 0.5 * (V + V.T)
    d = np.diag(V)
    ok = bool(np.all(np.isfinite(V)) and np.all(d > 0))
    se = np.where(d > 0, np.sqrt(np.where(d > 0, d, 1.0)), np.nan)
    return V, se, ok


def fit(ctx: LikelihoodContext, options: FitOptions | None = None) -> FitResult:
    """Minimize the negative log-likelihood from several starting points.

    The first start is the documented default (or ``options.start``); the
    rest add N(0, jitter²) noise from a generator seeded with
    ``options.seed``. The best converged run wins. A failed fit is returned
    with ``converged=False`` rather than raised.
    """
    opts = options or FitOptions()
    x0 = default_start(ctx) if opts.start is None else np.asarray(opts.start, dtype=float)
    rng = np.random.default_rng(opts.seed)
    starts = [x0] + [x0 + rng.normal(scale=opts.jitter, size=len(x0)) for _ in range(max(opts.n_starts, 1) - 1)]
    if opts.threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(opts.threads) as pool:
            runs = list(pool.map(lambda s: _minimize(ctx, s, opts), starts))
    else:
        runs = [_minimize(ctx, s, opts) for s in starts]

    def ok(r):
        return bool(r.success and r.fun < 1e299)

    order = [i for i, r in enumerate(runs) if ok(r)] or list(range(len(runs)))
    best = runs[min(order, key=lambda i: (runs[i].fun, i))]
    theta = np.asarray(best.x, dtype=float)
    nll, grad = ctx.nll_and_grad(theta)
    H = numerical_hessian(ctx, theta)
    V, se, hess_ok = covariance(H)
    converged = ok(best)
    return FitResult(
        names=list(ctx.design.names), estimates=theta, nll=float(nll), vcov=V, se=se,
        converged=converged, status="converged" if converged else "failed",
        message=str(best.message), iterations=int(best.nit), grad_norm=float(np.max(np.abs(grad))),
        hessian_ok=hess_ok, start_nlls=[float(r.fun) for r in runs], formula=str(ctx.design.formula),
        design=ctx.design, context=ctx,
    )


# ---------------------------------------------------------------------------
# derived quantities


def home_range(sigma: float) -> tuple[float, float]:
    """95% home-range radius sigma*sqrt(5.99) and its circular area."""
    r = sigma * math.sqrt(CHI2_95_2DF)
    return r, math.pi * r * r


def derived_home_range(fit: FitResult, session: int = 1) -> dict:
    """Sigma, r95 and area95 for a 1-based session index, with delta-method SE of sigma."""
    des = fit.design
    _, gamma, _ = des.split(fit.estimates)
    x = des.X_sigma[session - 1]
    eta = float(x @ gamma)
    sigma = float(link_sigma(eta))
    sg = des.slices()[1]
    v = float(x @ fit.vcov[sg, sg] @ x)
    se = sigma * math.sqrt(v) if v >= 0 else math.nan
    r, a = home_range(sigma)
    return {"session": session, "sigma": sigma, "sigma_se": se, "r95": r, "area95": a}


def _link_interval(eta, var, level_z=Z95):
    se_eta = np.sqrt(np.where(var >= 0, var, np.nan))
    est = np.exp(eta)
    return est, est * se_eta, np.exp(eta - level_z * se_eta), np.exp(eta + level_z * se_eta)


def predict_density(fit: FitResult, session: int = 1, covariates: dict | None = None) -> dict:
    """Density per km² with delta-method SE and 95% interval (computed on
    the log scale, then exponentiated).

    Without ``covariates`` the surface over the fitted state space is
    returned for the 1-based ``session``; otherwise ``covariates`` maps each
    density term to an array of raw values and one prediction per entry is
    made. ``extrapolated`` flags entries outside the fitted covariate range.
    """
    des = fit.design
    sb = des.slices()[2]
    beta = fit.estimates[sb]
    Vb = fit.vcov[sb, sb]
    if covariates is None:
        G = des.dims.n_points
        X = des.X_density[(session - 1) * G: session * G]
        flags = np.zeros(G, dtype=bool)
    else:
        lengths = {len(np.atleast_1d(v)) for v in covariates.values()} or {1}
        if len(lengths) != 1:
            raise ValueError("covariate arrays differ in length")
        m = lengths.pop()
        rows, flags = [], []
        for i in range(m):
            vals = {k: np.atleast_1d(v)[i] for k, v in covariates.items()}
            r, out = design_row(des, "density", vals, session - 1)
            rows.append(r)
            flags.append(bool(out))
        X = np.array(rows)
        flags = np.array(flags)
    eta = X @ beta
    var = np.einsum("ij,jk,ik->i", X, Vb, X)
    est, se, lwr, upr = _link_interval(eta, var)
    return {"density": est, "se": se, "lwr": lwr, "upr": upr, "extrapolated": flags,
            "interval": "95% delta-method interval on the log scale"}


def density_extremes(fit: FitResult, session: int = 1) -> dict:
    pred = predict_density(fit, session)
    out = {}
    for key, idx in (("max", int(np.argmax(pred["density"]))), ("min", int(np.argmin(pred["density"])))):
        out[key] = {k: float(pred[k][idx]) for k in ("density", "se", "lwr", "upr")} | {"point": idx}
    return out


def baseline_detection(fit: FitResult, session: int = 1, covariates: dict | None = None):
    """Baseline detection p0 for a session.

    With ``covariates`` (raw values per p0 term) a single value is returned;
    otherwise the fitted (trap x occasion) array for the session.
    """
    des = fit.design
    alpha = fit.estimates[des.slices()[0]]
    if covariates is None:
        return link_p0(des.eta_p0(alpha)[session - 1])
    row, _ = design_row(des, "p0", covariates, session - 1)
    return float(link_p0(row @ alpha))


def predict_detection(fit: FitResult, session: int, distances, covariates: dict | None = None,
                      trap: int = 0, occasion: int = 1) -> dict:
    """Half-normal detection curve p0*exp(-d²/2sigma²) on a distance grid."""
    if covariates is None:
        p0 = float(baseline_detection(fit, session)[trap, occasion - 1])
    else:
        p0 = baseline_detection(fit, session, covariates)
    sigma = derived_home_range(fit, session)["sigma"]
    d = np.asarray(distances, dtype=float)
    return {"distance": d, "p": p0 * np.exp(-d ** 2 / (2 * sigma ** 2)), "p0": p0, "sigma": sigma}
