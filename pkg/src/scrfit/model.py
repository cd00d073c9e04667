"""Model formulas, design matrices and link functions.

Three linear predictors are modelled: logit baseline detection (p0), log
spatial scale (sigma) and log density (density). The packed parameter
vector is always ordered [p0 | sigma | density].
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .covariates import CovariateSurface, standardize

ETA_CLAMP = 40.0
SESSION = "session"
PREDICTORS = ("p0", "sigma", "density")
LEGAL_SCOPES = {
    "density": ("statespace", "session"),
    "p0": ("trap", "occasion", "session", "trap_occasion"),
    "sigma": ("session",),
}
PREFIX = {"p0": ("p0.(Intercept)", "p0."), "sigma": ("sig.(Intercept)", "sig."),
          "density": ("d0.(Intercept)", "d.beta.")}
_ALIASES = {"d": "density", "density": "density", "p0": "p0", "sigma": "sigma", "sig": "sigma"}


@dataclass(frozen=True)
class ModelFormula:
    density: tuple[str, ...] = ()
    p0: tuple[str, ...] = ()
    sigma: tuple[str, ...] = ()

    def terms(self, predictor: str) -> tuple[str, ...]:
        return getattr(self, predictor)

    def text(self, predictor: str) -> str:
        t = self.terms(predictor)
        return "~" + ("+".join(t) if t else "1")

    def __str__(self):
        return f"D{self.text('density')}; p0{self.text('p0')}; sigma{self.text('sigma')}"

    def to_dict(self) -> dict:
        return {p: self.text(p) for p in PREDICTORS}


_TERM = re.compile(r"^[A-Za-z_][A-Za-z0-9_.]*$")


def _parse_rhs(rhs: str) -> tuple[str, ...]:
    rhs = rhs.strip()
    if rhs.startswith("~"):
        rhs = rhs[1:]
    terms = []
    for raw in rhs.split("+"):
        t = raw.strip()
        if t == "1":
            continue
        if not _TERM.match(t):
            raise ValueError(f"malformed model term {raw!r}")
        if t in terms:
            raise ValueError(f"term {t!r} repeated")
        terms.append(t)
    return tuple(terms)


def parse_formula(text, registry: "CovariateRegistry | None" = None) -> ModelFormula:
    """Parse ``"D~a+b; p0~c+session; sigma~session"`` or a mapping of predictor
    to right-hand side. Omitted predictors are intercept-only."""
    if isinstance(text, dict):
        parts = {}
        for key, rhs in text.items():
            k = _ALIASES.get(key.strip().lower())
            if k is None:
                raise ValueError(f"unknown predictor {key!r}")
            parts[k] = _parse_rhs(rhs)
    else:
        parts = {}
        for chunk in str(text).split(";"):
            chunk = chunk.strip()
            if not chunk:
                continue
            if "~" not in chunk:
                raise ValueError(f"missing '~' in {chunk!r}")
            lhs, rhs = chunk.split("~", 1)
            k = _ALIASES.get(lhs.strip().lower())
            if k is None:
                raise ValueError(f"unknown predictor {lhs.strip()!r}")
            if k in parts:
                raise ValueError(f"predictor {k} given twice")
            parts[k] = _parse_rhs(rhs)
    formula = ModelFormula(**{k: parts.get(k, ()) for k in PREDICTORS})
    if registry is not None:
        registry.validate(formula)
    return formula


class CovariateRegistry:
    """Covariate surfaces keyed by (name, scope).

    A name may exist under several scopes (e.g. a proximity measure on traps
    for p0 and on state-space points for density); each predictor picks the
    one scope it allows.
    """

    def __init__(self, surfaces=()):
        self._items: dict[tuple[str, str], CovariateSurface] = {}
        for s in surfaces:
            self.add(s)

    def add(self, surface: CovariateSurface):
        if surface.name == SESSION:
            raise ValueError("'session' is a reserved factor name")
        self._items[(surface.name, surface.scope)] = surface

    def names(self) -> list[str]:
        return sorted({n for n, _ in self._items})

    def resolve(self, name: str, predictor: str) -> CovariateSurface:
        found = [self._items[(name, sc)] for sc in LEGAL_SCOPES[predictor] if (name, sc) in self._items]
        if not found:
            if any(n == name for n, _ in self._items):
                scopes = sorted(sc for n, sc in self._items if n == name)
                raise ValueError(f"covariate {name!r} has scope {scopes}, not allowed for {predictor} "
                                 f"(allowed: {list(LEGAL_SCOPES[predictor])})")
            raise ValueError(f"unknown covariate {name!r}")
        if len(found) > 1:
            raise ValueError(f"covariate {name!r} is ambiguous for {predictor}: scopes {[s.scope for s in found]}")
        return found[0]

    def validate(self, formula: ModelFormula):
        for p in PREDICTORS:
            for t in formula.terms(p):
                if t != SESSION:
                    self.resolve(t, p)


@dataclass(frozen=True)
class Dims:
    n_points: int
    n_traps: int
    n_occasions: int
    n_sessions: int


@dataclass
class DesignBundle:
    """Realized design matrices.

    X_p0 rows are ordered (session, trap, occasion); X_density rows
    (session, point); X_sigma has one row per session.
    """

    formula: ModelFormula
    dims: Dims
    X_p0: np.ndarray
    X_sigma: np.ndarray
    X_density: np.ndarray
    names_p0: list[str]
    names_sigma: list[str]
    names_density: list[str]
    scaling: dict[str, tuple[float, float]] = field(default_factory=dict)
    ranges: dict[str, tuple[float, float]] = field(default_factory=dict)

    @property
    def names(self) -> list[str]:
        return self.names_p0 + self.names_sigma + self.names_density

    @property
    def n_params(self) -> int:
        return len(self.names)

    def slices(self) -> tuple[slice, slice, slice]:
        a = len(self.names_p0)
        b = a + len(self.names_sigma)
        return slice(0, a), slice(a, b), slice(b, self.n_params)

    def split(self, theta):
        theta = np.asarray(theta, dtype=float)
        sa, sg, sb = self.slices()
        return theta[sa], theta[sg], theta[sb]

    def eta_p0(self, alpha) -> np.ndarray:
        d = self.dims
        return (self.X_p0 @ alpha).reshape(d.n_sessions, d.n_traps, d.n_occasions)

    def eta_sigma(self, gamma) -> np.ndarray:
        return self.X_sigma @ gamma

    def eta_density(self, beta) -> np.ndarray:
        d = self.dims
        return (self.X_density @ beta).reshape(d.n_sessions, d.n_points)


@dataclass
class ParameterVector:
    alpha: np.ndarray
    gamma: np.ndarray
    beta: np.ndarray

    def pack(self) -> np.ndarray:
        return np.concatenate([self.alpha, self.gamma, self.beta]).astype(float)

    @classmethod
    def unpack(cls, theta, design: DesignBundle) -> "ParameterVector":
        a, g, b = design.split(theta)
        return cls(a.copy(), g.copy(), b.copy())


def count_parameters(formula: ModelFormula, n_sessions: int) -> int:
    k = 0
    for p in PREDICTORS:
        k += 1
        for t in formula.terms(p):
            k += n_sessions - 1 if t == SESSION else 1
    return k


def _broadcast(surface: CovariateSurface, predictor: str, dims: Dims) -> np.ndarray:
    """Expand a surface to the predictor's row layout."""
    v = surface.values
    S, J, K, G = dims.n_sessions, dims.n_traps, dims.n_occasions, dims.n_points
    sc = surface.scope

    def need(shape):
        if v.shape != shape:
            raise ValueError(f"covariate {surface.name!r} ({sc}) has shape {v.shape}, expected {shape}")

    if predictor == "p0":
        if sc == "trap":
            need((J,))
            out = np.broadcast_to(v[None, :, None], (S, J, K))
        elif sc == "occasion":
            need((K,))
            out = np.broadcast_to(v[None, None, :], (S, J, K))
        elif sc == "session":
            need((S,))
            out = np.broadcast_to(v[:, None, None], (S, J, K))
        else:
            if v.ndim == 2:
                need((J, K))
                out = np.broadcast_to(v[None], (S, J, K))
            else:
                need((S, J, K))
                out = v
    elif predictor == "sigma":
        need((S,))
        out = v
    else:
        if sc == "session":
            need((S,))
            out = np.broadcast_to(v[:, None], (S, G))
        elif v.ndim == 1:
            need((G,))
            out = np.broadcast_to(v[None, :], (S, G))
        else:
            need((S, G))
            out = v
    return np.ascontiguousarray(out, dtype=float).ravel()


def _session_index(predictor: str, dims: Dims) -> np.ndarray:
    S, J, K, G = dims.n_sessions, dims.n_traps, dims.n_occasions, dims.n_points
    s = np.arange(S)
    if predictor == "p0":
        return np.repeat(s, J * K)
    if predictor == "density":
        return np.repeat(s, G)
    return s


def build_design(formula: ModelFormula, registry: CovariateRegistry, dims: Dims,
                 standardize_covariates: bool = True) -> DesignBundle:
    """Realize the three design matrices.

    Session enters as treatment-coded dummies against the first session.
    Covariates are z-scored over their own index set unless
    ``standardize_covariates`` is off.
    """
    registry.validate(formula)
    mats, names, scaling, ranges = {}, {}, {}, {}
    for p in PREDICTORS:
        sess = _session_index(p, dims)
        cols = [np.ones(len(sess))]
        cnames = [PREFIX[p][0]]
        for t in formula.terms(p):
            if t == SESSION:
                for g in range(1, dims.n_sessions):
                    cols.append((sess == g).astype(float))
                    cnames.append(f"{PREFIX[p][1]}session{g + 1}")
                continue
            surf = registry.resolve(t, p)
            raw = surf.values * surf.sd + surf.mean if surf.standardized else surf.values
            ranges[f"{PREFIX[p][1]}{t}"] = (float(raw.min()), float(raw.max()))
            if standardize_covariates and not surf.standardized:
                surf = standardize(surf)
            if surf.standardized:
                scaling[f"{PREFIX[p][1]}{t}"] = (surf.mean, surf.sd)
            cols.append(_broadcast(surf, p, dims))
            cnames.append(f"{PREFIX[p][1]}{t}")
        X = np.column_stack(cols)
        _check_rank(X, cnames)
        mats[p], names[p] = X, cnames
    return DesignBundle(formula, dims, mats["p0"], mats["sigma"], mats["density"],
                        names["p0"], names["sigma"], names["density"], scaling, ranges)


def _check_rank(X: np.ndarray, names: list[str]):
    if np.linalg.matrix_rank(X) == X.shape[1]:
        return
    kept, bad = [], []
    for i in range(X.shape[1]):
        trial = kept + [i]
        if np.linalg.matrix_rank(X[:, trial]) == len(trial):
            kept.append(i)
        else:
            bad.append(names[i])
    raise ValueError(f"design is rank deficient; collinear columns: {', '.join(bad)}")


def link_p0(eta):
    """Inverse logit with the linear predictor clamped to +/-40."""
    return expit(np.clip(eta, -ETA_CLAMP, ETA_CLAMP))


def link_sigma(eta):
    return np.exp(np.clip(eta, -ETA_CLAMP, ETA_CLAMP))


def link_density(eta):
    """Density per km²."""
    return np.exp(np.clip(eta, -ETA_CLAMP, ETA_CLAMP))


def logit(p):
    p = np.asarray(p, dtype=float)
    return np.log(p) - np.log1p(-p)


def design_row(design: DesignBundle, predictor: str, values: dict | None = None, session: int = 0):
    """One design row for ``predictor`` from raw covariate values.

    ``session`` is zero-based. Returns the row and the list of terms whose
    value falls outside the range seen when the design was built.
    """
    values = values or {}
    pre = PREFIX[predictor][1]
    row = [1.0]
    outside = []
    for t in design.formula.terms(predictor):
        if t == SESSION:
            row.extend(1.0 if session == g else 0.0 for g in range(1, design.dims.n_sessions))
            continue
        if t not in values:
            raise ValueError(f"missing value for covariate {t!r}")
        v = float(values[t])
        lo, hi = design.ranges.get(pre + t, (-np.inf, np.inf))
        if v < lo - 1e-12 * max(1.0, abs(lo)) or v > hi + 1e-12 * max(1.0, abs(hi)):
            outside.append(t)
        if pre + t in design.scaling:
            m, sd = design.scaling[pre + t]
            v = (v - m) / sd
        row.append(v)
    return np.array(row), outside
