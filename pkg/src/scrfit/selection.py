"""AIC ranking of candidate models with Akaike weights."""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

COLUMNS = ["Model", "Density", "p0", "sigma", "logL", "K", "AIC", "ΔAIC", "Ω", "CumWt"]


@dataclass
class RankRow:
    name: str
    nll: float
    k: int
    density: str = "~1"
    p0: str = "~1"
    sigma: str = "~1"
    aic: float = math.nan
    delta_aic: float = math.nan
    weight: float = math.nan
    cum_weight: float = math.nan


@dataclass
class RankingTable:
    rows: list[RankRow]
    failed: list[tuple[str, str]] = field(default_factory=list)


def akaike_weights(aics) -> np.ndarray:
    """exp(-Δ/2) normalized, computed relative to the best model so the
    best weight never underflows."""
    a = np.asarray(aics, dtype=float)
    delta = a - a.min()
    w = np.exp(-0.5 * delta)
    return w / w.sum()


def rank(entries, failed=()) -> RankingTable:
    """Rank fitted models by AIC.

    ``entries`` are RankRow objects (or tuples name, nll, K[, density, p0,
    sigma]). Ties go to fewer parameters, then name. Failed fits are carried
    separately and get no weight.
    """
    rows = [e if isinstance(e, RankRow) else RankRow(*e) for e in entries]
    if not rows:
        raise ValueError("no successfully fitted models to rank")
    names = [r.name for r in rows]
    if len(set(names)) != len(names):
        raise ValueError("model names must be unique")
    for r in rows:
        r.aic = 2.0 * r.nll + 2.0 * r.k
    rows.sort(key=lambda r: (r.aic, r.k, r.name))
    w = akaike_weights([r.aic for r in rows])
    best = rows[0].aic
    cum = 0.0
    for r, wi in zip(rows, w):
        r.delta_aic = r.aic - best
        r.weight = float(wi)
        cum += float(wi)
        r.cum_weight = min(cum, 1.0)
    return RankingTable(rows, list(failed))


def _fmt_weight(w: float) -> str:
    return f"{w:.6e}" if w < 1e-4 else f"{w:.7f}"


def _cells(r: RankRow) -> list[str]:
    return [r.name, r.density, r.p0, r.sigma, f"{r.nll:.2f}", str(r.k), f"{r.aic:.2f}",
            f"{r.delta_aic:.5f}", _fmt_weight(r.weight), f"{r.cum_weight:.7f}"]


def report(table: RankingTable, fmt: str = "csv") -> str:
    """Render as CSV or aligned text with the Table-3 column set."""
    body = [_cells(r) for r in table.rows]
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        w.writerows(body)
        return buf.getvalue()
    if fmt == "text":
        grid = [COLUMNS] + body
        widths = [max(len(row[i]) for row in grid) for i in range(len(COLUMNS))]
        lines = ["  ".join(c.ljust(wd) for c, wd in zip(row, widths)).rstrip() for row in grid]
        for name, why in table.failed:
            lines.append(f"# failed: {name}: {why}")
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown report format {fmt!r}")


def parse_report(text: str) -> RankingTable:
    """Read a CSV produced by :func:`report` back into a table."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if header != COLUMNS:
        raise ValueError(f"unexpected ranking header {header}")
    rows = []
    for c in reader:
        rows.append(RankRow(name=c[0], density=c[1], p0=c[2], sigma=c[3], nll=float(c[4]), k=int(c[5]),
                            aic=float(c[6]), delta_aic=float(c[7]), weight=float(c[8]),
                            cum_weight=float(c[9])))
    return RankingTable(rows)


def _fit_one(args):
    from .inference import fit
    from .likelihood import LikelihoodContext
    from .model import build_design

    name, formula, data, statespace, registry, standardize, options, backend = args
    try:
        dims_ = _dims(data, statespace)
        design = build_design(formula, registry, dims_, standardize)
        res = fit(LikelihoodContext(data, statespace, design, backend), options)
    except Exception as exc:
        return name, formula, None, repr(exc)
    res.context = None
    return name, formula, res, None


def _dims(data, statespace):
    from .model import Dims
    return Dims(statespace.n_points, data.traps.n_traps, data.n_occasions, data.n_sessions)


def fit_catalogue(catalogue: dict, data, statespace, registry, standardize=True, options=None,
                  workers: int = 1, backend: str | None = None):
    """Fit every named formula. Returns (ranking table, {name: FitResult})."""
    if not catalogue:
        raise ValueError("model catalogue is empty")
    jobs = [(name, f, data, statespace, registry, standardize, options, backend)
            for name, f in sorted(catalogue.items())]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            out = list(pool.map(_fit_one, jobs))
    else:
        out = [_fit_one(j) for j in jobs]
    entries, failed, fits = [], [], {}
    for name, f, res, err in out:
        if res is None or not res.converged:
            failed.append((name, err or (res.message if res else "unknown failure")))
            if res is not None:
                fits[name] = res
            continue
        fits[name] = res
        entries.append(RankRow(name, res.nll, res.n_params, f.text("density"), f.text("p0"), f.text("sigma")))
    return rank(entries, failed), fits
