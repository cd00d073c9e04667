"""CSV readers and writers for traps, state spaces, covariates, graphs and posts.

Lines starting with ``#`` are provenance comments and are skipped on input.
"""
from __future__ import annotations

import csv
import json
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .covariates import CovariateSurface, WeightedGraph
from .geometry import GeoPoint, Projection, StateSpace, TrapArray


class InputError(ValueError):
    """Bad or missing input file; the CLI maps it to exit code 2."""


def _rows(path) -> tuple[list[str], list[dict]]:
    path = Path(path)
    if not path.exists():
        raise InputError(f"file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    rows = list(reader)
    return list(reader.fieldnames or []), rows


def _need(path, fields, required):
    missing = [c for c in required if c not in fields]
    if missing:
        raise InputError(f"{path}: missing columns {missing}")


def provenance_lines(prov: dict) -> str:
    return "# provenance: " + json.dumps(prov, sort_keys=True, separators=(",", ":")) + "\n"


def read_traps(path, origin: GeoPoint | None = None) -> TrapArray:
    """Trap CSV ``trap_id,lon,lat[,covariate...]``; extra columns become trap covariates."""
    fields, rows = _rows(path)
    _need(path, fields, ["trap_id", "lon", "lat"])
    if not rows:
        raise InputError(f"{path}: no traps")
    extra = [c for c in fields if c not in ("trap_id", "lon", "lat")]
    try:
        covs = {c: np.array([float(r[c]) for r in rows]) for c in extra}
        return TrapArray.from_lonlat([r["trap_id"] for r in rows], [float(r["lon"]) for r in rows],
                                     [float(r["lat"]) for r in rows], covs, origin)
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from exc


def read_statespace(path, projection: Projection | None = None) -> StateSpace:
    """State-space CSV ``point_id,x,y,cell_area[,covariate...]``."""
    fields, rows = _rows(path)
    _need(path, fields, ["point_id", "x", "y", "cell_area"])
    if not rows:
        raise InputError(f"{path}: no state-space points")
    areas = {float(r["cell_area"]) for r in rows}
    if len(areas) != 1:
        raise InputError(f"{path}: cell_area must be the same for every point")
    extra = [c for c in fields if c not in ("point_id", "x", "y", "cell_area")]
    xy = np.array([[float(r["x"]), float(r["y"])] for r in rows])
    covs = {c: np.array([float(r[c]) for r in rows]) for c in extra}
    return StateSpace(xy, areas.pop(), covs, projection)


def write_statespace(ss: StateSpace, path, prov: dict | None = None):
    names = sorted(ss.covariates)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        if prov is not None:
            fh.write(provenance_lines(prov))
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["point_id", "x", "y", "cell_area"] + names)
        for i, (x, y) in enumerate(ss.xy):
            w.writerow([i, repr(float(x)), repr(float(y)), repr(float(ss.cell_area))]
                       + [repr(float(ss.covariates[n][i])) for n in names])


def read_covariate(path, name: str, scope: str, column: str | None = None, *, traps: TrapArray | None = None,
                   n_points: int | None = None, n_occasions: int | None = None,
                   sessions: list[str] | None = None) -> CovariateSurface:
    """Covariate CSV keyed by its scope index.

    trap: ``trap_id,value``; statespace: ``point_id,value`` (0-based);
    occasion: ``occasion,value`` (1-based); session: ``session,value``;
    trap_occasion: ``trap_id,occasion,value`` with optional ``session``.
    """
    column = column or name
    fields, rows = _rows(path)
    _need(path, fields, [column])
    try:
        if scope == "trap":
            _need(path, fields, ["trap_id"])
            idx = traps.index()
            vals = np.full(traps.n_traps, np.nan)
            for r in rows:
                vals[idx[r["trap_id"]]] = float(r[column])
        elif scope == "statespace":
            _need(path, fields, ["point_id"])
            vals = np.full(n_points, np.nan)
            for r in rows:
                vals[int(r["point_id"])] = float(r[column])
        elif scope == "occasion":
            _need(path, fields, ["occasion"])
            vals = np.full(n_occasions, np.nan)
            for r in rows:
                vals[int(r["occasion"]) - 1] = float(r[column])
        elif scope == "session":
            _need(path, fields, ["session"])
            pos = {s: i for i, s in enumerate(sessions)}
            vals = np.full(len(sessions), np.nan)
            for r in rows:
                vals[pos[r["session"]]] = float(r[column])
        elif scope == "trap_occasion":
            _need(path, fields, ["trap_id", "occasion"])
            idx = traps.index()
            if "session" in fields:
                pos = {s: i for i, s in enumerate(sessions)}
                vals = np.full((len(sessions), traps.n_traps, n_occasions), np.nan)
                for r in rows:
                    vals[pos[r["session"]], idx[r["trap_id"]], int(r["occasion"]) - 1] = float(r[column])
            else:
                vals = np.full((traps.n_traps, n_occasions), np.nan)
                for r in rows:
                    vals[idx[r["trap_id"]], int(r["occasion"]) - 1] = float(r[column])
        else:
            raise InputError(f"unknown covariate scope {scope!r}")
    except (KeyError, IndexError) as exc:
        raise InputError(f"{path}: index {exc} does not match the {scope} layout") from exc
    if np.isnan(vals).any():
        raise InputError(f"{path}: covariate {name!r} does not cover every {scope} index")
    return CovariateSurface(name, scope, vals)


def write_table(path, header: list[str], rows, prov: dict | None = None):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        if prov is not None:
            fh.write(provenance_lines(prov))
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def read_graph(path) -> WeightedGraph:
    """Edge list CSV ``u,v,weight_metres``."""
    fields, rows = _rows(path)
    _need(path, fields, ["u", "v", "weight_metres"])
    try:
        return WeightedGraph.from_edges((r["u"], r["v"], float(r["weight_metres"])) for r in rows)
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from exc


def parse_timestamp(text: str) -> float:
    """ISO-8601 to epoch seconds; naive times are taken as UTC."""
    t = text.strip()
    if t.endswith("Z"):
        t = t[:-1] + "+00:00"
    dt = datetime.fromisoformat(t)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def read_posts(path) -> tuple[list[str], np.ndarray]:
    """Post events CSV ``user_id,timestamp_iso8601``."""
    fields, rows = _rows(path)
    _need(path, fields, ["user_id", "timestamp_iso8601"])
    if not rows:
        raise InputError(f"{path}: no post events")
    try:
        ts = np.array([parse_timestamp(r["timestamp_iso8601"]) for r in rows])
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from exc
    return [r["user_id"] for r in rows], ts


def read_samples(path, value_column: str, projection: Projection | None = None):
    """Point samples with ``x,y`` (metres) or ``lon,lat`` columns plus a value column."""
    fields, rows = _rows(path)
    _need(path, fields, [value_column])
    vals = np.array([float(r[value_column]) for r in rows])
    if "x" in fields and "y" in fields:
        xy = np.array([[float(r["x"]), float(r["y"])] for r in rows])
    elif "lon" in fields and "lat" in fields:
        if projection is None:
            raise InputError(f"{path}: lon/lat samples need a projection (supply traps)")
        x, y = projection.forward([float(r["lon"]) for r in rows], [float(r["lat"]) for r in rows])
        xy = np.column_stack([x, y])
    else:
        raise InputError(f"{path}: samples need x,y or lon,lat columns")
    return xy.reshape(-1, 2), vals
