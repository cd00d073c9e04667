"""JSON run configuration: strict validation and problem assembly."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .covariates import CovariateSurface, tweetogram
from .encounters import EncounterData, read_encounter_csv
from .geometry import GeoPoint, StateSpace, TrapArray, build_state_space, idw_interpolate, proximity_covariate
from .io import InputError
from .model import CovariateRegistry

KEYS = {
    "traps", "encounters", "occasions", "sessions", "statespace", "covariates", "model", "catalogue",
    "standardize", "seed", "starts", "jitter", "threads", "backend", "interval_level", "truth", "origin",
}
STATESPACE_KEYS = {"buffer", "spacing", "clip", "file"}
COVARIATE_KEYS = {"name", "scope", "file", "column", "values", "proximity", "idw", "tweetogram"}
IDW_DEFAULTS = {"power": 2.0, "k": 12}


@dataclass
class RunConfig:
    raw: dict
    base: Path
    traps: str | None = None
    encounters: str | None = None
    occasions: int | None = None
    sessions: list[str] | None = None
    statespace: dict = field(default_factory=dict)
    covariates: list[dict] = field(default_factory=list)
    model: object = None
    catalogue: object = None
    standardize: bool = True
    seed: int = 0
    starts: int = 3
    jitter: float = 0.5
    threads: int = 1
    backend: str | None = None
    interval_level: float = 0.95
    truth: dict | None = None
    origin: dict | None = None

    def path(self, p) -> Path:
        q = Path(p)
        return q if q.is_absolute() else self.base / q

    def provenance(self) -> dict:
        """Resolved configuration minus execution-only settings (threads)."""
        out = {k: v for k, v in self.raw.items() if k != "threads"}
        out.setdefault("seed", self.seed)
        out.setdefault("standardize", self.standardize)
        out.setdefault("starts", self.starts)
        return out


def load_config(path_or_dict, base: Path | None = None) -> RunConfig:
    if isinstance(path_or_dict, dict):
        raw = dict(path_or_dict)
        base = base or Path.cwd()
    else:
        p = Path(path_or_dict)
        if not p.exists():
            raise InputError(f"config not found: {p}")
        try:
            raw = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise InputError(f"{p}: invalid JSON: {exc}") from exc
        base = p.parent
    unknown = sorted(set(raw) - KEYS)
    if unknown:
        raise InputError(f"unknown config keys: {unknown}")
    cfg = RunConfig(raw=raw, base=base)
    for k, v in raw.items():
        setattr(cfg, k, v)
    if isinstance(cfg.sessions, int):
        cfg.sessions = [str(i + 1) for i in range(cfg.sessions)]
    elif cfg.sessions is not None:
        cfg.sessions = [str(s) for s in cfg.sessions]
    bad = sorted(set(cfg.statespace) - STATESPACE_KEYS)
    if bad:
        raise InputError(f"unknown statespace keys: {bad}")
    for c in cfg.covariates:
        bad = sorted(set(c) - COVARIATE_KEYS)
        if bad:
            raise InputError(f"unknown covariate keys {bad} in {c.get('name')!r}")
        if "name" not in c or "scope" not in c:
            raise InputError("every covariate needs 'name' and 'scope'")
    for key in ("traps", "encounters"):
        if getattr(cfg, key) is not None and not cfg.path(getattr(cfg, key)).exists():
            raise InputError(f"{key} file not found: {cfg.path(getattr(cfg, key))}")
    if "file" in cfg.statespace and not cfg.path(cfg.statespace["file"]).exists():
        raise InputError(f"statespace file not found: {cfg.path(cfg.statespace['file'])}")
    for c in cfg.covariates:
        for sub in ("file",):
            if sub in c and not cfg.path(c[sub]).exists():
                raise InputError(f"covariate file not found: {cfg.path(c[sub])}")
        for kind in ("idw", "tweetogram"):
            if kind in c and not cfg.path(c[kind]["file"]).exists():
                raise InputError(f"covariate file not found: {cfg.path(c[kind]['file'])}")
    if isinstance(cfg.catalogue, str) and not cfg.path(cfg.catalogue).exists():
        raise InputError(f"catalogue file not found: {cfg.path(cfg.catalogue)}")
    return cfg


@dataclass
class Problem:
    traps: TrapArray
    statespace: StateSpace
    registry: CovariateRegistry
    data: EncounterData | None
    n_occasions: int
    sessions: list[str]


def load_traps(cfg: RunConfig) -> TrapArray:
    if cfg.traps is None:
        raise InputError("config needs 'traps'")
    origin = GeoPoint(cfg.origin["lon"], cfg.origin["lat"]) if cfg.origin else None
    return io.read_traps(cfg.path(cfg.traps), origin)


def load_statespace(cfg: RunConfig, traps: TrapArray) -> StateSpace:
    ss = cfg.statespace
    if "file" in ss:
        return io.read_statespace(cfg.path(ss["file"]), traps.projection)
    if "buffer" not in ss or "spacing" not in ss:
        raise InputError("statespace needs 'buffer' and 'spacing' (metres) or 'file'")
    return build_state_space(traps, float(ss["buffer"]), float(ss["spacing"]), bool(ss.get("clip", False)))


def assemble(cfg: RunConfig, need_data: bool = True) -> Problem:
    traps = load_traps(cfg)
    statespace = load_statespace(cfg, traps)
    data = None
    if need_data:
        if cfg.encounters is None:
            raise InputError("config needs 'encounters'")
        try:
            data = read_encounter_csv(cfg.path(cfg.encounters), traps, cfg.occasions, cfg.sessions)
        except InputError:
            raise
        except ValueError as exc:
            raise InputError(str(exc)) from exc
        n_occ, sessions = data.n_occasions, data.session_ids
    else:
        if cfg.occasions is None or cfg.sessions is None:
            raise InputError("config needs 'occasions' and 'sessions'")
        n_occ, sessions = int(cfg.occasions), cfg.sessions
    registry = CovariateRegistry()
    for name, v in traps.covariates.items():
        registry.add(CovariateSurface(name, "trap" if v.ndim == 1 else "trap_occasion", v))
    for name, v in statespace.covariates.items():
        registry.add(CovariateSurface(name, "statespace", v))
    for spec in cfg.covariates:
        registry.add(_build_covariate(cfg, spec, traps, statespace, n_occ, sessions))
    return Problem(traps, statespace, registry, data, n_occ, sessions)


def _targets(scope, traps: TrapArray, statespace: StateSpace):
    if scope == "trap":
        return traps.xy
    if scope == "statespace":
        return statespace.xy
    raise InputError(f"scope {scope!r} is not spatial")


def _build_covariate(cfg, spec, traps, statespace, n_occ, sessions) -> CovariateSurface:
    name, scope = spec["name"], spec["scope"]
    if "values" in spec:
        return CovariateSurface(name, scope, np.asarray(spec["values"], dtype=float))
    if "file" in spec:
        return io.read_covariate(cfg.path(spec["file"]), name, scope, spec.get("column"), traps=traps,
                                 n_points=statespace.n_points, n_occasions=n_occ, sessions=sessions)
    if "proximity" in spec:
        ref = GeoPoint(spec["proximity"]["lon"], spec["proximity"]["lat"])
        if scope == "trap":
            if traps.lon is None:
                raise InputError("trap proximity needs geographic trap coordinates")
            vals = proximity_covariate(ref, traps.lon, traps.lat)
        elif scope == "statespace":
            lon, lat = statespace.lonlat()
            vals = proximity_covariate(ref, lon, lat)
        else:
            raise InputError("proximity covariates apply to trap or statespace scope")
        return CovariateSurface(name, scope, vals, meta={"reference": spec["proximity"], "units": "m"})
    if "idw" in spec:
        opt = {**IDW_DEFAULTS, **spec["idw"]}
        xy, vals = io.read_samples(cfg.path(opt["file"]), opt.get("column", name), traps.projection)
        out = idw_interpolate(xy, vals, _targets(scope, traps, statespace), float(opt["power"]), int(opt["k"]))
        return CovariateSurface(name, scope, out, meta={"idw_power": opt["power"], "idw_k": opt["k"]})
    if "tweetogram" in spec:
        if scope != "occasion":
            raise InputError("tweetogram covariates have occasion scope")
        opt = spec["tweetogram"]
        users, ts = io.read_posts(cfg.path(opt["file"]))
        start = io.parse_timestamp(opt["start"]) if "start" in opt else None
        prof = tweetogram(users, ts, float(opt.get("utc_offset", 0.0)), start, opt.get("days"))
        if len(prof) != n_occ:
            raise InputError(f"tweetogram has {len(prof)} bins but data have {n_occ} occasions")
        return CovariateSurface(name, scope, prof)
    raise InputError(f"covariate {name!r} needs one of values/file/proximity/idw/tweetogram")
