"""Command-line entry point.

Exit codes: 0 success, 1 model failure, 2 input error.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, io
from .config import RunConfig, assemble, load_config, load_statespace, load_traps
from .covariates import centralities, tweetogram
from .encounters import summarize, write_encounter_csv
from .geometry import GeoPoint, idw_interpolate, proximity_covariate
from .inference import FitOptions, FitResult, derived_home_range, fit, predict_density, predict_detection
from .io import InputError
from .kernels import BACKEND
from .likelihood import LikelihoodContext
from .model import Dims, build_design, parse_formula
from .selection import fit_catalogue, report
from .simulate import SimConfig, simulate

EXIT_MODEL = 1
EXIT_INPUT = 2


class ModelFailure(RuntimeError):
    pass


def _threads(args) -> int:
    if getattr(args, "threads", None):
        return int(args.threads)
    return int(os.environ.get("SCRFIT_THREADS", "1"))


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _dump_json(obj, path):
    text = json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _prov(cfg: RunConfig | None, **extra) -> dict:
    out = {"version": __version__, "backend": BACKEND}
    if cfg is not None:
        out["config"] = cfg.provenance()
        out["backend"] = cfg.backend or BACKEND
    out.update({k: v for k, v in extra.items() if v is not None})
    return out


def _formula(cfg: RunConfig, override, registry):
    text = override if override is not None else cfg.model
    if text is None:
        raise InputError("no model formula given (config 'model' or --model)")
    try:
        return parse_formula(text, registry)
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def _fit_options(cfg: RunConfig, threads: int) -> FitOptions:
    return FitOptions(n_starts=int(cfg.starts), jitter=float(cfg.jitter), seed=int(cfg.seed), threads=threads)


# ---------------------------------------------------------------------------


def cmd_fit(args) -> int:
    cfg = load_config(args.config)
    prob = assemble(cfg)
    formula = _formula(cfg, args.model, prob.registry)
    dims = Dims(prob.statespace.n_points, prob.traps.n_traps, prob.n_occasions, len(prob.sessions))
    try:
        design = build_design(formula, prob.registry, dims, bool(cfg.standardize))
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    ctx = LikelihoodContext(prob.data, prob.statespace, design, cfg.backend)
    res = fit(ctx, _fit_options(cfg, _threads(args)))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    doc = res.to_dict()
    doc["provenance"] = _prov(cfg)
    doc["n"] = prob.data.counts()
    doc["sessions"] = prob.sessions
    doc["statespace"] = {"points": prob.statespace.n_points, "cell_area_m2": prob.statespace.cell_area}
    doc["scaling"] = {k: list(v) for k, v in design.scaling.items()}
    _dump_json(doc, out / "fit.json")
    prov = _prov(cfg)
    io.write_table(out / "wald.csv", ["Parameter", "Estimate", "SE", "z", "P(>|z|)"],
                   [[r["name"], r["estimate"], r["se"], r["z"], r["p"]] for r in res.wald()], prov)
    rows = []
    if res.hessian_ok or np.all(np.isfinite(res.vcov)):
        lam = ctx.expected_population(res.estimates)
        for s in range(len(prob.sessions)):
            hr = derived_home_range(res, s + 1)
            dens = predict_density(res, s + 1)["density"]
            rows.append([prob.sessions[s], hr["sigma"], hr["sigma_se"], hr["r95"], hr["area95"],
                         float(lam[s]), float(dens.min()), float(dens.max())])
    io.write_table(out / "derived.csv", ["session", "sigma_m", "sigma_se", "r95_m", "area95_m2",
                                         "expected_N", "density_min_km2", "density_max_km2"], rows, prov)
    print(f"{res.status}: nll={res.nll:.4f} K={res.n_params} AIC={res.aic:.4f}")
    if not res.converged:
        print(f"fit failed: {res.message}", file=sys.stderr)
        return EXIT_MODEL
    return 0


def _load_catalogue(cfg: RunConfig, override):
    cat = override if override is not None else cfg.catalogue
    if cat is None:
        raise InputError("no model catalogue given (config 'catalogue' or --catalogue)")
    if isinstance(cat, str):
        p = Path(cat) if override is not None else cfg.path(cat)
        if not p.exists():
            raise InputError(f"catalogue file not found: {p}")
        cat = json.loads(p.read_text())
    if not isinstance(cat, dict) or not cat:
        raise InputError("model catalogue is empty")
    return cat


def cmd_rank(args) -> int:
    cfg = load_config(args.config)
    prob = assemble(cfg)
    cat = _load_catalogue(cfg, args.catalogue)
    formulas = {}
    for name, text in cat.items():
        try:
            formulas[name] = parse_formula(text, prob.registry)
        except ValueError as exc:
            raise InputError(f"model {name!r}: {exc}") from exc
    try:
        table, fits = fit_catalogue(formulas, prob.data, prob.statespace, prob.registry, bool(cfg.standardize),
                                    _fit_options(cfg, 1), workers=_threads(args), backend=cfg.backend)
    except ValueError as exc:
        print(f"ranking failed: {exc}", file=sys.stderr)
        return EXIT_MODEL
    with Path(args.out).open("w", encoding="utf-8", newline="") as fh:
        fh.write(io.provenance_lines(_prov(cfg, catalogue=cat)))
        fh.write(report(table, "csv"))
    sys.stdout.write(report(table, "text"))
    return 0


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    prob = assemble(cfg, need_data=False)
    formula = _formula(cfg, None, prob.registry)
    if cfg.truth is None:
        raise InputError("simulation config needs 'truth'")
    sim = SimConfig(formula, dict(cfg.truth), prob.statespace, prob.traps, prob.n_occasions,
                    len(prob.sessions), int(cfg.seed), prob.registry, bool(cfg.standardize))
    try:
        data, pop = simulate(sim, args.replicate)
    except ValueError as exc:
        print(f"simulation refused: {exc}", file=sys.stderr)
        return EXIT_MODEL
    for block, sid in zip(data.sessions, prob.sessions):
        block.session_id = sid
    prov = _prov(cfg, replicate=args.replicate)
    write_encounter_csv(data, args.out, io.provenance_lines(prov))
    truth_path = Path(args.truth) if args.truth else Path(args.out).with_name("truth.json")
    _dump_json({"provenance": prov, "truth": cfg.truth, "N": [len(p) for p in pop], "n": data.counts(),
                "centres": [p.tolist() for p in pop], "sessions": prob.sessions}, truth_path)
    print(f"simulated N={[len(p) for p in pop]} observed n={data.counts()}")
    return 0


def _fit_from_json(path, design) -> FitResult:
    p = Path(path)
    if not p.exists():
        raise InputError(f"fit file not found: {p}")
    doc = json.loads(p.read_text())
    if doc["names"] != design.names:
        raise InputError("fit.json parameters do not match the configured model")
    est = np.array(doc["estimates"], dtype=float)
    V = np.array([[np.nan if v is None else v for v in row] for row in doc["vcov"]], dtype=float)
    se = np.array([np.nan if v is None else v for v in doc["se"]], dtype=float)
    d = doc["diagnostics"]
    return FitResult(doc["names"], est, doc["nll"], V, se, d["converged"], d["status"], d["message"],
                     d["iterations"], d["grad_norm"], d["hessian_ok"], d["start_nlls"], doc["formula"], design)


def cmd_predict(args) -> int:
    cfg = load_config(args.config)
    prob = assemble(cfg)
    formula = _formula(cfg, args.model, prob.registry)
    dims = Dims(prob.statespace.n_points, prob.traps.n_traps, prob.n_occasions, len(prob.sessions))
    design = build_design(formula, prob.registry, dims, bool(cfg.standardize))
    res = _fit_from_json(args.fit, design)
    prov = _prov(cfg)
    rows = []
    for s, sid in enumerate(prob.sessions):
        pred = predict_density(res, s + 1)
        for u, (x, y) in enumerate(prob.statespace.xy):
            rows.append([u, float(x), float(y), sid, pred["density"][u], pred["se"][u], pred["lwr"][u], pred["upr"][u]])
    io.write_table(args.out, ["point_id", "x", "y", "session", "density_km2", "se", "lwr", "upr"], rows, prov)
    if args.detection_out:
        dist = np.arange(0.0, args.max_distance + 0.5 * args.step, args.step)
        det_rows = []
        for s, sid in enumerate(prob.sessions):
            for k in range(prob.n_occasions):
                curve = predict_detection(res, s + 1, dist, trap=0, occasion=k + 1)
                det_rows.extend([sid, k + 1, d, p] for d, p in zip(dist, curve["p"]))
        io.write_table(args.detection_out, ["session", "occasion", "distance_m", "p"], det_rows, prov)
    return 0


def cmd_summary(args) -> int:
    cfg = load_config(args.config)
    prob = assemble(cfg)
    doc = summarize(prob.data).to_dict()
    doc["traps"] = prob.traps.n_traps
    doc["occasions"] = prob.n_occasions
    doc["statespace_points"] = prob.statespace.n_points
    doc["provenance"] = _prov(cfg)
    _dump_json(doc, args.out)
    return 0


def cmd_covariate(args) -> int:
    prov = _prov(None, command=" ".join(sys.argv[1:]) if args.record_argv else None)
    kind = args.kind
    if kind == "tweetogram":
        users, ts = io.read_posts(args.posts)
        start = io.parse_timestamp(args.start) if args.start else None
        prof = tweetogram(users, ts, args.utc_offset, start, args.days, per_day=args.per_day)
        if args.per_day:
            rows = [[d + 1, h + 1, v] for d, day in enumerate(prof) for h, v in enumerate(day)]
            io.write_table(args.out, ["day", "occasion", "tweetogram"], rows, prov)
        else:
            io.write_table(args.out, ["occasion", "tweetogram"], [[h + 1, v] for h, v in enumerate(prof)], prov)
    elif kind == "centrality":
        g = io.read_graph(args.graph)
        header, cols = ["node"], []
        for a in args.alpha:
            c = centralities(g, a, args.invert_weights, _threads(args))
            tag = f"a{a:g}".replace(".", "")
            for m in ("degree", "betweenness", "closeness"):
                header.append(f"{m}_{tag}")
                cols.append(c[m])
        coords = {}
        if args.nodes:
            _, nrows = io._rows(args.nodes)
            coords = {r["node"]: (r["lon"], r["lat"]) for r in nrows}
            header[1:1] = ["lon", "lat"]
        rows = []
        for i, n in enumerate(g.nodes):
            extra = list(coords.get(n, ("", ""))) if args.nodes else []
            rows.append([n] + extra + [col[i] for col in cols])
        io.write_table(args.out, header, rows, prov)
    elif kind in ("proximity", "idw"):
        cfg = load_config(args.config)
        traps = load_traps(cfg)
        if args.scope == "trap":
            ids, xy = traps.ids, traps.xy
            lon, lat = traps.lon, traps.lat
            key = "trap_id"
        else:
            ss = load_statespace(cfg, traps)
            ids, xy = list(range(ss.n_points)), ss.xy
            lon, lat = ss.lonlat()
            key = "point_id"
        if kind == "proximity":
            vals = proximity_covariate(GeoPoint(args.ref_lon, args.ref_lat), lon, lat)
            name = args.name or "proximity"
        else:
            sxy, sval = io.read_samples(args.samples, args.value_column, traps.projection)
            vals = idw_interpolate(sxy, sval, xy, args.power, args.k)
            name = args.name or args.value_column
        io.write_table(args.out, [key, name], [[i, v] for i, v in zip(ids, vals)], _prov(cfg))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="scrfit", description="Spatial capture-recapture model fitting")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit one model")
    p.add_argument("--config", required=True)
    p.add_argument("--model", help="override the config formula")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("rank", help="fit a catalogue of models and rank by AIC")
    p.add_argument("--config", required=True)
    p.add_argument("--catalogue")
    p.add_argument("--out", default="ranking.csv")
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("simulate", help="simulate encounter data")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default="encounters.csv")
    p.add_argument("--truth")
    p.add_argument("--replicate", type=int, default=0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("predict", help="density surface and detection curves from a fit")
    p.add_argument("--config", required=True)
    p.add_argument("--fit", required=True)
    p.add_argument("--model")
    p.add_argument("--out", default="density.csv")
    p.add_argument("--detection-out")
    p.add_argument("--max-distance", type=float, default=10000.0)
    p.add_argument("--step", type=float, default=250.0)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("summary", help="capture summary (counts, MMDM)")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_summary)

    p = sub.add_parser("covariate", help="build covariates")
    csub = p.add_subparsers(dest="kind", required=True)
    t = csub.add_parser("tweetogram")
    t.add_argument("--posts", required=True)
    t.add_argument("--utc-offset", type=float, default=0.0)
    t.add_argument("--start", help="first local midnight, ISO-8601")
    t.add_argument("--days", type=int)
    t.add_argument("--per-day", action="store_true")
    t.add_argument("--out", required=True)
    c = csub.add_parser("centrality")
    c.add_argument("--graph", required=True)
    c.add_argument("--alpha", type=float, nargs="+", default=[0.0, 0.5, 1.0])
    c.add_argument("--invert-weights", action="store_true")
    c.add_argument("--nodes", help="CSV node,lon,lat to carry coordinates into the output")
    c.add_argument("--threads", type=int)
    c.add_argument("--out", required=True)
    x = csub.add_parser("proximity")
    x.add_argument("--config", required=True)
    x.add_argument("--scope", choices=["trap", "statespace"], default="trap")
    x.add_argument("--ref-lon", type=float, required=True)
    x.add_argument("--ref-lat", type=float, required=True)
    x.add_argument("--name")
    x.add_argument("--out", required=True)
    i = csub.add_parser("idw")
    i.add_argument("--config", required=True)
    i.add_argument("--scope", choices=["trap", "statespace"], default="statespace")
    i.add_argument("--samples", required=True)
    i.add_argument("--value-column", required=True)
    i.add_argument("--power", type=float, default=2.0)
    i.add_argument("--k", type=int, default=12)
    i.add_argument("--name")
    i.add_argument("--out", required=True)
    for sp in (t, c, x, i):
        sp.set_defaults(func=cmd_covariate, record_argv=False)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (FileNotFoundError, KeyError, json.JSONDecodeError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ModelFailure as exc:
        print(f"model failure: {exc}", file=sys.stderr)
        return EXIT_MODEL


if __name__ == "__main__":
    sys.exit(main())
