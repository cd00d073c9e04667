"""Regenerate the bundled toy data set.

Everything here is synthetic: a 5x5 trap grid with 1 km spacing, a jittered
street lattice, a small metro network, hourly posting times over three days
and a smooth census-style surface. Encounters are simulated from the
best-ranked model shape with the seed below, so the files are reproducible:

    python data/make_toy.py
"""
import csv
import json
import math
from pathlib import Path

import numpy as np

from scrfit.cli import main as cli
from scrfit.config import assemble, load_config
from scrfit.encounters import write_encounter_csv
from scrfit.geometry import GeoPoint, Projection
from scrfit.model import parse_formula
from scrfit.simulate import SimConfig, simulate

HERE = Path(__file__).resolve().parent
ORIGIN = GeoPoint(-3.7038, 40.4168)
SEED = 20240917
START = "2026-03-02T00:00:00"
UTC_OFFSET = 1.0


def write_csv(name, header, rows):
    with (HERE / name).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def lonlat(proj, x, y):
    lon, lat = proj.inverse(np.atleast_1d(x), np.atleast_1d(y))
    return [(round(float(a), 7), round(float(b), 7)) for a, b in zip(lon, lat)]


def main():
    rng = np.random.default_rng(SEED)
    proj = Projection(ORIGIN)

    # traps: 5 x 5, 1 km apart, centred on the origin
    g = (np.arange(5) - 2) * 1000.0
    tx, ty = np.meshgrid(g, g)
    pts = lonlat(proj, tx.ravel(), ty.ravel())
    write_csv("traps.csv", ["trap_id", "lon", "lat"], [[f"H{i:02d}", a, b] for i, (a, b) in enumerate(pts)])

    # street lattice every 500 m with jitter; edges to right/up neighbours plus a few diagonals
    s = np.arange(-3500.0, 3501.0, 500.0)
    sx, sy = np.meshgrid(s, s)
    sx = sx.ravel() + rng.normal(0, 60, sx.size)
    sy = sy.ravel() + rng.normal(0, 60, sy.size)
    n = len(s)
    nodes = lonlat(proj, sx, sy)
    write_csv("street_nodes.csv", ["node", "lon", "lat"], [[f"n{i}", a, b] for i, (a, b) in enumerate(nodes)])
    edges = []
    for r in range(n):
        for c in range(n):
            i = r * n + c
            for j, ok in ((i + 1, c + 1 < n), (i + n, r + 1 < n), (i + n + 1, c + 1 < n and r + 1 < n)):
                # denser grid toward the south-west
                keep = 0.95 if j != i + n + 1 else 0.25 * (1 + (sx[i] < 0) + (sy[i] < 0))
                if ok and rng.random() < keep:
                    edges.append([f"n{i}", f"n{j}", round(math.hypot(sx[i] - sx[j], sy[i] - sy[j]), 1)])
    write_csv("street_graph.csv", ["u", "v", "weight_metres"], edges)

    # metro: two crossing lines and a loop segment
    stations = [(-3000 + 750 * k, 0.0) for k in range(9)] + [(0.0, -3000 + 750 * k) for k in range(9) if k != 4]
    stations += [(1500.0, 1500.0), (-1500.0, 1500.0)]
    mx = np.array([p[0] for p in stations])
    my = np.array([p[1] for p in stations])
    write_csv("metro_nodes.csv", ["node", "lon", "lat"],
              [[f"m{i}", a, b] for i, (a, b) in enumerate(lonlat(proj, mx, my))])
    medges = [(i, i + 1) for i in range(8)]
    vert = [9, 10, 11, 12, 4, 13, 14, 15, 16]
    medges += list(zip(vert, vert[1:]))
    medges += [(6, 17), (17, 13), (2, 18), (18, 12)]
    write_csv("metro_graph.csv", ["u", "v", "weight_metres"],
              [[f"m{a}", f"m{b}", round(math.hypot(mx[a] - mx[b], my[a] - my[b]), 1)] for a, b in medges])

    # census-style principal-component surface sampled at scattered points
    px, py = rng.uniform(-4000, 4000, 120), rng.uniform(-4000, 4000, 120)
    pc2 = np.sin(px / 2500.0) + 0.5 * np.cos(py / 1800.0) + rng.normal(0, 0.1, 120)
    write_csv("census_pc.csv", ["lon", "lat", "pc2"],
              [[a, b, round(float(v), 5)] for (a, b), v in zip(lonlat(proj, px, py), pc2)])

    # posting times: afternoon-peaked activity, local time = UTC + 1
    t0 = np.datetime64(START)
    rows = []
    for u in range(400):
        for day in range(3):
            k = rng.poisson(2.0)
            hours = np.clip(rng.normal(15.0, 3.5, k), 0, 23.999)
            for h in hours:
                local = t0 + np.timedelta64(day, "D") + np.timedelta64(int(h * 3600), "s")
                utc = local - np.timedelta64(int(UTC_OFFSET * 3600), "s")
                rows.append([f"u{u:04d}", str(utc) + "Z"])
    rows.sort(key=lambda r: (r[1], r[0]))
    write_csv("posts.csv", ["user_id", "timestamp_iso8601"], rows)

    for graph, nodes_file, out in (("street_graph.csv", "street_nodes.csv", "street_centrality.csv"),
                                   ("metro_graph.csv", "metro_nodes.csv", "metro_centrality.csv")):
        cli(["covariate", "centrality", "--graph", str(HERE / graph), "--nodes", str(HERE / nodes_file),
             "--alpha", "0", "0.5", "1", "--out", str(HERE / out)])

    # simulate encounters from the best-ranked shape
    sim = json.loads((HERE / "toy_sim.json").read_text())
    cfg = load_config(HERE / "toy_sim.json")
    prob = assemble(cfg, need_data=False)
    config = SimConfig(parse_formula(sim["model"], prob.registry), sim["truth"], prob.statespace, prob.traps,
                       prob.n_occasions, len(prob.sessions), sim["seed"], prob.registry)
    data, pop = simulate(config, 0)
    write_encounter_csv(data, HERE / "encounters.csv",
                        f"# synthetic encounters; make_toy.py seed {sim['seed']}, replicate 0\n")
    print("N =", [len(p) for p in pop], "n =", data.counts())


if __name__ == "__main__":
    main()
