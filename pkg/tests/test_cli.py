import csv
import json
import shutil
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from scrfit.cli import main

DATA = Path(__file__).resolve().parents[1] / "data"
NULL = "D~1; p0~1; sigma~1"


@pytest.fixture
def toy(tmp_path):
    dst = tmp_path / "data"
    shutil.copytree(DATA, dst)
    return dst


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(ln for ln in fh if not ln.startswith("#")))


def test_fit_null_exit_zero(toy, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["fit", "--config", str(toy / "toy.json"), "--model", NULL, "--out", str(out)]) == 0
    doc = json.loads((out / "fit.json").read_text())
    assert doc["K"] == 3 and doc["aic"] == pytest.approx(2 * doc["nll"] + 6)
    assert doc["provenance"]["config"]["seed"] == 1
    wald = read_rows(out / "wald.csv")
    assert [r["Parameter"] for r in wald] == ["p0.(Intercept)", "sig.(Intercept)", "d0.(Intercept)"]
    derived = read_rows(out / "derived.csv")
    assert len(derived) == 3
    r = derived[0]
    assert float(r["r95_m"]) == pytest.approx(float(r["sigma_m"]) * 5.99 ** 0.5)
    assert (out / "wald.csv").read_text().startswith("# provenance: ")


def test_fit_deterministic_across_runs_and_threads(toy, tmp_path):
    outs = []
    for i, threads in enumerate(("1", "1", "4")):
        out = tmp_path / f"o{i}"
        assert main(["fit", "--config", str(toy / "toy.json"), "--model", "D~street_degree",
                     "--out", str(out), "--threads", threads]) == 0
        outs.append((out / "fit.json").read_bytes())
    assert outs[0] == outs[1] == outs[2]


def test_missing_trap_file_exit_two(toy, tmp_path, capsys):
    (toy / "traps.csv").unlink()
    assert main(["fit", "--config", str(toy / "toy.json"), "--out", str(tmp_path / "o")]) == 2
    assert "traps.csv" in capsys.readouterr().err


def test_unknown_config_key_and_bad_model(toy, tmp_path, capsys):
    cfg = json.loads((toy / "toy.json").read_text())
    cfg["colour"] = "blue"
    (toy / "bad.json").write_text(json.dumps(cfg))
    assert main(["fit", "--config", str(toy / "bad.json")]) == 2
    assert "colour" in capsys.readouterr().err
    assert main(["fit", "--config", str(toy / "toy.json"), "--model", "p0~nonexistent",
                 "--out", str(tmp_path / "o")]) == 2
    assert "nonexistent" in capsys.readouterr().err


def test_rank_small_catalogue(toy, tmp_path, capsys):
    cat = toy / "two.json"
    cat.write_text(json.dumps({"null": NULL, "sess": "sigma~session"}))
    out = tmp_path / "ranking.csv"
    assert main(["rank", "--config", str(toy / "toy.json"), "--catalogue", str(cat), "--out", str(out)]) == 0
    rows = read_rows(out)
    assert {r["Model"] for r in rows} == {"null", "sess"}
    assert sum(float(r["Ω"]) for r in rows) == pytest.approx(1.0, abs=1e-6)
    assert "ΔAIC" in capsys.readouterr().out


def test_rank_empty_and_single(toy, tmp_path):
    (toy / "empty.json").write_text("{}")
    assert main(["rank", "--config", str(toy / "toy.json"), "--catalogue", str(toy / "empty.json"),
                 "--out", str(tmp_path / "r.csv")]) == 2
    (toy / "one.json").write_text(json.dumps({"null": NULL}))
    assert main(["rank", "--config", str(toy / "toy.json"), "--catalogue", str(toy / "one.json"),
                 "--out", str(tmp_path / "r.csv")]) == 0
    assert read_rows(tmp_path / "r.csv")[0]["Ω"] == "1.0000000"


def test_simulate_closed_loop(toy, tmp_path):
    enc = tmp_path / "sim.csv"
    assert main(["simulate", "--config", str(toy / "toy_sim.json"), "--out", str(enc), "--replicate", "3"]) == 0
    truth = json.loads((tmp_path / "truth.json").read_text())
    cfg = json.loads((toy / "toy.json").read_text())
    cfg["encounters"] = str(enc)
    (toy / "loop.json").write_text(json.dumps(cfg))
    out = tmp_path / "fit"
    assert main(["fit", "--config", str(toy / "loop.json"), "--out", str(out)]) == 0
    doc = json.loads((out / "fit.json").read_text())
    assert doc["n"] == truth["n"]
    est = dict(zip(doc["names"], doc["estimates"]))
    se = dict(zip(doc["names"], doc["se"]))
    off = [abs(est[k] - v) / se[k] for k, v in truth["truth"].items()]
    assert np.mean(np.array(off) < 3) >= 0.8
    again = tmp_path / "sim2.csv"
    main(["simulate", "--config", str(toy / "toy_sim.json"), "--out", str(again), "--replicate", "3",
          "--truth", str(tmp_path / "t2.json")])
    assert enc.read_bytes() == again.read_bytes()


def test_predict(toy, tmp_path):
    out = tmp_path / "fit"
    main(["fit", "--config", str(toy / "toy.json"), "--model", "D~street_degree", "--out", str(out)])
    dens, det = tmp_path / "density.csv", tmp_path / "det.csv"
    assert main(["predict", "--config", str(toy / "toy.json"), "--model", "D~street_degree",
                 "--fit", str(out / "fit.json"), "--out", str(dens), "--detection-out", str(det),
                 "--max-distance", "2000", "--step", "500"]) == 0
    rows = read_rows(dens)
    assert all(float(r["lwr"]) <= float(r["density_km2"]) <= float(r["upr"]) for r in rows)
    d = read_rows(det)
    assert len(d) == 3 * 24 * 5 and d[0]["distance_m"] == "0.0"
    assert main(["predict", "--config", str(toy / "toy.json"), "--fit", str(out / "fit.json"),
                 "--out", str(dens)]) == 2      # formula mismatch with the stored fit


def test_summary(toy, tmp_path):
    out = tmp_path / "s.json"
    assert main(["summary", "--config", str(toy / "toy.json"), "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    enc = read_rows(toy / "encounters.csv")
    assert doc["n"] == [len({r["user_id"] for r in enc if r["session"] == s}) for s in "123"]
    assert doc["traps"] == 25 and doc["occasions"] == 24


def test_covariate_subcommands(toy, tmp_path):
    tw = tmp_path / "tw.csv"
    assert main(["covariate", "tweetogram", "--posts", str(toy / "posts.csv"), "--utc-offset", "1",
                 "--start", "2026-03-02T00:00:00", "--days", "3", "--out", str(tw)]) == 0
    vals = np.array([float(r["tweetogram"]) for r in read_rows(tw)])
    assert len(vals) == 24 and abs(vals.sum() - 1) < 1e-9 and 12 <= int(np.argmax(vals)) <= 17
    cen = tmp_path / "c.csv"
    assert main(["covariate", "centrality", "--graph", str(toy / "metro_graph.csv"), "--alpha", "0", "1",
                 "--out", str(cen)]) == 0
    assert list(read_rows(cen)[0]) == ["node", "degree_a0", "betweenness_a0", "closeness_a0",
                                       "degree_a1", "betweenness_a1", "closeness_a1"]
    prox = tmp_path / "p.csv"
    assert main(["covariate", "proximity", "--config", str(toy / "toy.json"), "--ref-lon", "-3.7038",
                 "--ref-lat", "40.4168", "--out", str(prox)]) == 0
    p = read_rows(prox)
    assert float(p[12]["proximity"]) < 1.0 and len(p) == 25        # H12 sits on the reference point
    idw = tmp_path / "i.csv"
    assert main(["covariate", "idw", "--config", str(toy / "toy.json"), "--samples", str(toy / "census_pc.csv"),
                 "--value-column", "pc2", "--out", str(idw)]) == 0
    assert len(read_rows(idw)) == 19 * 19


def test_module_entry_point(toy):
    r = subprocess.run([sys.executable, "-m", "scrfit", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.strip()
    r = subprocess.run([sys.executable, "-m", "scrfit", "summary", "--config", str(toy / "nope.json")],
                       capture_output=True, text=True)
    assert r.returncode == 2
