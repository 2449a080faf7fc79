import csv
import json

import pytest

from rcising import cli
from rcising.errors import ConfigError
from rcising.sampler import EstimateRecord

BOX = {"lattice": {"dimension": 2, "half_width": 1, "J": 0.5, "field": 0.4},
       "sources": {"targets": [[1, 0], [1, 1]]},
       "chain": {"seed": 3, "samples": 1500, "burn_in": 100}}


def write(tmp_path, cfg, name="run.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def rows(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


# ------------------------------------------------------------------ config

@pytest.mark.parametrize("mutate", [
    lambda c: c["chain"].pop("seed"),
    lambda c: c["lattice"].update(foo=1),
    lambda c: c.update(extra={}),
    lambda c: c.update(workers=0),
    lambda c: c["lattice"].update(couplings=[1.0]),
    lambda c: c.update(estimator={"method": "exact"}),
    lambda c: c.update(output={"formats": ["xml"]}),
])
def test_bad_configs_exit_1(tmp_path, mutate):
    cfg = json.loads(json.dumps(BOX))
    mutate(cfg)
    with pytest.raises(ConfigError):
        cli.validate_config(cfg)
    assert cli.main(["enumerate", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 1


def test_missing_and_malformed_config(tmp_path):
    assert cli.main(["enumerate", "--config", str(tmp_path / "nope.json")]) == 1
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    assert cli.main(["enumerate", "--config", str(p)]) == 1


def test_usage_errors_exit_1():
    with pytest.raises(SystemExit) as e:
        cli.main(["bogus"])
    assert e.value.code == 1
    with pytest.raises(SystemExit) as e:
        cli.main(["enumerate"])
    assert e.value.code == 1


def test_config_hash_ignores_workers_and_output():
    a = cli.validate_config(BOX)
    b = cli.validate_config({**BOX, "workers": 4, "output": {"directory": "elsewhere"}})
    c = cli.validate_config({**BOX, "chain": {**BOX["chain"], "seed": 4}})
    assert cli.config_hash(a) == cli.config_hash(b) != cli.config_hash(c)


def test_worker_env(monkeypatch):
    cfg = cli.validate_config({**BOX, "workers": 3})
    monkeypatch.delenv(cli.WORKERS_ENV, raising=False)
    assert cli.worker_count(cfg) == 3
    monkeypatch.setenv(cli.WORKERS_ENV, "2")
    assert cli.worker_count(cfg) == 2
    monkeypatch.setenv(cli.WORKERS_ENV, "zero")
    with pytest.raises(ConfigError):
        cli.worker_count(cfg)


def test_targets_from_direction():
    cfg = cli.validate_config({**BOX, "sources": {"direction": [0, 1], "distances": [1, 3]}})
    assert cli.targets(cfg) == [(0, 1), (0, 2), (0, 3)]
    assert cli.ladder_path(cfg) == [(0, 0), (0, 1), (0, 2), (0, 3)]
    bad = cli.validate_config({**BOX, "sources": {"direction": [1, 1], "distances": [1, 3]}})
    with pytest.raises(ConfigError):
        cli.ladder_path(bad)


# ------------------------------------------------------------- persistence

def test_persist_empty_and_row_counts(tmp_path):
    cfg = cli.validate_config(BOX)
    p = cli.persist([], cfg, tmp_path / "e", stem="records")
    assert open(p["csv"]).read().strip() == ",".join(cli.RECORD_HEADER)
    man = json.loads(open(p["manifest"]).read())
    assert man["rows"] == {"records": 0} and man["seed"] == 3
    recs = [EstimateRecord("truncated", f"(0, 0)|(0, {k})", 0.1 / k, 0.01, 10, 1.0, 3, "") for k in (1, 2, 3)]
    p = cli.persist(recs, cfg, tmp_path / "f")
    assert len(rows(p["csv"])) == len(json.load(open(p["json"]))["records"]) == 3
    back = cli.read_records(p["csv"])
    assert [r.estimate for r in back] == [r.estimate for r in recs]


def test_enumerate_matches_exact(tmp_path):
    from rcising.exact import truncated_two_point
    out = tmp_path / "ex"
    assert cli.main(["enumerate", "--config", write(tmp_path, BOX), "--out", str(out)]) == 0
    r = {(x["observable"], x["argument"]): float(x["estimate"]) for x in rows(out / "exact.csv")}
    gg = cli.ghost_graph(cli.validate_config(BOX))
    want = truncated_two_point(gg, (0, 0), (1, 1), routes="spin")[0]
    assert r[("exact_truncated", "(0, 0)|(1, 1)")] == pytest.approx(want, rel=1e-12)


def test_estimate_deterministic_across_workers(tmp_path, monkeypatch):
    cfg = write(tmp_path, BOX)
    outs = []
    for w in ("1", "2", "1"):
        monkeypatch.setenv(cli.WORKERS_ENV, w)
        d = tmp_path / f"w{len(outs)}"
        assert cli.main(["estimate", "--config", cfg, "--out", str(d)]) == 0
        outs.append((d / "records.csv").read_bytes())
    assert outs[0] == outs[1] == outs[2]
    recs = rows(tmp_path / "w0" / "records.csv")
    assert {r["observable"] for r in recs} == {"two_point", "truncated"}
    assert len({r["configHash"] for r in recs}) == 1


def test_sample_fractions(tmp_path):
    c = {**BOX, "sources": {"A": [[0, 0], [1, 0]]}, "chain": {"seed": 1, "samples": 300, "burn_in": 20},
         "output": {"dumpConfigurations": True}}
    out = tmp_path / "s"
    assert cli.main(["sample", "--config", write(tmp_path, c), "--out", str(out)]) == 0
    recs = rows(out / "samples.csv")
    by = {}
    for r in recs:
        by.setdefault(r["argument"], 0.0)
        by[r["argument"]] += float(r["estimate"])
    assert all(abs(v - 1.0) < 1e-12 for v in by.values())
    # candidates are kept only in the diagonal sector, so the count varies
    n = int(recs[0]["nSamples"])
    assert 0 < n <= 300
    assert len((out / "configurations.jsonl").read_text().splitlines()) == n


def test_ladder_decompose_fit_steps(tmp_path, capsys):
    c = {"lattice": {"dimension": 2, "half_width": 6, "J": 0.3, "field": 0.3},
         "sources": {"direction": [1, 0], "distances": [1, 5]},
         "chain": {"seed": 2, "samples": 2000, "burn_in": 200},
         "estimator": {"method": "ladder", "guess": 1.5},
         "analysis": {"norm_scale": 1.5}}
    out = tmp_path / "dec"
    assert cli.main(["decompose", "--config", write(tmp_path, c), "--out", str(out)]) == 0
    recs = rows(out / "records.csv")
    assert sum(r["observable"] == "ratio" for r in recs) == 5
    assert sum(r["observable"] == "one_point" for r in recs) == 1
    s = rows(out / "samples.csv")
    assert s and all(r["roundTrip"] == "1" for r in s)
    capsys.readouterr()
    assert cli.main(["fit", "--input", str(out / "records.csv"), "--output", str(tmp_path / "fit.json")]) == 0
    fit = json.loads((tmp_path / "fit.json").read_text())
    assert "pInterval95" in fit
    assert json.loads(capsys.readouterr().out) == fit
    assert cli.main(["steps", "--input", str(out), "--min-samples", "5"]) == 0
    st = json.loads(capsys.readouterr().out)
    assert st["coneDensity"]["n"] == len(s)
    assert cli.main(["steps", "--input", str(tmp_path)]) == 1


def test_noisy_one_point_is_a_domain_error(tmp_path):
    c = {"lattice": {"dimension": 1, "half_width": 3, "J": 0.4, "field": 0.5},
         "sources": {"direction": [1], "distances": [1, 2]},
         "chain": {"seed": 2, "samples": 10, "burn_in": 10},
         "estimator": {"method": "ladder", "one_point": [-0.1, 0.2]}}
    assert cli.main(["estimate", "--config", write(tmp_path, c), "--out", str(tmp_path / "o")]) == 1


def test_oracle1d(capsys):
    from rcising.ozanalysis import transfer_matrix_oracle
    assert cli.main(["oracle1d", "--J", "0.6", "--h", "0.4", "--n", "5"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "n,two_point,truncated,xi" and len(lines) == 6
    n, _, tr, _ = lines[3].split(",")
    assert int(n) == 3
    assert float(tr) == transfer_matrix_oracle(0.6, 0.4, [3])[0].truncated


def test_verify_tiny(tmp_path):
    out = tmp_path / "v.csv"
    assert cli.main(["verify", "--corpus", "tiny", "--output", str(out)]) == 0
    r = rows(out)
    assert r and all(x["pass"] == "pass" for x in r)
    assert cli.main(["verify", "--corpus", "huge", "--output", str(out)]) == 1
