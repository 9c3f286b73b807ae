import json

import numpy as np
import pytest

from linkcorr.cli import main, parse_links
from linkcorr.forecast import forecast_links
from linkcorr.gibbs import load_chain


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_parse_links():
    assert parse_links("1-3,7") == [0, 1, 2, 6]
    assert parse_links("5") == [4]
    for bad in ("0-2", "3-1", "1-3,2"):
        with pytest.raises(ValueError):
            parse_links(bad)


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    spec = {"kernel": {"n_links": 6, "beta": 1.0}, "design": {
        "full": 30, "ragged": 20, "ragged_skip_after": [3],
        "routes": [{"route": "r2", "from": 1, "to": 4, "count": 20}]}}
    (d / "spec.json").write_text(json.dumps(spec))
    assert main(["synth", "--spec", str(d / "spec.json"), "--out", str(d / "data"), "--seed", "7"]) == 0
    assert main(["estimate", "--data", str(d / "data"), "--k1", "30", "--k2", "40", "--seed", "7",
                 "--out", str(d / "chain")]) == 0
    (d / "obs.csv").write_text("l1,l2,l3\n1.0,-0.5,0.2\n0.3,0.1,-1.0\n")
    return d


def test_synth_json_summary(tmp_path, capsys):
    code, out, _ = run(["synth", "--out", tmp_path / "d", "--seed", 1, "--json"], capsys)
    assert code == 0
    summary = json.loads(out)
    assert summary["observations"] == 320
    assert (tmp_path / "d" / "truth.json").exists()


def test_forecast_matches_module_call(pipeline, capsys):
    d = pipeline
    code, _, _ = run(["forecast", "--chain", d / "chain", "--observe", "1-3", "--predict", "4-6",
                      "--input", d / "obs.csv", "--out", d / "fc.csv", "--trip-out", d / "trip.csv",
                      "--seed", 3], capsys)
    assert code == 0
    lines = (d / "fc.csv").read_text().splitlines()
    assert len(lines) == 1 + 2 * 3
    chain = load_chain(d / "chain")
    fc = forecast_links(chain, [0, 1, 2], [1.0, -0.5, 0.2], [3, 4, 5])
    first = lines[1].split(",")
    assert first[:2] == ["1", "4"]
    assert float(first[2]) == fc.mean[0]
    assert float(first[3]) == pytest.approx(fc.std[0], rel=1e-15)
    assert len((d / "trip.csv").read_text().splitlines()) == 1 + 2 * 3


def test_diagnose_writes_outputs(pipeline, capsys):
    d = pipeline
    code, out, _ = run(["diagnose", "--chain", d / "chain", d / "chain", "--data", d / "data",
                        "--out", d / "diag", "--json"], capsys)
    assert code == 0
    summary = json.loads(out)
    assert summary["kl"] >= 0 and "split_rhat_max" in summary
    assert sum(summary["verdicts"].values()) == 15
    for name in ("decisions.csv", "corr_thresholded.csv", "corr_mean.csv", "summary.json"):
        assert (d / "diag" / name).exists()


def test_errors_exit_nonzero(pipeline, tmp_path, capsys):
    d = pipeline
    code, _, err = run(["forecast", "--chain", d / "chain", "--observe", "1-3", "--predict", "4-9",
                        "--input", d / "obs.csv", "--out", tmp_path / "x.csv"], capsys)
    assert code == 1 and "exceed" in err
    code, _, err = run(["estimate", "--data", tmp_path / "nothing", "--out", tmp_path / "c"], capsys)
    assert code == 1 and "not found" in err
    bad = tmp_path / "cfg.json"
    bad.write_text(json.dumps({"gibbs": {"k3": 1}}))
    code, _, err = run(["estimate", "--data", d / "data", "--config", bad, "--out", tmp_path / "c"], capsys)
    assert code == 1 and "k3" in err
    with pytest.raises(SystemExit) as info:
        main(["bogus"])
    assert info.value.code != 0


def test_config_file_overrides(pipeline, tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"gibbs": {"k1": 5, "k2": 7}, "prior": {"lambda0": 1.0}}))
    code, out, _ = run(["estimate", "--data", pipeline / "data", "--config", cfg, "--out", tmp_path / "c",
                        "--json"], capsys)
    assert code == 0
    assert json.loads(out)["samples"] == 7
    assert load_chain(tmp_path / "c").prior.lambda0 == 1.0


def test_ingest_command(tmp_path, capsys):
    events = tmp_path / "e.csv"
    events.write_text(
        "ID,OBUID,TRIP_ID,ROUTE_ID,ROUTE_NAME,ROUTESUB_ID,ROUTE_STA_ID,STOP_NAME,AD_FLAG,AD_TIME\n"
        '1,b,t1,60,,d,A,,1,"20161202, 08:00:00"\n'
        '2,b,t1,60,,d,B,,1,"20161202, 08:01:00"\n'
        '3,b,t1,60,,d,C,,1,"20161202, 08:03:00"\n'
        '4,b,t1,60,,d,C,,7,"20161202, 08:03:00"\n')
    geo = tmp_path / "g.json"
    geo.write_text(json.dumps({"n_links": 2, "routes": {"60": {"stops": ["A", "B", "C"], "links": [0, 1]}}}))
    code, out, _ = run(["ingest", "--events", events, "--geometry", geo, "--out", tmp_path / "o", "--json"], capsys)
    assert code == 0
    summary = json.loads(out)
    assert summary["kept"] == 1 and summary["rejected_rows"] == 1
    line = (tmp_path / "o" / "observations_morning.jsonl").read_text().strip()
    assert json.loads(line)["r"] == [60.0, 120.0]


def test_multiple_chains_feed_rhat(pipeline, tmp_path, capsys):
    code, out, _ = run(["estimate", "--data", pipeline / "data", "--k1", 10, "--k2", 20, "--chains", 4,
                        "--out", tmp_path / "c", "--json"], capsys)
    assert code == 0 and json.loads(out)["chains"] == 4
    assert len(list((tmp_path / "c" / "extra").glob("chain-*"))) == 3
    code, out, _ = run(["diagnose", "--chain", tmp_path / "c", "--out", tmp_path / "d", "--json"], capsys)
    assert code == 0
    assert json.loads(out)["split_rhat_max"] > 0
