import csv
import json

import numpy as np
import pytest

from deepcal import cli, dataset

THETA = "3e-6,0.2,0.85,0.4,0.012"


def run(*argv):
    return cli.main([str(a) for a in argv])


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture(scope="module")
def small_set(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    out = d / "duan.csv"
    assert run("gen-data", "--model", "duan", "--kind", "both", "--n", 60, "--paths", 400,
               "--seed", 3, "--profile", "calibration", "--out", out, "--threads", 1) == 0
    return d


@pytest.fixture(scope="module")
def chain_file(small_set, quick_duan_nets):
    from deepcal import calibration as cal
    ann = cal.AnnPricer(quick_duan_nets["call"], quick_duan_nets["put"])
    chain = cal.synthetic_chain(ann, [float(v) for v in THETA.split(",")], 100.0, 0.01,
                                np.linspace(90, 110, 6), [10, 30, 60], date="2021-06-09",
                                half_spread=0.01)
    path = small_set / "chain.csv"
    cal.write_chain(chain, path)
    return path


def nets(q):
    return ["--call-net", q["dir"] / "call.net", "--put-net", q["dir"] / "put.net"]


def test_gen_data_is_byte_identical_across_threads(small_set, tmp_path):
    out = tmp_path / "again.csv"
    assert run("gen-data", "--model", "duan", "--kind", "both", "--n", 60, "--paths", 400,
               "--seed", 3, "--profile", "calibration", "--out", out, "--threads", 3,
               "--batch-size", 7) == 0
    for kind in ("call", "put"):
        a = (small_set / f"duan_{kind}.csv").read_bytes()
        assert (tmp_path / f"again_{kind}.csv").read_bytes() == a
    manifest = json.loads((tmp_path / "again_call.csv.manifest.json").read_text())
    assert manifest["subcommand"] == "gen-data" and manifest["config"]["threads"] == 3


def test_gen_data_cts_columns(tmp_path):
    out = tmp_path / "cts.csv"
    ranges = tmp_path / "ranges.txt"
    ranges.write_text("profile = calibration\nalpha = 1.2, 1.8\nu_plus = 0.6, 0.8\nu_minus = 0.6, 0.8\n")
    assert run("gen-data", "--model", "cts", "--kind", "call", "--n", 3, "--paths", 200,
               "--ranges", ranges, "--out", out) == 0
    header = out.read_text().splitlines()[1].split(",")
    assert len(header) == 11 and header[-4:] == ["alpha", "lambda_plus", "lambda_minus", "v"]
    assert len(dataset.load_training_set(out).inputs[0]) == 10


def test_train_writes_network_and_trace(small_set, tmp_path):
    out = tmp_path / "call.net"
    assert run("train", "--data", small_set / "duan_call.csv", "--out", out,
               "--max-epochs", 5, "--threads", 1) == 0
    trace = rows(tmp_path / "call.trace.csv")
    assert trace[0] == ["epoch", "mse", "mu"] and len(trace) == 7
    again = tmp_path / "again.net"
    assert run("train", "--data", small_set / "duan_call.csv", "--out", again,
               "--max-epochs", 5, "--threads", 2) == 0
    assert again.read_bytes() == out.read_bytes()


def test_calibrate_outputs(chain_file, quick_duan_nets, tmp_path):
    out = tmp_path / "fit.csv"
    args = ["calibrate", "--chain", chain_file, "--model", "duan", "--profile", "calibration",
            "--starts", 2, "--out", out] + nets(quick_duan_nets)
    assert run(*args, "--threads", 1) == 0
    header, row = rows(out)
    assert header[:8] == ["date", "model", "pricer", "theta", "kappa", "xi", "zeta", "sigma0"]
    assert row[0] == "2021-06-09" and row[2] == "ann"
    first = out.read_bytes()
    assert run(*args, "--threads", 4) == 0
    assert out.read_bytes() == first


def test_calibrate_with_mcs_is_reproducible(chain_file, tmp_path):
    out = tmp_path / "fit.csv"
    args = ["calibrate", "--chain", chain_file, "--model", "duan", "--pricer", "mcs",
            "--paths", 300, "--profile", "calibration", "--starts", 1, "--max-nfev", 4,
            "--out", out]
    assert run(*args) == 0
    first = out.read_bytes()
    assert run(*args) == 0
    assert out.read_bytes() == first


def test_price_grid_and_chain(chain_file, quick_duan_nets, tmp_path):
    out = tmp_path / "p.csv"
    assert run("price", "--model", "duan", "--params", THETA, "--spot", 100,
               "--strike", "95,105", "--days", "20,40", "--kind", "put", "--out", out,
               *nets(quick_duan_nets)) == 0
    table = rows(out)
    assert len(table) == 5 and table[1][4] == "put"
    assert run("price", "--model", "duan", "--params", THETA, "--chain", chain_file,
               "--pricer", "mcs", "--paths", 500, "--out", out) == 0
    assert len(rows(out)) == len(rows(chain_file))


def test_greeks_command(quick_duan_nets, tmp_path):
    out = tmp_path / "g.csv"
    assert run("greeks", "--model", "duan", "--params", THETA, "--spot", 100,
               "--strike", 100, "--days", 30, "--out", out, *nets(quick_duan_nets)) == 0
    table = rows(out)
    assert [r[0] for r in table[1:]] == ["call", "put"]


def test_params_file_feeds_greeks(chain_file, quick_duan_nets, tmp_path):
    fit = tmp_path / "fit.csv"
    assert run("calibrate", "--chain", chain_file, "--model", "duan", "--profile", "calibration",
               "--starts", 1, "--out", fit, *nets(quick_duan_nets)) == 0
    out = tmp_path / "g.csv"
    assert run("greeks", "--model", "duan", "--params-file", fit, "--spot", 100,
               "--strike", 100, "--days", 30, "--kind", "call", "--out", out,
               *nets(quick_duan_nets)) == 0


def test_benchmark(tmp_path):
    out = tmp_path / "b.csv"
    assert run("benchmark", "--models", "duan", "--n-quotes", 40, "--paths", 200,
               "--repeats", 1, "--out", out) == 0
    table = rows(out)
    assert table[0][-1] == "speedup" and table[1][1] == "duan" and table[1][2] == "40"


def test_benchmark_empty_chain(tmp_path):
    chain = tmp_path / "c.csv"
    chain.write_text("date,spot,rate,strike,maturity_days,kind,bid,ask\n"
                     "d,100,0.01,90,30,call,11.0,11.5\n")
    out = tmp_path / "b.csv"
    assert run("benchmark", "--chain", chain, "--out", out) == 0
    assert len(rows(out)) == 1


def test_plot_data(chain_file, quick_duan_nets, tmp_path):
    out = tmp_path / "plot.csv"
    base = ["plot-data", "--chain", chain_file, "--model", "duan", "--params", THETA,
            "--out", out, *nets(quick_duan_nets)]
    assert run(*base, "--days", 30) == 0
    table = rows(out)
    assert table[0][-2:] == ["iv_market", "iv_model"] and len(table) == 7
    assert all(r[0] == "30" for r in table[1:])
    assert run(*base, "--days", 31) == 4


def test_exit_codes(small_set, tmp_path):
    # configuration
    assert run("gen-data", "--model", "duan", "--kind", "call", "--n", 0, "--out", tmp_path / "x") == 2
    assert run("gen-data", "--model", "heston", "--kind", "call", "--n", 1, "--out", tmp_path / "x") == 2
    assert run("price", "--model", "duan", "--params", "1,2", "--spot", 100, "--strike", 100,
               "--days", 10, "--pricer", "mcs", "--out", tmp_path / "x") == 2
    assert run("price", "--model", "duan", "--params", "0,0.2,1.5,0,0.01", "--spot", 100,
               "--strike", 100, "--days", 10, "--out", tmp_path / "x") == 2
    # data
    assert run("train", "--data", tmp_path / "missing.csv", "--out", tmp_path / "x") == 4
    bad = tmp_path / "bad.net"
    bad.write_text("deepcal-network 1\n7 20\n")
    assert run("price", "--model", "duan", "--params", THETA, "--spot", 100, "--strike", 100,
               "--days", 10, "--call-net", bad, "--put-net", bad, "--out", tmp_path / "x") == 4
    # numerical
    text = (small_set / "duan_call.csv").read_text().splitlines()
    last = text[-1].split(",")
    text[-1] = ",".join(last[:-1] + ["nan"])
    nan_set = tmp_path / "nan.csv"
    nan_set.write_text("\n".join(text) + "\n")
    assert run("train", "--data", nan_set, "--out", tmp_path / "n.net", "--max-epochs", 2) == 3


def test_manifest_replay(small_set, tmp_path):
    out = tmp_path / "n.net"
    assert run("train", "--data", small_set / "duan_put.csv", "--out", out, "--max-epochs", 3) == 0
    first = out.read_bytes()
    out.unlink()
    assert run("--from-manifest", str(out) + ".manifest.json") == 0
    assert out.read_bytes() == first
    assert run("--from-manifest", tmp_path / "nope.json") == 4


def test_threads_from_environment(monkeypatch):
    monkeypatch.setenv("DEEPCAL_THREADS", "3")
    assert cli.resolve_threads() == 3
    assert cli.resolve_threads(2) == 2
    monkeypatch.setenv("DEEPCAL_THREADS", "many")
    with pytest.raises(cli.ConfigError):
        cli.resolve_threads()
    assert run("gen-data", "--model", "duan", "--kind", "call", "--n", 1, "--out", "x.csv") == 2
