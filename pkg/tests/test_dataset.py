import logging

import numpy as np
import pytest

from deepcal import dataset
from deepcal.quasirandom import ParameterRanges


@pytest.fixture(scope="module")
def small_set():
    return dataset.generate_training_set("duan", "call", 40, None, 500, seed=5,
                                         profile="calibration")


def test_zero_volatility_sample():
    r = ParameterRanges(m=(0.9, 0.9), sigma0=(1e-6, 1e-6), kappa=(0.0, 0.0), theta=(0.0, 0.0))
    ts = dataset.generate_training_set("duan", "call", 1, r, 2000, seed=1)
    assert len(ts) == 1
    assert ts.targets[0] == pytest.approx(np.log(0.1), abs=1e-3)


def test_targets_are_recomputable(small_set):
    ts = small_set
    for i in (0, len(ts) // 2, len(ts) - 1):
        v = dataset.price_input("duan", "call", ts.inputs[i], 500, 5, ts.indices[i])
        assert np.log(v) == ts.targets[i]


def test_maturities_are_whole_days(small_set):
    days = small_set.inputs[:, 1] * 250
    assert np.array_equal(days, np.rint(days))


def test_regeneration_is_identical(small_set):
    again = dataset.regenerate(small_set.metadata, batch_size=7, threads=3)
    assert np.array_equal(again.inputs, small_set.inputs)
    assert np.array_equal(again.targets, small_set.targets)
    assert again.metadata == small_set.metadata


def test_file_round_trip(tmp_path, small_set):
    f = tmp_path / "set.csv"
    dataset.save_training_set(small_set, f)
    back = dataset.load_training_set(f)
    assert back.model == "duan" and back.kind == "call"
    assert np.array_equal(back.inputs, small_set.inputs)
    assert np.array_equal(back.targets, small_set.targets)
    assert np.array_equal(back.indices, small_set.indices)
    assert back.metadata == small_set.metadata
    assert f.read_text().splitlines()[1] == "m,tau,kappa,psi,gamma,theta,sigma0,v"


def test_load_rejects_bad_files(tmp_path, small_set):
    f = tmp_path / "bad.csv"
    f.write_text("m,tau\n1,2\n")
    with pytest.raises(ValueError, match="metadata"):
        dataset.load_training_set(f)
    dataset.save_training_set(small_set, f)
    lines = f.read_text().splitlines()
    f.write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(ValueError, match="rows"):
        dataset.load_training_set(f)


def test_both_kinds_match_single_generation(small_set):
    sets = dataset.generate_training_sets("duan", ("call", "put"), 40, None, 500, seed=5,
                                          profile="calibration")
    assert np.array_equal(sets["call"].targets, small_set.targets)
    put = dataset.generate_training_set("duan", "put", 40, None, 500, seed=5, profile="calibration")
    assert np.array_equal(sets["put"].targets, put.targets)


def test_skips_are_recorded_and_warned(caplog):
    # deep out-of-the-money calls at almost no volatility are worth exactly zero
    r = ParameterRanges(m=(1.3, 1.5), sigma0=(1e-6, 1e-5), kappa=(0.0, 0.0))
    with caplog.at_level(logging.WARNING):
        ts = dataset.generate_training_set("duan", "call", 10, r, 200, seed=0)
    assert len(ts) == 0
    assert len(ts.metadata["skipped"]) == 10
    assert "skip rate 100.0%" in caplog.text
    assert ts.metadata["skipped"] == sorted(ts.metadata["skipped"])


def test_cts_set_has_ten_inputs():
    ts = dataset.generate_training_set("cts", "put", 6, None, 300, seed=2, profile="calibration")
    assert ts.inputs.shape[1] == 10
    assert np.all(np.isfinite(ts.targets))
    assert len(ts) + len(ts.metadata["skipped"]) == 6


def test_argument_checks():
    with pytest.raises(ValueError):
        dataset.generate_training_set("duan", "call", 0)
    with pytest.raises(ValueError):
        dataset.generate_training_set("duan", "straddle", 3)
