import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from deepcal import quasirandom as qr
from deepcal.quasirandom import ParameterRanges


@pytest.mark.parametrize("index, base, want", [(1, 2, 0.5), (3, 2, 0.75), (2, 3, 2 / 3),
                                               (4, 2, 0.125), (5, 3, 7 / 9)])
def test_radical_inverse_by_hand(index, base, want):
    assert qr.halton(index, base) == pytest.approx(want, abs=1e-15)


@given(st.integers(1, 10**9), st.sampled_from(qr.PRIMES))
def test_halton_inside_unit_interval(index, base):
    h = qr.halton(index, base)
    assert 0 < h < 1
    assert qr.halton_sequence([index], base)[0] == h


def test_base_two_prefix_is_dyadic_permutation():
    k = 4
    got = sorted(qr.halton(i, 2) for i in range(1, 2**k))
    assert got == [i / 2**k for i in range(1, 2**k)]


def test_halton_rejects_bad_input():
    with pytest.raises(ValueError):
        qr.halton(0, 2)
    with pytest.raises(ValueError):
        qr.halton_sequence([0, 1], 2)


def test_default_ranges_are_the_literal_box():
    r = ParameterRanges()
    assert r.m == (0.5, 1.5) and r.tau == (0.4, 1.0) and r.kappa == (0.0, 1e-5)
    assert r.psi == (0.1, 0.4) and r.gamma == (0.5, 0.9999) and r.theta == (0.0, 0.8)
    assert r.sigma0 == (1e-6, 0.04) and r.alpha == (0.01, 1.999)
    assert qr.tan_lambda(0.0) == pytest.approx(0.1)


def test_first_duan_point():
    x = qr.sample_parameter_space("duan", 1)
    assert x.shape == (1, 7)
    assert x[0, 0] == 1.0
    assert x[0, 1] == pytest.approx(0.4 + 0.6 / 3)


def test_tangent_map():
    assert qr.tan_lambda(0.5) == pytest.approx(1.1, abs=1e-14)
    lam = np.array([0.1, 1.1, 55.0, 1e4])
    assert qr.tan_lambda(qr.tan_lambda_inverse(lam)) == pytest.approx(lam, rel=1e-12)


@given(st.sampled_from(["duan", "cts"]), st.integers(1, 40), st.integers(1, 5000),
       st.sampled_from(sorted(qr.PROFILES)))
def test_samples_stay_in_box(model, n, start, profile):
    ranges = qr.get_profile(profile)
    x = qr.sample_parameter_space(model, n, ranges, start)
    assert x.shape == (n, 7 if model == "duan" else 10)
    names = qr.input_names(model)
    for j, name in enumerate(names[:8]):
        lo, hi = getattr(ranges, name)
        assert np.all((x[:, j] >= lo) & (x[:, j] <= hi))
    if model == "cts":
        assert np.all(x[:, 8:] >= 0.1)
    assert np.array_equal(x, qr.sample_parameter_space(model, n, ranges, start))


def test_offsets_continue_the_sequence():
    a = qr.sample_parameter_space("cts", 30)
    b = qr.sample_parameter_space("cts", 10, start_index=21)
    assert np.array_equal(a[20:], b)


def test_pinned_range_is_constant():
    r = ParameterRanges(m=(0.9, 0.9))
    x = qr.sample_parameter_space("duan", 5, r)
    assert np.all(x[:, 0] == 0.9)


def test_ranges_validation():
    with pytest.raises(ValueError):
        ParameterRanges(m=(1.5, 0.5))
    with pytest.raises(ValueError):
        ParameterRanges(u_plus=(0.0, 1.5))
    with pytest.raises(ValueError):
        ParameterRanges(kappa=(0.0, math.inf))
    with pytest.raises(ValueError):
        qr.get_profile("nope")
    with pytest.raises(ValueError):
        qr.sample_parameter_space("heston", 3)


def test_ranges_file(tmp_path):
    f = tmp_path / "r.txt"
    f.write_text("# widened maturities\nprofile = calibration\n\ntheta = 0, 3.0\nalpha = 0.5 1.5\n")
    r = qr.load_ranges(f)
    assert r.tau == (0.02, 1.0) and r.theta == (0.0, 3.0) and r.alpha == (0.5, 1.5)
    assert ParameterRanges.from_dict(r.as_dict()) == r
    f.write_text("bogus = 1, 2\n")
    with pytest.raises(ValueError, match="unknown key"):
        qr.load_ranges(f)
    f.write_text("theta = 1\n")
    with pytest.raises(ValueError, match="two numbers"):
        qr.load_ranges(f)
