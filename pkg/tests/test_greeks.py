import numpy as np
import pytest

from deepcal import greeks as gk
from deepcal.calibration import AnnPricer, McsPricer

# no volatility to speak of: every path stays at the forward
FLAT = np.array([0.0, 0.1, 0.5, 0.0, 1e-7])
THETA = np.array([3e-6, 0.2, 0.85, 0.4, 0.012])


class BlackScholesPricer:
    """Log relative Black-Scholes prices, for checking the difference scheme."""

    model = "bs"

    def __init__(self, vol):
        self.vol = vol

    def log_values(self, m, tau, kinds, theta):
        from deepcal.calibration import bs_price
        m, tau = np.broadcast_arrays(np.asarray(m, float), np.asarray(tau, float))
        kinds = np.broadcast_to(np.asarray(kinds), m.shape)
        out = np.array([bs_price(1.0, mi, ti, 0.0, self.vol, k) for mi, ti, k in zip(m, tau, kinds)])
        return np.log(out), np.zeros(m.shape, dtype=bool)


def test_deep_in_the_money_call_at_zero_volatility():
    K, tau, r = 60.0, 0.2, 0.03
    rep = gk.greeks(100.0, K, tau, r, FLAT, "call", McsPricer("duan", 2000, 1))
    disc = K * np.exp(-r * tau)
    assert rep.price == pytest.approx(100 - disc, rel=1e-6)
    assert rep.delta == pytest.approx(1.0, abs=1e-6)
    assert abs(rep.gamma) < 1e-3
    assert rep.rho == pytest.approx(tau * disc, rel=1e-4)
    assert rep.theta == pytest.approx(r * disc, rel=1e-3)


def test_deep_out_of_the_money_put_at_zero_volatility():
    rep = gk.greeks(100.0, 60.0, 0.2, 0.03, FLAT, "put", McsPricer("duan", 2000, 1))
    assert rep.price == 0.0
    assert rep.delta == rep.gamma == rep.theta == rep.rho == 0.0


@pytest.mark.parametrize("kind", ["call", "put"])
def test_matches_black_scholes_closed_forms(kind):
    from scipy.stats import norm
    S, K, tau, vol = 100.0, 105.0, 0.3, 0.25
    rep = gk.greeks(S, K, tau, 0.0, THETA, kind, BlackScholesPricer(vol))
    d1 = (np.log(S / K) + 0.5 * vol**2 * tau) / (vol * np.sqrt(tau))
    d2 = d1 - vol * np.sqrt(tau)
    delta = norm.cdf(d1) - (kind == "put")
    gamma = norm.pdf(d1) / (S * vol * np.sqrt(tau))
    vega_tau = S * norm.pdf(d1) * vol / (2 * np.sqrt(tau))
    sign = 1 if kind == "call" else -1
    rho = sign * K * tau * norm.cdf(sign * d2)
    assert rep.delta == pytest.approx(delta, abs=1e-7)
    assert rep.gamma == pytest.approx(gamma, rel=1e-4)
    assert rep.theta == pytest.approx(vega_tau, rel=1e-3)
    assert rep.rho == pytest.approx(rho, rel=1e-6)


def test_short_maturity_uses_one_sided_difference():
    rep = gk.greeks(100.0, 100.0, 0.5 / 250, 0.0, THETA, "call", BlackScholesPricer(0.2))
    assert np.isfinite(rep.theta) and rep.theta > 0


@pytest.fixture(scope="module")
def ann(quick_duan_nets):
    return AnnPricer(quick_duan_nets["call"], quick_duan_nets["put"])


def gamma_from_deltas(S, K, tau, r, theta, kind, pricer):
    h = gk.REL_SPOT_BUMP * S
    up = gk.greeks(S + h, K, tau, r, theta, kind, pricer).delta
    dn = gk.greeks(S - h, K, tau, r, theta, kind, pricer).delta
    return (up - dn) / (2 * h)


@pytest.mark.parametrize("kind", ["call", "put"])
def test_delta_range_on_exact_prices(kind):
    pricer = BlackScholesPricer(0.3)
    for S in np.linspace(60, 160, 21):
        d = gk.greeks(S, 100.0, 0.25, 0.0, THETA, kind, pricer).delta
        assert (0 <= d <= 1) if kind == "call" else (-1 <= d <= 0)


def test_surrogate_gamma_consistency(ann):
    for kind in ("call", "put"):
        for S in np.linspace(90, 110, 5):
            rep = gk.greeks(S, 100.0, 0.2, 0.01, THETA, kind, ann)
            want = gamma_from_deltas(S, 100.0, 0.2, 0.01, THETA, kind, ann)
            assert rep.gamma == pytest.approx(want, rel=0.1, abs=1e-6)


def test_bump_size_robustness(ann):
    a = gk.greeks(100.0, 102.0, 0.15, 0.01, THETA, "call", ann)
    b = gk.greeks(100.0, 102.0, 0.15, 0.01, THETA, "call", ann, rel_spot_bump=gk.REL_SPOT_BUMP / 2)
    assert a.delta == pytest.approx(b.delta, rel=1e-2)
    assert a.gamma == pytest.approx(b.gamma, rel=1e-2)


def test_report_file(tmp_path):
    rep = gk.greeks(100.0, 105.0, 0.3, 0.0, THETA, "call", BlackScholesPricer(0.2))
    gk.write_report([rep], tmp_path / "g.csv")
    header, row = (tmp_path / "g.csv").read_text().splitlines()
    assert tuple(header.split(",")) == gk.REPORT_COLUMNS
    assert float(row.split(",")[6]) == rep.delta


def test_argument_checks():
    with pytest.raises(ValueError):
        gk.greeks(100.0, 100.0, 0.1, 0.0, THETA, "straddle", BlackScholesPricer(0.2))
    with pytest.raises(ValueError):
        gk.greeks(-1.0, 100.0, 0.1, 0.0, THETA, "call", BlackScholesPricer(0.2))


def test_bumps_extrapolate_at_the_box_edge(ann):
    net = ann.nets["call"]
    m_lo = net.shift[0] - 1.0 / net.scale[0]
    edge = gk.greeks(100.0, 100.0 * m_lo, 0.2, 0.0, THETA, "call", ann)
    inside = gk.greeks(100.0, 100.0 * (m_lo + 1e-3), 0.2, 0.0, THETA, "call", ann)
    # a clamped input would freeze the price in the outward direction
    assert edge.rho > 0 and edge.rho == pytest.approx(inside.rho, rel=0.05)
    assert edge.delta == pytest.approx(inside.delta, rel=0.02)
