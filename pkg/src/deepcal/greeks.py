"""Finite-difference Greeks from a pricer of log relative prices.

The dollar price is ``V(S0, tau, r) = S0 * exp(v(m, tau))`` with
``m = K exp(-r tau) / S0``; calls use the call surrogate and puts the put
surrogate whatever the moneyness.  All derivatives are central differences:

* ``delta = dV/dS0`` and ``gamma = d2V/dS0^2`` with ``h = 1e-4 * S0``,
* ``theta = dV/dtau`` with a one-business-day bump, per year.  This is the
  derivative with respect to time to maturity, so a long option usually has
  positive theta here (the market convention flips the sign),
* ``rho = dV/dr`` with ``dr = 1e-4``.

The Monte Carlo pricer works too (common random numbers keep the bumps
coupled) but its differences are noise-dominated away from degenerate cases.
"""
from dataclasses import asdict, dataclass
import csv

import numpy as np

from .calibration import AnnPricer
from .garch_mcs import DAYS_PER_YEAR

REL_SPOT_BUMP = 1e-4
TAU_BUMP = 1.0 / DAYS_PER_YEAR
RATE_BUMP = 1e-4

REPORT_COLUMNS = ("kind", "spot", "rate", "strike", "tau", "model", "delta", "gamma",
                  "theta", "rho", "price", "h_spot", "h_tau", "h_rate")


@dataclass(frozen=True)
class GreeksReport:
    kind: str
    spot: float
    rate: float
    strike: float
    tau: float
    model: str
    delta: float
    gamma: float
    theta: float
    rho: float
    price: float
    h_spot: float
    h_tau: float
    h_rate: float
    params: tuple = ()


def dollar_prices(pricer, spot, strike, tau, rate, kind, theta):
    """``S0 * exp(v)`` for arrays of spots, maturities and rates."""
    spot, tau, rate = np.broadcast_arrays(*(np.asarray(a, dtype=np.float64)
                                            for a in (spot, tau, rate)))
    m = strike * np.exp(-rate * tau) / spot
    # bumps may step just outside a surrogate's box; extrapolate rather than clamp
    kw = {"clamp": False} if isinstance(pricer, AnnPricer) else {}
    v, _ = pricer.log_values(m.ravel(), tau.ravel(), kind, theta, **kw)
    return (spot.ravel() * np.exp(v)).reshape(spot.shape)


def greeks(spot: float, strike: float, tau: float, rate: float, theta, kind: str, pricer,
           rel_spot_bump: float = REL_SPOT_BUMP, tau_bump: float = TAU_BUMP,
           rate_bump: float = RATE_BUMP) -> GreeksReport:
    """Delta, gamma, theta and rho of one option by central differences.

    The maturity difference becomes one-sided when ``tau - tau_bump`` would
    not be positive.
    """
    if kind not in ("call", "put"):
        raise ValueError(f"kind must be call or put, got {kind!r}")
    if not (spot > 0 and strike > 0 and tau > 0):
        raise ValueError("spot, strike and tau must be positive")
    h = rel_spot_bump * spot
    lo_tau = tau - tau_bump if tau - tau_bump > 0 else tau
    s = np.array([spot, spot + h, spot - h, spot, spot, spot, spot])
    t = np.array([tau, tau, tau, tau + tau_bump, lo_tau, tau, tau])
    r = np.array([rate, rate, rate, rate, rate, rate + rate_bump, rate - rate_bump])
    v = dollar_prices(pricer, s, strike, t, r, kind, theta)
    v0, up, dn, t_up, t_dn, r_up, r_dn = v
    return GreeksReport(
        kind=kind, spot=float(spot), rate=float(rate), strike=float(strike), tau=float(tau),
        model=getattr(pricer, "model", ""),
        delta=float((up - dn) / (2 * h)),
        gamma=float((up - 2 * v0 + dn) / (h * h)),
        theta=float((t_up - t_dn) / (tau + tau_bump - lo_tau)),
        rho=float((r_up - r_dn) / (2 * rate_bump)),
        price=float(v0), h_spot=float(h), h_tau=float(tau_bump), h_rate=float(rate_bump),
        params=tuple(float(x) for x in theta))


def write_report(reports, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for rep in reports:
            d = asdict(rep)
            w.writerow([d[c] if isinstance(d[c], str) else repr(d[c]) for c in REPORT_COLUMNS])
