"""Option chains, OTM pricing and rel-RMSE calibration of GARCH parameters.

Calibration fits ``Theta = (kappa, psi, gamma, theta, sigma0[, alpha,
lambda_plus, lambda_minus])`` to out-of-the-money quotes.  Every quote is
reduced to its moneyness ``m = K exp(-r T/250) / S0``, maturity
``tau = T/250`` and market log relative price ``log(mid / S0)``; the
objective is the root of the summed squared relative errors of model against
market log relative prices.  Puts are used for ``m < 1`` and calls for
``m >= 1``.

Two pricers are interchangeable: :class:`AnnPricer` evaluates trained
surrogates, :class:`McsPricer` runs the Monte Carlo pricer with one fixed seed
so the objective is deterministic.
"""
from dataclasses import dataclass, field
import csv
import logging
import math

import numpy as np
from scipy.optimize import least_squares
from scipy.stats import norm

from . import fnn, quasirandom
from .errors import ChainError, DeepCalError
from .garch_mcs import DAYS_PER_YEAR, DEFAULT_PATHS, RiskNeutralParams, price_many
from .quasirandom import ParameterRanges

log = logging.getLogger(__name__)

CHAIN_COLUMNS = ("date", "spot", "rate", "strike", "maturity_days", "kind", "bid", "ask")
MIN_DAYS, MAX_DAYS = 7, 90
PENALTY = 1e3
LAMBDA_CAP = 1e4
# seed bound whose tangent map reaches LAMBDA_CAP
U_MAX = 2.0 / math.pi * math.atan(LAMBDA_CAP - 0.1)

DUAN_PARAMS = ("kappa", "psi", "gamma", "theta", "sigma0")
CTS_PARAMS = DUAN_PARAMS + ("alpha", "lambda_plus", "lambda_minus")


def param_names(model: str):
    if model not in ("duan", "cts"):
        raise ValueError(f"model must be 'duan' or 'cts', got {model!r}")
    return DUAN_PARAMS if model == "duan" else CTS_PARAMS


# -- chains ------------------------------------------------------------------

@dataclass(frozen=True)
class OptionQuote:
    strike: float
    maturity_days: int
    bid: float
    ask: float
    kind: str

    def __post_init__(self):
        if self.kind not in ("call", "put"):
            raise ValueError(f"kind must be call or put, got {self.kind!r}")
        if not (self.bid > 0 and self.ask >= self.bid):
            raise ValueError(f"need 0 < bid <= ask, got bid={self.bid}, ask={self.ask}")
        if not self.strike > 0:
            raise ValueError(f"strike must be positive, got {self.strike}")
        if not MIN_DAYS <= self.maturity_days <= MAX_DAYS:
            raise ValueError(f"maturity {self.maturity_days} outside [{MIN_DAYS}, {MAX_DAYS}] days")

    @property
    def mid(self) -> float:
        return 0.5 * (self.bid + self.ask)


@dataclass
class OptionChain:
    date: str
    spot: float
    rate: float
    quotes: list
    dropped: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.spot > 0:
            raise ChainError(f"spot must be positive, got {self.spot}")

    def __len__(self):
        return len(self.quotes)

    @property
    def tau(self):
        return np.array([q.maturity_days for q in self.quotes], dtype=np.float64) / DAYS_PER_YEAR

    @property
    def moneyness(self):
        k = np.array([q.strike for q in self.quotes], dtype=np.float64)
        return k * np.exp(-self.rate * self.tau) / self.spot

    @property
    def kinds(self):
        return np.array([q.kind for q in self.quotes])

    @property
    def mids(self):
        return np.array([q.mid for q in self.quotes], dtype=np.float64)

    def market_values(self):
        """Market log relative prices ``log(mid / S0)``."""
        return np.log(self.mids / self.spot)


def moneyness(strike, maturity_days, spot, rate):
    return strike * np.exp(-rate * np.asarray(maturity_days) / DAYS_PER_YEAR) / spot


def is_otm(m, kind) -> bool:
    return m >= 1.0 if kind == "call" else m < 1.0


def read_chain_rows(path):
    """Parse a chain CSV into dict rows; raises :class:`ChainError` with line numbers."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ChainError("empty file", line=1) from None
        missing = [c for c in CHAIN_COLUMNS if c not in header]
        if missing:
            raise ChainError(f"header lacks columns {missing}", line=1)
        col = {c: header.index(c) for c in CHAIN_COLUMNS}
        for lineno, rec in enumerate(reader, 2):
            if not rec or all(not f.strip() for f in rec):
                continue
            if len(rec) != len(header):
                raise ChainError(f"expected {len(header)} fields, got {len(rec)}", line=lineno)
            try:
                row = {
                    "date": rec[col["date"]].strip(),
                    "spot": float(rec[col["spot"]]),
                    "rate": float(rec[col["rate"]]),
                    "strike": float(rec[col["strike"]]),
                    "maturity_days": int(rec[col["maturity_days"]]),
                    "kind": rec[col["kind"]].strip().lower(),
                    "bid": float(rec[col["bid"]]),
                    "ask": float(rec[col["ask"]]),
                }
            except ValueError as exc:
                raise ChainError(str(exc), line=lineno) from None
            if row["kind"] not in ("call", "put"):
                raise ChainError(f"kind must be call or put, got {row['kind']!r}", line=lineno)
            if not row["strike"] > 0:
                raise ChainError(f"strike must be positive, got {row['strike']}", line=lineno)
            row["line"] = lineno
            rows.append(row)
    return rows


def ingest_chain(path, date: str = None) -> OptionChain:
    """Read a chain file and keep the usable OTM quotes of one date.

    Drops quotes with a zero bid or ask (or ask below bid), maturities
    outside [7, 90] business days, in-the-money quotes and quotes whose mid
    is not below spot.  ``date`` picks one quote date when the file has
    several.  Raises :class:`ChainError` if nothing survives.
    """
    rows = read_chain_rows(path)
    if not rows:
        raise ChainError(f"{path}: no quotes")
    dates = sorted({r["date"] for r in rows})
    if date is None:
        if len(dates) > 1:
            raise ChainError(f"{path}: several quote dates {dates}; choose one")
        date = dates[0]
    rows = [r for r in rows if r["date"] == date]
    if not rows:
        raise ChainError(f"{path}: no quotes dated {date!r}")
    spots = {r["spot"] for r in rows}
    rates = {r["rate"] for r in rows}
    if len(spots) > 1 or len(rates) > 1:
        raise ChainError(f"{path}: spot and rate must be constant within date {date}",
                         line=rows[0]["line"])
    spot, rate = rows[0]["spot"], rows[0]["rate"]
    if not spot > 0:
        raise ChainError(f"spot must be positive, got {spot}", line=rows[0]["line"])
    dropped = {"zero_quote": 0, "maturity": 0, "itm": 0, "mid_above_spot": 0}
    quotes = []
    for r in rows:
        if not (r["bid"] > 0 and r["ask"] > 0 and r["ask"] >= r["bid"]):
            dropped["zero_quote"] += 1
        elif not MIN_DAYS <= r["maturity_days"] <= MAX_DAYS:
            dropped["maturity"] += 1
        elif not is_otm(moneyness(r["strike"], r["maturity_days"], spot, rate), r["kind"]):
            dropped["itm"] += 1
        elif not 0.5 * (r["bid"] + r["ask"]) < spot:
            dropped["mid_above_spot"] += 1
        else:
            quotes.append(OptionQuote(r["strike"], r["maturity_days"], r["bid"], r["ask"],
                                      r["kind"]))
    if not quotes:
        raise ChainError(f"{path}: no quotes left after filtering ({dropped})")
    return OptionChain(date, spot, rate, quotes, dropped)


def write_chain(chain: OptionChain, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CHAIN_COLUMNS)
        for q in chain.quotes:
            w.writerow([chain.date, repr(chain.spot), repr(chain.rate), repr(q.strike),
                        q.maturity_days, q.kind, repr(q.bid), repr(q.ask)])


# -- pricers -----------------------------------------------------------------

def otm_kinds(m):
    """Put for ``m < 1``, call for ``m >= 1``."""
    return np.where(np.asarray(m) >= 1.0, "call", "put")


class AnnPricer:
    """Trained call and put surrogates of one model.

    Inputs outside a network's training box (recovered from its min-max
    normalization) are clamped to the box and flagged.
    """

    tag = "ann"

    def __init__(self, call_net: fnn.Network, put_net: fnn.Network, model: str = None):
        if call_net.dim != put_net.dim:
            raise ValueError("call and put networks take different inputs")
        self.nets = {"call": call_net, "put": put_net}
        self.model = model or ("duan" if call_net.dim == 7 else "cts")
        if len(quasirandom.input_names(self.model)) != call_net.dim:
            raise ValueError(f"{self.model} networks need {len(quasirandom.input_names(self.model))} inputs")

    @staticmethod
    def _box(net):
        half = 1.0 / net.scale
        return net.shift - half, net.shift + half

    def inputs(self, m, tau, theta):
        m = np.atleast_1d(np.asarray(m, dtype=np.float64))
        tau = np.broadcast_to(np.asarray(tau, dtype=np.float64), m.shape)
        theta = np.asarray(theta, dtype=np.float64)
        return np.column_stack([m, tau, np.broadcast_to(theta, (len(m), len(theta)))])

    def log_values(self, m, tau, kinds, theta, clamp: bool = True):
        """Log relative prices and per-quote out-of-box flags.

        ``clamp=False`` evaluates the networks as they are outside the box
        (flags are still set); finite-difference bumps at the box edge need
        this.
        """
        x = self.inputs(m, tau, theta)
        kinds = np.broadcast_to(np.asarray(kinds), (len(x),))
        out = np.empty(len(x))
        flags = np.zeros(len(x), dtype=bool)
        for kind, net in self.nets.items():
            sel = kinds == kind
            if not sel.any():
                continue
            lo, hi = self._box(net)
            xs = x[sel]
            clipped = np.clip(xs, lo, hi)
            flags[sel] = np.any(clipped != xs, axis=1)
            out[sel] = fnn.forward(net, clipped if clamp else xs)
        return out, flags


class McsPricer:
    """Monte Carlo pricer with one fixed seed for every evaluation."""

    tag = "mcs"

    def __init__(self, model: str, n_paths: int = DEFAULT_PATHS, seed: int = 0):
        param_names(model)
        self.model, self.n_paths, self.seed = model, int(n_paths), int(seed)

    def log_values(self, m, tau, kinds, theta):
        """Log relative prices; invalid parameters or zero prices give -inf, flagged."""
        m = np.atleast_1d(np.asarray(m, dtype=np.float64))
        tau = np.broadcast_to(np.asarray(tau, dtype=np.float64), m.shape)
        kinds = np.broadcast_to(np.asarray(kinds), m.shape)
        try:
            p = RiskNeutralParams.from_vector(theta)
            prices = price_many(p, m, tau, kinds, self.n_paths, self.seed)
        except DeepCalError as exc:
            log.debug("MCS pricing failed at %s: %s", list(theta), exc)
            return np.full(len(m), -np.inf), np.ones(len(m), dtype=bool)
        with np.errstate(divide="ignore"):
            v = np.log(prices)
        return v, ~np.isfinite(v)


def otm_value(m, tau, theta, pricer):
    """Model log relative price of the OTM option at each ``(m, tau)``."""
    v, _ = pricer.log_values(m, tau, otm_kinds(m), theta)
    return v


def residuals(chain: OptionChain, theta, pricer):
    """Relative errors of model against market log relative prices.

    Quotes the pricer cannot value get residual ``PENALTY``.  Returns
    ``(residuals, flags)``.
    """
    m = chain.moneyness
    market = chain.market_values()
    v, flags = pricer.log_values(m, chain.tau, otm_kinds(m), theta)
    res = (v - market) / market
    bad = ~np.isfinite(res)
    res[bad] = PENALTY
    return res, flags


def rel_rmse_from_residuals(res) -> float:
    res = np.asarray(res, dtype=np.float64)
    return float(math.sqrt(float(res @ res)))


def rel_rmse(chain: OptionChain, theta, pricer) -> float:
    """Square root of the summed squared relative log-price errors."""
    return rel_rmse_from_residuals(residuals(chain, theta, pricer)[0])


# -- calibration -------------------------------------------------------------

@dataclass(frozen=True)
class ParameterBox:
    """Box bounds for calibration, optimized in unit coordinates.

    Tempering rates are searched through their tangent seeds on
    ``[u_lo, min(u_hi, U_MAX)]`` so that they never exceed ``LAMBDA_CAP``.
    """

    model: str
    lower: np.ndarray
    upper: np.ndarray

    @classmethod
    def from_ranges(cls, model: str, ranges: ParameterRanges = None):
        ranges = ranges or ParameterRanges()
        names = param_names(model)
        lo = [getattr(ranges, n)[0] for n in names[:6]]
        hi = [getattr(ranges, n)[1] for n in names[:6]]
        if model == "cts":
            for n in ("u_plus", "u_minus"):
                a, b = getattr(ranges, n)
                lo.append(min(a, U_MAX))
                hi.append(min(b, U_MAX))
        return cls(model, np.array(lo), np.array(hi))

    def to_params(self, z):
        """Parameter vector from unit coordinates ``z`` in [0, 1]."""
        z = np.clip(np.asarray(z, dtype=np.float64), 0.0, 1.0)
        v = self.lower + z * (self.upper - self.lower)
        if self.model == "cts":
            v[6:] = quasirandom.tan_lambda(v[6:])
        return v

    def to_unit(self, theta):
        v = np.array(theta, dtype=np.float64)
        if self.model == "cts":
            v[6:] = quasirandom.tan_lambda_inverse(v[6:])
        width = self.upper - self.lower
        z = np.where(width > 0, (v - self.lower) / np.where(width > 0, width, 1.0), 0.0)
        return np.clip(z, 0.0, 1.0)

    def contains(self, theta, tol=1e-12) -> bool:
        z = np.array(theta, dtype=np.float64)
        if self.model == "cts":
            z[6:] = quasirandom.tan_lambda_inverse(z[6:])
        return bool(np.all(z >= self.lower - tol) and np.all(z <= self.upper + tol))


@dataclass
class CalibrationResult:
    model: str
    pricer: str
    params: np.ndarray
    rel_rmse: float
    n_evals: int
    residuals: np.ndarray
    converged: bool
    flagged: int
    date: str = ""
    starts: list = field(default_factory=list)

    def risk_neutral(self) -> RiskNeutralParams:
        return RiskNeutralParams.from_vector(self.params)

    def table_row(self):
        """Values in published-table order: theta, kappa, xi, zeta, sigma0[, shape], rel-RMSE."""
        kappa, psi, gamma, theta, sigma0 = self.params[:5]
        xi = gamma * psi / (psi + 1.0)
        zeta = gamma / (psi + 1.0)
        row = [theta, kappa, xi, zeta, sigma0]
        row.extend(self.params[5:])
        row.append(self.rel_rmse)
        return [float(v) for v in row]


def result_columns(model: str):
    cols = ["date", "model", "pricer", "theta", "kappa", "xi", "zeta", "sigma0"]
    if model == "cts":
        cols += ["alpha", "lambda_plus", "lambda_minus"]
    return cols + ["rel_rmse", "n_evals", "converged", "flagged",
                   "psi", "gamma"]


def write_results(results, path):
    """One CSV row per calibration; all rows must share a model."""
    results = list(results)
    model = results[0].model if results else "duan"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(result_columns(model))
        for r in results:
            if r.model != model:
                raise ValueError("results for different models need separate files")
            w.writerow([r.date, r.model, r.pricer] + [repr(v) for v in r.table_row()]
                       + [r.n_evals, int(r.converged), r.flagged,
                          repr(float(r.params[1])), repr(float(r.params[2]))])


def halton_starts(box: ParameterBox, n: int):
    """``n`` Halton points in unit coordinates, one prime base per parameter."""
    idx = np.arange(1, n + 1)
    return np.column_stack([quasirandom.halton_sequence(idx, quasirandom.PRIMES[i])
                            for i in range(len(box.lower))])


def calibrate(chain: OptionChain, model: str, pricer, initial=None, box: ParameterBox = None,
              n_starts: int = 5, max_nfev: int = None, diff_step: float = None,
              tol: float = 1e-12) -> CalibrationResult:
    """Box-constrained least squares on the relative log-price residuals.

    Runs scipy's trust-region-reflective solver in unit coordinates from
    ``initial`` (if given) and Halton starts up to ``n_starts`` runs in total;
    the best run is returned.  Non-converged runs (iteration cap) are still
    eligible and flagged ``converged=False``.
    """
    if len(chain) == 0:
        raise ChainError("chain is empty")
    box = box or ParameterBox.from_ranges(model)
    if box.model != model:
        raise ValueError("box and model disagree")
    if pricer.model != model:
        raise ValueError(f"pricer is for {pricer.model}, not {model}")
    starts = []
    if initial is not None:
        if not box.contains(initial):
            raise ValueError("initial parameters lie outside the bounds")
        starts.append(box.to_unit(initial))
    if n_starts > len(starts):
        starts.extend(halton_starts(box, n_starts - len(starts)))
    if diff_step is None:
        diff_step = 1e-6 if pricer.tag == "ann" else 1e-3
    if max_nfev is None:
        max_nfev = 100 * (len(box.lower) + 1)

    def fun(z):
        return residuals(chain, box.to_params(z), pricer)[0]

    best, runs, total = None, [], 0
    for z0 in starts:
        sol = least_squares(fun, z0, bounds=(0.0, 1.0), method="trf", diff_step=diff_step,
                            ftol=tol, xtol=tol, gtol=tol, max_nfev=max_nfev)
        total += sol.nfev
        score = rel_rmse_from_residuals(sol.fun)
        runs.append({"start": box.to_params(z0).tolist(), "rel_rmse": score,
                     "nfev": int(sol.nfev), "status": int(sol.status)})
        if best is None or score < best[0]:
            best = (score, sol)
    score, sol = best
    theta = box.to_params(sol.x)
    res, flags = residuals(chain, theta, pricer)
    return CalibrationResult(model, pricer.tag, theta, rel_rmse_from_residuals(res), total,
                             res, sol.status > 0, int(flags.sum()), chain.date, runs)


def synthetic_chain(pricer, theta, spot: float, rate: float, strikes, maturities,
                    date: str = "synthetic", half_spread: float = 0.0) -> OptionChain:
    """OTM quotes whose mids are the pricer's own prices at ``theta``.

    Every (strike, maturity) pair yields the OTM option at that strike.
    """
    quotes = []
    for T in maturities:
        m = moneyness(np.asarray(strikes, dtype=np.float64), T, spot, rate)
        kinds = otm_kinds(m)
        v, _ = pricer.log_values(m, T / DAYS_PER_YEAR, kinds, theta)
        for K, kind, vi in zip(strikes, kinds, v):
            mid = spot * math.exp(vi)
            if not (np.isfinite(mid) and 0 < mid < spot):
                continue
            d = mid * half_spread
            quotes.append(OptionQuote(float(K), int(T), mid - d, mid + d, str(kind)))
    if not quotes:
        raise ChainError("synthetic chain is empty")
    return OptionChain(date, float(spot), float(rate), quotes)


# -- Black-Scholes -----------------------------------------------------------

def bs_price(spot, strike, tau, rate, vol, kind: str = "call"):
    """Black-Scholes price of a European option without dividends."""
    spot, strike, tau, vol = (np.asarray(a, dtype=np.float64) for a in (spot, strike, tau, vol))
    sd = vol * np.sqrt(tau)
    disc = strike * np.exp(-rate * tau)
    d1 = (np.log(spot / disc) + 0.5 * sd * sd) / sd
    d2 = d1 - sd
    if kind == "call":
        return spot * norm.cdf(d1) - disc * norm.cdf(d2)
    if kind == "put":
        return disc * norm.cdf(-d2) - spot * norm.cdf(-d1)
    raise ValueError(f"kind must be call or put, got {kind!r}")


def implied_vol(price, spot, strike, tau, rate, kind: str = "call", lo: float = 1e-4,
                hi: float = 5.0, tol: float = 1e-12, max_iter: int = 200) -> float:
    """Black-Scholes implied volatility by bisection on ``[lo, hi]``.

    Returns NaN when the price lies outside the prices at the two bounds.
    """
    f_lo = float(bs_price(spot, strike, tau, rate, lo, kind)) - price
    f_hi = float(bs_price(spot, strike, tau, rate, hi, kind)) - price
    if not math.isfinite(price) or f_lo > 0 or f_hi < 0:
        return float("nan")
    a, b = lo, hi
    for _ in range(max_iter):
        mid = 0.5 * (a + b)
        if float(bs_price(spot, strike, tau, rate, mid, kind)) < price:
            a = mid
        else:
            b = mid
        if b - a < tol:
            break
    return 0.5 * (a + b)
