"""Risk-neutral GARCH path simulation and Monte Carlo option pricing.

Both models share the volatility recursion::

    sigma_t**2 = kappa + gamma/(psi+1) * (psi*sigma_{t-1}**2*(eta_{t-1}-theta)**2
                                          + sigma_{t-1}**2)

with ``eta_0 = 0``.  Duan's model draws standard normal innovations and
compensates with ``sigma_t**2 / 2``; CTS-GARCH draws stdCTS innovations and
compensates with the log-Laplace transform ``l(sigma_t)``.  Prices are
relative to spot: a call with moneyness ``m = K exp(-r tau) / S0`` is worth
``S0 * mean(max(exp(X) - m, 0))`` where ``X`` is the summed exponent.

Path ``n`` of a run with seed ``s`` always consumes the counter-based stream
``(s, n)``, one uniform per business day, so prices are common-random-number
coupled across moneyness, maturity, option kind and even model.
"""
from dataclasses import dataclass
import math

import numpy as np

from . import _kernels, cts as stdcts, rng
from .errors import DomainError, InvalidParamsError

DAYS_PER_YEAR = 250
DEFAULT_PATHS = 20_000


@dataclass(frozen=True)
class RiskNeutralParams:
    """GARCH parameters under the pricing measure.

    ``psi`` and ``gamma`` replace the raw ARCH/GARCH coefficients:
    ``psi = xi / zeta`` and ``gamma = xi + zeta``.  Setting ``cts`` selects the
    CTS-GARCH model; leaving it ``None`` gives Duan's model.
    """

    kappa: float
    psi: float
    gamma: float
    theta: float
    sigma0: float
    cts: "stdcts.CtsParams" = None

    def __post_init__(self):
        vals = (self.kappa, self.psi, self.gamma, self.theta, self.sigma0)
        if not all(math.isfinite(v) for v in vals):
            raise InvalidParamsError(f"non-finite GARCH parameters {vals}")
        if self.kappa < 0 or self.psi <= 0 or self.sigma0 <= 0 or self.theta < 0:
            raise InvalidParamsError(
                f"need kappa >= 0, psi > 0, theta >= 0, sigma0 > 0; got {vals}")
        if not 0.0 <= self.gamma < 1.0:
            raise InvalidParamsError(f"gamma must lie in [0, 1), got {self.gamma}")

    @property
    def model(self) -> str:
        return "duan" if self.cts is None else "cts"

    @property
    def xi(self) -> float:
        return self.gamma * self.psi / (self.psi + 1.0)

    @property
    def zeta(self) -> float:
        return self.gamma / (self.psi + 1.0)

    @classmethod
    def from_xi_zeta(cls, kappa, xi, zeta, theta, sigma0, cts=None):
        return cls(kappa, xi / zeta, xi + zeta, theta, sigma0, cts)

    def vector(self):
        """Parameter vector in (kappa, psi, gamma, theta, sigma0[, alpha, l+, l-]) order."""
        v = [self.kappa, self.psi, self.gamma, self.theta, self.sigma0]
        if self.cts is not None:
            v.extend(self.cts.astuple())
        return np.array(v, dtype=np.float64)

    @classmethod
    def from_vector(cls, v):
        v = [float(x) for x in v]
        if len(v) == 5:
            return cls(*v)
        if len(v) == 8:
            return cls(*v[:5], cts=stdcts.CtsParams(*v[5:]))
        raise InvalidParamsError(f"expected 5 or 8 parameters, got {len(v)}")


@dataclass(frozen=True)
class PricingRequest:
    m: float
    tau: float
    n_paths: int = DEFAULT_PATHS
    seed: int = 0
    kind: str = "call"

    def __post_init__(self):
        if not self.m > 0 or not self.tau > 0 or self.n_paths < 1:
            raise InvalidParamsError(f"invalid pricing request {self}")
        if self.kind not in ("call", "put"):
            raise InvalidParamsError(f"kind must be call or put, got {self.kind!r}")
        steps(self.tau)

    @property
    def steps(self) -> int:
        return steps(self.tau)


def steps(tau) -> int:
    """Business-day count ``round(250 tau)``; must be at least one."""
    t = int(round(float(tau) * DAYS_PER_YEAR))
    if t < 1:
        raise InvalidParamsError(f"tau={tau} rounds to {t} business days")
    return t


def pairwise_mean(a):
    """Mean along the last axis by a fixed pairwise tree.

    The summation order depends only on the row length, so a row gives the
    same bits whether it is reduced alone or inside a larger batch.
    """
    a = np.asarray(a, dtype=np.float64)
    n = a.shape[-1]
    s = a
    while s.shape[-1] > 1:
        if s.shape[-1] % 2:
            s = np.concatenate([s, np.zeros(s.shape[:-1] + (1,))], axis=-1)
        s = s[..., 0::2] + s[..., 1::2]
    return s[..., 0] / n


def _columns(params):
    model = params[0].model
    if any(p.model != model for p in params):
        raise InvalidParamsError("a batch must not mix Duan and CTS parameters")
    cols = [np.array([getattr(p, f) for p in params], dtype=np.float64)
            for f in ("kappa", "psi", "gamma", "theta", "sigma0")]
    return model, cols


def _simulate(params, keys, horizons, *, constant_volatility=False,
              resolution=stdcts.DEFAULT_RESOLUTION):
    """Summed exponents for a batch of parameter sets.

    ``params`` holds B parameter sets of one model, ``keys`` a (B, N) array
    of stream keys and ``horizons`` a (B, H) array of ascending step counts.
    Returns ``(out, failed)`` with ``out`` of shape (B, H, N) and ``failed``
    mapping each row whose volatility left the log-Laplace domain to the
    first offending path (its ``out`` rows are NaN).
    """
    model, cols = _columns(params)
    keys = np.ascontiguousarray(keys, dtype=np.uint64)
    horizons = np.ascontiguousarray(horizons, dtype=np.int64)
    b, n = keys.shape
    out = np.full((b, horizons.shape[1], n), np.nan)
    const = bool(constant_volatility)
    if model == "duan":
        _kernels.duan_paths(*cols, keys, horizons, const, out)
        return out, {}
    tables = [stdcts.build_inverse_cdf(p.cts, resolution) for p in params]
    quant = np.ascontiguousarray(np.stack([t.quantiles for t in tables]))
    probs, z0, dz = stdcts.probability_grid(resolution, tables[0].tail_cutoff)
    shape = [np.array(c, dtype=np.float64) for c in zip(*(p.cts.astuple() for p in params))]
    failed = np.full(b, -1, dtype=np.int64)
    _kernels.cts_paths(*cols, *shape, quant, z0, dz, np.asarray(probs), keys,
                       horizons, const, out, failed)
    bad = {int(r): int(failed[r]) for r in np.flatnonzero(failed >= 0)}
    for r in bad:
        out[r] = np.nan
    return out, bad


def simulate_paths(p: RiskNeutralParams, T: int, n: int, seed: int, *,
                   horizons=None, constant_volatility=False,
                   resolution=stdcts.DEFAULT_RESOLUTION):
    """Summed exponents ``sum_t (-w_t + sigma_t eta_t)`` of ``n`` paths.

    Returns an ``(n,)`` array at step ``T``, or, when ``horizons`` is given,
    a ``(len(horizons), n)`` array with one row per requested step (``T`` is
    then ignored).  ``constant_volatility`` pins ``sigma_t`` to ``sigma0`` and
    exists for testing against closed forms.

    Raises :class:`DomainError` if a CTS path reaches ``sigma_t >= lambda_plus``.
    """
    hs = [int(T)] if horizons is None else [int(h) for h in horizons]
    if n < 1 or min(hs) < 1:
        raise InvalidParamsError("need n >= 1 and horizons >= 1")
    order = np.argsort(hs, kind="stable")
    keys = rng.stream_keys(seed, np.arange(n))[None, :]
    out, failed = _simulate([p], keys, np.array(hs)[order][None, :],
                            constant_volatility=constant_volatility,
                            resolution=resolution)
    if failed:
        raise DomainError(
            f"sigma_t reached lambda_plus={p.cts.lambda_plus} on path {failed[0]}",
            path=failed[0])
    res = np.empty((len(hs), n))
    res[order] = out[0]
    return res[0] if horizons is None else res


def payoff_mean(exponents, m: float, kind: str) -> float:
    s = np.exp(exponents)
    pay = np.maximum(s - m, 0.0) if kind == "call" else np.maximum(m - s, 0.0)
    return float(pairwise_mean(pay))


def price_mcs(p: RiskNeutralParams, req: PricingRequest, **kw) -> float:
    """Monte Carlo relative price ``V`` (dollar price is ``S0 * V``)."""
    x = simulate_paths(p, req.steps, req.n_paths, req.seed, **kw)
    return payoff_mean(x, req.m, req.kind)


def price_many(p: RiskNeutralParams, m, tau, kind, n_paths=DEFAULT_PATHS,
               seed=0, **kw):
    """Relative prices of many options from one common set of paths.

    ``m``, ``tau`` and ``kind`` are equal-length sequences.  Paths are simulated
    once to the longest maturity; each option reads its own horizon.
    """
    m = np.asarray(m, dtype=np.float64)
    T = np.array([steps(t) for t in np.atleast_1d(tau)])
    kind = np.asarray(kind)
    if len(m) == 0:
        return np.empty(0)
    horizons = np.unique(T)
    x = simulate_paths(p, 0, n_paths, seed, horizons=horizons, **kw)
    s = np.exp(x)
    row = np.searchsorted(horizons, T)
    out = np.empty(len(m))
    for i in range(len(m)):
        si = s[row[i]]
        pay = np.maximum(si - m[i], 0.0) if kind[i] == "call" else np.maximum(m[i] - si, 0.0)
        out[i] = pairwise_mean(pay)
    return out


def simulate_batch(params, T, n: int, seeds, *, resolution=stdcts.DEFAULT_RESOLUTION):
    """Exponents for many parameter sets at once, one seed and horizon each.

    Returns a ``(len(params), n)`` array.  Rows that fail (CTS domain error)
    are NaN; the second return value maps such rows to an error message.
    Each row equals ``simulate_paths(params[i], T[i], n, seeds[i])`` exactly.
    """
    T = np.array([int(t) for t in T], dtype=np.int64)
    seeds = np.array([int(s) for s in seeds], dtype=np.uint64)
    keys = rng.stream_keys(seeds[:, None], np.arange(n)[None, :])
    out, failed = _simulate(list(params), keys, T[:, None], resolution=resolution)
    errors = {r: f"sigma_t reached lambda_plus on path {path}" for r, path in failed.items()}
    return out[:, 0, :], errors
