"""Standard classical tempered stable (stdCTS) innovations.

The stdCTS law is the CTS law with its scale and location fixed so that the
variable has zero mean and unit variance.  Only its characteristic function
is available in closed form, so variates are drawn by numerically inverting
that function to a quantile table and pushing counter-based uniforms through
it.

Both the characteristic exponent and the log-Laplace transform are evaluated
in the rearranged form::

    [lp**a * g(-iu/lp) + lm**a * g(iu/lm)] / (a (a-1) (lp**(a-2) + lm**(a-2)))

with ``g(z) = (1+z)**a - 1 - a z``.  Expanding ``g`` shows this equals the
textbook expression term for term (the drift cancels the linear parts of the
two powers), but it does not lose digits when the tempering rates are large.
"""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import rng
from .errors import DomainError, InversionError, InvalidParamsError

ALPHA_ONE_EXCLUSION = 1e-3
LAMBDA_MIN = 0.1
LAMBDA_MAX = 1e6
DEFAULT_RESOLUTION = 2**16
DEFAULT_TAIL = 1e-7

_SERIES_RADIUS = 0.25
_MAX_FFT = 2**20
_SERIES_TERMS = 32
_SERIES_BUCKETS = ((0.01, 10), (0.05, 15), (0.1, 18))


@dataclass(frozen=True)
class CtsParams:
    """Shape of a stdCTS law: stability index and the two tempering rates."""

    alpha: float
    lambda_plus: float
    lambda_minus: float

    def __post_init__(self):
        a, lp, lm = self.alpha, self.lambda_plus, self.lambda_minus
        if not all(np.isfinite([a, lp, lm])):
            raise InvalidParamsError(f"non-finite CTS parameters {self}")
        if not 0.0 < a < 2.0 or abs(a - 1.0) < ALPHA_ONE_EXCLUSION:
            raise InvalidParamsError(
                f"alpha must lie in (0, 2) away from 1, got {a}")
        for name, lam in (("lambda_plus", lp), ("lambda_minus", lm)):
            if not LAMBDA_MIN <= lam <= LAMBDA_MAX:
                raise InvalidParamsError(
                    f"{name} must lie in [{LAMBDA_MIN}, {LAMBDA_MAX:g}], got {lam}")

    def astuple(self):
        return (self.alpha, self.lambda_plus, self.lambda_minus)

    @property
    def _denominator(self):
        a, lp, lm = self.astuple()
        return a * (a - 1.0) * (lp ** (a - 2.0) + lm ** (a - 2.0))


def _g(z, alpha):
    """``(1+z)**alpha - 1 - alpha*z``, accurate for small ``|z|``.

    ``alpha`` may be an array broadcastable against ``z``.  Near zero a
    binomial series is summed; the number of terms depends only on each
    element's own ``|z|`` so results do not change with batch composition.
    """
    z = np.asarray(z)
    alpha = np.asarray(alpha, dtype=np.float64)
    az = np.abs(z)
    small = az < _SERIES_RADIUS
    out = None
    if small.any():
        zs = np.where(small, z, 0.0)
        n_terms = np.select([az < b for b, _ in _SERIES_BUCKETS],
                            [k for _, k in _SERIES_BUCKETS], _SERIES_TERMS)
        k_max = int(n_terms[small].max())
        k_min = int(n_terms[small].min())
        term = alpha * (alpha - 1.0) / 2.0 * zs * zs
        acc = term.copy()
        for k in range(3, k_max + 1):
            term = term * zs * ((alpha - k + 1.0) / k)
            acc += term if k <= k_min else np.where(k <= n_terms, term, 0.0)
        out = acc
    if not small.all():
        zb = np.where(small, 0.0, z)
        direct = (1.0 + zb) ** alpha - 1.0 - alpha * zb
        out = direct if out is None else np.where(small, out, direct)
    return out


def char_exponent(u, p: CtsParams):
    """``log`` of the stdCTS characteristic function at real ``u``."""
    u = np.asarray(u, dtype=np.float64)
    a, lp, lm = p.astuple()
    z = u.astype(np.complex128)
    num = lp**a * _g(-1j * z / lp, a) + lm**a * _g(1j * z / lm, a)
    return num / p._denominator


def cf_stdcts(u, p: CtsParams):
    """Characteristic function ``E[exp(iuZ)]`` of ``Z ~ stdCTS(p)``."""
    out = np.exp(char_exponent(u, p))
    return out[()] if out.ndim == 0 else out


def log_laplace(x, p: CtsParams):
    """Log-Laplace transform ``log E[exp(xZ)]``, defined for -lm < x < lp.

    This is the per-step compensator of the CTS-GARCH return recursion.
    Raises :class:`DomainError` outside the tempering bounds.
    """
    out = log_laplace_arrays(x, *p.astuple())
    return out[()] if out.ndim == 0 else out


def log_laplace_arrays(x, alpha, lambda_plus, lambda_minus):
    """:func:`log_laplace` with parameters given as broadcastable arrays."""
    x = np.asarray(x, dtype=np.float64)
    a = np.asarray(alpha, dtype=np.float64)
    lp = np.asarray(lambda_plus, dtype=np.float64)
    lm = np.asarray(lambda_minus, dtype=np.float64)
    bad = (x >= lp) | (x <= -lm) | ~np.isfinite(x)
    if bad.any():
        first = np.flatnonzero(bad.ravel())[0]
        raise DomainError(
            f"log-Laplace argument {x.ravel()[first]!r} outside the tempering bounds",
            path=int(first))
    denom = a * (a - 1.0) * (lp ** (a - 2.0) + lm ** (a - 2.0))
    return (lp**a * _g(-x / lp, a) + lm**a * _g(x / lm, a)) / denom


def cumulant(k: int, p: CtsParams) -> float:
    """k-th cumulant (k >= 2) from the closed form of the CTS cumulants."""
    from math import gamma

    a, lp, lm = p.astuple()
    c = 1.0 / (gamma(2.0 - a) * (lp ** (a - 2.0) + lm ** (a - 2.0)))
    return c * gamma(k - a) * (lp ** (a - k) + (-1) ** k * lm ** (a - k))


@lru_cache(maxsize=8)
def probability_grid(resolution: int, tail: float):
    """Logit-spaced probability nodes shared by every quantile table."""
    z0 = np.log(tail) - np.log1p(-tail)
    z = np.linspace(z0, -z0, resolution)
    p = 1.0 / (1.0 + np.exp(-z))
    p.setflags(write=False)
    return p, z0, z[1] - z[0]


@dataclass(frozen=True, eq=False)
class InverseCdfTable:
    """Piecewise-linear quantile function of a stdCTS law.

    ``probs`` is the shared logit-spaced grid; beyond its ends the end
    segments are extended linearly (``tail_cutoff`` mass on each side).
    """

    probs: np.ndarray
    quantiles: np.ndarray
    params: CtsParams
    tail_cutoff: float

    def _segments(self):
        p, q = self.probs, self.quantiles
        s0 = (q[1] - q[0]) / (p[1] - p[0])
        s1 = (q[-1] - q[-2]) / (p[-1] - p[-2])
        pp = np.concatenate(([0.0], p, [1.0]))
        qq = np.concatenate(([q[0] - p[0] * s0], q, [q[-1] + (1.0 - p[-1]) * s1]))
        return np.diff(pp), qq[:-1], qq[1:]

    def mean(self) -> float:
        w, a, b = self._segments()
        return float(np.sum(w * (a + b)) / 2.0)

    def var(self) -> float:
        w, a, b = self._segments()
        m2 = float(np.sum(w * (a * a + a * b + b * b)) / 3.0)
        return m2 - self.mean() ** 2

    def ppf(self, u):
        k, w = grid_position(u, len(self.probs), self.tail_cutoff)
        q = self.quantiles
        return q[k] + w * (q[k + 1] - q[k])


def grid_position(u, resolution: int, tail: float):
    """Segment index and linear weight of each uniform on the shared grid.

    The weight falls outside [0, 1] in the two extrapolated tails.
    """
    p, z0, dz = probability_grid(resolution, tail)
    u = np.asarray(u, dtype=np.float64)
    z = np.log(u) - np.log1p(-u)
    k = np.clip(np.floor((z - z0) / dz).astype(np.intp), 0, resolution - 2)
    # one correction step absorbs rounding in the logit
    k = np.clip(k - (u < p[k]) + (u >= p[k + 1]), 0, resolution - 2)
    w = (u - p[k]) / (p[k + 1] - p[k])
    return k, w


def _grid_half_width(p: CtsParams) -> float:
    # exponential tempering: mass beyond L is ~exp(-lambda L) times a power
    return 10.0 + 24.0 / min(p.lambda_plus, p.lambda_minus)


@lru_cache(maxsize=256)
def build_inverse_cdf(p: CtsParams, resolution: int = DEFAULT_RESOLUTION,
                      tail: float = DEFAULT_TAIL) -> InverseCdfTable:
    """Quantile table of ``stdCTS(p)`` by FFT inversion of its CF.

    The density is recovered on a symmetric grid of at least ``resolution``
    points (refined further while the CF is still non-negligible at the grid's
    Nyquist frequency), accumulated to a CDF, and inverted at the
    ``resolution`` shared probability nodes.
    Deterministic; results are cached per ``(p, resolution, tail)``.
    """
    n = int(resolution)
    if n < 1024 or n & (n - 1):
        raise ValueError("resolution must be a power of two >= 1024")
    half = _grid_half_width(p)
    n_fft = n
    # refine until the CF has died out at the Nyquist frequency
    while n_fft < _MAX_FFT and abs(cf_stdcts(np.pi * n_fft / (2.0 * half), p)) > 1e-6:
        n_fft *= 2
    dx = 2.0 * half / n_fft
    du = np.pi / half
    k = np.arange(n_fft)
    u = (k - n_fft // 2) * du
    phi = cf_stdcts(u, p)
    sign = np.where(k % 2 == 0, 1.0, -1.0)
    dens = (du / (2.0 * np.pi)) * sign * np.fft.fft(sign * phi).real
    np.maximum(dens, 0.0, out=dens)
    mass = dens.sum() * dx
    if not 0.999 <= mass <= 1.001:
        raise InversionError(f"recovered density integrates to {mass:.6f} for {p}")
    dens /= mass

    x = -half + k * dx
    cdf = np.concatenate(([0.0], np.cumsum(dens) * dx))
    edges = np.concatenate(([x[0] - dx / 2], x + dx / 2))
    cdf /= cdf[-1]
    keep = np.diff(cdf, prepend=-1.0) > 0
    probs, _, _ = probability_grid(n, tail)
    quantiles = np.interp(probs, cdf[keep], edges[keep])
    quantiles.setflags(write=False)

    table = InverseCdfTable(probs, quantiles, p, tail)
    mu, var = table.mean(), table.var()
    if abs(mu) > 0.01 or abs(var - 1.0) > 0.02:
        raise InversionError(
            f"quantile table for {p} has mean {mu:.4g}, variance {var:.4g}")
    return table


def sample_stdcts(p: CtsParams, n: int, seed: int, *,
                  resolution: int = DEFAULT_RESOLUTION, stream: int = 0):
    """``n`` stdCTS draws, a pure function of ``(p, n, seed, stream)``."""
    if n < 0:
        raise ValueError("n must be non-negative")
    if n == 0:
        return np.empty(0)
    table = build_inverse_cdf(p, resolution)
    return table.ppf(rng.uniforms(seed, n, stream=stream))
