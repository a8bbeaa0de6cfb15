"""Compiled inner loops for the GARCH recursion.

Each (row, path) pair is simulated independently in a fixed order, so the
result for a pair never depends on how rows are batched or which thread runs
them.  The uniform generator replicates :mod:`deepcal.rng` bit for bit.
"""
import math

import numpy as np
from numba import njit

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_ONE = np.uint64(1)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 2.0**-53

# (|z| bound, series terms) buckets; must match deepcal.cts
_B1, _K1 = 0.01, 10
_B2, _K2 = 0.05, 15
_B3, _K3 = 0.1, 18
_RADIUS, _KMAX = 0.25, 32


@njit(cache=True, nogil=True)
def _mix(x):
    x = (x ^ (x >> _S30)) * _M1
    x = (x ^ (x >> _S27)) * _M2
    return x ^ (x >> _S31)


@njit(cache=True, nogil=True)
def _uniform(key, t):
    z = _mix(key + (np.uint64(t) + _ONE) * _GAMMA)
    return (np.float64(z >> _S11) + 0.5) * _INV53


@njit(cache=True, nogil=True)
def _g(z, a):
    az = abs(z)
    if az < _RADIUS:
        if az < _B1:
            k_max = _K1
        elif az < _B2:
            k_max = _K2
        elif az < _B3:
            k_max = _K3
        else:
            k_max = _KMAX
        term = a * (a - 1.0) / 2.0 * z * z
        acc = term
        for k in range(3, k_max + 1):
            term = term * z * ((a - k + 1.0) / k)
            acc += term
        return acc
    return (1.0 + z) ** a - 1.0 - a * z


@njit(cache=True, nogil=True)
def _poly(c, x):
    acc = 0.0
    for v in c:
        acc = acc * x + v
    return acc


# Wichura's AS241 (PPND16) coefficients, highest degree first
_A = (2509.0809287301226727, 33430.575583588128105, 67265.770927008700853,
      45921.953931549871457, 13731.693765509461125, 1971.5909503065514427,
      133.14166789178437745, 3.387132872796366608)
_B = (5226.495278852545925, 28729.085735721942674, 39307.89580009271061,
      21213.794301586595867, 5394.1960214247511077, 687.1870074920579083,
      42.313330701600911252, 1.0)
_C = (7.7454501427834140764e-4, 0.0227238449892691845833, 0.24178072517745061177,
      1.27045825245236838258, 3.64784832476320460504, 5.7694972214606914055,
      4.6303378461565452959, 1.42343711074968357734)
_D = (1.05075007164441684324e-9, 5.475938084995344946e-4, 0.0151986665636164571966,
      0.14810397642748007459, 0.68976733498510000455, 1.6763848301838038494,
      2.05319162663775882187, 1.0)
_E = (2.01033439929228813265e-7, 2.71155556874348757815e-5, 0.0012426609473880784386,
      0.026532189526576123093, 0.29656057182850489123, 1.7848265399172913358,
      5.4637849111641143699, 6.6579046435011037772)
_F = (2.04426310338993978564e-15, 1.4215117583164458887e-7, 1.8463183175100546818e-5,
      7.868691311456132591e-4, 0.0148753612908506148525, 0.13692988092273580531,
      0.59983220655588793769, 1.0)


@njit(cache=True, nogil=True)
def ndtri(p):
    """Inverse standard normal CDF for 0 < p < 1 (relative error ~1e-16)."""
    q = p - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        return q * _poly(_A, r) / _poly(_B, r)
    r = p if q < 0.0 else 1.0 - p
    r = math.sqrt(-math.log(r))
    if r <= 5.0:
        r -= 1.6
        x = _poly(_C, r) / _poly(_D, r)
    else:
        r -= 5.0
        x = _poly(_E, r) / _poly(_F, r)
    return -x if q < 0.0 else x


@njit(cache=True, nogil=True)
def duan_paths(kappa, psi, gamma, theta, sigma0, keys, horizons, const_vol, out):
    """out[b, h, n] = summed exponent of path n of row b at horizons[b, h]."""
    n_rows, n_paths = keys.shape
    n_h = horizons.shape[1]
    for b in range(n_rows):
        coef = gamma[b] / (psi[b] + 1.0)
        t_end = horizons[b, n_h - 1]
        for n in range(n_paths):
            key = keys[b, n]
            sig2 = sigma0[b] * sigma0[b]
            eta = 0.0
            acc = 0.0
            h = 0
            for t in range(1, t_end + 1):
                if not const_vol:
                    d = eta - theta[b]
                    sig2 = kappa[b] + coef * sig2 * (psi[b] * d * d + 1.0)
                sig = math.sqrt(sig2)
                eta = ndtri(_uniform(key, t))
                acc += sig * eta - 0.5 * sig2
                while h < n_h and horizons[b, h] == t:
                    out[b, h, n] = acc
                    h += 1


@njit(cache=True, nogil=True)
def cts_paths(kappa, psi, gamma, theta, sigma0, alpha, lp, lm, quant, z0, dz,
              probs, keys, horizons, const_vol, out, failed):
    """CTS-GARCH analogue of :func:`duan_paths`.

    ``quant[b]`` holds row b's quantiles on the shared logit grid ``probs``.
    ``failed[b]`` receives the first path index whose volatility reached
    ``lp[b]`` (else stays -1); such rows are abandoned.
    """
    n_rows, n_paths = keys.shape
    n_h = horizons.shape[1]
    n_q = quant.shape[1]
    for b in range(n_rows):
        coef = gamma[b] / (psi[b] + 1.0)
        t_end = horizons[b, n_h - 1]
        a = alpha[b]
        lpa = lp[b] ** a
        lma = lm[b] ** a
        denom = a * (a - 1.0) * (lp[b] ** (a - 2.0) + lm[b] ** (a - 2.0))
        for n in range(n_paths):
            key = keys[b, n]
            sig2 = sigma0[b] * sigma0[b]
            eta = 0.0
            acc = 0.0
            h = 0
            for t in range(1, t_end + 1):
                if not const_vol:
                    d = eta - theta[b]
                    sig2 = kappa[b] + coef * sig2 * (psi[b] * d * d + 1.0)
                sig = math.sqrt(sig2)
                if not sig < lp[b]:
                    failed[b] = n
                    break
                u = _uniform(key, t)
                zl = math.log(u) - math.log1p(-u)
                k = int(math.floor((zl - z0) / dz))
                k = min(max(k, 0), n_q - 2)
                if u < probs[k] and k > 0:
                    k -= 1
                elif u >= probs[k + 1] and k < n_q - 2:
                    k += 1
                w = (u - probs[k]) / (probs[k + 1] - probs[k])
                eta = quant[b, k] + w * (quant[b, k + 1] - quant[b, k])
                comp = (lpa * _g(-sig / lp[b], a) + lma * _g(sig / lm[b], a)) / denom
                acc += sig * eta - comp
                while h < n_h and horizons[b, h] == t:
                    out[b, h, n] = acc
                    h += 1
            if failed[b] >= 0:
                break
