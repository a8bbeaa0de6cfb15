"""Halton sequences and low-discrepancy sampling of the model parameter box."""
from dataclasses import dataclass, fields, replace
import math

import numpy as np

PRIMES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29)

DUAN_INPUTS = ("m", "tau", "kappa", "psi", "gamma", "theta", "sigma0")
CTS_INPUTS = DUAN_INPUTS + ("alpha", "lambda_plus", "lambda_minus")


def halton(index: int, base: int) -> float:
    """Radical inverse of ``index`` (1-based) in ``base``."""
    if index < 1 or base < 2:
        raise ValueError("halton needs index >= 1 and base >= 2")
    result, f = 0.0, 1.0
    while index > 0:
        f /= base
        index, digit = divmod(index, base)
        result += f * digit
    return result


def halton_sequence(indices, base: int):
    """Vectorised :func:`halton` over an integer array of indices."""
    idx = np.asarray(indices, dtype=np.int64).copy()
    if np.any(idx < 1):
        raise ValueError("halton indices are 1-based")
    out = np.zeros(idx.shape)
    f = 1.0
    while np.any(idx > 0):
        f /= base
        idx, digit = np.divmod(idx, base)
        out += f * digit
    return out


def tan_lambda(u):
    """Map a uniform seed in (0, 1) onto a tempering rate in [0.1, inf)."""
    return np.tan(np.asarray(u) * np.pi / 2.0) + 0.1


def tan_lambda_inverse(lam):
    return np.arctan(np.asarray(lam) - 0.1) * 2.0 / np.pi


@dataclass(frozen=True)
class ParameterRanges:
    """Per-coordinate sampling bounds.

    The tempering rates are not bounded directly: ``u_plus`` and ``u_minus``
    bound the uniform seeds that :func:`tan_lambda` turns into rates.
    Defaults are the literal training box of the original study.
    """

    m: tuple = (0.5, 1.5)
    tau: tuple = (0.4, 1.0)
    kappa: tuple = (0.0, 1e-5)
    psi: tuple = (0.1, 0.4)
    gamma: tuple = (0.5, 0.9999)
    theta: tuple = (0.0, 0.8)
    sigma0: tuple = (1e-6, 0.04)
    alpha: tuple = (0.01, 1.999)
    u_plus: tuple = (0.0, 1.0)
    u_minus: tuple = (0.0, 1.0)

    def __post_init__(self):
        for f in fields(self):
            lo, hi = getattr(self, f.name)
            if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
                raise ValueError(f"bad range for {f.name}: {(lo, hi)}")
            object.__setattr__(self, f.name, (float(lo), float(hi)))
        for name in ("u_plus", "u_minus"):
            lo, hi = getattr(self, name)
            if lo < 0.0 or hi > 1.0:
                raise ValueError(f"{name} must stay inside [0, 1]")

    def bounds(self, model: str):
        """Lower and upper arrays for the box coordinates (u seeds for CTS)."""
        names = _box_names(model)
        lo = np.array([getattr(self, n)[0] for n in names])
        hi = np.array([getattr(self, n)[1] for n in names])
        return lo, hi

    def as_dict(self):
        return {f.name: list(getattr(self, f.name)) for f in fields(self)}

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: tuple(v) for k, v in d.items()})


PROFILES = {
    "table1": ParameterRanges(),
    # calibration maturities (7-90 business days) sit far below tau = 0.4
    "calibration": ParameterRanges(tau=(0.02, 1.0)),
    # calibration bounds only: fitted market-price-of-risk values exceed 0.8
    "paper-empirical": ParameterRanges(tau=(0.02, 1.0), theta=(0.0, 3.0)),
}


def get_profile(name: str) -> ParameterRanges:
    try:
        return PROFILES[name]
    except KeyError:
        raise ValueError(f"unknown ranges profile {name!r}; "
                         f"choose from {sorted(PROFILES)}") from None


def load_ranges(path) -> ParameterRanges:
    """Read ranges from a ``key = lo, hi`` text file.

    An optional ``profile = name`` line selects the base profile; blank lines
    and ``#`` comments are ignored.
    """
    base = "table1"
    overrides = {}
    valid = {f.name for f in fields(ParameterRanges)}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            if key == "profile":
                base = value
            elif key in valid:
                parts = [float(v) for v in value.replace(",", " ").split()]
                if len(parts) != 2:
                    raise ValueError(f"{path}:{lineno}: {key} needs two numbers")
                overrides[key] = tuple(parts)
            else:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
    return replace(get_profile(base), **overrides)


def _box_names(model: str):
    if model == "duan":
        return DUAN_INPUTS
    if model == "cts":
        return DUAN_INPUTS + ("alpha", "u_plus", "u_minus")
    raise ValueError(f"model must be 'duan' or 'cts', got {model!r}")


def input_names(model: str):
    return DUAN_INPUTS if model == "duan" else CTS_INPUTS


def sample_parameter_space(model: str, n: int, ranges: ParameterRanges = None,
                           start_index: int = 1):
    """Halton points mapped into the parameter box.

    Row ``j`` uses sequence index ``start_index + j``; coordinate ``i`` uses
    the ``i``-th prime as its base, in the column order of
    :func:`input_names`.  For the CTS model the last two coordinates are
    uniform seeds pushed through :func:`tan_lambda`.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    ranges = ranges or ParameterRanges()
    lo, hi = ranges.bounds(model)
    idx = np.arange(start_index, start_index + n)
    unit = np.column_stack([halton_sequence(idx, PRIMES[i]) for i in range(len(lo))])
    out = lo + unit * (hi - lo)
    if model == "cts":
        out[:, 8:] = tan_lambda(out[:, 8:])
    return out
