"""Training sets of log relative option prices over the parameter box.

A training set is fully determined by its metadata: model, option kind,
sample count, ranges, paths per price, seed and Halton start index.  Sample
``i`` (Halton sequence index) is priced with the sub-seed
``derive_seed(seed, "price", i)``, so any sample can be recomputed on its own.

File format: the first line is ``#`` followed by the JSON metadata, then a
CSV header and one row per sample holding the inputs in parameter-table order
followed by the target ``v = log(V)``.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import csv
import json
import logging

import numpy as np

from . import quasirandom
from .cts import CtsParams, build_inverse_cdf
from .errors import DeepCalError
from .garch_mcs import (DAYS_PER_YEAR, PricingRequest, RiskNeutralParams,
                        payoff_mean, price_mcs, simulate_batch)
from .quasirandom import ParameterRanges
from .rng import derive_seed

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
SKIP_WARN_RATE = 0.05


@dataclass
class TrainingSet:
    model: str
    kind: str
    inputs: np.ndarray
    targets: np.ndarray
    indices: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        d = len(quasirandom.input_names(self.model))
        self.inputs = np.asarray(self.inputs, dtype=np.float64).reshape(-1, d)
        self.targets = np.asarray(self.targets, dtype=np.float64)
        self.indices = np.asarray(self.indices, dtype=np.int64)
        if not len(self.inputs) == len(self.targets) == len(self.indices):
            raise ValueError("inputs, targets and indices differ in length")

    def __len__(self):
        return len(self.targets)

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]


def sample_seed(seed: int, index: int) -> int:
    return derive_seed(seed, "price", index)


def params_from_input(model: str, x) -> RiskNeutralParams:
    """Model parameters from one input row (moneyness and maturity dropped)."""
    x = [float(v) for v in x]
    shape = CtsParams(*x[7:10]) if model == "cts" else None
    return RiskNeutralParams(*x[2:7], cts=shape)


def price_input(model: str, kind: str, x, paths: int, seed: int, index: int) -> float:
    """Relative MCS price of one input row, as the generator computes it."""
    req = PricingRequest(x[0], x[1], paths, sample_seed(seed, index), kind)
    return price_mcs(params_from_input(model, x), req)


def _default_batch(paths):
    return max(1, 2**18 // paths)


def generate_training_set(model: str, kind: str, n_samples: int,
                          ranges: ParameterRanges = None, paths_per_price: int = 5000,
                          seed: int = 0, start_index: int = 1, *, profile: str = None,
                          threads: int = 1, batch_size: int = None) -> TrainingSet:
    """Price ``n_samples`` Halton points by Monte Carlo and take logs.

    Maturities are snapped to whole business days (the stored ``tau`` is the
    one actually priced).  Points whose parameters are invalid, whose CTS
    quantile table cannot be built, whose paths leave the log-Laplace domain,
    or whose price is exactly zero are skipped and counted.
    """
    return generate_training_sets(
        model, (kind,), n_samples, ranges, paths_per_price, seed, start_index,
        profile=profile, threads=threads, batch_size=batch_size)[kind]


def generate_training_sets(model: str, kinds, n_samples: int,
                           ranges: ParameterRanges = None, paths_per_price: int = 5000,
                           seed: int = 0, start_index: int = 1, *, profile: str = None,
                           threads: int = 1, batch_size: int = None) -> dict:
    """Several option kinds from one simulation.

    Returns ``{kind: TrainingSet}``; each set is identical to what
    :func:`generate_training_set` produces for that kind alone.
    """
    kinds = tuple(kinds)
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    for kind in kinds:
        if kind not in ("call", "put"):
            raise ValueError(f"kind must be call or put, got {kind!r}")
    if profile is not None:
        ranges = quasirandom.get_profile(profile)
    ranges = ranges or ParameterRanges()
    x = quasirandom.sample_parameter_space(model, n_samples, ranges, start_index)
    index = np.arange(start_index, start_index + n_samples)
    T = np.rint(x[:, 1] * DAYS_PER_YEAR).astype(int)
    x[:, 1] = T / DAYS_PER_YEAR

    reasons = {}
    params = {}
    for j in range(n_samples):
        try:
            if T[j] < 1:
                raise DeepCalError("maturity rounds to zero days")
            p = params_from_input(model, x[j])
            if p.cts is not None:
                build_inverse_cdf(p.cts)
            params[j] = p
        except DeepCalError as exc:
            reasons[j] = type(exc).__name__

    todo = sorted(params, key=lambda j: (T[j], j))
    bs = batch_size or _default_batch(paths_per_price)
    batches = [todo[i:i + bs] for i in range(0, len(todo), bs)]

    def run(batch):
        seeds = [sample_seed(seed, index[j]) for j in batch]
        res, errors = simulate_batch([params[j] for j in batch], T[batch],
                                     paths_per_price, seeds)
        prices = {}
        for r, j in enumerate(batch):
            if r in errors:
                prices[j] = None
            else:
                prices[j] = {k: payoff_mean(res[r], x[j, 0], k) for k in kinds}
        return prices

    prices = {}
    if threads > 1 and len(batches) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for part in pool.map(run, batches):
                prices.update(part)
    else:
        for batch in batches:
            prices.update(run(batch))

    out = {}
    for kind in kinds:
        why = dict(reasons)
        keep = []
        for j in range(n_samples):
            if j in why:
                continue
            if prices[j] is None:
                why[j] = "DomainError"
            elif not prices[j][kind] > 0.0:
                why[j] = "ZeroPrice"
            else:
                keep.append(j)
        keep = np.array(keep, dtype=int)
        targets = np.log(np.array([prices[j][kind] for j in keep]))
        meta = {
            "format_version": FORMAT_VERSION,
            "model": model,
            "kind": kind,
            "n_samples": int(n_samples),
            "ranges": ranges.as_dict(),
            "paths_per_price": int(paths_per_price),
            "seed": int(seed),
            "start_index": int(start_index),
            "skipped": sorted(int(index[j]) for j in why),
            "columns": list(quasirandom.input_names(model)) + ["v"],
        }
        _report_skips(model, x, ranges, why, n_samples)
        out[kind] = TrainingSet(model, kind, x[keep], targets, index[keep], meta)
    return out


def _report_skips(model, x, ranges, reasons, n):
    if not reasons:
        return
    counts = {}
    for r in reasons.values():
        counts[r] = counts.get(r, 0) + 1
    rate = len(reasons) / n
    log.info("skipped %d of %d samples (%.2f%%): %s", len(reasons), n, 100 * rate, counts)
    if rate <= SKIP_WARN_RATE:
        return
    lo, hi = ranges.bounds(model)
    unit = np.array(x[sorted(reasons)], dtype=float)
    if model == "cts":
        unit[:, 8:] = quasirandom.tan_lambda_inverse(unit[:, 8:])
    width = np.where(hi > lo, hi - lo, 1.0)
    pos = np.median((unit - lo) / width, axis=0)
    names = quasirandom.input_names(model)
    order = np.argsort(-np.abs(pos - 0.5))[:3]
    corner = ", ".join(f"{names[i]}={'high' if pos[i] > 0.5 else 'low'}" for i in order)
    log.warning("skip rate %.1f%% exceeds %.0f%%; skipped points concentrate near %s",
                100 * rate, 100 * SKIP_WARN_RATE, corner)


def regenerate(meta: dict, **kw) -> TrainingSet:
    """Rebuild a training set from its metadata."""
    return generate_training_set(
        meta["model"], meta["kind"], meta["n_samples"],
        ParameterRanges.from_dict(meta["ranges"]), meta["paths_per_price"],
        meta["seed"], meta["start_index"], **kw)


def save_training_set(ts: TrainingSet, path):
    with open(path, "w", newline="") as fh:
        fh.write("# " + json.dumps(ts.metadata, sort_keys=True) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ts.metadata.get("columns") or
                   list(quasirandom.input_names(ts.model)) + ["v"])
        for xi, v in zip(ts.inputs, ts.targets):
            w.writerow([repr(float(a)) for a in xi] + [repr(float(v))])


def load_training_set(path) -> TrainingSet:
    with open(path, newline="") as fh:
        first = fh.readline()
        if not first.startswith("#"):
            raise ValueError(f"{path}: missing '# {{metadata}}' header line")
        meta = json.loads(first[1:])
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    data = np.array([[float(a) for a in r] for r in body], dtype=np.float64)
    data = data.reshape(-1, len(header))
    start, n = meta["start_index"], meta["n_samples"]
    skipped = set(meta.get("skipped", ()))
    indices = [i for i in range(start, start + n) if i not in skipped]
    if len(indices) != len(data):
        raise ValueError(f"{path}: {len(data)} rows but metadata implies {len(indices)}")
    return TrainingSet(meta["model"], meta["kind"], data[:, :-1], data[:, -1],
                       indices, meta)
