"""Fixed-topology feedforward network and Levenberg-Marquardt training.

The surrogate maps a row of model inputs to a predicted log relative option
price.  Inputs are mapped affinely onto [-1, 1] per feature, pass through
three sigmoid hidden layers of twenty nodes and a linear output node.

Parameters are flattened layer by layer, each layer contributing its weight
matrix (row-major, shape ``(n_out, n_in)``) followed by its bias vector.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import json
import logging
import math

import numpy as np
from scipy.linalg import blas, cho_factor, cho_solve, LinAlgError

from .errors import NetworkFormatError, TrainingError, UnsupportedVersionError

log = logging.getLogger(__name__)

HIDDEN = (20, 20, 20)
FILE_MAGIC = "deepcal-network"
FILE_VERSION = 1


def sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


@dataclass
class Network:
    """Weights, biases and input normalization of one surrogate.

    The normalized input is ``(x - shift) * scale``; for min-max mapping onto
    [-1, 1] the shift is the midpoint and the scale ``2 / (hi - lo)``.
    """

    sizes: tuple
    weights: list
    biases: list
    shift: np.ndarray
    scale: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.sizes = tuple(int(s) for s in self.sizes)
        if len(self.sizes) < 2 or self.sizes[-1] != 1:
            raise ValueError(f"sizes must end in a single output node, got {self.sizes}")
        self.weights = [np.asarray(w, dtype=np.float64) for w in self.weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in self.biases]
        self.shift = np.asarray(self.shift, dtype=np.float64)
        self.scale = np.asarray(self.scale, dtype=np.float64)
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            want = (self.sizes[i + 1], self.sizes[i])
            if w.shape != want or b.shape != (want[0],):
                raise ValueError(f"layer {i} has shapes {w.shape}, {b.shape}; want {want}")
        if len(self.weights) != len(self.sizes) - 1:
            raise ValueError("one weight matrix per layer transition is required")
        if self.shift.shape != (self.dim,) or self.scale.shape != (self.dim,):
            raise ValueError("shift and scale must have one entry per input")

    @property
    def dim(self) -> int:
        return self.sizes[0]

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def params(self) -> np.ndarray:
        return np.concatenate([np.concatenate([w.ravel(), b])
                               for w, b in zip(self.weights, self.biases)])

    def with_params(self, theta) -> "Network":
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {theta.shape}")
        ws, bs, pos = [], [], 0
        for w, b in zip(self.weights, self.biases):
            ws.append(theta[pos:pos + w.size].reshape(w.shape).copy())
            pos += w.size
            bs.append(theta[pos:pos + b.size].copy())
            pos += b.size
        return Network(self.sizes, ws, bs, self.shift.copy(), self.scale.copy(),
                       dict(self.metadata))

    def normalize(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.dim:
            raise ValueError(f"network takes {self.dim} inputs, got {x.shape[-1]}")
        return (x - self.shift) * self.scale

    def __call__(self, x):
        return forward(self, x)


def minmax_normalization(x):
    """Shift and scale mapping each column of ``x`` onto [-1, 1].

    Constant columns get scale 1 so they map to 0.
    """
    x = np.asarray(x, dtype=np.float64)
    lo, hi = x.min(axis=0), x.max(axis=0)
    width = hi - lo
    scale = np.where(width > 0, 2.0 / np.where(width > 0, width, 1.0), 1.0)
    return (lo + hi) / 2.0, scale


def init_network(dim: int, seed: int, shift=None, scale=None, hidden=HIDDEN,
                 metadata=None) -> Network:
    """Weights and biases drawn uniformly from +-1/sqrt(fan_in) of their layer."""
    sizes = (int(dim),) + tuple(hidden) + (1,)
    gen = np.random.default_rng(seed)
    ws, bs = [], []
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        r = 1.0 / math.sqrt(n_in)
        ws.append(gen.uniform(-r, r, size=(n_out, n_in)))
        bs.append(gen.uniform(-r, r, size=n_out))
    shift = np.zeros(dim) if shift is None else shift
    scale = np.ones(dim) if scale is None else scale
    meta = {"init_seed": int(seed)}
    meta.update(metadata or {})
    return Network(sizes, ws, bs, shift, scale, meta)


def _activations(net, x):
    acts = [net.normalize(x)]
    for w, b in zip(net.weights[:-1], net.biases[:-1]):
        acts.append(sigmoid(acts[-1] @ w.T + b))
    return acts


def forward(net: Network, x):
    """Predicted output for one input vector (scalar) or a batch of rows."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    acts = _activations(net, np.atleast_2d(x))
    out = (acts[-1] @ net.weights[-1].T + net.biases[-1])[:, 0]
    return float(out[0]) if single else out


def jacobian(net: Network, x):
    """Derivatives of the output with respect to every parameter.

    Returns an ``(n_samples, n_params)`` array in :meth:`Network.params`
    order.  With residuals ``r = forward(x) - y`` this is also the residual
    Jacobian.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    acts = _activations(net, x)
    n = len(x)
    delta = np.ones((n, 1))
    blocks = []
    for layer in range(len(net.weights) - 1, -1, -1):
        a = acts[layer]
        gw = (delta[:, :, None] * a[:, None, :]).reshape(n, -1)
        blocks.append((gw, delta))
        if layer > 0:
            delta = (delta @ net.weights[layer]) * a * (1.0 - a)
    return np.concatenate([blk for pair in reversed(blocks) for blk in pair], axis=1)


def _normal_equations(net, x, y, chunk, threads):
    """``J^T J``, ``J^T r`` and the squared-error sum, reduced in chunk order."""
    starts = range(0, len(x), chunk)

    def part(s):
        xs, ys = x[s:s + chunk], y[s:s + chunk]
        jac = jacobian(net, xs)
        r = forward(net, xs) - ys
        # upper triangle only; mirrored once at the end
        jtj = blas.dsyrk(1.0, jac, trans=1, lower=0)
        return jtj, jac.T @ r, float(r @ r)

    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(part, starts))
    else:
        parts = [part(s) for s in starts]
    jtj, g, sse = parts[0]
    jtj = jtj.copy()
    for a, b, c in parts[1:]:
        jtj += a
        g = g + b
        sse += c
    jtj = np.triu(jtj) + np.triu(jtj, 1).T
    return jtj, g, sse


def lm_step(jtj, g, mu):
    """Solve ``(J^T J + mu I) delta = -J^T r``; None if not positive definite."""
    a = jtj + mu * np.eye(len(g))
    try:
        c = cho_factor(a, lower=False, check_finite=True)
    except (LinAlgError, ValueError):
        return None
    return cho_solve(c, -g)


def mse(net: Network, x, y) -> float:
    r = forward(net, x) - np.asarray(y, dtype=np.float64)
    return float(np.mean(r * r))


@dataclass
class TrainResult:
    network: Network
    trace: list          # (epoch, mse, mu) after each epoch; epoch 0 is the start
    best_epoch: int
    best_mse: float
    stop_reason: str

    @property
    def epochs(self) -> int:
        return self.trace[-1][0]


def train_lm(net: Network, x, y, max_epochs: int = 1000, *, mu0: float = 1e-3,
             mu_dec: float = 0.1, mu_inc: float = 10.0, mu_min: float = 1e-12,
             mu_max: float = 1e10, grad_tol: float = 1e-7, target_mse: float = None,
             chunk: int = 2048, threads: int = 1, callback=None) -> TrainResult:
    """Batch Levenberg-Marquardt on the mean squared error.

    Each epoch forms the normal equations over the whole set once, then
    raises the damping until a step lowers the error (or the damping cap is
    hit).  Stops on ``max_epochs``, the cap, a gradient norm below
    ``grad_tol`` or, if given, an MSE at or below ``target_mse``.  Returns the
    lowest-error snapshot; since only improving steps are taken that is also
    the last one.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64).ravel()
    if len(x) == 0:
        raise ValueError("training set is empty")
    if x.shape[1] != net.dim or len(x) != len(y):
        raise ValueError(f"data shape {x.shape}/{y.shape} does not fit a "
                         f"{net.dim}-input network")
    n = len(y)
    theta = net.params()
    cur = net
    err = mse(cur, x, y)
    if not math.isfinite(err):
        raise TrainingError(f"initial MSE is {err}; check inputs and targets for NaN/inf")
    mu = mu0
    trace = [(0, err, mu)]
    reason = "max_epochs"
    for epoch in range(1, max_epochs + 1):
        if target_mse is not None and err <= target_mse:
            reason = "target_mse"
            break
        jtj, g, _ = _normal_equations(cur, x, y, chunk, threads)
        if not (np.all(np.isfinite(jtj)) and np.all(np.isfinite(g))):
            raise TrainingError(f"non-finite Jacobian at epoch {epoch} (mse={err:.6g})")
        if 2.0 * np.linalg.norm(g) / n < grad_tol:
            reason = "gradient"
            break
        accepted = False
        while mu <= mu_max:
            step = lm_step(jtj, g, mu)
            if step is not None:
                trial = cur.with_params(theta + step)
                trial_err = mse(trial, x, y)
                if math.isfinite(trial_err) and trial_err < err:
                    theta, cur, err = theta + step, trial, trial_err
                    mu = max(mu * mu_dec, mu_min)
                    accepted = True
                    break
            mu *= mu_inc
        if not accepted:
            reason = "damping_cap"
            break
        trace.append((epoch, err, mu))
        if callback is not None:
            callback(epoch, err, mu)
        log.debug("epoch %d mse %.6g mu %.3g", epoch, err, mu)
    best_epoch = min(trace, key=lambda t: t[1])[0]
    cur.metadata.update({"train_epochs": trace[-1][0], "train_mse": err,
                         "stop_reason": reason})
    return TrainResult(cur, trace, best_epoch, err, reason)


def fit(x, y, max_epochs: int = 1000, seed: int = 0, metadata=None, **kw) -> TrainResult:
    """Initialise a network with min-max normalization from ``x`` and train it."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    shift, scale = minmax_normalization(x)
    net = init_network(x.shape[1], seed, shift, scale, metadata=metadata)
    return train_lm(net, x, y, max_epochs, **kw)


# -- file format -------------------------------------------------------------

def save_network(net: Network, path):
    """Write a self-describing text file; floats use ``repr`` so they round-trip."""
    def row(v):
        return " ".join(repr(float(a)) for a in np.ravel(v))

    lines = [f"{FILE_MAGIC} {FILE_VERSION}",
             "sizes " + " ".join(str(s) for s in net.sizes),
             "activations sigmoid linear",
             "metadata " + json.dumps(net.metadata, sort_keys=True),
             "shift " + row(net.shift),
             "scale " + row(net.scale)]
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        lines.append(f"weights {i} {w.shape[0]} {w.shape[1]}")
        lines.extend(row(r) for r in w)
        lines.append(f"bias {i} {b.size}")
        lines.append(row(b))
    lines.append("end")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_network(path) -> Network:
    with open(path) as fh:
        lines = fh.read().splitlines()
    pos = 0

    def take(prefix):
        nonlocal pos
        if pos >= len(lines):
            raise NetworkFormatError(f"{path}: file ends before '{prefix}'")
        line = lines[pos]
        pos += 1
        head, _, rest = line.partition(" ")
        if head != prefix:
            raise NetworkFormatError(f"{path}:{pos}: expected '{prefix}', got {line[:40]!r}")
        return rest

    def floats(text, count):
        try:
            v = np.array([float(a) for a in text.split()], dtype=np.float64)
        except ValueError as exc:
            raise NetworkFormatError(f"{path}:{pos}: {exc}") from None
        if v.size != count:
            raise NetworkFormatError(f"{path}:{pos}: expected {count} numbers, got {v.size}")
        return v

    version = take(FILE_MAGIC).strip()
    if version != str(FILE_VERSION):
        raise UnsupportedVersionError(
            f"{path}: network file version {version!r}, this reader handles {FILE_VERSION}")
    try:
        sizes = tuple(int(s) for s in take("sizes").split())
    except ValueError as exc:
        raise NetworkFormatError(f"{path}: bad sizes line: {exc}") from None
    if len(sizes) < 2:
        raise NetworkFormatError(f"{path}: need at least two layer sizes")
    if take("activations").split() != ["sigmoid", "linear"]:
        raise NetworkFormatError(f"{path}: only sigmoid/linear activations are supported")
    try:
        meta = json.loads(take("metadata"))
    except json.JSONDecodeError as exc:
        raise NetworkFormatError(f"{path}: bad metadata: {exc}") from None
    shift = floats(take("shift"), sizes[0])
    scale = floats(take("scale"), sizes[0])
    ws, bs = [], []
    for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        if take("weights").split() != [str(i), str(n_out), str(n_in)]:
            raise NetworkFormatError(f"{path}:{pos}: weight block {i} header mismatch")
        if pos + n_out > len(lines):
            raise NetworkFormatError(f"{path}: file ends inside weight block {i}")
        rows = []
        for _ in range(n_out):
            pos += 1
            rows.append(floats(lines[pos - 1], n_in))
        ws.append(np.stack(rows))
        if take("bias").split() != [str(i), str(n_out)]:
            raise NetworkFormatError(f"{path}:{pos}: bias block {i} header mismatch")
        if pos >= len(lines):
            raise NetworkFormatError(f"{path}: file ends inside bias block {i}")
        pos += 1
        bs.append(floats(lines[pos - 1], n_out))
    take("end")
    try:
        return Network(sizes, ws, bs, shift, scale, meta)
    except ValueError as exc:
        raise NetworkFormatError(f"{path}: {exc}") from None
