"""Command-line interface: ``deepcal <subcommand> ...``.

Every run writes ``<output>.manifest.json`` next to its main output with the
full effective configuration; ``deepcal --from-manifest FILE`` replays it.

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 data
failure.  Worker threads default to ``DEEPCAL_THREADS`` or the core count;
results never depend on the thread count.
"""
import argparse
import csv
import json
import logging
import math
import os
import sys
import time

import numpy as np

from . import __version__, calibration, dataset, fnn, greeks, quasirandom
from .errors import (ChainError, DeepCalError, InvalidParamsError, NetworkFormatError)
from .garch_mcs import DAYS_PER_YEAR, DEFAULT_PATHS

log = logging.getLogger("deepcal")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_DATA = 0, 2, 3, 4


class ConfigError(Exception):
    pass


class DataError(Exception):
    pass


def resolve_threads(value=None) -> int:
    if value is None:
        env = os.environ.get("DEEPCAL_THREADS")
        if env:
            try:
                value = int(env)
            except ValueError:
                raise ConfigError(f"DEEPCAL_THREADS must be an integer, got {env!r}") from None
        else:
            value = os.cpu_count() or 1
    if value < 1:
        raise ConfigError("thread count must be >= 1")
    return int(value)


def _float_list(text):
    try:
        return [float(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}")


def _int_list(text):
    try:
        return [int(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of integers, got {text!r}")


def _ranges(args):
    if getattr(args, "ranges", None):
        try:
            return quasirandom.load_ranges(args.ranges)
        except OSError as exc:
            raise DataError(str(exc)) from None
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    try:
        return quasirandom.get_profile(args.profile)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _write_manifest(out_path, args, argv, extra=None):
    cfg = {k: v for k, v in vars(args).items() if k not in ("func", "from_manifest")}
    manifest = {"deepcal_version": __version__, "subcommand": args.command,
                "config": cfg, "argv": list(argv)}
    manifest.update(extra or {})
    with open(str(out_path) + ".manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


# -- shared loaders ----------------------------------------------------------

def _load_net(path):
    try:
        return fnn.load_network(path)
    except OSError as exc:
        raise DataError(str(exc)) from None


def _read_params_file(path, model):
    """Parameter vector from the first row of a calibration result file."""
    try:
        with open(path, newline="") as fh:
            row = next(csv.DictReader(fh))
    except (OSError, StopIteration) as exc:
        raise DataError(f"{path}: cannot read a result row ({exc})") from None
    try:
        names = calibration.param_names(model)
        return [float(row[n]) for n in names]
    except (KeyError, ValueError) as exc:
        raise DataError(f"{path}: missing or bad parameter column {exc}") from None


def _params(args):
    if args.params is not None and args.params_file is not None:
        raise ConfigError("give --params or --params-file, not both")
    if args.params_file is not None:
        theta = _read_params_file(args.params_file, args.model)
    elif args.params is not None:
        theta = args.params
    else:
        raise ConfigError("model parameters are required (--params or --params-file)")
    want = len(calibration.param_names(args.model))
    if len(theta) != want:
        raise ConfigError(f"{args.model} takes {want} parameters "
                          f"({', '.join(calibration.param_names(args.model))}), got {len(theta)}")
    return np.array(theta, dtype=np.float64)


def _pricer(args, model=None):
    model = model or args.model
    if args.pricer == "mcs":
        return calibration.McsPricer(model, args.paths, args.seed)
    if not (args.call_net and args.put_net):
        raise ConfigError("the ANN pricer needs --call-net and --put-net")
    try:
        return calibration.AnnPricer(_load_net(args.call_net), _load_net(args.put_net), model)
    except ValueError as exc:
        if isinstance(exc, NetworkFormatError):
            raise
        raise ConfigError(str(exc)) from None


def _chain(path, date=None):
    try:
        return calibration.ingest_chain(path, date)
    except OSError as exc:
        raise DataError(str(exc)) from None


# -- subcommands -------------------------------------------------------------

def cmd_gen_data(args, argv):
    ranges = _ranges(args)
    kinds = ("call", "put") if args.kind == "both" else (args.kind,)
    t0 = time.perf_counter()
    sets = dataset.generate_training_sets(
        args.model, kinds, args.n, ranges, args.paths, args.seed, args.start_index,
        threads=args.threads, batch_size=args.batch_size)
    elapsed = time.perf_counter() - t0
    for kind, ts in sets.items():
        out = args.out
        if len(kinds) > 1:
            root, ext = os.path.splitext(args.out)
            out = f"{root}_{kind}{ext or '.csv'}"
        dataset.save_training_set(ts, out)
        _write_manifest(out, args, argv)
        skipped = len(ts.metadata["skipped"])
        print(f"{kind}: wrote {len(ts)} samples to {out}; skipped {skipped} of {args.n} "
              f"({100.0 * skipped / args.n:.2f}%) in {elapsed:.1f} s")
    return EXIT_OK


def cmd_train(args, argv):
    try:
        ts = dataset.load_training_set(args.data)
    except OSError as exc:
        raise DataError(str(exc)) from None
    except (ValueError, KeyError) as exc:
        raise DataError(f"{args.data}: {exc}") from None
    meta = {"model": ts.model, "kind": ts.kind, "data": os.path.basename(args.data)}
    result = fnn.fit(ts.inputs, ts.targets, args.max_epochs, seed=args.seed, metadata=meta,
                     target_mse=args.target_mse, threads=args.threads)
    fnn.save_network(result.network, args.out)
    trace = args.trace or os.path.splitext(args.out)[0] + ".trace.csv"
    with open(trace, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "mse", "mu"])
        for epoch, err, mu in result.trace:
            w.writerow([epoch, repr(err), repr(mu)])
    _write_manifest(args.out, args, argv, {"trace": trace})
    print(f"trained {ts.model} {ts.kind} network on {len(ts)} samples: "
          f"mse {result.best_mse:.6g} after {result.epochs} epochs ({result.stop_reason}); "
          f"wrote {args.out} and {trace}")
    return EXIT_OK


def cmd_calibrate(args, argv):
    chain = _chain(args.chain, args.date)
    pricer = _pricer(args)
    box = calibration.ParameterBox.from_ranges(args.model, _ranges(args))
    initial = None
    if args.initial is not None:
        initial = np.array(args.initial)
        if len(initial) != len(box.lower):
            raise ConfigError(f"--initial needs {len(box.lower)} values")
    res = calibration.calibrate(chain, args.model, pricer, initial, box,
                                n_starts=args.starts, max_nfev=args.max_nfev)
    calibration.write_results([res], args.out)
    _write_manifest(args.out, args, argv, {"n_quotes": len(chain), "dropped": chain.dropped,
                                           "starts": res.starts})
    names = ("theta", "kappa", "xi", "zeta", "sigma0", "alpha", "lambda_plus", "lambda_minus")
    vals = res.table_row()
    shown = ", ".join(f"{n}={v:.6g}" for n, v in zip(names, vals[:-1]))
    print(f"{args.model}/{res.pricer} on {len(chain)} quotes: {shown}; "
          f"rel-RMSE {res.rel_rmse:.6g} ({res.n_evals} evaluations, "
          f"{res.flagged} out-of-box quotes)")
    return EXIT_OK


def cmd_price(args, argv):
    theta = _params(args)
    pricer = _pricer(args)
    if args.chain:
        rows = calibration.read_chain_rows(args.chain)
        if not rows:
            raise DataError(f"{args.chain}: no quotes")
        spot = np.array([r["spot"] for r in rows])
        rate = np.array([r["rate"] for r in rows])
        strike = np.array([r["strike"] for r in rows])
        days = np.array([r["maturity_days"] for r in rows])
        kinds = np.array([r["kind"] for r in rows])
    else:
        if None in (args.spot, args.strike, args.days):
            raise ConfigError("give --chain or all of --spot, --strike and --days")
        grid = [(K, T) for T in args.days for K in args.strike]
        strike = np.array([g[0] for g in grid], dtype=float)
        days = np.array([g[1] for g in grid])
        spot = np.full(len(grid), args.spot)
        rate = np.full(len(grid), args.rate)
        kinds = np.full(len(grid), args.kind)
    tau = days / DAYS_PER_YEAR
    m = strike * np.exp(-rate * tau) / spot
    v, flags = pricer.log_values(m, tau, kinds, theta)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["spot", "rate", "strike", "maturity_days", "kind", "m", "tau",
                    "log_rel_price", "price", "flagged"])
        for row in zip(spot, rate, strike, days, kinds, m, tau, v, spot * np.exp(v), flags):
            w.writerow([repr(float(row[0])), repr(float(row[1])), repr(float(row[2])),
                        int(row[3]), row[4]] + [repr(float(a)) for a in row[5:9]]
                       + [int(row[9])])
    _write_manifest(args.out, args, argv)
    print(f"priced {len(m)} options with the {pricer.tag} pricer; wrote {args.out}")
    return EXIT_OK


def cmd_greeks(args, argv):
    theta = _params(args)
    if args.pricer == "mcs":
        log.warning("Monte Carlo Greeks are noise-dominated except in degenerate cases")
    pricer = _pricer(args)
    kinds = ("call", "put") if args.kind == "both" else (args.kind,)
    reports = []
    for T in args.days:
        for K in args.strike:
            for kind in kinds:
                reports.append(greeks.greeks(args.spot, K, T / DAYS_PER_YEAR, args.rate,
                                             theta, kind, pricer))
    greeks.write_report(reports, args.out)
    _write_manifest(args.out, args, argv)
    for r in reports:
        print(f"{r.kind} K={r.strike:g} tau={r.tau:.4f}: delta {r.delta:.4f} "
              f"gamma {r.gamma:.4e} theta {r.theta:.4f} rho {r.rho:.4f}")
    print(f"wrote {args.out} (theta is dV/dtau per year)")
    return EXIT_OK


def _benchmark_chain(args):
    if args.chain:
        try:
            return calibration.ingest_chain(args.chain, args.date)
        except ChainError as exc:
            log.warning("no usable quotes (%s); emitting an empty table", exc)
            return None
    strikes = np.linspace(0.8, 1.2, max(1, math.ceil(args.n_quotes / 10))) * 100.0
    days = np.linspace(calibration.MIN_DAYS, calibration.MAX_DAYS, 10).round().astype(int)
    quotes = [calibration.OptionQuote(float(K), int(T), 1.0, 1.0,
                                      "call" if K * math.exp(-0.01 * T / DAYS_PER_YEAR) >= 100.0
                                      else "put")
              for T in days for K in strikes][:args.n_quotes]
    return calibration.OptionChain("synthetic", 100.0, 0.01, quotes)


_BENCH_THETA = {
    "duan": [5e-6, 0.25, 0.75, 0.4, 0.01],
    "cts": [5e-6, 0.25, 0.75, 0.4, 0.01, 1.5, 5.0, 5.0],
}


def _time(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cmd_benchmark(args, argv):
    chain = _benchmark_chain(args)
    rows = []
    if chain is not None and len(chain):
        m, tau = chain.moneyness, chain.tau
        kinds = calibration.otm_kinds(m)
        for model in args.models:
            nets = {"call": getattr(args, f"{model}_call_net"),
                    "put": getattr(args, f"{model}_put_net")}
            dim = len(quasirandom.input_names(model))
            loaded = {}
            for kind, path in nets.items():
                # timing does not depend on the weights; untrained nets stand in
                loaded[kind] = _load_net(path) if path else fnn.init_network(dim, args.seed)
            ann = calibration.AnnPricer(loaded["call"], loaded["put"], model)
            mcs = calibration.McsPricer(model, args.paths, args.seed)
            theta = _BENCH_THETA[model]
            mcs.log_values(m[:1], tau[:1], kinds[:1], theta)    # compile and build tables
            t_mcs = _time(lambda: mcs.log_values(m, tau, kinds, theta), args.repeats)
            t_ann = _time(lambda: ann.log_values(m, tau, kinds, theta), args.repeats)
            rows.append([chain.date, model, len(chain), args.paths, t_mcs, t_ann, t_mcs / t_ann])
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "model", "n_quotes", "paths", "mcs_seconds", "ann_seconds", "speedup"])
        for r in rows:
            w.writerow(r[:4] + [f"{r[4]:.6f}", f"{r[5]:.6f}", f"{r[6]:.2f}"])
            print(f"{r[1]}: {r[2]} quotes, MCS {r[4]:.4f} s, ANN {r[5]:.4f} s ({r[6]:.1f}x)")
    _write_manifest(args.out, args, argv)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_plot_data(args, argv):
    chain = _chain(args.chain, args.date)
    pricer = _pricer(args)
    theta = _params(args)
    sel = [i for i, q in enumerate(chain.quotes) if args.days is None or q.maturity_days == args.days]
    if not sel:
        raise DataError(f"no quotes with maturity {args.days} days")
    m, tau = chain.moneyness[sel], chain.tau[sel]
    kinds = chain.kinds[sel]
    v, _ = pricer.log_values(m, tau, kinds, theta)
    model_prices = chain.spot * np.exp(v)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["maturity_days", "kind", "strike", "market_mid", "model_price",
                    "iv_market", "iv_model"])
        for j, i in enumerate(sel):
            q = chain.quotes[i]
            t = q.maturity_days / DAYS_PER_YEAR
            iv_mkt = calibration.implied_vol(q.mid, chain.spot, q.strike, t, chain.rate, q.kind)
            iv_mod = calibration.implied_vol(model_prices[j], chain.spot, q.strike, t,
                                             chain.rate, q.kind)
            w.writerow([q.maturity_days, q.kind, repr(q.strike), repr(q.mid),
                        repr(float(model_prices[j])), repr(iv_mkt), repr(iv_mod)])
    _write_manifest(args.out, args, argv)
    print(f"wrote {len(sel)} rows to {args.out}")
    return EXIT_OK


# -- parser ------------------------------------------------------------------

def _add_pricer_args(p, default="ann"):
    p.add_argument("--pricer", choices=("ann", "mcs"), default=default)
    p.add_argument("--call-net", help="trained call network (ANN pricer)")
    p.add_argument("--put-net", help="trained put network (ANN pricer)")
    p.add_argument("--paths", type=int, default=DEFAULT_PATHS, help="paths for the MCS pricer")
    p.add_argument("--seed", type=int, default=0, help="MCS seed (fixed for the whole run)")


def _add_params_args(p):
    p.add_argument("--params", type=_float_list,
                   help="kappa,psi,gamma,theta,sigma0[,alpha,lambda_plus,lambda_minus]")
    p.add_argument("--params-file", help="calibration result CSV (first row is used)")


def build_parser():
    parser = argparse.ArgumentParser(prog="deepcal", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"deepcal {__version__}")
    parser.add_argument("--from-manifest", metavar="FILE",
                        help="rerun the command recorded in a manifest")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command")

    def common(p):
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (default: DEEPCAL_THREADS or core count)")

    p = sub.add_parser("gen-data", help="generate a Monte Carlo training set")
    p.add_argument("--model", choices=("duan", "cts"), required=True)
    p.add_argument("--kind", choices=("call", "put", "both"), required=True)
    p.add_argument("--n", type=int, required=True, help="number of Halton points")
    p.add_argument("--paths", type=int, default=5000, help="paths per price")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--start-index", type=int, default=1)
    p.add_argument("--profile", default="table1", help="parameter-range profile")
    p.add_argument("--ranges", help="ranges file overriding --profile")
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a surrogate network with Levenberg-Marquardt")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--trace", help="MSE trace CSV (default: <out stem>.trace.csv)")
    p.add_argument("--max-epochs", type=int, default=1000)
    p.add_argument("--target-mse", type=float, default=None)
    p.add_argument("--seed", type=int, default=0, help="weight initialization seed")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("calibrate", help="fit model parameters to an option chain")
    p.add_argument("--chain", required=True)
    p.add_argument("--date")
    p.add_argument("--model", choices=("duan", "cts"), required=True)
    _add_pricer_args(p)
    p.add_argument("--profile", default="table1", help="bounds profile")
    p.add_argument("--ranges", help="bounds file overriding --profile")
    p.add_argument("--starts", type=int, default=5)
    p.add_argument("--initial", type=_float_list)
    p.add_argument("--max-nfev", type=int, default=None)
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("price", help="price options with either pricer")
    p.add_argument("--model", choices=("duan", "cts"), required=True)
    _add_pricer_args(p)
    _add_params_args(p)
    p.add_argument("--chain", help="price every quote of a chain file")
    p.add_argument("--spot", type=float)
    p.add_argument("--strike", type=_float_list)
    p.add_argument("--days", type=_int_list)
    p.add_argument("--rate", type=float, default=0.0)
    p.add_argument("--kind", choices=("call", "put"), default="call")
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_price)

    p = sub.add_parser("greeks", help="finite-difference Greeks (theta is dV/dtau)")
    p.add_argument("--model", choices=("duan", "cts"), required=True)
    _add_pricer_args(p)
    _add_params_args(p)
    p.add_argument("--spot", type=float, required=True)
    p.add_argument("--strike", type=_float_list, required=True)
    p.add_argument("--days", type=_int_list, required=True)
    p.add_argument("--rate", type=float, default=0.0)
    p.add_argument("--kind", choices=("call", "put", "both"), default="both")
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_greeks)

    p = sub.add_parser("benchmark", help="time ANN against MCS pricing of a chain")
    p.add_argument("--chain", help="chain file (default: synthetic chain)")
    p.add_argument("--date")
    p.add_argument("--n-quotes", type=int, default=558)
    p.add_argument("--models", type=lambda s: s.split(","), default=["duan", "cts"])
    for model in ("duan", "cts"):
        for kind in ("call", "put"):
            p.add_argument(f"--{model}-{kind}-net")
    p.add_argument("--paths", type=int, default=DEFAULT_PATHS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("plot-data", help="market and model prices with implied vols")
    p.add_argument("--chain", required=True)
    p.add_argument("--date")
    p.add_argument("--days", type=int, help="maturity slice in business days (default: all)")
    p.add_argument("--model", choices=("duan", "cts"), required=True)
    _add_pricer_args(p)
    _add_params_args(p)
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_plot_data)
    return parser


def _run(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    if args.from_manifest:
        if args.command:
            raise ConfigError("--from-manifest takes no subcommand")
        try:
            with open(args.from_manifest) as fh:
                manifest = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"{args.from_manifest}: {exc}") from None
        return _run(manifest["argv"])
    if not args.command:
        parser.print_help()
        return EXIT_CONFIG
    for name in ("n", "paths", "max_epochs", "starts", "n_quotes", "repeats"):
        if getattr(args, name, 1) is not None and getattr(args, name, 1) < 1:
            raise ConfigError(f"--{name.replace('_', '-')} must be >= 1")
    args.threads = resolve_threads(args.threads)
    return args.func(args, argv)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        return _run(argv)
    except SystemExit as exc:          # argparse usage errors
        return exc.code if isinstance(exc.code, int) else EXIT_CONFIG
    except (ConfigError, InvalidParamsError) as exc:
        print(f"deepcal: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, ChainError, NetworkFormatError, FileNotFoundError) as exc:
        print(f"deepcal: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DeepCalError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"deepcal: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"deepcal: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
