"""Generate and train the four surrogates at a chosen scale.

The default is the long-running full-size profile (100,000 samples and
20,000 paths per price); ``--n`` and ``--paths`` scale it down.  Every step
goes through the CLI, so each output carries a replayable manifest.

    python scripts/full_scale.py --out runs/full
    python scripts/full_scale.py --out runs/desk --n 10000 --paths 5000 --models duan
"""
import argparse
import os
import sys
import time

from deepcal import cli


def step(argv):
    t0 = time.perf_counter()
    code = cli.main([str(a) for a in argv])
    if code:
        sys.exit(code)
    print(f"  ({time.perf_counter() - t0:.0f} s)")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("--n", type=int, default=100_000)
    ap.add_argument("--paths", type=int, default=20_000)
    ap.add_argument("--epochs", type=int, default=1000)
    ap.add_argument("--cts-epochs", type=int, default=300)
    ap.add_argument("--models", default="duan,cts")
    ap.add_argument("--profile", default="calibration")
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--threads", type=int, default=None)
    args = ap.parse_args()

    os.makedirs(args.out, exist_ok=True)
    threads = [] if args.threads is None else ["--threads", args.threads]
    for model in args.models.split(","):
        root = os.path.join(args.out, model)
        print(f"{model}: generating {args.n} x {args.paths}")
        step(["gen-data", "--model", model, "--kind", "both", "--n", args.n, "--paths", args.paths,
              "--seed", args.seed, "--profile", args.profile, "--out", root + ".csv", *threads])
        epochs = args.epochs if model == "duan" else args.cts_epochs
        for kind in ("call", "put"):
            print(f"{model} {kind}: training for up to {epochs} epochs")
            step(["train", "--data", f"{root}_{kind}.csv", "--out", f"{root}_{kind}.net",
                  "--max-epochs", epochs, "--threads", 1])


if __name__ == "__main__":
    main()
