"""Per-epoch MSE curves of trained networks, as plot-ready data.

Reads the ``*.trace.csv`` files written by ``deepcal train`` and merges them
into one long-format CSV (``network, epoch, mse, best_so_far``).  With
``--png`` and matplotlib installed it also draws the curves on a log scale.

    python scripts/training_curves.py runs/desk/duan_call.trace.csv \
        runs/desk/duan_put.trace.csv --out curves.csv --png curves.png
"""
import argparse
import csv
import os


def read_trace(path):
    with open(path, newline="") as fh:
        return [(int(r["epoch"]), float(r["mse"])) for r in csv.DictReader(fh)]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("traces", nargs="+")
    ap.add_argument("--out", required=True)
    ap.add_argument("--png")
    args = ap.parse_args()

    curves = {}
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["network", "epoch", "mse", "best_so_far"])
        for path in args.traces:
            name = os.path.basename(path).removesuffix(".trace.csv")
            best = float("inf")
            curves[name] = read_trace(path)
            for epoch, mse in curves[name]:
                best = min(best, mse)
                w.writerow([name, epoch, repr(mse), repr(best)])
            e, m = min(curves[name], key=lambda t: t[1])
            print(f"{name}: minimum mse {m:.4g} at epoch {e}")

    if args.png:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
        fig, ax = plt.subplots(figsize=(6, 4))
        for name, pts in curves.items():
            ax.semilogy([p[0] for p in pts], [p[1] for p in pts], label=name)
        ax.set_xlabel("epoch")
        ax.set_ylabel("MSE")
        ax.legend()
        fig.tight_layout()
        fig.savefig(args.png, dpi=120)


if __name__ == "__main__":
    main()
