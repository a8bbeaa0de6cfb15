"""ANN against Monte Carlo pricing time for chains of several sizes.

Untrained networks stand in when none are given: evaluation cost does not
depend on the weights.

    python scripts/speed_table.py --out speed.csv --sizes 100,558,2000
"""
import argparse
import csv
import os
import tempfile

from deepcal import cli


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", required=True)
    ap.add_argument("--sizes", default="100,558,2000")
    ap.add_argument("--paths", type=int, default=20_000)
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--nets", nargs="*", default=[],
                    help="extra benchmark flags, e.g. --duan-call-net a.net --duan-put-net b.net")
    args = ap.parse_args()

    rows = []
    with tempfile.TemporaryDirectory() as tmp:
        for n in (int(s) for s in args.sizes.split(",")):
            path = os.path.join(tmp, f"bench_{n}.csv")
            code = cli.main(["benchmark", "--n-quotes", str(n), "--paths", str(args.paths),
                             "--repeats", str(args.repeats), "--out", path, *args.nets])
            if code:
                raise SystemExit(code)
            with open(path, newline="") as fh:
                rows.extend(csv.DictReader(fh))
    with open(args.out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    print(f"{'model':6} {'quotes':>7} {'MCS s':>9} {'ANN s':>9} {'speedup':>8}")
    for r in rows:
        print(f"{r['model']:6} {r['n_quotes']:>7} {float(r['mcs_seconds']):9.4f} "
              f"{float(r['ann_seconds']):9.5f} {float(r['speedup']):8.1f}")


if __name__ == "__main__":
    main()
