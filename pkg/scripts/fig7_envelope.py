"""Polar plot of the largest recoverable push per direction for both controllers.

Reads ``envelope.csv`` as written by ``wpg envelope`` or runs the sweep when
the file is missing. Needs matplotlib (``pip install wpg[plots]``).

    wpg envelope --out out/envelope
    python scripts/fig7_envelope.py --csv out/envelope/envelope.csv
"""

import argparse
import csv
import math
import sys
from pathlib import Path

from wpg.harness import run_envelope


def read_envelope(path: Path):
    with path.open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    psi = [float(r["psi"]) for r in rows]
    cols = {m: [float(r[f"f_max_{m}"]) if r[f"f_max_{m}"] else math.nan for r in rows] for m in ("stage1", "full")}
    return psi, cols


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--csv", default="out/envelope/envelope.csv")
    parser.add_argument("--dirs", type=int, default=16, help="directions when the sweep has to be run")
    parser.add_argument("--out", default=None, help="figure path (default: next to the csv)")
    args = parser.parse_args(argv)
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("matplotlib is required: pip install 'wpg[plots]'", file=sys.stderr)
        return 1

    path = Path(args.csv)
    if not path.is_file():
        print(f"{path} not found; running the sweep ({args.dirs} directions)")
        path.parent.mkdir(parents=True, exist_ok=True)
        run_envelope(psi_count=args.dirs).write_csv(path)
    psi, cols = read_envelope(path)

    fig = plt.figure(figsize=(6, 6))
    ax = fig.add_subplot(projection="polar")
    closed = psi + psi[:1]
    for mode, label in (("stage1", "steps only"), ("full", "steps + CoP + flywheel")):
        values = cols[mode] + cols[mode][:1]
        ax.plot(closed, values, marker="o", label=label)
    ax.set_theta_zero_location("N")
    ax.set_title("largest recovered push [N], 0.1 s, left-stance step start")
    ax.legend(loc="lower right", fontsize=8)
    target = Path(args.out) if args.out else path.with_name("fig7_envelope.png")
    fig.savefig(target, dpi=120)
    print(f"figure -> {target}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
