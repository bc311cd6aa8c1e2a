"""Lateral push while walking: stage 1 alone versus stage 1 plus the flywheel MPC.

Runs the two bundled push scenarios (or reads their traces from --from-dir),
then plots the walking path, the lateral DCM/CoM/feet histories and the
trunk roll. Needs matplotlib (``pip install wpg[plots]``).

    python scripts/fig3_push_recovery.py --out out/fig3
"""

import argparse
import sys
from pathlib import Path

from wpg.harness import read_trace, run_scenario

CASES = {"fig3_case_a": "steps only", "fig3_case_b": "steps + CoP + flywheel"}


def load_traces(out: Path, from_dir):
    traces = {}
    for name in CASES:
        if from_dir:
            path = Path(from_dir) / name / "trace.csv"
        else:
            _, summary = run_scenario(name, out / name)
            print(f"{name}: {summary['status']}, steps to resume {summary['steps_to_resume']}")
            path = out / name / "trace.csv"
        traces[name] = read_trace(path)
    return traces


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="out/fig3", help="directory for traces and the figure")
    parser.add_argument("--from-dir", default=None, help="reuse traces written by `wpg run` under this directory")
    args = parser.parse_args(argv)
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("matplotlib is required: pip install 'wpg[plots]'", file=sys.stderr)
        return 1

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    traces = load_traces(out, args.from_dir)

    fig, axes = plt.subplots(3, 2, figsize=(11, 9), sharex="row")
    for col, (name, label) in enumerate(CASES.items()):
        tr = traces[name]
        ax = axes[0, col]
        ax.plot(tr["dcm_x"], tr["dcm_y"], label="DCM")
        ax.plot(tr["com_x"], tr["com_y"], label="CoM")
        ax.plot(tr["zmp_x"], tr["zmp_y"], ".", ms=2, label="ZMP")
        ax.set_title(label)
        ax.set_xlabel("x [m]")
        ax.set_ylabel("y [m]")
        ax.legend(loc="upper left", fontsize=8)

        ax = axes[1, col]
        ax.plot(tr["t"], tr["dcm_y"], label="DCM")
        ax.plot(tr["t"], tr["com_y"], label="CoM")
        ax.plot(tr["t"], tr["zmp_y"], label="ZMP")
        ax.plot(tr["t"], tr["swing_y"], "--", lw=0.8, label="swing foot")
        ax.axvspan(2.6, 2.7, color="red", alpha=0.15)
        ax.set_xlabel("t [s]")
        ax.set_ylabel("lateral [m]")
        ax.legend(loc="lower left", fontsize=8)

        ax = axes[2, col]
        ax.plot(tr["t"], tr["roll"], label="roll")
        ax.plot(tr["t"], tr["pitch"], label="pitch")
        ax.axvspan(2.6, 2.7, color="red", alpha=0.15)
        ax.set_xlabel("t [s]")
        ax.set_ylabel("trunk angle [rad]")
        ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    path = out / "fig3_push_recovery.png"
    fig.savefig(path, dpi=120)
    print(f"figure -> {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
