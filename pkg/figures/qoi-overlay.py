#!/usr/bin/env python3
"""Overlay kinetic energy, drag and lift histories from several runs.

Usage: figures/qoi-overlay.py --csv dns.csv rom.csv --label DNS ROM --out qoi.png
"""

import argparse
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

sys.path.insert(0, str(Path(__file__).resolve().parent))
from figlib import load_csv, parse_common


def main():
    args, labels = parse_common(argparse.ArgumentParser(description=__doc__))
    series = [load_csv(p, required=("t", "e_kin", "c_d", "c_l")) for p in args.csv]

    fig, axes = plt.subplots(3, 1, figsize=(8, 9), sharex=True)
    names = [("e_kin", "kinetic energy"), ("c_d", "drag coefficient"),
             ("c_l", "lift coefficient")]
    for ax, (col, title) in zip(axes, names):
        for data, label in zip(series, labels):
            ax.plot(data["t"], data[col], label=label, linewidth=1.0)
        ax.set_ylabel(title)
        ax.grid(alpha=0.3)
    axes[0].legend(loc="best")
    axes[-1].set_xlabel("t [s]")
    fig.tight_layout()
    fig.savefig(args.out, dpi=150)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
