#!/usr/bin/env python3
"""Semilog error-decay plot with the fitted per-step slope annotated.

Usage: figures/error-decay.py --csv error_series.csv --label "beta=500" --out err.png
The fitted slope of the first series is printed as `slope=<value>`.
"""

import argparse
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent))
from figlib import fit_log_slope, load_csv, parse_common


def main():
    args, labels = parse_common(argparse.ArgumentParser(description=__doc__))
    fig, ax = plt.subplots(figsize=(7, 5))
    slope0 = None
    for i, (path, label) in enumerate(zip(args.csv, labels)):
        data = load_csv(path, required=("t", "err_l2"), optional=("err_proj",))
        err = data.get("err_proj", data["err_l2"])
        steps = np.arange(len(err))
        ax.semilogy(steps, err, label=label, linewidth=1.2)
        slope, n_fit = fit_log_slope(err)
        if i == 0:
            slope0 = slope
            ax.semilogy(steps[:n_fit], np.exp(slope * steps[:n_fit]) * err[0],
                        "k--", linewidth=0.8, label=f"fit: slope {slope:.4f}/step")
    ax.set_xlabel("step n")
    ax.set_ylabel("error")
    ax.grid(alpha=0.3, which="both")
    ax.legend(loc="best")
    if slope0 is not None:
        ax.annotate(f"slope = {slope0:.4f} per step",
                    xy=(0.55, 0.9), xycoords="axes fraction")
    fig.tight_layout()
    fig.savefig(args.out, dpi=150)
    print(f"wrote {args.out}")
    print(f"slope={slope0:.10g}")


if __name__ == "__main__":
    main()
