#!/usr/bin/env python3
"""Semilog decay plot of POD eigenvalues.

Usage: figures/eig-decay.py --csv eigenvalues.csv --label Re100 --out eig.png
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
    fig, ax = plt.subplots(figsize=(7, 5))
    for path, label in zip(args.csv, labels):
        data = load_csv(path, required=("k", "lambda"))
        ax.semilogy(data["k"], data["lambda"], "o-", label=label, markersize=4)
    ax.set_xlabel("mode index k")
    ax.set_ylabel(r"eigenvalue $\lambda_k$")
    ax.grid(alpha=0.3, which="both")
    ax.legend(loc="best")
    fig.tight_layout()
    fig.savefig(args.out, dpi=150)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
