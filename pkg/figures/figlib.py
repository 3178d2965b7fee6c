"""Shared CSV loading and slope fitting for the figure scripts.

The scripts consume only the documented CSV schemas:
  qoi:    t,e_kin,c_d,c_l
  eig:    k,lambda
  error:  t,err_l2,err_proj   (err_proj optional)
"""

from __future__ import annotations

import csv

import numpy as np


class SchemaError(ValueError):
    """CSV header does not match the documented schema."""


def load_csv(path, required, optional=()):
    """Read columns by name; a missing required column raises SchemaError."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise SchemaError(f"{path}: empty file")
        header = [h.strip() for h in header]
        for col in required:
            if col not in header:
                raise SchemaError(f"{path}: missing column {col!r} "
                                  f"(found {', '.join(header)})")
        rows = [row for row in reader if row]
    idx = {name: header.index(name) for name in (*required, *optional)
           if name in header}
    out = {}
    for name, i in idx.items():
        try:
            out[name] = np.array([float(r[i]) for r in rows])
        except (ValueError, IndexError) as exc:
            raise SchemaError(f"{path}: bad value in column {name!r}: {exc}") from exc
    return out


def fit_log_slope(values):
    """Least-squares slope of log(values) per step, over the decaying segment.

    The segment runs from the start until the series first drops below three
    times its floor (median of the trailing fifth), mirroring the pipeline's
    decay diagnostic.
    """
    e = np.asarray(values, dtype=float)
    pos = e > 0
    if pos.sum() < 2:
        raise ValueError("need at least two positive values to fit a slope")
    floor = np.median(e[pos][-max(1, int(len(e) * 0.2)):])
    below = np.nonzero(e < 3.0 * floor)[0]
    end = int(below[0]) if len(below) else len(e)
    end = max(end, 2)
    seg = e[:end]
    if np.any(seg <= 0):
        seg = e[pos][:end]
    n = np.arange(len(seg))
    slope = float(np.polyfit(n, np.log(seg), 1)[0])
    return slope, len(seg)


def parse_common(parser):
    parser.add_argument("--csv", nargs="+", required=True, help="input CSV file(s)")
    parser.add_argument("--label", nargs="*", default=None, help="one label per CSV")
    parser.add_argument("--out", required=True, help="output image path")
    args = parser.parse_args()
    labels = args.label or [f"series {i + 1}" for i in range(len(args.csv))]
    if len(labels) != len(args.csv):
        parser.error(f"{len(args.csv)} CSV inputs but {len(labels)} labels")
    return args, labels
