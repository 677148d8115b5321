#!/usr/bin/env python3
"""Data histogram with the posterior mean density and credible band.

Inputs: a density_summary.csv (columns x,mean,lo,hi and, when the fit was
standardized, x_orig,mean_orig,lo_orig,hi_orig) and the data.csv it was
fitted to (column y).  Original-unit columns are preferred when present so
the histogram and the density share units.
"""

import argparse

import matplotlib.pyplot as plt

from plotlib import load_columns, save


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--summary", required=True, help="density_summary.csv path")
    ap.add_argument("--data", required=True, help="data.csv path")
    ap.add_argument("--out", required=True, help="output image path (.png/.pdf)")
    ap.add_argument("--bins", type=int, default=30)
    args = ap.parse_args()

    cols = load_columns(args.summary, ["x", "mean", "lo", "hi"],
                        optional=["x_orig", "mean_orig", "lo_orig", "hi_orig"])
    if "x_orig" in cols:
        x, mean, lo, hi = (cols[k] for k in ("x_orig", "mean_orig", "lo_orig", "hi_orig"))
    else:
        x, mean, lo, hi = (cols[k] for k in ("x", "mean", "lo", "hi"))
    y = load_columns(args.data, ["y"])["y"]

    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.hist(y, bins=args.bins, density=True, color="0.85", edgecolor="0.6")
    ax.fill_between(x, lo, hi, color="0.5", alpha=0.4, linewidth=0)
    ax.plot(x, mean, color="black", linewidth=1.5)
    ax.set_xlabel("y")
    ax.set_ylabel("density")
    fig.tight_layout()
    save(fig, args.out)


if __name__ == "__main__":
    main()
