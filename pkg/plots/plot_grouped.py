#!/usr/bin/env python3
"""Small-multiples grid of per-group posterior mean densities with bands.

Input: any number of density_summary CSVs (one per group); panels are laid
out on the smallest enclosing near-square grid in argument order.
"""

import argparse
import math
from pathlib import Path

import matplotlib.pyplot as plt

from plotlib import fail, load_columns, save


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("summaries", nargs="+", help="density_summary CSV paths")
    ap.add_argument("--out", required=True, help="output image path (.png/.pdf)")
    args = ap.parse_args()

    panels = []
    for path in args.summaries:
        cols = load_columns(path, ["x", "mean", "lo", "hi"],
                            optional=["x_orig", "mean_orig", "lo_orig", "hi_orig"])
        if "x_orig" in cols:
            data = (cols["x_orig"], cols["mean_orig"], cols["lo_orig"], cols["hi_orig"])
        else:
            data = (cols["x"], cols["mean"], cols["lo"], cols["hi"])
        name = Path(path).stem.replace("density_summary_", "")
        panels.append((name, data))
    if not panels:
        fail("no summaries given")

    n = len(panels)
    ncols = math.ceil(math.sqrt(n))
    nrows = math.ceil(n / ncols)
    fig, axes = plt.subplots(nrows, ncols, figsize=(3.0 * ncols, 2.4 * nrows),
                             squeeze=False, sharex=True)
    for k, (name, (x, mean, lo, hi)) in enumerate(panels):
        ax = axes[k // ncols][k % ncols]
        ax.fill_between(x, lo, hi, color="0.5", alpha=0.4, linewidth=0)
        ax.plot(x, mean, color="black", linewidth=1.0)
        ax.set_title(name, fontsize=9)
    for k in range(n, nrows * ncols):
        axes[k // ncols][k % ncols].axis("off")
    fig.tight_layout()
    save(fig, args.out)


if __name__ == "__main__":
    main()
