#!/usr/bin/env python3
"""Prior total weight per scale, one line per discount value.

Input: weights_curve.csv with columns delta,s,expected_total_weight
(as produced by `msm prior-curve`).
"""

import argparse

import matplotlib.pyplot as plt

from plotlib import fail, load_columns, save

LINESTYLES = ["-", "--", ":", "-."]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--curve", required=True, help="weights_curve.csv path")
    ap.add_argument("--out", required=True, help="output image path (.png/.pdf)")
    args = ap.parse_args()

    cols = load_columns(args.curve, ["delta", "s", "expected_total_weight"])
    by_delta = {}
    for d, s, w in zip(cols["delta"], cols["s"], cols["expected_total_weight"]):
        by_delta.setdefault(d, []).append((s, w))
    if not by_delta:
        fail("no curves found")

    fig, ax = plt.subplots(figsize=(7, 4.5))
    for i, (d, pts) in enumerate(sorted(by_delta.items())):
        pts.sort()
        ax.plot([p[0] for p in pts], [p[1] for p in pts],
                LINESTYLES[i % len(LINESTYLES)], color="black",
                label=f"discount {d:g}")
    ax.set_xlabel("scale")
    ax.set_ylabel("prior total weight")
    ax.legend(frameon=False)
    fig.tight_layout()
    save(fig, args.out)


if __name__ == "__main__":
    main()
