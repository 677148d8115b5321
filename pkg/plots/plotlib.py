"""Shared helpers for the plot scripts: schema-checked CSV loading and saving.

The scripts consume only the documented CSV schemas of the fitting CLI, so
they work against any producer of those files.
"""

import csv
import sys

import matplotlib

matplotlib.use("Agg")

PNG_METADATA = {"Software": "msbmix-plots"}  # keeps output byte-stable


def fail(message):
    print(f"error: {message}", file=sys.stderr)
    sys.exit(1)


def load_columns(path, required, optional=()):
    """Read a headed CSV and return {column: list of floats}.

    Exits nonzero when the file is empty, a required column is missing, or a
    value fails to parse.
    """
    try:
        f = open(path, newline="")
    except OSError as exc:
        fail(str(exc))
    with f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None:
            fail(f"{path}: empty file")
        missing = [c for c in required if c not in reader.fieldnames]
        if missing:
            fail(f"{path}: missing columns {missing}")
        cols = {c: [] for c in (*required, *optional) if c in reader.fieldnames}
        for row in reader:
            for c in cols:
                try:
                    cols[c].append(float(row[c]))
                except (TypeError, ValueError):
                    fail(f"{path}: non-numeric value in column {c!r}: {row[c]!r}")
    if not next(iter(cols.values()), None):
        fail(f"{path}: no data rows")
    return cols


def save(fig, out_path):
    fmt = "pdf" if str(out_path).lower().endswith(".pdf") else "png"
    kwargs = {"metadata": PNG_METADATA} if fmt == "png" else {}
    fig.savefig(out_path, format=fmt, dpi=150, **kwargs)
    print(f"wrote {out_path}")
