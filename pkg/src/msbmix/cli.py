"""Command-line surface: fitting, calibration, simulation, evaluation, recipes.

All file I/O lives here.  Data travels as headed CSV (column ``y``, plus
``group`` for grouped fits), configuration and diagnostics as JSON.  Exit
codes: 0 success, 2 usage or input error, 1 internal error; errors are also
emitted as a JSON object on stderr.
"""

from __future__ import annotations

import csv
import importlib.resources
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import click
import numpy as np

from . import __version__
from .basemeasures import LocationBase, ScaleBase
from .density import (
    Grid,
    default_grid,
    kl_divergence,
    l1_distance,
    lpml_from_log,
    summarize,
)
from .rng import RandomSource
from .sampler import GibbsConfig, run_fit, run_fit_grouped
from .simdata import StandardizationRecord, scenario, standardize
from .tree import node_of_flat
from .weights import MsbHyper, calibrate_alpha, expected_scale_totals

SCHEMA_VERSION = 1

# Default scenario mapping for the four-scenario benchmark recipe; the
# identifiers are configurable through the experiment options.
DEFAULT_SCENARIO_TABLE = {
    "S1": "mw_02",
    "S2": "mw_08",
    "S3": "mw_10",
    "S4": "mw_12",
}


class UsageError(click.ClickException):
    exit_code = 2


def _fail(kind, message):
    err = UsageError(message) if kind == "usage" else click.ClickException(message)
    raise err


def _emit_error_json(message, code):
    print(json.dumps({"error": message, "exit_code": code}), file=sys.stderr)


# ----------------------------------------------------------------------
# configuration
# ----------------------------------------------------------------------


@dataclass
class FitConfig:
    """Serialized fit configuration (JSON, ``schema_version`` 1)."""

    seed: int = 0
    iterations: int = 1000
    burn_in: int = 200
    thin: int = 1
    max_depth: int = 6
    alpha: float | None = None
    target_expected_scale: float | None = 3.0
    delta: float = 0.5
    beta: float = 1.0
    mu0: float = 0.0
    kappa0: float = 1.0
    k: float = 64.0
    lam: float = 64.0
    standardize: bool = True
    grid_points: int = 512
    grid_lo: float | None = None
    grid_hi: float | None = None
    keep_states: bool = False

    def __post_init__(self):
        if (self.alpha is None) == (self.target_expected_scale is None):
            raise ValueError("exactly one of alpha or target_expected_scale must be supplied")
        if self.iterations <= self.burn_in:
            raise ValueError("iterations must exceed burn_in")
        if self.thin < 1:
            raise ValueError("thin must be at least 1")
        if not 0.0 <= self.delta < 1.0:
            raise ValueError("delta must lie in [0, 1)")
        if self.alpha is not None and not self.alpha > -self.delta:
            raise ValueError("alpha must exceed -delta")
        if self.beta <= 0 or self.kappa0 <= 0 or self.lam <= 0:
            raise ValueError("beta, kappa0 and lambda must be positive")
        if self.k <= 1:
            raise ValueError("inverse-gamma shape k must exceed 1")
        if not 0 <= self.max_depth <= 16:
            raise ValueError("max_depth must lie in [0, 16]")
        if self.grid_points < 2:
            raise ValueError("grid needs at least 2 points")

    @classmethod
    def from_json(cls, path, overrides=None):
        raw = {}
        if path is not None:
            with open(path) as f:
                raw = json.load(f)
            version = raw.pop("schema_version", SCHEMA_VERSION)
            if version != SCHEMA_VERSION:
                raise ValueError(f"unsupported config schema_version {version}")
            raw.pop("comment", None)
            if "lambda" in raw:
                raw["lam"] = raw.pop("lambda")
        if overrides:
            for key, value in overrides.items():
                if value is not None:
                    raw[key] = value
            # a CLI alpha override replaces the default calibration target
            if overrides.get("alpha") is not None and overrides.get("target_expected_scale") is None:
                raw["target_expected_scale"] = None
        known = set(cls.__dataclass_fields__)
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**raw)

    def to_json_dict(self):
        out = {"schema_version": SCHEMA_VERSION}
        for name in self.__dataclass_fields__:
            val = getattr(self, name)
            out["lambda" if name == "lam" else name] = val
        return out

    def resolve_alpha(self):
        if self.alpha is not None:
            return float(self.alpha)
        return calibrate_alpha(self.delta, self.target_expected_scale)

    def gibbs_config(self, grid=None):
        alpha = self.resolve_alpha()
        return alpha, GibbsConfig(
            hyper=MsbHyper(alpha=alpha, delta=self.delta, beta=self.beta,
                           max_depth=self.max_depth),
            location=LocationBase(self.mu0, self.kappa0),
            scalebase=ScaleBase(self.k, self.lam),
            iterations=self.iterations,
            burn_in=self.burn_in,
            thin=self.thin,
            seed=self.seed,
            grid=grid,
            keep_states=self.keep_states,
        )


# ----------------------------------------------------------------------
# file I/O helpers
# ----------------------------------------------------------------------


def _fmt(x):
    return f"{float(x):.12g}"


def read_data_csv(path, want_group=False):
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or "y" not in reader.fieldnames:
            _fail("usage", f"{path}: expected a CSV header with a 'y' column")
        if want_group and "group" not in reader.fieldnames:
            _fail("usage", f"{path}: grouped fit needs a 'group' column")
        ys, groups = [], []
        for row in reader:
            try:
                ys.append(float(row["y"]))
            except (TypeError, ValueError):
                _fail("usage", f"{path}: non-numeric value in column 'y': {row['y']!r}")
            if want_group:
                groups.append(row["group"])
    if not ys:
        _fail("usage", "no observations")
    y = np.asarray(ys, dtype=float)
    if want_group:
        return y, np.asarray(groups)
    return y


def write_csv(path, header, columns):
    columns = [np.asarray(c) for c in columns]
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in zip(*columns):
            writer.writerow([_fmt(v) for v in row])


def read_grid_csv(path, columns):
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        missing = [c for c in columns if reader.fieldnames is None or c not in reader.fieldnames]
        if missing:
            _fail("usage", f"{path}: missing columns {missing}")
        data = {c: [] for c in columns}
        for row in reader:
            for c in columns:
                data[c].append(float(row[c]))
    return {c: np.asarray(v) for c, v in data.items()}


def write_json(path, obj):
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def galaxy_data_path():
    """Path of the bundled 82-galaxy velocity benchmark (units: 1000 km/s)."""
    return importlib.resources.files("msbmix").joinpath("data/galaxies.csv")


# ----------------------------------------------------------------------
# fit plumbing shared by fit and fit-grouped
# ----------------------------------------------------------------------


@dataclass
class _FitContext:
    config: FitConfig
    alpha: float
    record: StandardizationRecord | None
    grid: Grid


def _prepare(y, config: FitConfig):
    if config.standardize:
        y_std, record = standardize(y)
    else:
        y_std, record = y, None
    grid = default_grid(y_std, config.grid_points)
    if config.grid_lo is not None and config.grid_hi is not None:
        grid = Grid(np.linspace(config.grid_lo, config.grid_hi, config.grid_points))
    alpha, gcfg = config.gibbs_config(grid=grid)
    return y_std, gcfg, _FitContext(config, alpha, record, grid)


def _density_summary_columns(summary, record):
    header = ["x", "mean", "lo", "hi"]
    cols = [summary.grid.points, summary.mean, summary.band_lo, summary.band_hi]
    if record is not None:
        header += ["x_orig", "mean_orig", "lo_orig", "hi_orig"]
        cols += [record.inverse(summary.grid.points),
                 summary.mean / record.sd,
                 summary.band_lo / record.sd,
                 summary.band_hi / record.sd]
    return header, cols


def _diagnostics(result, ctx):
    lpml_std = lpml_from_log(result.loglik_draws)
    n = result.loglik_draws.shape[1]
    if ctx.record is not None:
        lpml_orig = lpml_std - n * float(np.log(ctx.record.sd))
    else:
        lpml_orig = lpml_std
    return {
        "lpml_std": lpml_std,
        "lpml_orig": lpml_orig,
        "mean_scale_weights": float(np.mean(result.scale_weighted_draws)),
        "mean_scale_alloc": float(np.mean(result.scale_alloc_draws)),
        "occupied_nodes_mean": float(np.mean(result.occupied_draws)),
    }


def _chain_meta(ctx):
    meta = {
        "version": __version__,
        "seed": ctx.config.seed,
        "alpha_used": ctx.alpha,
        "config": ctx.config.to_json_dict(),
    }
    if ctx.record is not None:
        meta["standardization"] = {"m": ctx.record.m, "sd": ctx.record.sd}
    return meta


# ----------------------------------------------------------------------
# commands
# ----------------------------------------------------------------------


@click.group()
@click.version_option(__version__)
def main():
    """Multiscale stick-breaking mixture models."""


def _config_options(fn):
    opts = [
        click.option("--config", "config_path", type=click.Path(exists=True), default=None,
                     help="JSON config file (schema_version 1)."),
        click.option("--seed", type=int, default=None),
        click.option("--iterations", type=int, default=None),
        click.option("--burn-in", "burn_in", type=int, default=None),
        click.option("--thin", type=int, default=None),
        click.option("--max-depth", "max_depth", type=int, default=None),
        click.option("--alpha", type=float, default=None),
        click.option("--delta", type=float, default=None),
        click.option("--target-expected-scale", "target_expected_scale", type=float, default=None),
        click.option("--grid-points", "grid_points", type=int, default=None),
        click.option("--grid-lo", "grid_lo", type=float, default=None,
                     help="Explicit grid bounds (in the units the sampler sees)."),
        click.option("--grid-hi", "grid_hi", type=float, default=None),
        click.option("--no-standardize", "standardize_off", is_flag=True, default=False),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


def _build_config(config_path, **overrides):
    standardize_off = overrides.pop("standardize_off", False)
    if standardize_off:
        overrides["standardize"] = False
    try:
        return FitConfig.from_json(config_path, overrides)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        _fail("usage", f"bad config: {exc}")


@main.command("fit")
@click.argument("data_csv", type=click.Path(exists=True))
@click.option("--out", "out_dir", type=click.Path(), default=".", help="Output directory.")
@_config_options
def cmd_fit(data_csv, out_dir, config_path, **overrides):
    """Fit the model to the single column ``y`` of DATA_CSV."""
    config = _build_config(config_path, **overrides)
    y = read_data_csv(data_csv)
    if config.standardize and np.all(y == y[0]):
        _fail("usage", "constant data cannot be standardized")
    y_std, gcfg, ctx = _prepare(y, config)
    result = run_fit(y_std, gcfg)
    summary = summarize(result)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    header, cols = _density_summary_columns(summary, ctx.record)
    write_csv(out / "density_summary.csv", header, cols)
    write_json(out / "diagnostics.json", _diagnostics(result, ctx))
    write_json(out / "chain_meta.json", _chain_meta(ctx))
    click.echo(f"wrote {out / 'density_summary.csv'}")


@main.command("fit-grouped")
@click.argument("data_csv", type=click.Path(exists=True))
@click.option("--out", "out_dir", type=click.Path(), default=".")
@_config_options
def cmd_fit_grouped(data_csv, out_dir, config_path, **overrides):
    """Fit one weight tree per group (columns ``y,group``) over shared kernels."""
    config = _build_config(config_path, **overrides)
    y, groups = read_data_csv(data_csv, want_group=True)
    if config.standardize and np.all(y == y[0]):
        _fail("usage", "constant data cannot be standardized")
    y_std, gcfg, ctx = _prepare(y, config)
    grouped = run_fit_grouped(y_std, groups, gcfg)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    diag_all = {}
    for label in grouped.labels:
        result = grouped.groups[label]
        summary = summarize(result)
        header, cols = _density_summary_columns(summary, ctx.record)
        write_csv(out / f"density_summary_{label}.csv", header, cols)
        diag_all[str(label)] = _diagnostics(result, ctx)
    nodes = [node_of_flat(i) for i in range(grouped.kernel_mu_mean.size)]
    write_csv(out / "shared_kernels.csv",
              ["s", "h", "mu_mean", "omega_mean"],
              [[n.s for n in nodes], [n.h for n in nodes],
               grouped.kernel_mu_mean, grouped.kernel_omega_mean])
    write_json(out / "diagnostics.json", diag_all)
    write_json(out / "chain_meta.json", _chain_meta(ctx))
    click.echo(f"wrote {len(grouped.labels)} group summaries to {out}")


@main.command("calibrate")
@click.option("--delta", type=float, required=True)
@click.option("--expected-scale", "target", type=float, required=True)
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Optional JSON output path.")
def cmd_calibrate(delta, target, out_path):
    """Concentration parameter matching a prior expected scale."""
    try:
        alpha = calibrate_alpha(delta, target)
    except ValueError as exc:
        _fail("usage", str(exc))
    payload = {"alpha": alpha, "delta": delta, "expected_scale": target}
    click.echo(f"{alpha:.6f}")
    if out_path:
        write_json(out_path, payload)


@main.command("simulate")
@click.option("--scenario", "name", required=True)
@click.option("--n", type=int, required=True)
@click.option("--seed", type=int, default=0)
@click.option("--out", "out_dir", type=click.Path(), default=".")
@click.option("--grid-points", type=int, default=512)
def cmd_simulate(name, n, seed, out_dir, grid_points):
    """Draw a sample from a named scenario; writes data.csv and truth.csv."""
    try:
        mix = scenario(name)
    except KeyError as exc:
        _fail("usage", str(exc.args[0]))
    if n < 1:
        _fail("usage", "n must be at least 1")
    rng = RandomSource(seed)
    y = mix.sample(n, rng)
    sd = np.sqrt(mix.variance())
    lo = min(y.min(), mix.mean() - 6 * sd)
    hi = max(y.max(), mix.mean() + 6 * sd)
    grid = np.linspace(lo, hi, grid_points)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "data.csv", ["y"], [y])
    write_csv(out / "truth.csv", ["x", "pdf"], [grid, mix.pdf(grid)])
    click.echo(f"wrote {out / 'data.csv'} ({n} rows)")


@main.command("evaluate")
@click.option("--estimate", "estimate_path", type=click.Path(exists=True), required=True)
@click.option("--truth", "truth_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), default=None)
def cmd_evaluate(estimate_path, truth_path, out_path):
    """L1 and KL metrics between two densities tabulated on one grid.

    The estimate file carries columns ``x,mean`` (a density summary) and the
    truth file ``x,pdf``; the grids must agree.
    """
    est = read_grid_csv(estimate_path, ["x", "mean"])
    tru = read_grid_csv(truth_path, ["x", "pdf"])
    if est["x"].shape != tru["x"].shape or not np.allclose(est["x"], tru["x"]):
        _fail("usage", "estimate and truth grids do not match")
    metrics = {
        "l1": l1_distance(tru["pdf"], est["mean"], est["x"]),
        "kl": kl_divergence(tru["pdf"], est["mean"], est["x"]),
    }
    click.echo(json.dumps(metrics, sort_keys=True))
    if out_path:
        write_json(out_path, metrics)


@main.command("prior-curve")
@click.option("--alpha", type=float, default=1.0)
@click.option("--deltas", default="0,0.25,0.5,0.9",
              help="Comma-separated discount values.")
@click.option("--max-scale", type=int, default=30)
@click.option("--out", "out_path", type=click.Path(), default="weights_curve.csv")
def cmd_prior_curve(alpha, deltas, max_scale, out_path):
    """Prior expected total weight per scale, one curve per discount value."""
    try:
        delta_values = [float(d) for d in deltas.split(",") if d.strip() != ""]
    except ValueError:
        _fail("usage", f"bad --deltas list: {deltas!r}")
    if not delta_values:
        _fail("usage", "need at least one delta")
    scales = np.arange(max_scale + 1)
    col_delta, col_s, col_w = [], [], []
    for d in delta_values:
        if not (0 <= d < 1 and alpha > -d):
            _fail("usage", f"invalid (alpha={alpha}, delta={d})")
        w = expected_scale_totals(alpha, d, scales)
        col_delta.extend([d] * scales.size)
        col_s.extend(scales.tolist())
        col_w.extend(w.tolist())
    write_csv(out_path, ["delta", "s", "expected_total_weight"],
              [col_delta, col_s, col_w])
    click.echo(f"wrote {out_path}")


# ----------------------------------------------------------------------
# experiment recipes
# ----------------------------------------------------------------------


def _fit_metrics(y, config, mix=None):
    """One fit; returns diagnostics plus L1/KL against ``mix`` when given."""
    y_std, gcfg, ctx = _prepare(y, config)
    result = run_fit(y_std, gcfg)
    row = _diagnostics(result, ctx)
    if mix is not None:
        summary = summarize(result)
        if ctx.record is not None:
            x_orig = ctx.record.inverse(summary.grid.points)
            est = summary.mean / ctx.record.sd
        else:
            x_orig = summary.grid.points
            est = summary.mean
        truth = mix.pdf(x_orig)
        row["l1"] = l1_distance(truth, est, x_orig)
        row["kl"] = kl_divergence(truth, est, x_orig)
    return row


def _aggregate(rows, group_keys, value_keys):
    groups = {}
    for row in rows:
        key = tuple(row[k] for k in group_keys)
        groups.setdefault(key, []).append(row)
    out = []
    for key, members in groups.items():
        agg = dict(zip(group_keys, key))
        for vk in value_keys:
            vals = np.array([m[vk] for m in members], dtype=float)
            agg[f"{vk}_mean"] = float(vals.mean())
            agg[f"{vk}_sd"] = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
        out.append(agg)
    return out


def _write_dict_rows(path, rows):
    if not rows:
        raise ValueError("no rows to write")
    header = list(rows[0].keys())
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow([row[k] if isinstance(row[k], str) else _fmt(row[k])
                             for k in header])


@main.command("experiment")
@click.option("--recipe", type=click.Choice(["delta_robustness", "scenario_table"]),
              required=True)
@click.option("--replicates", type=int, required=True)
@click.option("--seed", type=int, default=0)
@click.option("--n", "sample_size", type=int, default=None,
              help="Sample size per replicate (default 50 / 100 by recipe).")
@click.option("--iterations", type=int, default=1000)
@click.option("--burn-in", "burn_in", type=int, default=200)
@click.option("--deltas", default="0,0.25,0.5")
@click.option("--expected-scales", "expected_scales", default="1,3,5")
@click.option("--densities", default="delta_study_1,delta_study_2,delta_study_3")
@click.option("--scenarios", "scenario_map", default=None,
              help="Mapping like S1=mw_02,S2=mw_08,... for scenario_table.")
@click.option("--out", "out_dir", type=click.Path(), default=".")
def cmd_experiment(recipe, replicates, seed, sample_size, iterations, burn_in,
                   deltas, expected_scales, densities, scenario_map, out_dir):
    """Run a multi-fit experiment recipe and write per-replicate plus aggregate CSVs."""
    if replicates < 1:
        _fail("usage", "replicates must be at least 1")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    root = RandomSource(seed)
    rows = []

    if recipe == "delta_robustness":
        n = sample_size or 50
        delta_values = [float(d) for d in deltas.split(",")]
        scale_targets = [float(t) for t in expected_scales.split(",")]
        density_names = [d.strip() for d in densities.split(",")]
        stream = 0
        for name in density_names:
            mix = scenario(name)
            for delta in delta_values:
                for target in scale_targets:
                    for rep in range(replicates):
                        rng = root.spawn(stream)
                        stream += 1
                        y = mix.sample(n, rng)
                        config = FitConfig(
                            seed=seed + stream, iterations=iterations,
                            burn_in=burn_in, delta=delta, alpha=None,
                            target_expected_scale=target,
                        )
                        row = _fit_metrics(y, config, mix=mix)
                        rows.append({"density": name, "delta": delta,
                                     "expected_scale_target": target,
                                     "replicate": rep, **row})
        agg = _aggregate(rows, ["density", "delta", "expected_scale_target"],
                         ["mean_scale_weights", "mean_scale_alloc", "l1", "kl"])
    else:
        n = sample_size or 100
        mapping = dict(DEFAULT_SCENARIO_TABLE)
        if scenario_map:
            for item in scenario_map.split(","):
                key, _, value = item.partition("=")
                if not value:
                    _fail("usage", f"bad --scenarios item {item!r}")
                mapping[key.strip()] = value.strip()
        stream = 0
        for label, name in mapping.items():
            mix = scenario(name)
            for rep in range(replicates):
                rng = root.spawn(stream)
                stream += 1
                y = mix.sample(n, rng)
                config = FitConfig(seed=seed + stream, iterations=iterations,
                                   burn_in=burn_in)
                row = _fit_metrics(y, config, mix=mix)
                rows.append({"scenario": label, "density": name,
                             "replicate": rep, **row})
        agg = _aggregate(rows, ["scenario", "density"], ["l1", "kl"])

    _write_dict_rows(out / "experiment_rows.csv", rows)
    _write_dict_rows(out / "experiment_summary.csv", agg)
    click.echo(f"wrote {out / 'experiment_rows.csv'} ({len(rows)} rows)")


def entry():
    """Console entry point with JSON error reporting on stderr."""
    try:
        main.main(standalone_mode=False)
    except click.exceptions.Abort:
        sys.exit(130)
    except UsageError as exc:
        _emit_error_json(exc.format_message(), 2)
        sys.exit(2)
    except click.UsageError as exc:
        _emit_error_json(exc.format_message(), 2)
        sys.exit(2)
    except click.ClickException as exc:
        _emit_error_json(exc.format_message(), 1)
        sys.exit(1)
    except Exception as exc:  # noqa: BLE001 - last-resort guard for exit code 1
        _emit_error_json(f"{type(exc).__name__}: {exc}", 1)
        sys.exit(1)


if __name__ == "__main__":
    entry()
