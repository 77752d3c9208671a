"""Command-line entry point.

Commands: ``gen-table`` (synthesize a score table to disk), ``run``
(execute a benchmark campaign, resumable), ``eval`` (aggregate metrics
into report and plot-data files), ``compare`` (winner-inversion report).

Exit codes: 0 ok, 2 config error, 3 data error. ``GRIDARENA_SEED`` is the
global seed fallback.
"""

from __future__ import annotations

import csv
import json
import os
import sys
from pathlib import Path

import click

from . import campaign as cp
from . import metrics
from .table import LandscapeSpec, TableError, save_table, synth_table

CONFIG_ERROR = 2
DATA_ERROR = 3


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _global_seed(value: int | None) -> int:
    if value is not None:
        return value
    return int(os.environ.get("GRIDARENA_SEED", "0"))


def _read_json(path, code: int = CONFIG_ERROR) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        _fail(code, f"cannot read {path}: {exc}")


@click.group()
def main() -> None:
    """Grid-replay benchmarking harness for hyperopt engines."""


@main.command("gen-table")
@click.option("--spec", "spec_path", required=True, type=click.Path(exists=True),
              help="Landscape spec JSON (grid, objective, params, noise_sd, seed, K, id).")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
def gen_table(spec_path, out_dir) -> None:
    """Synthesize a score table and write CSV + grid manifest."""
    doc = _read_json(spec_path)
    try:
        land = LandscapeSpec.from_dict(doc)
        table = synth_table(land, int(doc.get("K", 1)))
    except (KeyError, TableError, ValueError) as exc:
        _fail(CONFIG_ERROR, f"bad landscape spec: {exc}")
    table_id = doc.get("id", "table")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        save_table(table, out / f"{table_id}.csv")
    except OSError as exc:
        _fail(CONFIG_ERROR, f"cannot write to {out_dir}: {exc}")
    click.echo(f"wrote {table_id}.csv ({table.size} arms x {table.n_folds} folds)")


@main.command("run")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--jobs", default=1, show_default=True)
def run_campaign(config_path, out_dir, jobs) -> None:
    """Execute a campaign; completed records are skipped on rerun."""
    doc = _read_json(config_path)
    try:
        config = cp.CampaignConfig.from_dict(doc)
    except (KeyError, ValueError) as exc:
        _fail(CONFIG_ERROR, f"malformed campaign config: {exc}")
    try:
        ran, skipped = cp.execute_campaign(config, out_dir, jobs=jobs)
    except (OSError, TableError) as exc:
        _fail(DATA_ERROR, f"campaign failed: {exc}")
    click.echo(f"ran {ran} records, skipped {skipped} existing")


@main.command("eval")
@click.option("--in", "in_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--draws", default=10**5, show_default=True,
              help="Monte Carlo draws per rank-based probability estimate.")
@click.option("--seed", default=None, type=int)
def eval_campaign(in_dir, out_dir, draws, seed) -> None:
    """Aggregate run records into metrics JSON, report CSV, plot-data CSV."""
    seed = _global_seed(seed)
    try:
        records = cp.load_records(in_dir)
        tables = cp.load_campaign_tables(in_dir)
        result = cp.evaluate(records, tables, draws=draws, seed=seed)
    except (cp.CampaignError, TableError) as exc:
        _fail(DATA_ERROR, str(exc))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "metrics.json", "w") as fh:
        json.dump(result, fh, indent=2, sort_keys=True)
        fh.write("\n")
    rows = cp.report_rows(result)
    with open(out / "report.csv", "w", newline="") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["engine", "m", "p_mean", "p_se", "imp", "imp_se", "overall"]
        )
        writer.writeheader()
        writer.writerows(rows)
    # long-format plot data: one row per (engine, m, metric)
    with open(out / "plot_data.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["engine", "m", "metric", "value", "se"])
        for row in rows:
            if row["p_mean"] is not None:
                writer.writerow(
                    [row["engine"], row["m"], "p_better_than_random",
                     row["p_mean"], row["p_se"]]
                )
            if row["imp"] is not None:
                writer.writerow(
                    [row["engine"], row["m"], "improvement_degree",
                     row["imp"], row["imp_se"]]
                )
    click.echo(f"evaluated {len(records)} records -> {out}")


@main.command("compare")
@click.option("--in", "in_dir", required=True, type=click.Path(exists=True, file_okay=False))
def compare(in_dir) -> None:
    """Winner-inversion analysis across engines and models."""
    try:
        records = cp.load_records(in_dir)
    except cp.CampaignError as exc:
        _fail(DATA_ERROR, str(exc))
    results = cp.inversion_input(records)
    try:
        rate, triples = metrics.winner_inversions(results)
    except metrics.MetricsError as exc:
        _fail(CONFIG_ERROR, str(exc))
    click.echo(f"winner_inversion_rate: {rate:.4f}")
    for ea, eb, ma, mb, ctx in triples:
        click.echo(f"inversion: engines {ea} vs {eb}, models {ma} vs {mb}, data {ctx}")


if __name__ == "__main__":
    main()
