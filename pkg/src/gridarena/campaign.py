"""Campaign execution and result aggregation.

A campaign fans the sequential loop out over (table, engine, protocol,
multiplier, seed) tuples, writing one JSON record file per tuple. Records
are keyed by their tuple, so finished work is skipped on resume and
parallel workers never clash (writes are temp-then-rename).

Evaluation follows the metric/protocol pairing: the rank-based probability
uses single-fold runs, the score-based improvement degree uses
cross-validated runs.
"""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import metrics
from .driver import Protocol, RunRecord, rank_sequence, run, run_key
from .engines import EngineConfig
from .table import CV, LandscapeSpec, ScoreTable, load_table, save_table, synth_table

MULTIPLIERS = (1, 2, 3)


class CampaignError(ValueError):
    pass


@dataclass(frozen=True)
class TableSource:
    """A score table for a campaign: a file on disk or a landscape to
    synthesize. ``model`` and ``data`` label the table for the inversion
    analysis; model defaults to the table id."""

    table_id: str
    path: str | None = None
    landscape: LandscapeSpec | None = None
    n_folds: int = 1
    model: str | None = None
    data: str = "default"

    def __post_init__(self) -> None:
        if (self.path is None) == (self.landscape is None):
            raise CampaignError(
                f"table {self.table_id!r} needs exactly one of path/landscape"
            )

    @classmethod
    def from_dict(cls, d: Mapping) -> "TableSource":
        land = d.get("landscape")
        return cls(
            table_id=d["id"],
            path=d.get("path"),
            landscape=LandscapeSpec.from_dict(land) if land else None,
            n_folds=int(d.get("K", 1)),
            model=d.get("model"),
            data=d.get("data", "default"),
        )

    def load(self) -> ScoreTable:
        if self.path is not None:
            return load_table(self.path)
        return synth_table(self.landscape, self.n_folds)


@dataclass(frozen=True)
class CampaignConfig:
    tables: tuple[TableSource, ...]
    engines: tuple[EngineConfig, ...]
    multipliers: tuple[int, ...]
    seeds: tuple[int, ...]
    protocols: tuple[str, ...]  # subset of {"single_fold_all", "cross_validated"}
    budget_mode: str = "round_formula"

    def __post_init__(self) -> None:
        if not (self.tables and self.engines and self.seeds):
            raise CampaignError("tables, engines, and seeds must be non-empty")
        if not set(self.multipliers) <= set(MULTIPLIERS):
            raise CampaignError("multipliers must be a subset of {1, 2, 3}")
        bad = set(self.protocols) - {"single_fold_all", "cross_validated"}
        if bad or not self.protocols:
            raise CampaignError(f"bad protocols {sorted(bad)}")
        names = [e.label for e in self.engines]
        if len(set(names)) != len(names):
            raise CampaignError("engine names must be unique")

    @classmethod
    def from_dict(cls, d: Mapping) -> "CampaignConfig":
        return cls(
            tables=tuple(TableSource.from_dict(t) for t in d["tables"]),
            engines=tuple(EngineConfig.from_dict(e) for e in d["engines"]),
            multipliers=tuple(d.get("multipliers", MULTIPLIERS)),
            seeds=tuple(d["seeds"]),
            protocols=tuple(d.get("protocols", ["single_fold_all", "cross_validated"])),
            budget_mode=d.get("budget_mode", "round_formula"),
        )


# ---------------------------------------------------------------------------
# execution


def _tables_dir(out_dir: Path) -> Path:
    return out_dir / "tables"


def _runs_dir(out_dir: Path) -> Path:
    return out_dir / "runs"


def materialize_tables(config: CampaignConfig, out_dir: Path) -> dict[str, ScoreTable]:
    """Load or synthesize every table and persist a copy under the campaign
    directory so evaluation is self-contained."""
    tdir = _tables_dir(out_dir)
    tdir.mkdir(parents=True, exist_ok=True)
    tables: dict[str, ScoreTable] = {}
    for src in config.tables:
        table = src.load()
        tables[src.table_id] = table
        dest = tdir / f"{src.table_id}.csv"
        if not dest.exists():
            # manifest lands at its final path; the CSV rename is the commit
            tmp = tdir / f"{src.table_id}.csv.tmp"
            save_table(table, tmp, fmt="csv")
            os.replace(tmp, dest)
        meta = tdir / f"{src.table_id}.meta.json"
        if not meta.exists():
            _atomic_write(
                meta,
                json.dumps(
                    {"model": src.model or src.table_id, "data": src.data},
                    indent=2,
                ),
            )
    return tables


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _expand_protocols(config: CampaignConfig, table: ScoreTable) -> list[Protocol]:
    out = []
    for p in config.protocols:
        if p == "cross_validated":
            out.append(Protocol.cross_validated())
        else:
            out.extend(Protocol.single_fold(k) for k in range(1, table.n_folds + 1))
    return out


def _job_tuples(config: CampaignConfig, tables: Mapping[str, ScoreTable]):
    for src in config.tables:
        table = tables[src.table_id]
        for protocol in _expand_protocols(config, table):
            for engine in config.engines:
                for m in config.multipliers:
                    for seed in config.seeds:
                        yield src, protocol, engine, m, seed


def _execute_one(args) -> tuple[str, str]:
    src, protocol, engine, m, seed, out_dir, budget_mode = args
    table = load_table(_tables_dir(Path(out_dir)) / f"{src.table_id}.csv")
    record = run(
        engine, table, protocol, m, seed,
        table_id=src.table_id,
        model=src.model or src.table_id,
        data=src.data,
        budget_mode=budget_mode,
    )
    return record.key(), record.to_json_line()


def execute_campaign(
    config: CampaignConfig, out_dir, jobs: int = 1
) -> tuple[int, int]:
    """Run all missing records; returns (newly run, skipped)."""
    out_dir = Path(out_dir)
    rdir = _runs_dir(out_dir)
    rdir.mkdir(parents=True, exist_ok=True)
    tables = materialize_tables(config, out_dir)
    pending = []
    skipped = 0
    for src, protocol, engine, m, seed in _job_tuples(config, tables):
        key = run_key(src.table_id, engine.label, protocol.key(), m, seed)
        if (rdir / f"{key}.json").exists():
            skipped += 1
            continue
        pending.append((src, protocol, engine, m, seed, str(out_dir), config.budget_mode))
    if jobs > 1 and len(pending) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_execute_one, pending))
    else:
        results = [_execute_one(a) for a in pending]
    for key, line in results:
        _atomic_write(rdir / f"{key}.json", line + "\n")
    return len(results), skipped


# ---------------------------------------------------------------------------
# evaluation


def load_records(out_dir) -> list[RunRecord]:
    rdir = _runs_dir(Path(out_dir))
    if not rdir.is_dir():
        raise CampaignError(f"no runs directory under {out_dir}")
    records = []
    for path in sorted(rdir.glob("*.json")):
        records.append(RunRecord.from_json_line(path.read_text()))
    if not records:
        raise CampaignError(f"no run records under {rdir}")
    return records


def load_campaign_tables(out_dir) -> dict[str, ScoreTable]:
    tdir = _tables_dir(Path(out_dir))
    tables = {}
    for path in sorted(tdir.glob("*.csv")):
        tables[path.stem] = load_table(path)
    return tables


def _eval_seed(base_seed: int, key: str) -> int:
    digest = hashlib.blake2b(key.encode(), digest_size=8).digest()
    return (base_seed << 1) ^ int.from_bytes(digest, "big") % (2**62)


@dataclass
class EngineSummary:
    engine: str
    p_mean: dict[int, float] = field(default_factory=dict)
    p_se: dict[int, float] = field(default_factory=dict)
    imp: dict[int, float] = field(default_factory=dict)
    imp_se: dict[int, float] = field(default_factory=dict)
    overall: float | None = None
    forte: list[str] = field(default_factory=list)


def evaluate(
    records: Sequence[RunRecord],
    tables: Mapping[str, ScoreTable],
    draws: int = 10**5,
    seed: int = 0,
) -> dict:
    """Aggregate a campaign into per-engine metric summaries.

    Rank-based probabilities come from single-fold records; improvement
    degrees from cross-validated records. Standard errors: probabilities
    over all contributing runs, improvement degrees over per-seed
    aggregates.
    """
    missing = {r.table_id for r in records} - set(tables)
    if missing:
        raise CampaignError(f"records reference missing tables: {sorted(missing)}")

    p_runs: dict[tuple[str, int], list[float]] = {}
    imp_exps: dict[tuple[str, int], list[tuple[float, float, float]]] = {}
    imp_by_seed: dict[tuple[str, int, int], list[tuple[float, float, float]]] = {}
    imp_by_model: dict[tuple[str, str, int], list[tuple[float, float, float]]] = {}
    rand_cache: dict[tuple[str, str, int], tuple[float, float]] = {}

    for rec in records:
        name = rec.engine["name"]
        table = tables[rec.table_id]
        if rec.protocol.startswith("fold"):
            ranks = rank_sequence(rec, table)
            p = metrics.p_better_than_random(
                ranks, table.size, "dcg10",
                draws=draws, seed=_eval_seed(seed, rec.key()),
            )
            p_runs.setdefault((name, rec.m), []).append(p)
        elif rec.protocol == "cv":
            cache_key = (rec.table_id, rec.protocol, rec.budget)
            if cache_key not in rand_cache:
                ordered = [t for _, t in table.validation_order(CV)]
                rand_cache[cache_key] = (
                    metrics.expected_random_best(ordered, rec.budget),
                    ordered[0],
                )
            r_rand, r_grid = rand_cache[cache_key]
            exp = (rec.r_star, r_rand, r_grid)
            imp_exps.setdefault((name, rec.m), []).append(exp)
            imp_by_seed.setdefault((name, rec.m, rec.seed), []).append(exp)
            imp_by_model.setdefault((name, rec.model, rec.m), []).append(exp)

    engines = sorted({r.engine["name"] for r in records})
    summaries: dict[str, EngineSummary] = {}
    for name in engines:
        s = EngineSummary(engine=name)
        for m in MULTIPLIERS:
            if (name, m) in p_runs:
                s.p_mean[m], s.p_se[m] = metrics.mean_se(p_runs[(name, m)])
            if (name, m) in imp_exps:
                try:
                    s.imp[m] = metrics.improvement_degree(imp_exps[(name, m)])
                except metrics.MetricsError:
                    continue
                per_seed = []
                for (n2, m2, _), exps in imp_by_seed.items():
                    if n2 == name and m2 == m:
                        try:
                            per_seed.append(metrics.improvement_degree(exps))
                        except metrics.MetricsError:
                            pass
                if per_seed:
                    _, s.imp_se[m] = metrics.mean_se(per_seed)
        if all(m in s.p_mean for m in MULTIPLIERS) and all(
            m in s.imp for m in MULTIPLIERS
        ):
            s.overall = metrics.overall(
                [s.p_mean[m] for m in MULTIPLIERS],
                [s.imp[m] for m in MULTIPLIERS],
            )
        fortes = set()
        for (n2, model, _), exps in imp_by_model.items():
            if n2 != name:
                continue
            try:
                if metrics.improvement_degree(exps) >= 50.0:
                    fortes.add(model)
            except metrics.MetricsError:
                pass
        s.forte = sorted(fortes)
        summaries[name] = s

    def _str_keys(d: dict) -> dict:
        # JSON object keys are strings; emit them that way from the start
        return {str(k): v for k, v in d.items()}

    return {
        "engines": {
            name: {
                "p_mean": _str_keys(s.p_mean),
                "p_se": _str_keys(s.p_se),
                "improvement_degree": _str_keys(s.imp),
                "improvement_se": _str_keys(s.imp_se),
                "overall": s.overall,
                "forte": s.forte,
            }
            for name, s in summaries.items()
        },
        "draws": draws,
        "seed": seed,
    }


def report_rows(result: dict) -> list[dict]:
    """Flatten an evaluation into per-(engine, m) report rows."""
    rows = []
    for name, s in sorted(result["engines"].items()):
        for m in MULTIPLIERS:
            key = str(m)
            rows.append(
                {
                    "engine": name,
                    "m": m,
                    "p_mean": s["p_mean"].get(key),
                    "p_se": s["p_se"].get(key),
                    "imp": s["improvement_degree"].get(key),
                    "imp_se": s["improvement_se"].get(key),
                    "overall": s["overall"],
                }
            )
    return rows


def inversion_input(
    records: Sequence[RunRecord],
) -> dict[tuple[str, str], dict[str, float]]:
    """Mean selected test score per (engine, model) and data context, from
    cross-validated records."""
    acc: dict[tuple[str, str], dict[str, list[float]]] = {}
    for rec in records:
        if rec.protocol != "cv":
            continue
        acc.setdefault((rec.engine["name"], rec.model), {}).setdefault(
            rec.data, []
        ).append(rec.r_star)
    return {
        key: {ctx: float(np.mean(vals)) for ctx, vals in contexts.items()}
        for key, contexts in acc.items()
    }
