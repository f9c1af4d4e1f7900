"""Command-line front end: configuration, grid orchestration, reports.

Commands: ``validate`` (schema and data dry-run), ``run`` (execute the
model x origin grid with per-cell checkpointing), ``report`` (relative
tables, cumulative paths, subsample averages, calibration grids), and
``summarize-lasso`` (penalized linear summaries of the quantile paths).

Worker processes are started with the spawn method so the thread-count
environment defaults below apply to their numerics libraries; each cell
owns an independent random stream derived from the master seed, making
results identical for any worker count.
"""
from __future__ import annotations

import os

for _var in ("OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "OMP_NUM_THREADS",
             "NUMEXPR_NUM_THREADS", "VECLIB_MAXIMUM_THREADS"):
    os.environ.setdefault(_var, "1")

import argparse
import csv
import importlib.resources
import json
import multiprocessing
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field

import numpy as np

try:
    import jsonschema
except ImportError:  # pragma: no cover
    jsonschema = None

from . import __version__
from .data_pipeline import (
    DatasetSpec,
    assemble_regression,
    format_quarter,
    load_panel,
    parse_quarter,
)
from .evaluation import (
    SUBSAMPLE_WINDOWS,
    PitSeries,
    ScorePanel,
    cumulative_path,
    log_pred_likelihood,
    pit_compute,
    quantile_score,
    relative_table,
    rs_diagnostic,
    subsample_average,
    write_calibration_csv,
    write_cumulative_csv,
    write_relative_table_csv,
    write_scores_csv,
)
from .linear_summary import QuantilePathSet, fit_quantile_paths
from .model_engine import (
    McmcConfig,
    ModelSpec,
    assemble_target_only,
    derive_cell_seed,
    forecast_cell,
    forecast_origins,
    model_grid,
)

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_CONFIG = 2

_DEFAULTS = {
    "expectations": "INFEXP",
    "include_expectations": True,
    "datasets": ["Moderate"],
    "models": ["all"],
    "horizons": [1],
    "mcmc": {},
    "seed": 0,
    "workers": 1,
    "draws_format": "csv",
    "min_train": 40,
}


@dataclass
class RunConfig:
    """Resolved experiment configuration."""

    panel: str
    sidecar: str
    target: str
    out_dir: str
    eval_start: str
    eval_end: str
    expectations: str | None = "INFEXP"
    include_expectations: bool = True
    datasets: list = field(default_factory=lambda: ["Moderate"])
    models: list = field(default_factory=lambda: ["all"])
    horizons: list = field(default_factory=lambda: [1])
    mcmc: dict = field(default_factory=dict)
    seed: int = 0
    workers: int = 1
    draws_format: str = "csv"
    min_train: int = 40

    def resolved_models(self) -> list[str]:
        grid = model_grid()
        if self.models == ["all"]:
            return grid
        bad = [m for m in self.models if m not in grid]
        if bad:
            raise ConfigError(f"unknown model id(s): {bad}; valid ids: {grid}")
        return list(self.models)

    def mcmc_config(self) -> McmcConfig:
        return McmcConfig(**self.mcmc)

    def dataset_spec(self, variant: str, horizon: int) -> DatasetSpec:
        include = self.include_expectations and self.expectations is not None
        return DatasetSpec(variant=variant, target_series=self.target,
                           horizon=horizon, include_expectations=include,
                           expectations_series=self.expectations or "INFEXP")

    def to_dict(self) -> dict:
        return {
            "panel": self.panel, "sidecar": self.sidecar, "target": self.target,
            "out_dir": self.out_dir, "eval_start": self.eval_start,
            "eval_end": self.eval_end, "expectations": self.expectations,
            "include_expectations": self.include_expectations,
            "datasets": list(self.datasets), "models": list(self.models),
            "horizons": list(self.horizons), "mcmc": dict(self.mcmc),
            "seed": self.seed, "workers": self.workers,
            "draws_format": self.draws_format, "min_train": self.min_train,
        }


class ConfigError(Exception):
    """Configuration problem; maps to exit code 2."""


def _schema() -> dict:
    text = importlib.resources.files("bnpforecast").joinpath("config_schema.json").read_text()
    return json.loads(text)


def load_config(path: str, overrides: dict | None = None) -> RunConfig:
    """Read, schema-check, default-fill, and override a JSON config."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}")
    if jsonschema is not None:
        validator = jsonschema.Draft202012Validator(_schema())
        errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
        if errors:
            err = errors[0]
            where = "/" + "/".join(str(p) for p in err.absolute_path)
            raise ConfigError(f"config schema violation at {where or '/'}: {err.message}")
    merged = dict(_DEFAULTS)
    merged.update(raw)
    if overrides:
        merged.update({k: v for k, v in overrides.items() if v is not None})
    try:
        cfg = RunConfig(**merged)
    except TypeError as exc:
        raise ConfigError(f"bad configuration: {exc}")
    for key in ("panel", "sidecar"):
        p = getattr(cfg, key)
        if not os.path.exists(p):
            raise ConfigError(f"{key} file does not exist: {p}")
    try:
        cfg.mcmc_config()
    except Exception as exc:
        raise ConfigError(f"bad mcmc settings: {exc}")
    cfg.resolved_models()
    return cfg


# ---------------------------------------------------------------------------
# cell grid


@dataclass(frozen=True)
class Cell:
    model_id: str
    dataset_label: str
    horizon: int
    origin: int

    @property
    def cell_id(self) -> str:
        return f"{self.model_id}_{self.dataset_label}_{self.horizon}_{format_quarter(self.origin)}"


def _split_model(model_id: str) -> tuple[str, str]:
    mean_kind, error_kind = model_id.split("-", 1)
    return mean_kind, error_kind


def _origins(panel, cfg: RunConfig, dspec: DatasetSpec, is_uc: bool) -> list[int]:
    full = assemble_target_only(panel, dspec) if is_uc else \
        assemble_regression(panel, dspec, standardize=False)
    start, end = parse_quarter(cfg.eval_start), parse_quarter(cfg.eval_end)
    real = full.origin_dates + dspec.horizon
    if start < real.min() or end > real.max():
        raise ConfigError(
            f"evaluation window {cfg.eval_start}..{cfg.eval_end} outside the data's "
            f"outcome span {format_quarter(int(real.min()))}..{format_quarter(int(real.max()))}")
    out = []
    for o in forecast_origins(full, start, end):
        n_train = int(np.sum(full.origin_dates <= o - dspec.horizon))
        if n_train < cfg.min_train:
            warnings.warn(f"skipping origin {format_quarter(o)}: "
                          f"{n_train} training quarters (minimum {cfg.min_train})")
            continue
        out.append(o)
    return out


def enumerate_cells(panel, cfg: RunConfig) -> list[Cell]:
    """The full (model, dataset, horizon, origin) grid for this config."""
    cells: list[Cell] = []
    models = cfg.resolved_models()
    for h in cfg.horizons:
        uc_models = [m for m in models if _split_model(m)[0] == "UC"]
        if uc_models:
            origins = _origins(panel, cfg, cfg.dataset_spec("AR1", h), is_uc=True)
            for m in uc_models:
                cells.extend(Cell(m, "none", h, o) for o in origins)
        for variant in cfg.datasets:
            rest = [m for m in models if _split_model(m)[0] != "UC"]
            if not rest:
                continue
            origins = _origins(panel, cfg, cfg.dataset_spec(variant, h), is_uc=False)
            for m in rest:
                cells.extend(Cell(m, variant, h, o) for o in origins)
    return cells


def _cell_paths(out_dir: str, cell: Cell, draws_format: str) -> tuple[str, str]:
    ext = "npy" if draws_format == "bin" else "csv"
    draws = os.path.join(out_dir, "draws", f"{cell.cell_id}.{ext}")
    scores = os.path.join(out_dir, "cells", f"{cell.cell_id}.json")
    return draws, scores


def cell_done(out_dir: str, cell: Cell, draws_format: str) -> bool:
    draws, scores = _cell_paths(out_dir, cell, draws_format)
    return os.path.exists(draws) and os.path.exists(scores)


# ---------------------------------------------------------------------------
# cell execution (worker side)

_WORKER: dict = {}


def _init_worker(panel_path: str, sidecar_path: str) -> None:
    _WORKER["panel"] = load_panel(panel_path, sidecar_path)
    _WORKER["full"] = {}


def _atomic_write(path: str, write_fn) -> None:
    tmp = path + ".tmp"
    write_fn(tmp)
    os.replace(tmp, path)


def exec_cell(task: dict) -> dict:
    """Estimate one cell, write its draws and scores; returns a status record."""
    cell = Cell(task["model_id"], task["dataset_label"], task["horizon"], task["origin"])
    try:
        if "panel" not in _WORKER:
            _init_worker(task["panel"], task["sidecar"])
        panel = _WORKER["panel"]
        mean_kind, error_kind = _split_model(cell.model_id)
        is_uc = mean_kind == "UC"
        variant = "AR1" if is_uc else cell.dataset_label
        dspec = DatasetSpec(variant=variant, target_series=task["target"],
                            horizon=cell.horizon,
                            include_expectations=task["include_expectations"],
                            expectations_series=task["expectations"] or "INFEXP")
        key = (variant, cell.horizon, is_uc)
        if key not in _WORKER["full"]:
            _WORKER["full"][key] = assemble_target_only(panel, dspec) if is_uc else \
                assemble_regression(panel, dspec, standardize=False)
        full = _WORKER["full"][key]
        spec = ModelSpec(mean_kind=mean_kind, error_kind=error_kind, dataset=dspec)
        mcmc = McmcConfig(**task["mcmc"])
        pred = forecast_cell(spec, panel, cell.origin, mcmc,
                             master_seed=task["seed"], full=full)

        pit_seed = derive_cell_seed(task["seed"], cell.model_id + "|pit",
                                    cell.dataset_label, cell.horizon,
                                    format_quarter(cell.origin))
        pit = pit_compute(pred.draws, pred.y_true, np.random.default_rng(pit_seed))
        record = {
            "model": cell.model_id,
            "dataset": cell.dataset_label,
            "horizon": cell.horizon,
            "origin": format_quarter(cell.origin),
            "realization": format_quarter(cell.origin + cell.horizon),
            "y_true": pred.y_true,
            "point": pred.point,
            "quantiles": {("%g" % p): q for p, q in sorted(pred.quantiles.items())},
            "lpl": log_pred_likelihood(pred.components, pred.y_true),
            "sq_error": (pred.y_true - pred.point) ** 2,
            "qs": {("%g" % p): quantile_score(pred.y_true, pred.quantiles[p], p)
                   for p in sorted(pred.quantiles)},
            "pit": pit,
            "n_draws": int(pred.draws.size),
            "seed": pred.diagnostics["seed"],
            "train_quarters": pred.diagnostics["train_quarters"],
            "ifs": {k: float(v) for k, v in sorted(pred.diagnostics["ifs"].items())},
            "accept": {k: float(v) for k, v in sorted(pred.diagnostics["accept"].items())},
        }
        draws_path, scores_path = _cell_paths(task["out_dir"], cell, task["draws_format"])
        if task["draws_format"] == "bin":
            def _write_bin(p):
                with open(p, "wb") as fh:
                    np.save(fh, pred.draws)
            _atomic_write(draws_path, _write_bin)
        else:
            def _write_draws(p):
                with open(p, "w", newline="") as fh:
                    w = csv.writer(fh)
                    w.writerow(["draw"])
                    for v in pred.draws:
                        w.writerow([repr(float(v))])
            _atomic_write(draws_path, _write_draws)
        _atomic_write(scores_path, lambda p: open(p, "w").write(
            json.dumps(record, sort_keys=True, indent=1)))
        return {"cell": cell.cell_id, "status": "ok",
                "seed": record["seed"], "runtime": pred.diagnostics["runtime"]}
    except Exception as exc:  # cell failures must not kill the grid
        return {"cell": cell.cell_id, "status": "failed",
                "error": f"{type(exc).__name__}: {exc}"}


# ---------------------------------------------------------------------------
# commands


def cmd_validate(cfg: RunConfig) -> int:
    panel = load_panel(cfg.panel, cfg.sidecar)
    cells = enumerate_cells(panel, cfg)
    models = cfg.resolved_models()
    n_origins = len({c.origin for c in cells})
    print(f"config OK: {len(models)} models, horizons {cfg.horizons}, "
          f"datasets {cfg.datasets}")
    print(f"estimated grid: {len(cells)} cells over {n_origins} forecast origins")
    return EXIT_OK


def cmd_run(cfg: RunConfig) -> int:
    panel = load_panel(cfg.panel, cfg.sidecar)
    cells = enumerate_cells(panel, cfg)
    os.makedirs(os.path.join(cfg.out_dir, "draws"), exist_ok=True)
    os.makedirs(os.path.join(cfg.out_dir, "cells"), exist_ok=True)
    pending = [c for c in cells if not cell_done(cfg.out_dir, c, cfg.draws_format)]
    cached = len(cells) - len(pending)
    print(f"grid: {len(cells)} cells ({cached} cached, {len(pending)} to run)")
    tasks = [{
        "model_id": c.model_id, "dataset_label": c.dataset_label,
        "horizon": c.horizon, "origin": c.origin,
        "panel": cfg.panel, "sidecar": cfg.sidecar, "target": cfg.target,
        "expectations": cfg.expectations,
        "include_expectations": cfg.include_expectations and cfg.expectations is not None,
        "mcmc": cfg.mcmc, "seed": cfg.seed, "out_dir": cfg.out_dir,
        "draws_format": cfg.draws_format,
    } for c in pending]
    results: dict[str, dict] = {}
    if tasks:
        if cfg.workers > 1:
            ctx = multiprocessing.get_context("spawn")
            with ProcessPoolExecutor(max_workers=cfg.workers, mp_context=ctx,
                                     initializer=_init_worker,
                                     initargs=(cfg.panel, cfg.sidecar)) as pool:
                futures = {pool.submit(exec_cell, t): t for t in tasks}
                for fut in as_completed(futures):
                    rec = fut.result()
                    results[rec["cell"]] = rec
                    if rec["status"] == "failed":
                        print(f"FAILED {rec['cell']}: {rec['error']}", file=sys.stderr)
        else:
            _init_worker(cfg.panel, cfg.sidecar)
            for t in tasks:
                rec = exec_cell(t)
                results[rec["cell"]] = rec
                if rec["status"] == "failed":
                    print(f"FAILED {rec['cell']}: {rec['error']}", file=sys.stderr)
    manifest = {
        "version": __version__,
        "config": cfg.to_dict(),
        "cells": [],
    }
    failures = []
    for c in sorted(cells, key=lambda c: c.cell_id):
        rec = results.get(c.cell_id)
        if rec is None:
            status = "cached"
        else:
            status = rec["status"]
        entry = {
            "cell": c.cell_id, "model": c.model_id, "dataset": c.dataset_label,
            "horizon": c.horizon, "origin": format_quarter(c.origin),
            "seed": derive_cell_seed(cfg.seed, c.model_id, c.dataset_label,
                                     c.horizon, format_quarter(c.origin)),
            "status": status,
        }
        if rec and rec.get("error"):
            entry["error"] = rec["error"]
            failures.append(c.cell_id)
        manifest["cells"].append(entry)
    with open(os.path.join(cfg.out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=1)
    if failures:
        print(f"{len(failures)} cell(s) failed: {failures}", file=sys.stderr)
        return EXIT_PARTIAL
    print(f"run complete: results in {cfg.out_dir}")
    return EXIT_OK


def _load_cells(out_dir: str) -> list[dict]:
    cell_dir = os.path.join(out_dir, "cells")
    if not os.path.isdir(cell_dir):
        raise ConfigError(f"no cell results under {out_dir}")
    records = []
    for name in sorted(os.listdir(cell_dir)):
        if name.endswith(".json"):
            with open(os.path.join(cell_dir, name)) as fh:
                records.append(json.load(fh))
    if not records:
        raise ConfigError(f"no completed cells under {out_dir}")
    return records


def _model_key(rec: dict) -> str:
    if rec["dataset"] == "none":
        return rec["model"]
    return f"{rec['model']}[{rec['dataset']}]"


BENCHMARK_ID = "UC-SV"


def _panels_for_horizon(records: list[dict], h: int):
    """Aligned ScorePanels and PitSeries per model key at one horizon."""
    by_model: dict[str, dict[int, dict]] = {}
    for rec in records:
        if rec["horizon"] != h:
            continue
        by_model.setdefault(_model_key(rec), {})[parse_quarter(rec["origin"])] = rec
    if not by_model:
        return {}, {}, np.array([], dtype=int)
    common = None
    for cells in by_model.values():
        common = set(cells) if common is None else common & set(cells)
    dropped = {m: len(cells) - len(common) for m, cells in by_model.items()
               if len(cells) != len(common)}
    if dropped:
        warnings.warn(f"restricting to {len(common)} common origins; "
                      f"extra cells dropped: {dropped}")
    origins = np.array(sorted(common), dtype=int)
    panels: dict[str, ScorePanel] = {}
    pits: dict[str, PitSeries] = {}
    for m, cells in sorted(by_model.items()):
        recs = [cells[o] for o in origins]
        p_levels = sorted(float(p) for p in recs[0]["qs"])
        panels[m] = ScorePanel(
            model_id=m, origin_dates=origins,
            y_true=np.array([r["y_true"] for r in recs]),
            sq_errors=np.array([r["sq_error"] for r in recs]),
            lpls=np.array([r["lpl"] for r in recs]),
            qs={p: np.array([r["qs"]["%g" % p] for r in recs]) for p in p_levels},
            horizon=h)
        pits[m] = PitSeries(model_id=m, origin_dates=origins,
                            values=np.array([r["pit"] for r in recs]))
    return panels, pits, origins


def cmd_report(out_dir: str) -> int:
    records = _load_cells(out_dir)
    horizons = sorted({r["horizon"] for r in records})
    table_rows = []
    requested: list[str] = []
    manifest_path = os.path.join(out_dir, "manifest.json")
    if os.path.exists(manifest_path):
        with open(manifest_path) as fh:
            manifest = json.load(fh)
        requested = sorted({_model_key(c) for c in manifest.get("cells", [])})
    for h in horizons:
        panels, pits, origins = _panels_for_horizon(records, h)
        if not panels:
            continue
        bench_key = next((k for k in panels if k == BENCHMARK_ID), None)
        if bench_key is not None:
            rows = relative_table(panels, bench_key)
        else:
            warnings.warn(f"benchmark {BENCHMARK_ID} missing at h={h}; levels only")
            rows = [{"model": m,
                     "mse_level": float(np.mean(p.sq_errors)),
                     "lpl_level": float(np.mean(p.lpls))}
                    for m, p in sorted(panels.items())]
        for r in rows:
            r = {"horizon": h, **r, "status": "ok"}
            table_rows.append(r)
        for m in requested:
            if m not in panels and not any(
                    row.get("model") == m and row.get("horizon") == h for row in table_rows):
                table_rows.append({"horizon": h, "model": m, "status": "absent"})
        # per-model score series and calibration grids
        for m, panel in panels.items():
            safe = m.replace("[", "_").replace("]", "")
            write_scores_csv(os.path.join(out_dir, f"scores_{safe}_h{h}.csv"),
                             panel, pits[m])
            grid, ecdf, half = rs_diagnostic(pits[m])
            write_calibration_csv(
                os.path.join(out_dir, f"calibration_{safe}_h{h}.csv"), grid, ecdf, half)
        if bench_key is not None:
            bench = panels[bench_key]
            lpl_paths = {m: cumulative_path(p.lpls, bench.lpls)
                         for m, p in panels.items()}
            write_cumulative_csv(os.path.join(out_dir, f"cumulative_lpl_h{h}.csv"),
                                 origins, lpl_paths)
            qs_paths = {m: cumulative_path(p.qs[0.5], bench.qs[0.5], lower_is_better=True)
                        for m, p in panels.items()}
            write_cumulative_csv(os.path.join(out_dir, f"cumulative_qs50_h{h}.csv"),
                                 origins, qs_paths)
            # subsample QS ratios
            sub_path = os.path.join(out_dir, f"qs_subsamples_h{h}.csv")
            with open(sub_path, "w", newline="") as fh:
                w = csv.writer(fh)
                labels = [lab for lab, *_ in SUBSAMPLE_WINDOWS]
                w.writerow(["model", "p"] + labels)
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    for m, panel in sorted(panels.items()):
                        dates = origins + h
                        for p in sorted(panel.qs):
                            table = subsample_average(dates, panel.qs[p], bench.qs[p])
                            w.writerow([m, "%g" % p] +
                                       ["%.10g" % table[lab] if lab in table else ""
                                        for lab in labels])
    # union of columns across rows, stable order
    header: list[str] = []
    for row in table_rows:
        for k in row:
            if k not in header:
                header.append(k)
    norm_rows = [{k: row.get(k, "") for k in header} for row in table_rows]
    write_relative_table_csv(os.path.join(out_dir, "table1.csv"), norm_rows)
    print(f"report written to {out_dir}")
    return EXIT_OK


def cmd_summarize_lasso(cfg: RunConfig) -> int:
    records = _load_cells(cfg.out_dir)
    panel = load_panel(cfg.panel, cfg.sidecar)
    horizons = sorted({r["horizon"] for r in records})
    for h in horizons:
        rows_out = []
        r2_out = []
        by_model: dict[str, list[dict]] = {}
        for rec in records:
            if rec["horizon"] == h and rec["dataset"] != "none":
                by_model.setdefault(_model_key(rec), []).append(rec)
        for m, recs in sorted(by_model.items()):
            recs = sorted(recs, key=lambda r: parse_quarter(r["origin"]))
            variant = recs[0]["dataset"]
            dspec = cfg.dataset_spec(variant, h)
            full = assemble_regression(panel, dspec, standardize=False)
            origins = np.array([parse_quarter(r["origin"]) for r in recs])
            n_full = full.origin_dates.size
            idx = np.searchsorted(full.origin_dates, origins)
            ok = (idx < n_full) & (full.origin_dates[np.minimum(idx, n_full - 1)] == origins)
            if not ok.all():
                warnings.warn(f"{m}: {int((~ok).sum())} origins lack predictor rows; dropped")
            idx, recs = idx[ok], [r for r, keep in zip(recs, ok) if keep]
            p_grid = tuple(sorted(float(p) for p in recs[0]["quantiles"]))
            Q = np.array([[r["quantiles"]["%g" % p] for p in p_grid] for r in recs])
            paths = QuantilePathSet(dates=origins[ok], Q=Q, p_grid=p_grid)
            fits = fit_quantile_paths(paths, full.X[idx])
            for p in p_grid:
                f = fits[p]
                r2_out.append([m, "%g" % p, "%.10g" % f.r2, "%.10g" % f.lam,
                               f.support.size])
                for j in f.support:
                    rows_out.append([m, full.names[j], "%g" % p, "%.10g" % f.beta[j]])
        with open(os.path.join(cfg.out_dir, f"lasso_h{h}.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["model", "variable", "p", "coefficient"])
            w.writerows(rows_out)
        with open(os.path.join(cfg.out_dir, f"r2_h{h}.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["model", "p", "r2", "lambda", "n_active"])
            w.writerows(r2_out)
    print(f"penalized summaries written to {cfg.out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON configuration file")
    p.add_argument("--out", help="output/artifact directory (overrides config)")
    p.add_argument("--workers", type=int, help="parallel worker processes")
    p.add_argument("--seed", type=int, help="master seed (overrides config)")
    p.add_argument("--models", help="comma-separated model ids, or 'all'")
    p.add_argument("--horizons", help="comma-separated forecast horizons")
    p.add_argument("--draws-format", choices=["csv", "bin"], dest="draws_format")


def _overrides(args) -> dict:
    ov: dict = {}
    if args.out:
        ov["out_dir"] = args.out
    if args.workers is not None:
        ov["workers"] = args.workers
    if args.seed is not None:
        ov["seed"] = args.seed
    if args.models:
        ov["models"] = [m.strip() for m in args.models.split(",") if m.strip()]
    if args.horizons:
        ov["horizons"] = [int(x) for x in args.horizons.split(",")]
    if args.draws_format:
        ov["draws_format"] = args.draws_format
    return ov


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="bnpforecast",
        description="Bayesian nonparametric inflation-forecasting experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("validate", "schema-check a config and dry-run the data"),
                        ("run", "execute the model x origin grid"),
                        ("report", "emit tables and plot-ready CSVs"),
                        ("summarize-lasso", "penalized linear quantile summaries")):
        p = sub.add_parser(name, help=help_)
        _add_common(p)
    args = parser.parse_args(argv)
    try:
        if args.command == "report":
            out = args.out
            if out is None and args.config:
                out = load_config(args.config, _overrides(args)).out_dir
            if out is None:
                raise ConfigError("report needs --out or --config")
            return cmd_report(out)
        if args.config is None:
            raise ConfigError(f"{args.command} requires --config")
        cfg = load_config(args.config, _overrides(args))
        if args.command == "validate":
            return cmd_validate(cfg)
        if args.command == "run":
            return cmd_run(cfg)
        if args.command == "summarize-lasso":
            return cmd_summarize_lasso(cfg)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # unexpected failure: not a config problem
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PARTIAL


if __name__ == "__main__":
    sys.exit(main())
