"""File-based pipeline: generate -> ingest -> fit -> simgraph -> cocluster -> evaluate.

Every stage reads and writes plain files, so each can be re-run on its own.
A finished run leaves ``manifest.json`` listing the SHA-256 of every file it
wrote, with paths relative to the output directory.
"""

from __future__ import annotations

import hashlib
import json
import logging
import shutil
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Callable, Mapping

from . import __version__
from .cocluster import (
    DEFAULT_MAX_ITER,
    DEFAULT_N_INIT,
    DEFAULT_TOL,
    CoClustering,
    best_fit_grid,
    cocluster_flows,
    extract_cell_series,
    fit_cells,
)
from .errors import FlowlensError, InvalidConfigError, StageError
from .ingest import EnrichedFlow, TrafficSeries, ingest, read_enriched, read_series, series_frame, write_enriched, write_series
from .kstest import DEFAULT_ALPHA, FittedModel, select_best_fit
from .modeleval import ColumnInputs, EvalReport, compare
from .simgraph import build_similarity_graph, export_graph, fr_layout, louvain
from .synth import PlantedConfig, generate

log = logging.getLogger(__name__)

SERIES_KINDS = ("domain", "building", "user")
MODES = ("domain", "location")
GRAPH_FORMATS = ("graphml", "dot", "json")


def _write_json(path: Path, obj: Any) -> Path:
    path.write_text(json.dumps(obj, indent=1) + "\n", encoding="utf-8")
    return path


def _read_json(path) -> Any:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


# ---------------------------------------------------------------------- fit


def fit_series(series: Mapping[str, TrafficSeries], alpha: float = DEFAULT_ALPHA, threads: int = 1):
    """Best fit per entity. Returns (models, failures) where failures maps entity -> error text."""
    keys = sorted(series)

    def one(key):
        try:
            return key, select_best_fit(series[key].counts, alpha, entity_key=key), None
        except FlowlensError as exc:
            return key, None, str(exc)

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            results = list(ex.map(one, keys))
    else:
        results = [one(k) for k in keys]
    models = {k: m for k, m, _ in results if m is not None}
    failed = {k: e for k, _, e in results if e is not None}
    for k, e in failed.items():
        log.warning("no fit for %s: %s", k, e)
    return models, failed


def models_to_json(kind: str, alpha: float, models: Mapping[str, FittedModel], failed: Mapping[str, str]) -> dict:
    return {
        "kind": kind,
        "alpha": alpha,
        "models": [models[k].to_dict() for k in sorted(models)],
        "failed": dict(sorted(failed.items())),
    }


def models_from_json(d: dict) -> tuple[str, dict[str, FittedModel]]:
    models = {m["entity"]: FittedModel.from_dict(m) for m in d["models"]}
    return d.get("kind", ""), models


def run_fit(series_path, out, kind: str = "domain", alpha: float = DEFAULT_ALPHA, threads: int = 1) -> Path:
    path = Path(series_path)
    if path.is_dir():
        path = path / f"series_{kind}.jsonl"
    series = read_series(path)
    models, failed = fit_series(series, alpha, threads)
    fams: dict[str, int] = {}
    for m in models.values():
        fams[m.family.letter] = fams.get(m.family.letter, 0) + 1
    log.info("fit %s: %d entities, %d fitted, families %s", kind, len(series), len(models), fams)
    return _write_json(Path(out), models_to_json(kind, alpha, models, failed))


# ----------------------------------------------------------------- simgraph


def run_simgraph(
    series_path, out_prefix, kind: str = "domain", alpha: float = DEFAULT_ALPHA,
    layout_iters: int = 200, seed: int = 0, formats=GRAPH_FORMATS, threads: int = 1,
) -> list[Path]:
    path = Path(series_path)
    if path.is_dir():
        path = path / f"series_{kind}.jsonl"
    graph = build_similarity_graph(read_series(path), alpha, threads=threads)
    louvain(graph)
    fr_layout(graph, layout_iters, seed)
    log.info("simgraph %s: %d communities", kind, max(graph.communities) + 1)
    out_prefix = Path(out_prefix)
    written = []
    for fmt in formats:
        target = out_prefix if len(formats) == 1 and out_prefix.suffix else out_prefix.with_name(f"{out_prefix.name}.{fmt}")
        written.append(export_graph(graph, fmt, target))
    return written


# ---------------------------------------------------------------- cocluster


def run_cocluster(
    flows, out, mode: str = "domain", k: int = 10, l: int = 10, seed: int = 0,
    alpha: float = DEFAULT_ALPHA, bin_width: float = 1.0, weight: str = "flows",
    n_init: int = DEFAULT_N_INIT, max_iter: int = DEFAULT_MAX_ITER, tol: float = DEFAULT_TOL,
    cells_out=None,
) -> Path:
    """Co-cluster, then fit every non-empty cell; ``flows`` is a path or a flow list."""
    if not isinstance(flows, list):
        flows = read_enriched(flows)
    cc = cocluster_flows(flows, mode, k, l, seed=seed, max_iter=max_iter, tol=tol, weight=weight, n_init=n_init)
    cells = extract_cell_series(flows, cc, mode, bin_width, series_frame(flows, bin_width))
    models = fit_cells(cells, alpha)
    grid = best_fit_grid(cells, models)
    log.info("cocluster %s: loss %.4f of %.4f bits after %d iterations, %d non-empty cells",
             mode, cc.loss, cc.mutual_information, cc.iterations, len(cells.non_empty()))
    doc = {
        "mode": mode,
        **cc.to_dict(),
        "grid": ["".join(ch or "." for ch in row) for row in grid],
        "cell_flows": {f"{r},{c}": n for (r, c), n in sorted(cells.flow_counts.items()) if n > 0},
        "cell_models": [models[key].to_dict() for key in sorted(models)],
    }
    out = _write_json(Path(out), doc)
    if cells_out is not None:
        write_series(cells_out, cells.series())
    return out


def read_cocluster(path) -> tuple[str, CoClustering, dict[str, FittedModel]]:
    d = _read_json(path)
    models = {m["entity"]: FittedModel.from_dict(m) for m in d.get("cell_models", [])}
    return d.get("mode", "domain"), CoClustering.from_dict(d), models


# ----------------------------------------------------------------- evaluate

_COLUMN_OF = {"domain": "DOMAIN", "building": "LOCATION"}
_CELL_COLUMN_OF = {"domain": "USER_DOMAIN_GROUPS", "location": "USER_LOCATION_GROUPS"}


def run_evaluate(
    series_dir, model_paths, cocluster_paths, out, text_out=None,
    alpha: float = DEFAULT_ALPHA, global_generic: bool = False,
) -> EvalReport:
    """Assemble the comparison from fitted entity models and co-clustering outputs.

    Cell series are read from ``cells_<mode>.jsonl`` next to each co-clustering file.
    """
    series_dir = Path(series_dir)
    inputs: dict[str, ColumnInputs] = {}
    for mp in model_paths:
        kind, models = models_from_json(_read_json(mp))
        if kind not in _COLUMN_OF:
            raise InvalidConfigError(f"{mp}: models of kind {kind!r} are not evaluated")
        inputs[_COLUMN_OF[kind]] = ColumnInputs(read_series(series_dir / f"series_{kind}.jsonl"), models)
    for cp in cocluster_paths:
        mode, _, models = read_cocluster(cp)
        cells = read_series(Path(cp).with_name(f"cells_{mode}.jsonl"))
        inputs[_CELL_COLUMN_OF[mode]] = ColumnInputs(cells, models)
    report = compare(inputs, alpha, global_generic)
    Path(out).write_text(report.to_json(), encoding="utf-8")
    if text_out is not None:
        Path(text_out).write_text(report.to_text(), encoding="utf-8")
    return report


# ------------------------------------------------------------------ run all


@dataclass
class PipelineConfig:
    out_dir: str
    planted: str | None = None
    flows: str | None = None
    dhcp: str | None = None
    wlan: str | None = None
    domains: str | None = None
    # None keeps the planted corpus's own seed and uses 0 for the other stages
    seed: int | None = None
    alpha: float = DEFAULT_ALPHA
    top_k: int = 100
    metric: str = "flows"
    bin_width: float = 1.0
    k: int = 10
    l: int = 10
    n_init: int = DEFAULT_N_INIT
    matrix_weight: str = "flows"
    layout_iters: int = 200
    graph_formats: list[str] = field(default_factory=lambda: list(GRAPH_FORMATS))
    global_generic: bool = False
    threads: int = 1

    def validate(self) -> None:
        if not 0 < self.alpha < 1:
            raise InvalidConfigError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.top_k < 1:
            raise InvalidConfigError("top_k must be >= 1")
        if self.k < 1 or self.l < 1:
            raise InvalidConfigError("k and l must be >= 1")
        if self.bin_width <= 0:
            raise InvalidConfigError("bin_width must be positive")
        if self.layout_iters < 1:
            raise InvalidConfigError("layout_iters must be >= 1")
        if self.metric not in ("flows", "bytes") or self.matrix_weight not in ("flows", "bytes"):
            raise InvalidConfigError("metric and matrix_weight must be 'flows' or 'bytes'")
        if any(f not in GRAPH_FORMATS for f in self.graph_formats):
            raise InvalidConfigError(f"graph formats must be among {GRAPH_FORMATS}")
        traces = [self.flows, self.dhcp, self.wlan, self.domains]
        if self.planted is None and any(t is None for t in traces):
            raise InvalidConfigError("give either a planted config or all four trace files")

    @classmethod
    def from_dict(cls, d: Mapping[str, Any], base: Path | None = None) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise InvalidConfigError(f"unknown config keys: {sorted(extra)}")
        if "out_dir" not in d:
            raise InvalidConfigError("config needs out_dir")
        cfg = cls(**d)
        if base is not None:
            # relative paths are taken relative to the config file
            for name in ("out_dir", "planted", "flows", "dhcp", "wlan", "domains"):
                v = getattr(cfg, name)
                if v is not None and not Path(v).is_absolute():
                    setattr(cfg, name, str(base / v))
        return cfg

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        path = Path(path)
        try:
            return cls.from_dict(_read_json(path), base=path.parent)
        except OSError as exc:
            raise InvalidConfigError(f"cannot read config {path}: {exc}") from exc
        except (ValueError, TypeError) as exc:
            raise InvalidConfigError(f"malformed config {path}: {exc}") from exc

    @property
    def stage_seed(self) -> int:
        return 0 if self.seed is None else self.seed

    def echo(self) -> str:
        keep = ("seed", "alpha", "top_k", "k", "l", "bin_width", "metric")
        return ", ".join(f"{k}={getattr(self, k)}" for k in keep)


def sha256_of(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir: Path, files: list[Path]) -> Path:
    entries = {p.relative_to(out_dir).as_posix(): sha256_of(p) for p in sorted(set(files))}
    return _write_json(out_dir / "manifest.json", {"version": __version__, "files": entries})


def _stage(name: str, cfg: PipelineConfig, fn: Callable, *args, **kwargs):
    t = time.perf_counter()
    try:
        result = fn(*args, **kwargs)
    except FlowlensError as exc:
        if exc.stage is None:
            exc.stage = name
        log.error("stage %s failed (%s): %s", name, cfg.echo(), exc)
        raise
    except OSError as exc:
        raise StageError(f"{exc} ({cfg.echo()})", stage=name) from exc
    log.info("stage %s done in %.2fs", name, time.perf_counter() - t)
    return result


def run_pipeline(cfg: PipelineConfig, force: bool = False) -> Path:
    """Run every stage into ``cfg.out_dir``; returns the manifest path."""
    cfg.validate()
    out = Path(cfg.out_dir)
    if out.exists() and any(out.iterdir()):
        if not force:
            raise InvalidConfigError(f"{out} is not empty (use --force to overwrite)")
        shutil.rmtree(out)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    if cfg.planted is not None:
        planted = _stage("generate", cfg, PlantedConfig.load, cfg.planted)
        traces = _stage("generate", cfg, generate, planted, out / "traces", cfg.seed)
        paths = (traces.flows, traces.dhcp, traces.wlan, traces.domains)
        written += [*paths, traces.truth]
    else:
        paths = tuple(Path(p) for p in (cfg.flows, cfg.dhcp, cfg.wlan, cfg.domains))
        for p in paths:
            if not p.exists():
                raise StageError(f"missing input {p} ({cfg.echo()})", stage="ingest")

    res = _stage("ingest", cfg, ingest, *paths, top_k=cfg.top_k, metric=cfg.metric, bin_width=cfg.bin_width)
    write_enriched(out / "enriched.jsonl", res.flows)
    written.append(out / "enriched.jsonl")
    for kind in SERIES_KINDS:
        write_series(out / f"series_{kind}.jsonl", res.series[kind])
        written.append(out / f"series_{kind}.jsonl")
    written.append(_write_json(out / "drop_stats.json", asdict(res.stats)))

    model_paths = []
    for kind in ("domain", "building"):
        models, failed = _stage("fit", cfg, fit_series, res.series[kind], cfg.alpha, cfg.threads)
        p = _write_json(out / f"models_{kind}.json", models_to_json(kind, cfg.alpha, models, failed))
        model_paths.append(p)
        written.append(p)

    for kind in ("domain", "building"):
        written += _stage(
            "simgraph", cfg, run_simgraph, out / f"series_{kind}.jsonl", out / f"graph_{kind}", kind,
            cfg.alpha, cfg.layout_iters, cfg.stage_seed, tuple(cfg.graph_formats), cfg.threads,
        )

    cc_paths = []
    for mode in MODES:
        p = _stage(
            "cocluster", cfg, run_cocluster, res.flows, out / f"cc_{mode}.json", mode, cfg.k, cfg.l, cfg.stage_seed,
            cfg.alpha, cfg.bin_width, cfg.matrix_weight, cfg.n_init, cells_out=out / f"cells_{mode}.jsonl",
        )
        cc_paths.append(p)
        written += [p, out / f"cells_{mode}.jsonl"]

    _stage("evaluate", cfg, run_evaluate, out, model_paths, cc_paths, out / "report.json", out / "report.txt",
           cfg.alpha, cfg.global_generic)
    written += [out / "report.json", out / "report.txt"]
    return write_manifest(out, written)
