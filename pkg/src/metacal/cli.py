"""Command-line front end tying the toolkit together.

Subcommands
-----------
synth          generate a synthetic multi-site benchmark plus manifest
train-meta     meta-train the shared initialization on manifest sources
adapt          adapt a trained initialization at one target and score it
compare        run every (target, method, seed) and write comparison tables
export-series  dump timestamp/raw/reference/calibrated CSV for one target

A single JSON config file drives everything except `synth`; every
hyperparameter has a default, so a minimal config is just
``{"manifest": ..., "out_dir": ...}``. Relative paths in the config are
resolved against the config file's directory. CLI flags override config
values. Exit codes: 0 success, 1 usage error, 2 data error, 3 training
failure. METACAL_THREADS caps compare's worker threads (default 1).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import dataio, metrics, synthgen
from .baselines import FinetuneConfig, finetune, pretrain, train_b1
from .dataio import NormStats, SiteDataset, TaskSplit
from .meta import MetaConfig, MetaLearner, deploy_target, train_meta
from .nnet import MlpSpec, ParamVector, forward, load_params, save_params, to_bytes

log = logging.getLogger(__name__)


class UsageError(Exception):
    """Bad flags or a bad config file (exit 1)."""


class DataError(Exception):
    """Unreadable or unusable input data (exit 2)."""


class TrainingError(Exception):
    """A training run failed outright (exit 3)."""


# ---------------------------------------------------------------------------
# experiment configuration

_METHOD_RANK = {m: i for i, m in enumerate(metrics.METHODS)}


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one comparison run depends on, in one reproducible blob."""

    manifest: Path
    out_dir: Path
    methods: tuple[str, ...] = metrics.METHODS
    seeds: tuple[int, ...] = (0,)
    b2_source: str | None = None
    b2_all_sources: bool = False
    hidden_widths: tuple[int, ...] = (128, 128)
    meta: MetaConfig = field(default_factory=MetaConfig)
    finetune: FinetuneConfig = field(default_factory=FinetuneConfig)

    def __post_init__(self):
        methods = tuple(str(m).upper() for m in self.methods)
        unknown = [m for m in methods if m not in _METHOD_RANK]
        if unknown:
            raise UsageError(f"unknown method(s) {unknown}, choose from {list(metrics.METHODS)}")
        if not methods:
            raise UsageError("need at least one method")
        methods = tuple(sorted(set(methods), key=_METHOD_RANK.__getitem__))
        object.__setattr__(self, "methods", methods)
        seeds = tuple(dict.fromkeys(int(s) for s in self.seeds))
        if not seeds:
            raise UsageError("need at least one seed")
        object.__setattr__(self, "seeds", seeds)
        widths = tuple(int(w) for w in self.hidden_widths)
        if not widths or min(widths) < 1:
            raise UsageError(f"hidden_widths must be positive, got {self.hidden_widths}")
        object.__setattr__(self, "hidden_widths", widths)
        object.__setattr__(self, "manifest", Path(self.manifest))
        object.__setattr__(self, "out_dir", Path(self.out_dir))

    def mlp_spec(self) -> MlpSpec:
        return MlpSpec(input_dim=4, hidden_widths=self.hidden_widths, output_dim=1)


def _build_dataclass(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise UsageError(f"config section {where!r} must be an object")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise UsageError(f"unknown key(s) in config section {where!r}: {unknown}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"config section {where!r}: {exc}") from exc


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise UsageError(f"{path}: config must be a JSON object")
    for key in ("manifest", "out_dir"):
        if key not in raw:
            raise UsageError(f"{path}: missing required config key {key!r}")
    raw = dict(raw)
    meta = _build_dataclass(MetaConfig, raw.pop("meta", {}), "meta")
    ft = _build_dataclass(FinetuneConfig, raw.pop("finetune", {}), "finetune")
    # relative paths are relative to the config file, like manifest entries
    raw["manifest"] = path.parent / raw["manifest"]
    raw["out_dir"] = path.parent / raw["out_dir"]
    cfg = _build_dataclass(ExperimentConfig, raw, "top level")
    return dataclasses.replace(cfg, meta=meta, finetune=ft)


def _config_from_args(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    updates: dict = {}
    if getattr(args, "manifest", None):
        updates["manifest"] = Path(args.manifest)
    if getattr(args, "out_dir", None):
        updates["out_dir"] = Path(args.out_dir)
    if getattr(args, "methods", None):
        updates["methods"] = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    if getattr(args, "seeds", None):
        try:
            updates["seeds"] = tuple(int(s) for s in args.seeds.split(","))
        except ValueError as exc:
            raise UsageError(f"--seeds must be comma-separated integers: {exc}") from exc
    try:
        return dataclasses.replace(cfg, **updates) if updates else cfg
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc


# ---------------------------------------------------------------------------
# shared loading helpers

def _load_sites(cfg: ExperimentConfig) -> tuple[list[SiteDataset], list[SiteDataset]]:
    try:
        return dataio.load_manifest_sites(cfg.manifest)
    except (OSError, ValueError) as exc:
        raise DataError(f"loading manifest {cfg.manifest}: {exc}") from exc


def _find_site(sites: Sequence[SiteDataset], site_id: str, role: str) -> SiteDataset:
    for site in sites:
        if site.site_id == site_id:
            return site
    have = ", ".join(s.site_id for s in sites) or "none"
    raise DataError(f"no {role} site {site_id!r} in manifest (have: {have})")


def _pooled_stats(sources: Sequence[SiteDataset]) -> NormStats:
    if not sources:
        raise DataError("manifest lists no source sites")
    try:
        return dataio.fit_norm([r for site in sources for r in site.records])
    except ValueError as exc:
        raise DataError(f"fitting source statistics: {exc}") from exc


def _stats_sidecar(checkpoint: Path) -> Path:
    return checkpoint.with_suffix(".stats.json")


def _load_checkpoint_stats(checkpoint: Path,
                           sources: Sequence[SiteDataset]) -> tuple[ParamVector, NormStats]:
    """Load parameters plus the statistics they were trained under.

    The sidecar written next to every checkpoint wins; without one the
    pooled-source statistics are refitted (identical by construction)."""
    try:
        params = load_params(checkpoint)
    except (OSError, ValueError) as exc:
        raise DataError(f"loading checkpoint {checkpoint}: {exc}") from exc
    sidecar = _stats_sidecar(checkpoint)
    if sidecar.exists():
        try:
            stats = NormStats.from_json(sidecar.read_text())
        except (OSError, ValueError, KeyError) as exc:
            raise DataError(f"loading {sidecar}: {exc}") from exc
    else:
        stats = _pooled_stats(sources)
    return params, stats


def _format_ts(dt) -> str:
    return dt.strftime("%Y-%m-%dT%H:%M:%SZ")


def _write_history_csv(path: Path, history: Sequence[tuple[int, float]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "mean_query_loss"])
        for iteration, loss in history:
            writer.writerow([iteration, repr(float(loss))])


# ---------------------------------------------------------------------------
# compare orchestration

@dataclass(frozen=True)
class _Leaf:
    """One (target, method, seed) unit of work; source set for B2 only."""

    target: str
    method: str
    source: str | None
    seed: int | None

    def tag(self) -> str:
        base = self.method.lower() if self.source is None else f"b2-{self.source}"
        return base if self.seed is None else f"{base}_s{self.seed}"


@dataclass
class _LeafResult:
    leaf: _Leaf
    report: metrics.EvalReport | None
    error: str | None
    artifacts: list[tuple[Path, bytes]]


_DETAIL_FIELDS = ["target", "method", "source", "seed", "status",
                  "n_samples", "mae", "mae_std", "rmse", "r2", "error"]


def _thread_count() -> int:
    raw = os.environ.get("METACAL_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError as exc:
        raise UsageError(f"METACAL_THREADS must be an integer, got {raw!r}") from exc


def _detail_row(res: _LeafResult) -> dict:
    leaf = res.leaf
    row = {
        "target": leaf.target,
        "method": leaf.method,
        "source": leaf.source or "",
        "seed": "-" if leaf.seed is None else leaf.seed,
        "status": "ok" if res.report else "failed",
        "n_samples": "", "mae": "", "mae_std": "", "rmse": "", "r2": "",
        "error": res.error or "",
    }
    if res.report:
        rep = res.report
        row.update(n_samples=rep.n_samples, mae=repr(rep.mae), mae_std=repr(rep.mae_std),
                   rmse=repr(rep.rmse), r2=repr(rep.r2))
    return row


def _summary_columns(methods: Sequence[str], b2_all: bool) -> list[str]:
    cols = []
    for m in methods:
        cols.append(m)
        if m == "B2" and b2_all:
            cols.append("B2avg")
    return cols


def _summary_table(results: Sequence[_LeafResult], target_ids: Sequence[str],
                   methods: Sequence[str], b2_primary: str | None,
                   b2_all: bool) -> list[list[str]]:
    """Table-1 shaped rows: one per target plus a MEAN row, with per-method
    MAE/std/RMSE/R2x100 column groups averaged over seeds."""
    groups: dict[tuple[str, str], list[metrics.EvalReport]] = {}
    for res in results:
        if res.report is None:
            continue
        keys = [res.leaf.method]
        if res.leaf.method == "B2":
            keys = ["B2avg"] + (["B2"] if res.leaf.source == b2_primary else [])
        for key in keys:
            groups.setdefault((res.leaf.target, key), []).append(res.report)

    columns = _summary_columns(methods, b2_all)
    header = ["target"]
    for col in columns:
        header += [f"{col}_mae", f"{col}_mae_std", f"{col}_rmse", f"{col}_r2x100"]
    rows = [header]
    sums: dict[str, list[float]] = {col: [] for col in columns}
    for tid in target_ids:
        row = [tid]
        for col in columns:
            reports = groups.get((tid, col), [])
            if not reports:
                row += ["", "", "", ""]
                continue
            mean = [float(np.mean([getattr(r, f) for r in reports]))
                    for f in ("mae", "mae_std", "rmse", "r2")]
            row += [f"{mean[0]:.2f}", f"{mean[1]:.2f}", f"{mean[2]:.2f}", f"{mean[3] * 100:.1f}"]
            sums[col].append(mean)
        rows.append(row)
    mean_row = ["MEAN"]
    for col in columns:
        if not sums[col]:
            mean_row += ["", "", "", ""]
            continue
        grand = np.mean(np.asarray(sums[col]), axis=0)
        mean_row += [f"{grand[0]:.2f}", f"{grand[1]:.2f}", f"{grand[2]:.2f}", f"{grand[3] * 100:.1f}"]
    rows.append(mean_row)
    return rows


def run_compare(cfg: ExperimentConfig) -> int:
    """Train, adapt, and evaluate every (target, method, seed); write the
    summary and detail CSVs plus per-run reports and checkpoints.

    Sub-run failures are marked in the detail file rather than aborting;
    the exit code is 3 only when every run failed.
    """
    sources, targets = _load_sites(cfg)
    if not targets:
        raise DataError("manifest lists no target sites")
    # RAW costs nothing and anchors every table
    methods = tuple(sorted(set(cfg.methods) | {"RAW"}, key=_METHOD_RANK.__getitem__))
    needs_sources = bool({"B2", "B3", "MAML"} & set(methods))
    if needs_sources and not sources:
        raise DataError("manifest lists no source sites but transfer methods were requested")

    spec = cfg.mlp_spec()
    out = cfg.out_dir
    for sub in ("reports", "checkpoints", "stats", "meta"):
        (out / sub).mkdir(parents=True, exist_ok=True)

    source_ids = [s.site_id for s in sources]
    b2_sources: list[str] = []
    b2_primary = None
    if "B2" in methods:
        b2_primary = cfg.b2_source or source_ids[0]
        if b2_primary not in source_ids:
            raise UsageError(f"b2_source {b2_primary!r} is not a source site in the manifest")
        b2_sources = sorted(source_ids) if cfg.b2_all_sources else [b2_primary]

    pooled = _pooled_stats(sources) if {"B3", "MAML"} & set(methods) else None
    src_stats = {}
    for sid in b2_sources:
        site = _find_site(sources, sid, "source")
        try:
            src_stats[sid] = dataio.fit_norm(site.records)
        except ValueError as exc:
            raise DataError(f"fitting statistics for source {sid}: {exc}") from exc
    if pooled is not None:
        (out / "stats" / "pooled_sources.json").write_text(pooled.to_json())
    for sid, st in sorted(src_stats.items()):
        (out / "stats" / f"source_{sid}.json").write_text(st.to_json())

    # per-target splits, one per normalization provenance; a failure here
    # (typically a too-short site) marks all of that target's runs failed
    splits: dict[tuple[str, str], TaskSplit | Exception] = {}
    for site in targets:
        provenances: list[tuple[str, NormStats | None]] = []
        if {"RAW", "B1"} & set(methods):
            provenances.append(("b1", None))
        if pooled is not None:
            provenances.append(("pooled", pooled))
        provenances += [(f"src:{sid}", src_stats[sid]) for sid in b2_sources]
        for name, stats in provenances:
            try:
                split = dataio.split_target(site, stats=stats)
                splits[(site.site_id, name)] = split
                if name == "b1":
                    (out / "stats" / f"target_{site.site_id}_train.json").write_text(
                        split.stats.to_json())
            except ValueError as exc:
                splits[(site.site_id, name)] = exc

    # shared trained artifacts, reused across targets
    shared: dict[tuple, object] = {}
    pooled_batch = None
    if "B3" in methods:
        pooled_batch = dataio.apply_norm([r for s in sources for r in s.records], pooled)
    for seed in cfg.seeds:
        if "MAML" in methods:
            try:
                meta_cfg = dataclasses.replace(cfg.meta, seed=seed)
                learner = train_meta(sources, meta_cfg, spec, stats=pooled)
                shared[("meta", seed)] = learner
                ckpt = out / "meta" / f"meta_phi_s{seed}.bin"
                save_params(ckpt, learner.phi)
                _stats_sidecar(ckpt).write_text(pooled.to_json())
                _write_history_csv(out / "meta" / f"meta_history_s{seed}.csv", learner.history)
            except ValueError as exc:
                log.warning("meta-training failed for seed %d: %s", seed, exc)
                shared[("meta", seed)] = exc
        if "B3" in methods:
            try:
                shared[("b3pre", seed)] = pretrain(pooled_batch, cfg.finetune, seed, spec)
            except ValueError as exc:
                shared[("b3pre", seed)] = exc
        for sid in b2_sources:
            site = _find_site(sources, sid, "source")
            try:
                batch = dataio.apply_norm(site.records, src_stats[sid])
                shared[("b2pre", sid, seed)] = pretrain(batch, cfg.finetune, seed, spec)
            except ValueError as exc:
                shared[("b2pre", sid, seed)] = exc

    target_ids = sorted(site.site_id for site in targets)
    leaves: list[_Leaf] = []
    for tid in target_ids:
        for method in methods:
            if method == "RAW":
                leaves.append(_Leaf(tid, "RAW", None, None))
            elif method == "B2":
                leaves += [_Leaf(tid, "B2", sid, seed)
                           for sid in b2_sources for seed in cfg.seeds]
            else:
                leaves += [_Leaf(tid, method, None, seed) for seed in cfg.seeds]

    def provenance(leaf: _Leaf) -> str:
        if leaf.method in ("RAW", "B1"):
            return "b1"
        if leaf.method == "B2":
            return f"src:{leaf.source}"
        return "pooled"

    def run_leaf(leaf: _Leaf) -> _LeafResult:
        try:
            split = splits[(leaf.target, provenance(leaf))]
            if isinstance(split, Exception):
                raise split
            if leaf.method == "RAW":
                params = None
            elif leaf.method == "B1":
                params = train_b1(split.train, split.val, cfg.finetune, leaf.seed, spec)
            elif leaf.method == "B2":
                pre = shared[("b2pre", leaf.source, leaf.seed)]
                if isinstance(pre, Exception):
                    raise pre
                params = finetune(pre, split.train, split.val, cfg.finetune)
            elif leaf.method == "B3":
                pre = shared[("b3pre", leaf.seed)]
                if isinstance(pre, Exception):
                    raise pre
                params = finetune(pre, split.train, split.val, cfg.finetune)
            else:
                learner = shared[("meta", leaf.seed)]
                if isinstance(learner, Exception):
                    raise learner
                params = deploy_target(learner, split.train, split.val, learner.config)
            report = metrics.evaluate(params, split.test, split.stats, leaf.target, leaf.method)
            artifacts = [(out / "reports" / f"{leaf.target}_{leaf.tag()}.json",
                          report.to_json().encode())]
            if params is not None:
                artifacts.append((out / "checkpoints" / f"{leaf.tag()}_{leaf.target}.bin",
                                  to_bytes(params)))
            return _LeafResult(leaf, report, None, artifacts)
        except Exception as exc:  # isolate failures per run, by contract
            log.warning("run %s/%s failed: %s", leaf.target, leaf.tag(), exc)
            return _LeafResult(leaf, None, f"{type(exc).__name__}: {exc}", [])

    threads = _thread_count()
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_leaf, leaves))
    else:
        results = [run_leaf(leaf) for leaf in leaves]

    for res in results:  # writes stay on the main thread
        for path, payload in res.artifacts:
            path.write_bytes(payload)

    detail_path = out / "details.csv"
    with open(detail_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=_DETAIL_FIELDS)
        writer.writeheader()
        for res in results:
            writer.writerow(_detail_row(res))

    summary_path = out / "summary.csv"
    table = _summary_table(results, target_ids, methods, b2_primary, cfg.b2_all_sources)
    with open(summary_path, "w", newline="") as fh:
        csv.writer(fh).writerows(table)

    n_failed = sum(res.report is None for res in results)
    print(f"wrote {summary_path}")
    print(f"wrote {detail_path}")
    if n_failed:
        print(f"{n_failed} of {len(results)} runs failed (see details.csv)", file=sys.stderr)
    if n_failed == len(results):
        raise TrainingError("every comparison run failed")
    return 0


# ---------------------------------------------------------------------------
# subcommands

def cmd_synth(args) -> int:
    try:
        manifest = synthgen.gen_benchmark(args.out, n_sources=args.sources,
                                          n_targets=args.targets, hours=args.hours,
                                          seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    print(manifest)
    return 0


def cmd_train_meta(args) -> int:
    cfg = _config_from_args(args)
    sources, _ = _load_sites(cfg)
    stats = _pooled_stats(sources)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    try:
        learner = train_meta(sources, cfg.meta, cfg.mlp_spec(), stats=stats)
    except ValueError as exc:
        raise TrainingError(str(exc)) from exc
    ckpt = cfg.out_dir / "meta_phi.bin"
    save_params(ckpt, learner.phi)
    _stats_sidecar(ckpt).write_text(stats.to_json())
    history = cfg.out_dir / "meta_history.csv"
    _write_history_csv(history, learner.history)
    print(ckpt)
    print(history)
    return 0


def cmd_adapt(args) -> int:
    cfg = _config_from_args(args)
    sources, targets = _load_sites(cfg)
    site = _find_site(targets, args.target, "target")
    params, stats = _load_checkpoint_stats(Path(args.checkpoint), sources)
    try:
        split = dataio.split_target(site, stats=stats)
    except ValueError as exc:
        raise DataError(f"splitting target {site.site_id}: {exc}") from exc
    learner = MetaLearner(phi=params, config=cfg.meta)
    try:
        adapted = deploy_target(learner, split.train, split.val, cfg.meta)
    except ValueError as exc:
        raise TrainingError(str(exc)) from exc
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    ckpt = cfg.out_dir / f"adapted_{site.site_id}.bin"
    save_params(ckpt, adapted)
    _stats_sidecar(ckpt).write_text(stats.to_json())
    report = metrics.evaluate(adapted, split.test, stats, site.site_id, "MAML")
    report_path = cfg.out_dir / f"report_{site.site_id}.json"
    report_path.write_text(report.to_json())
    print(ckpt)
    print(f"{site.site_id}: MAE {report.mae:.2f} ({report.mae_std:.2f}) "
          f"RMSE {report.rmse:.2f} R2x100 {report.r2 * 100:.1f}")
    return 0


def cmd_export_series(args) -> int:
    cfg = _config_from_args(args)
    sources, targets = _load_sites(cfg)
    site = _find_site(targets, args.target, "target")
    params, stats = _load_checkpoint_stats(Path(args.checkpoint), sources)
    try:
        split = dataio.split_target(site, stats=stats)
    except ValueError as exc:
        raise DataError(f"splitting target {site.site_id}: {exc}") from exc
    calibrated = dataio.denorm_predictions(forward(params, split.test.inputs), stats)
    lo, hi = split.test_range
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["timestamp", "raw", "reference", "calibrated"])
    for record, pred in zip(site.records[lo:hi], calibrated):
        ref = "" if record.pm25_ref is None else f"{record.pm25_ref:.6f}"
        writer.writerow([_format_ts(record.timestamp), f"{record.pm25_raw:.6f}",
                         ref, f"{pred:.6f}"])
    out_path.write_text(buf.getvalue())
    print(out_path)
    return 0


def cmd_compare(args) -> int:
    return run_compare(_config_from_args(args))


# ---------------------------------------------------------------------------
# parser and entry point

class _Parser(argparse.ArgumentParser):
    """argparse's default usage-error exit code is 2; this toolkit uses 1."""

    def error(self, message):
        raise UsageError(message)


def _add_config_args(sub, methods_and_seeds: bool = False) -> None:
    sub.add_argument("--config", required=True, help="experiment config JSON")
    sub.add_argument("--manifest", help="override the config's manifest path")
    sub.add_argument("--out-dir", help="override the config's output directory")
    if methods_and_seeds:
        sub.add_argument("--methods", help="comma-separated subset of RAW,B1,B2,B3,MAML")
        sub.add_argument("--seeds", help="comma-separated seed list")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="metacal", description=__doc__.split("\n")[0])
    subs = parser.add_subparsers(dest="command", metavar="COMMAND")

    synth = subs.add_parser("synth", help="generate a synthetic benchmark")
    synth.add_argument("--out", required=True, help="benchmark output directory")
    synth.add_argument("--sources", type=int, default=10)
    synth.add_argument("--targets", type=int, default=5)
    synth.add_argument("--hours", type=int, default=3000)
    synth.add_argument("--seed", type=int, default=0)
    synth.set_defaults(func=cmd_synth)

    train = subs.add_parser("train-meta", help="meta-train on manifest sources")
    _add_config_args(train)
    train.set_defaults(func=cmd_train_meta)

    adapt = subs.add_parser("adapt", help="adapt a checkpoint at one target")
    _add_config_args(adapt)
    adapt.add_argument("--checkpoint", required=True)
    adapt.add_argument("--target", required=True, help="target site id")
    adapt.set_defaults(func=cmd_adapt)

    compare = subs.add_parser("compare", help="run the full method comparison")
    _add_config_args(compare, methods_and_seeds=True)
    compare.set_defaults(func=cmd_compare)

    export = subs.add_parser("export-series", help="export a calibrated time series")
    _add_config_args(export)
    export.add_argument("--checkpoint", required=True)
    export.add_argument("--target", required=True, help="target site id")
    export.add_argument("--out", required=True, help="output CSV path")
    export.set_defaults(func=cmd_export_series)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not hasattr(args, "func"):
            parser.print_usage(sys.stderr)
            return 1
        return args.func(args)
    except UsageError as exc:
        print(f"metacal: error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"metacal: data error: {exc}", file=sys.stderr)
        return 2
    except TrainingError as exc:
        print(f"metacal: training error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
