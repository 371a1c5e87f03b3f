"""Train/evaluate orchestration: clean, scale, reduce, partition, train, vote."""

from __future__ import annotations

import hashlib
import json
import logging
import resource
import struct
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .bundle import FORMAT_VERSION, DirectoryLock, ModelBundle, save_bundle
from .data import FORMATS, SplitSpec, clean, concat, infer_format, load_dataset, stratified_split
from .ensemble import TunerConfig, predict, random_search, search_weights, train_ensemble
from .errors import ConfigError, DataError, MalpipeError
from .learners import KINDS, HyperParams, default_hyperparams
from .metrics import MetricsReport, evaluate
from .preprocess import fit_scaler_chain, transform
from .reduce import apply_reducer, fit_pca, fit_selection

log = logging.getLogger(__name__)

CONFIG_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class InputSpec:
    path: Path
    format: str


@dataclass(frozen=True)
class PipelineConfig:
    inputs: tuple[InputSpec, ...]
    split: SplitSpec
    method: str
    k: int
    reduction_seed: int
    learner_kind: str
    hyperparams: HyperParams
    model_seeds: tuple[int, int]
    tuner: TunerConfig | None
    output_dir: Path
    raw: dict = field(default_factory=dict, compare=False)

    def hash(self) -> str:
        canon = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


def _require(d, key, where):
    if key not in d:
        raise ConfigError(f"missing required config field {where}.{key}")
    return d[key]


def _int(v, name):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{name} must be an integer, got {v!r}")
    return v


def parse_config(doc: dict, base_dir: Path = Path(".")) -> PipelineConfig:
    """Validate a config document. Every seed must be given explicitly."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    version = _require(doc, "schema_version", "config")
    if version != CONFIG_SCHEMA_VERSION:
        raise ConfigError(f"unsupported config schema_version {version!r}")

    raw_inputs = _require(doc, "inputs", "config")
    if not isinstance(raw_inputs, list) or not raw_inputs:
        raise ConfigError("inputs must be a non-empty list")
    inputs = []
    for i, item in enumerate(raw_inputs):
        path = Path(_require(item, "path", f"inputs[{i}]"))
        if not path.is_absolute():
            path = base_dir / path
        try:
            fmt = item.get("format") or infer_format(path)
        except DataError as exc:
            raise ConfigError(f"inputs[{i}]: {exc}") from exc
        if fmt not in FORMATS:
            raise ConfigError(f"inputs[{i}].format must be one of {FORMATS}")
        inputs.append(InputSpec(path, fmt))

    s = _require(doc, "split", "config")
    try:
        split = SplitSpec(
            float(_require(s, "train", "split")),
            float(_require(s, "validation", "split")),
            float(_require(s, "test", "split")),
            _int(_require(s, "seed", "split"), "split.seed"),
        )
    except DataError as exc:
        raise ConfigError(str(exc)) from exc

    r = _require(doc, "reduction", "config")
    method = _require(r, "method", "reduction")
    if method not in ("selection", "pca"):
        raise ConfigError("reduction.method must be 'selection' or 'pca'")
    k = _int(_require(r, "k", "reduction"), "reduction.k")
    if k < 1:
        raise ConfigError("reduction.k must be >= 1")
    reduction_seed = _int(_require(r, "seed", "reduction"), "reduction.seed")

    lcfg = _require(doc, "learner", "config")
    kind = _require(lcfg, "kind", "learner")
    if kind not in KINDS:
        raise ConfigError(f"learner.kind must be one of {KINDS}")
    try:
        hp = default_hyperparams(kind).updated(**lcfg.get("hyperparams", {}))
    except (TypeError, DataError) as exc:
        raise ConfigError(f"learner.hyperparams: {exc}") from exc
    seeds = _require(lcfg, "seeds", "learner")
    if not isinstance(seeds, list) or len(seeds) != 2:
        raise ConfigError("learner.seeds must be a list of two integers")
    seeds = (_int(seeds[0], "learner.seeds[0]"), _int(seeds[1], "learner.seeds[1]"))

    tuner = None
    t = doc.get("tuner")
    if t is not None:
        try:
            tuner = TunerConfig(
                n_trials=_int(t.get("n_trials", 20), "tuner.n_trials"),
                search_space=t.get("search_space", {}),
                objective=t.get("objective", "accuracy"),
                seed=_int(_require(t, "seed", "tuner"), "tuner.seed"),
            )
        except DataError as exc:
            raise ConfigError(f"tuner: {exc}") from exc

    out = Path(_require(doc, "output_dir", "config"))
    if not out.is_absolute():
        out = base_dir / out
    return PipelineConfig(tuple(inputs), split, method, k, reduction_seed, kind, hp, seeds, tuner, out, doc)


def load_config(path) -> PipelineConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return parse_config(doc, path.parent)


def peek_feature_count(spec: InputSpec) -> int:
    """Column count from the file header alone."""
    try:
        if spec.format == "mfbin":
            with open(spec.path, "rb") as fh:
                head = fh.read(16)
            if len(head) < 16 or head[:4] != b"MFB1":
                raise DataError(f"{spec.path}: not an mfbin file")
            return struct.unpack("<I", head[4:8])[0]
        with open(spec.path, encoding="utf-8") as fh:
            header = fh.readline().strip().split(",")
        return len(header) - 1 if header and header[-1] == "label" else len(header)
    except FileNotFoundError:
        raise DataError(f"no such file: {spec.path}") from None


# ---------------------------------------------------------------------------
# telemetry


def peak_rss_mb() -> float:
    return resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1024.0


class StageTrace:
    def __init__(self):
        self.stages = []
        self.seconds = {}

    @contextmanager
    def stage(self, name):
        t0 = time.perf_counter()
        entry = {"stage": name, "rows": 0, "cols": 0}
        try:
            yield entry
        except MalpipeError as exc:
            if not hasattr(exc, "stage"):
                exc.stage = name
            raise
        finally:
            dt = time.perf_counter() - t0
            self.seconds[name] = self.seconds.get(name, 0.0) + dt
            log.info("stage %-12s %8.3fs  %d x %d", name, dt, entry["rows"], entry["cols"])
        self.stages.append(entry)

    @staticmethod
    def note(entry, *datasets):
        for ds in datasets:
            if ds.n_rows * ds.feature_count > entry["rows"] * entry["cols"]:
                entry["rows"], entry["cols"] = ds.n_rows, ds.feature_count


# ---------------------------------------------------------------------------
# train


def validate_against_data(cfg: PipelineConfig) -> int:
    dims = {peek_feature_count(s) for s in cfg.inputs}
    if len(dims) != 1:
        raise ConfigError(f"inputs disagree on feature count: {sorted(dims)}")
    d = dims.pop()
    if not 1 <= cfg.k <= d:
        raise ConfigError(f"reduction.k={cfg.k} must be in [1, {d}] for {d}-dimensional inputs")
    return d


def train(cfg: PipelineConfig) -> tuple[ModelBundle, MetricsReport]:
    """Run the full pipeline and write the bundle. Returns the bundle and validation metrics."""
    validate_against_data(cfg)
    trace = StageTrace()
    started = datetime.now(timezone.utc)

    with trace.stage("load") as st:
        parts = [load_dataset(s.path, s.format) for s in cfg.inputs]
        raw = parts[0] if len(parts) == 1 else concat(parts)
        trace.note(st, raw)
    with trace.stage("clean") as st:
        cleaned, clean_report = clean(raw)
        trace.note(st, raw)
        log.info("clean report %s", clean_report.to_dict())
    with trace.stage("split") as st:
        split = stratified_split(cleaned, cfg.split)
        trace.note(st, cleaned)
    with trace.stage("fit_scalers") as st:
        chain = fit_scaler_chain(split.train)
        trace.note(st, split.train)
    with trace.stage("transform") as st:
        train_s = transform(chain, split.train)
        val_s = transform(chain, split.validation)
        test_s = transform(chain, split.test)
        trace.note(st, train_s)
    with trace.stage("fit_reducer") as st:
        if cfg.method == "selection":
            reducer = fit_selection(train_s, cfg.k, cfg.reduction_seed)
        else:
            reducer = fit_pca(train_s, cfg.k)
        trace.note(st, train_s)
    with trace.stage("reduce") as st:
        val_r = apply_reducer(reducer, val_s)
        test_r = apply_reducer(reducer, test_s)
        trace.note(st, train_s)
    with trace.stage("partition") as st:
        # the halves are stratified subsets of train; reuse their row positions
        pos = {int(r): i for i, r in enumerate(split.train.row_ids)}
        train_r = apply_reducer(reducer, train_s)
        part_a = train_r.take([pos[int(r)] for r in split.partition_a.row_ids])
        part_b = train_r.take([pos[int(r)] for r in split.partition_b.row_ids])
        trace.note(st, part_a, part_b)

    hps = (cfg.hyperparams, cfg.hyperparams)
    tuner_trace = None
    if cfg.tuner is not None:
        with trace.stage("tune") as st:
            res_a = random_search(cfg.learner_kind, part_a, val_r, cfg.tuner, cfg.hyperparams)
            res_b = random_search(cfg.learner_kind, part_b, val_r, cfg.tuner, cfg.hyperparams)
            hps = (res_a.best, res_b.best)
            tuner_trace = {
                "config": cfg.tuner.to_dict(),
                "model_1": {"best": res_a.best.to_dict(), "trials": res_a.trace},
                "model_2": {"best": res_b.best.to_dict(), "trials": res_b.trace},
            }
            trace.note(st, part_a, part_b)
    with trace.stage("train") as st:
        ensemble = train_ensemble(part_a, part_b, cfg.learner_kind, hps, cfg.model_seeds)
        trace.note(st, part_a, part_b)
    with trace.stage("vote") as st:
        ensemble = search_weights(ensemble, val_r)
        trace.note(st, val_r)
    with trace.stage("evaluate") as st:
        val_p, _ = predict(ensemble, val_r)
        test_p, _ = predict(ensemble, test_r)
        val_metrics = evaluate(val_r.labels, val_p)
        test_metrics = evaluate(test_r.labels, test_p)
        trace.note(st, val_r, test_r)

    manifest = {
        "format_version": FORMAT_VERSION,
        "malpipe_version": __version__,
        "config": cfg.raw,
        "config_hash": cfg.hash(),
        "seeds": {
            "split": cfg.split.seed,
            "partition": cfg.split.seed + 1,
            "reduction": cfg.reduction_seed,
            "models": list(cfg.model_seeds),
            "tuner": None if cfg.tuner is None else cfg.tuner.seed,
        },
        "clean_report": clean_report.to_dict(),
        "data": {
            "raw_rows": raw.n_rows,
            "clean_rows": cleaned.n_rows,
            "n_features": raw.feature_count,
            "reduced_features": reducer.k,
            "splits": {
                "train": split.train.n_rows,
                "validation": split.validation.n_rows,
                "test": split.test.n_rows,
                "partition_a": split.partition_a.n_rows,
                "partition_b": split.partition_b.n_rows,
            },
        },
        "reduction": {"method": cfg.method, "k": cfg.k},
        "learner": {
            "kind": cfg.learner_kind,
            "hyperparams": [hps[0].to_dict(), hps[1].to_dict()],
        },
        "vote": {"w1": ensemble.w1, "w2": ensemble.w2},
        "metrics": {"validation": val_metrics.to_dict(), "test": test_metrics.to_dict()},
        "stage_trace": trace.stages,
    }
    bundle = ModelBundle(chain, reducer, ensemble, manifest, tuner_trace)
    with DirectoryLock(cfg.output_dir):
        # wall-clock and memory figures vary run to run; keep them in their own keys
        manifest["timestamps"] = {
            "started": started.isoformat(),
            "finished": datetime.now(timezone.utc).isoformat(),
        }
        manifest["telemetry"] = {
            "stage_seconds": dict(trace.seconds),
            "total_seconds": sum(trace.seconds.values()),
            "peak_rss_mb": peak_rss_mb(),
        }
        save_bundle(bundle, cfg.output_dir)
    return bundle, val_metrics


def evaluate_bundle(bundle: ModelBundle, data) -> MetricsReport:
    if not data.has_labels:
        raise DataError("evaluation data needs labels")
    probs, _ = bundle.predict(data)
    return evaluate(data.labels, probs)


VOLATILE_MANIFEST_KEYS = ("timestamps", "telemetry")


def stable_manifest(manifest: dict) -> dict:
    """Manifest without the run-dependent timing keys."""
    return {k: v for k, v in manifest.items() if k not in VOLATILE_MANIFEST_KEYS}
