"""On-disk model bundle: a directory of JSON files plus a SHA-256 manifest."""

from __future__ import annotations

import hashlib
import json
import os
import shutil
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Dataset
from .ensemble import VotingEnsemble, predict
from .errors import ConfigError, CorruptBundleError, DimensionMismatchError
from .learners import ForestModel
from .preprocess import ScalerChain, transform
from .reduce import Reducer, apply_reducer, reducer_from_dict

FORMAT_VERSION = 1
CHECKSUM_FILE = "SHA256SUMS"
FILES = ("manifest.json", "scalers.json", "reducer.json", "model_1.json", "model_2.json", "vote.json")


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1, ensure_ascii=False, allow_nan=False) + "\n"


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass(eq=False)
class ModelBundle:
    scalers: ScalerChain
    reducer: Reducer
    ensemble: VotingEnsemble
    manifest: dict
    tuner_trace: dict | None = None

    @property
    def n_features(self) -> int:
        return self.scalers.feature_count

    def prepare(self, data: Dataset) -> Dataset:
        if data.feature_count != self.n_features:
            raise DimensionMismatchError(self.n_features, data.feature_count)
        return apply_reducer(self.reducer, transform(self.scalers, data))

    def predict(self, data: Dataset) -> tuple[np.ndarray, np.ndarray]:
        return predict(self.ensemble, self.prepare(data))

    def vote_dict(self) -> dict:
        e = self.ensemble
        return {
            "w1": e.w1,
            "w2": e.w2,
            "grid_report": e.grid_report,
            "tuner_trace": self.tuner_trace,
        }


class DirectoryLock:
    """Exclusive ``<dir>.lock`` marker so two writers cannot target one bundle."""

    def __init__(self, target: Path):
        self.path = target.with_name(target.name + ".lock")

    def __enter__(self):
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise ConfigError(f"bundle directory is locked by another writer: {self.path}") from None
        with os.fdopen(fd, "w") as fh:
            fh.write(str(os.getpid()))
        return self

    def __exit__(self, *exc):
        self.path.unlink(missing_ok=True)


def save_bundle(bundle: ModelBundle, out_dir) -> Path:
    """Write into a sibling temp directory, then swap it into place."""
    out_dir = Path(out_dir)
    out_dir.parent.mkdir(parents=True, exist_ok=True)
    tmp = out_dir.with_name(out_dir.name + f".tmp-{os.getpid()}")
    if tmp.exists():
        shutil.rmtree(tmp)
    tmp.mkdir()
    try:
        payloads = {
            "manifest.json": bundle.manifest,
            "scalers.json": bundle.scalers.to_dict(),
            "reducer.json": bundle.reducer.to_dict(),
            "model_1.json": bundle.ensemble.model_1.to_dict(),
            "model_2.json": bundle.ensemble.model_2.to_dict(),
            "vote.json": bundle.vote_dict(),
        }
        lines = []
        for name in FILES:
            (tmp / name).write_text(dumps(payloads[name]), encoding="utf-8")
            lines.append(f"{sha256_file(tmp / name)}  {name}\n")
        (tmp / CHECKSUM_FILE).write_text("".join(lines), encoding="utf-8")
        if out_dir.exists():
            shutil.rmtree(out_dir)
        tmp.rename(out_dir)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return out_dir


def verify_checksums(bundle_dir: Path) -> None:
    sums = bundle_dir / CHECKSUM_FILE
    if not sums.exists():
        raise CorruptBundleError(f"missing {CHECKSUM_FILE} in {bundle_dir}")
    expected = {}
    for line in sums.read_text(encoding="utf-8").splitlines():
        digest, _, name = line.partition("  ")
        expected[name] = digest
    for name in FILES:
        path = bundle_dir / name
        if name not in expected or not path.exists():
            raise CorruptBundleError(f"bundle file missing: {name}")
        if sha256_file(path) != expected[name]:
            raise CorruptBundleError(f"checksum mismatch for {name}")


def load_bundle(bundle_dir) -> ModelBundle:
    bundle_dir = Path(bundle_dir)
    if not bundle_dir.is_dir():
        raise CorruptBundleError(f"not a bundle directory: {bundle_dir}")
    verify_checksums(bundle_dir)
    try:
        docs = {name: json.loads((bundle_dir / name).read_text(encoding="utf-8")) for name in FILES}
    except json.JSONDecodeError as exc:
        raise CorruptBundleError(f"unreadable bundle JSON: {exc}") from exc
    manifest = docs["manifest.json"]
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise CorruptBundleError(f"unsupported bundle format_version {version!r} (expected {FORMAT_VERSION})")
    try:
        vote = docs["vote.json"]
        ensemble = VotingEnsemble(
            ForestModel.from_dict(docs["model_1.json"]),
            ForestModel.from_dict(docs["model_2.json"]),
            vote["w1"],
            vote["grid_report"],
        )
        return ModelBundle(
            scalers=ScalerChain.from_dict(docs["scalers.json"]),
            reducer=reducer_from_dict(docs["reducer.json"]),
            ensemble=ensemble,
            manifest=manifest,
            tuner_trace=vote.get("tuner_trace"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptBundleError(f"malformed bundle content: {exc}") from exc
