"""Deterministic array archives and the on-disk feature store."""
from __future__ import annotations

import hashlib
import io
import json
import logging
import zipfile
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .errors import ConflictError, FormatError, MissingInputError
from .features import FeatureConfig, FrameFeatures, extract_features
from .seqmodel import SequenceBundle

log = logging.getLogger(__name__)

STORE_FORMAT = "relau-features/1"
_EPOCH = (1980, 1, 1, 0, 0, 0)


def _json_default(o):
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.integer):
        return int(o)
    raise TypeError(type(o))


def write_archive(path, meta: dict, arrays: Dict[str, np.ndarray]) -> None:
    """Zip of ``meta.json`` plus one ``.npy`` per array, fixed timestamps, sorted entries."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with zipfile.ZipFile(tmp, "w") as zf:
        def put(name, data: bytes):
            info = zipfile.ZipInfo(name, date_time=_EPOCH)
            info.compress_type = zipfile.ZIP_DEFLATED
            zf.writestr(info, data)

        put("meta.json", json.dumps(meta, sort_keys=True, indent=1, default=_json_default).encode())
        for name in sorted(arrays):
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.ascontiguousarray(arrays[name]), allow_pickle=False)
            put(name + ".npy", buf.getvalue())
    tmp.replace(path)


def read_archive(path) -> Tuple[dict, Dict[str, np.ndarray]]:
    path = Path(path)
    if not path.is_file():
        raise MissingInputError(f"missing file {path}")
    try:
        with zipfile.ZipFile(path) as zf:
            meta = json.loads(zf.read("meta.json"))
            arrays = {}
            for name in zf.namelist():
                if name.endswith(".npy"):
                    arrays[name[:-4]] = np.lib.format.read_array(io.BytesIO(zf.read(name)), allow_pickle=False)
    except (zipfile.BadZipFile, KeyError, ValueError, OSError) as exc:
        raise FormatError(f"{path}: unreadable archive ({exc})") from None
    return meta, arrays


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def bundle_digest(bundle: SequenceBundle, fcfg: FeatureConfig) -> str:
    """Digest of exactly the inputs feature extraction reads."""
    h = hashlib.sha256()
    h.update(bundle.key.encode())
    for f in bundle.frames:
        h.update(np.int64(f.index).tobytes())
        h.update(np.ascontiguousarray(f.landmarks.points).tobytes())
        h.update(np.asarray(f.pose.as_array()).tobytes())
        for spec in fcfg.patches:
            p = f.patches.get(spec.patch_id)
            if p is not None:
                h.update(spec.patch_id.encode())
                h.update(np.ascontiguousarray(np.asarray(p.pixels, float)).tobytes())
    return h.hexdigest()


class FeatureStore:
    """Per-AU directory of extracted features keyed by bundle.

    ``manifest.json`` records the feature config hash; each entry records the
    input digest and the archive checksum. Entries whose inputs are unchanged
    and whose checksum verifies are reused; anything else is recomputed.
    """

    def __init__(self, root, fcfg: FeatureConfig):
        self.fcfg = fcfg
        self.dir = Path(root) / f"AU{fcfg.au_id}"
        self.manifest_path = self.dir / "manifest.json"
        self.entries: Dict[str, dict] = {}
        if self.manifest_path.is_file():
            try:
                doc = json.loads(self.manifest_path.read_text(encoding="utf-8"))
            except json.JSONDecodeError as exc:
                raise FormatError(f"{self.manifest_path}: invalid JSON ({exc})") from None
            if doc.get("format") != STORE_FORMAT:
                raise FormatError(f"{self.manifest_path}: unsupported store format")
            if doc.get("feature_hash") != fcfg.hash:
                raise ConflictError(
                    f"feature store {self.dir} was built with feature config {doc.get('feature_hash', '')[:12]}, "
                    f"current config is {fcfg.hash[:12]}; use a different store directory")
            self.entries = doc.get("entries", {})
        self.computed = 0
        self.reused = 0

    def _file(self, bundle: SequenceBundle) -> Path:
        return self.dir / f"{bundle.subject_id}__{bundle.sequence_id}.feat"

    def _valid(self, bundle: SequenceBundle, digest: str) -> bool:
        e = self.entries.get(bundle.key)
        path = self._file(bundle)
        if e is None or e.get("input") != digest or not path.is_file():
            return False
        if sha256_file(path) != e.get("sha256"):
            log.warning("feature store entry %s failed its checksum; recomputing", bundle.key)
            return False
        return True

    def get(self, bundle: SequenceBundle, workers: int = 1) -> FrameFeatures:
        digest = bundle_digest(bundle, self.fcfg)
        path = self._file(bundle)
        if self._valid(bundle, digest):
            _, arr = read_archive(path)
            self.reused += 1
            return FrameFeatures(arr["geometric"], arr["appearance"].astype(float), arr["frames"])
        feats = extract_features(bundle, self.fcfg, workers=workers)
        appearance = feats.appearance
        if np.all(appearance == np.rint(appearance)):
            appearance = appearance.astype(np.int32)
        write_archive(path, {"bundle": bundle.key, "feature_hash": self.fcfg.hash},
                      {"geometric": feats.geometric, "appearance": appearance, "frames": feats.frames})
        self.entries[bundle.key] = {"input": digest, "sha256": sha256_file(path)}
        self.computed += 1
        return feats

    def save(self) -> None:
        self.dir.mkdir(parents=True, exist_ok=True)
        doc = {"format": STORE_FORMAT, "au_id": self.fcfg.au_id, "feature_hash": self.fcfg.hash,
               "features": self.fcfg.to_dict(), "entries": dict(sorted(self.entries.items()))}
        self.manifest_path.write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n", encoding="utf-8")

    def extract(self, bundles: Sequence[SequenceBundle], workers: int = 1) -> List[Tuple[SequenceBundle, FrameFeatures]]:
        items = [(b, self.get(b, workers)) for b in bundles]
        self.save()
        return items
