import json
import logging

import numpy as np
import pytest

from relau.appearance import GaborBank
from relau.errors import ConflictError, FormatError, MissingInputError
from relau.features import extract_features, load_feature_config
from relau.store import FeatureStore, read_archive, sha256_file, write_archive

FCFG = load_feature_config(12)


def test_archive_round_trip_and_determinism(tmp_path):
    arrays = {"b": np.arange(6.0).reshape(2, 3), "a": np.array([1, 2], np.int32)}
    write_archive(tmp_path / "x", {"k": 1}, arrays)
    write_archive(tmp_path / "y", {"k": 1}, dict(reversed(list(arrays.items()))))
    assert (tmp_path / "x").read_bytes() == (tmp_path / "y").read_bytes()
    meta, back = read_archive(tmp_path / "x")
    assert meta == {"k": 1} and np.array_equal(back["b"], arrays["b"]) and back["a"].dtype == np.int32
    with pytest.raises(MissingInputError):
        read_archive(tmp_path / "none")
    (tmp_path / "z").write_bytes(b"garbage")
    with pytest.raises(FormatError):
        read_archive(tmp_path / "z")


def test_second_run_reuses_everything(tmp_path, small_corpus):
    bundles = small_corpus[:3]
    first = FeatureStore(tmp_path, FCFG)
    items = first.extract(bundles)
    assert (first.computed, first.reused) == (3, 0)
    second = FeatureStore(tmp_path, FCFG)
    again = second.extract(bundles)
    assert (second.computed, second.reused) == (0, 3)
    for (_, a), (_, b) in zip(items, again):
        assert np.array_equal(a.appearance, b.appearance) and np.array_equal(a.geometric, b.geometric)
    manifest = json.loads((tmp_path / "AU12" / "manifest.json").read_text())
    assert manifest["feature_hash"] == FCFG.hash and len(manifest["entries"]) == 3


def test_vector_length(tmp_path, small_corpus):
    (_, feats), = FeatureStore(tmp_path, FCFG).extract(small_corpus[:1])
    n = len(FCFG.patches)
    assert feats.appearance.shape[1] == 30 * n * 256 == FCFG.appearance_length
    assert np.array_equal(feats.appearance, extract_features(small_corpus[0], FCFG).appearance)


def test_corrupt_entry_is_recomputed(tmp_path, small_corpus, caplog):
    bundles = small_corpus[:2]
    FeatureStore(tmp_path, FCFG).extract(bundles)
    victim = tmp_path / "AU12" / f"{bundles[0].subject_id}__{bundles[0].sequence_id}.feat"
    good = sha256_file(victim)
    data = bytearray(victim.read_bytes())
    data[len(data) // 2] ^= 0xFF
    victim.write_bytes(bytes(data))
    store = FeatureStore(tmp_path, FCFG)
    with caplog.at_level(logging.WARNING):
        store.extract(bundles)
    assert (store.computed, store.reused) == (1, 1)
    assert "checksum" in caplog.text
    assert sha256_file(victim) == good


def test_changed_input_is_recomputed(tmp_path, small_corpus):
    FeatureStore(tmp_path, FCFG).extract(small_corpus[:1])
    other = small_corpus[1]
    renamed = type(other)(small_corpus[0].subject_id, small_corpus[0].sequence_id, other.frames,
                          other.annotations, other.intrinsics, other.patch_specs, other.truth)
    store = FeatureStore(tmp_path, FCFG)
    store.extract([renamed])
    assert store.computed == 1


def test_config_hash_conflict(tmp_path, small_corpus):
    FeatureStore(tmp_path, FCFG).extract(small_corpus[:1])
    changed = load_feature_config(12, bank=GaborBank(sigma=2.0))
    with pytest.raises(ConflictError):
        FeatureStore(tmp_path, changed)
