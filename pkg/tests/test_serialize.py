import json
import struct

import numpy as np
import pytest

from postureguard.boost import BoostParams, GbdtModel, train
from postureguard.boost.serialize import (
    MAGIC, CorruptModel, VersionMismatch, checksum, fingerprint, from_bytes, load_model, save_model, to_bytes,
)
from postureguard.ood import fit_ood


@pytest.fixture(scope="module")
def trained():
    rng = np.random.default_rng(11)
    y = rng.integers(0, 4, 800)
    X = rng.standard_normal((800, 6)) + np.eye(4, 6)[y]
    model, _ = train(X, y, BoostParams(max_rounds=25, num_leaves=12, seed=1), layout_hash="0123456789abcdef",
                     tau=3, classes=[0, 1, 2, 3, 5])
    return model, X


def _rewrite_header(data, **changes):
    (n,) = struct.unpack_from("<Q", data, len(MAGIC))
    start = len(MAGIC) + 8
    header = json.loads(data[start:start + n])
    header.update(changes)
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    body = MAGIC + struct.pack("<Q", len(head)) + head + data[start + n:-8]
    return body + bytes.fromhex(checksum(body))


def test_round_trip_is_bit_exact(trained, tmp_path):
    model, _ = trained
    digest = save_model(model, tmp_path / "m.pgb")
    loaded = load_model(tmp_path / "m.pgb")
    X = np.random.default_rng(0).standard_normal((1000, 6)) * 3
    assert np.array_equal(loaded.predict_scores(X), model.predict_scores(X))
    assert np.array_equal(loaded.leaf_indices(X), model.leaf_indices(X))
    assert loaded.flat_trees() == model.flat_trees()
    assert loaded.classes.tolist() == [0, 1, 2, 3, 5]
    assert (loaded.tau, loaded.layout_hash, loaded.params) == (3, "0123456789abcdef", model.params)
    assert all(np.array_equal(a, b) for a, b in zip(loaded.bin_edges, model.bin_edges))
    assert to_bytes(loaded) == to_bytes(model)
    assert digest == checksum(to_bytes(model)[:-8])


def test_detector_survives_round_trip(trained):
    model, X = trained
    det = fit_ood(model.leaf_indices(X[:200]), model=model)
    with_ood = GbdtModel(model.classes, model.base_score, model.trees, model.params, model.n_features,
                         model.bin_edges, model.layout_hash, model.tau, det)
    loaded = from_bytes(to_bytes(with_ood))
    assert loaded.ood is not None
    assert np.array_equal(loaded.ood.alphas, det.alphas) and loaded.ood.rho == det.rho
    assert fingerprint(loaded) == fingerprint(model)
    E = model.leaf_indices(X[200:260])
    assert np.array_equal(loaded.ood.decision_function(E), det.decision_function(E))


def test_identical_training_gives_identical_files(trained):
    model, X = trained
    y = np.argmax(model.predict_scores(X), axis=1)
    a, _ = train(X, y, BoostParams(max_rounds=5, seed=3))
    b, _ = train(X, y, BoostParams(max_rounds=5, seed=3))
    assert to_bytes(a) == to_bytes(b)


def test_truncated_file_is_rejected(trained, tmp_path):
    data = to_bytes(trained[0])
    for cut in (0, 5, 20, len(data) // 2, len(data) - 1):
        with pytest.raises(CorruptModel):
            from_bytes(data[:cut])
    flipped = bytearray(data)
    flipped[len(data) // 2] ^= 0x40
    with pytest.raises(CorruptModel):
        from_bytes(bytes(flipped))


def test_version_mismatch(trained):
    data = _rewrite_header(to_bytes(trained[0]), format_version=99)
    with pytest.raises(VersionMismatch):
        from_bytes(data)


def test_empty_model_round_trips():
    model = GbdtModel([0, 1], np.log([0.25, 0.75]), [], BoostParams(), 3)
    loaded = from_bytes(to_bytes(model))
    assert loaded.n_rounds == 0
    np.testing.assert_allclose(loaded.predict_proba(np.zeros((2, 3))), [[0.25, 0.75]] * 2)
