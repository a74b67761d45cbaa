"""FTEN binary tensor format round-trips and corruption handling."""

import struct

import numpy as np
import pytest

from qipfseg import ften
from qipfseg.errors import BadMagic, DimensionOverflow, TruncatedFile
from qipfseg.toymodel import SceneConfig, TrainConfig, forward, generate_scene, train


def test_round_trip_random_tensors(tmp_path):
    rng = np.random.default_rng(0)
    path = tmp_path / "t.ften"
    for i in range(20):
        rank = int(rng.integers(1, 5))
        dims = tuple(int(rng.integers(1, 6)) for _ in range(rank))
        arr = rng.standard_normal(dims)
        ften.write_tensor(arr, path)
        back = ften.read_tensor(path)
        assert back.dtype == np.float64
        assert back.shape == arr.shape
        assert np.array_equal(back, arr)  # bit-identical


def test_header_layout(tmp_path):
    path = tmp_path / "t.ften"
    arr = np.arange(6.0).reshape(2, 3)
    ften.write_tensor(arr, path)
    blob = path.read_bytes()
    magic, version, rank, d0, d1 = struct.unpack("<4sIIII", blob[:20])
    assert magic == b"FTEN" and version == 1 and rank == 2 and (d0, d1) == (2, 3)
    assert blob[20:] == arr.tobytes()  # row-major little-endian payload


def test_bad_magic(tmp_path):
    path = tmp_path / "t.ften"
    ften.write_tensor(np.ones(3), path)
    blob = bytearray(path.read_bytes())
    blob[:4] = b"NOPE"
    path.write_bytes(bytes(blob))
    with pytest.raises(BadMagic):
        ften.read_tensor(path)


def test_truncated_payload_and_header(tmp_path):
    path = tmp_path / "t.ften"
    ften.write_tensor(np.ones((4, 4)), path)
    blob = path.read_bytes()
    path.write_bytes(blob[:-8])  # drop one float
    with pytest.raises(TruncatedFile):
        ften.read_tensor(path)
    path.write_bytes(blob[:6])  # inside the header
    with pytest.raises(TruncatedFile):
        ften.read_tensor(path)


def test_rank_overflow():
    with pytest.raises(DimensionOverflow):
        ften.write_tensor(np.zeros((1,) * 33), "/tmp/unused.ften")


def test_store_load_features(tmp_path):
    scene = generate_scene(0, SceneConfig())
    model = train([scene], TrainConfig(epochs=1), seed=0)
    ft = forward(model, scene)
    path = tmp_path / "feat.ften"
    ften.store_features(ft, path)
    back = ften.load_features(path)
    assert np.array_equal(back.features, ft.features)
    np.testing.assert_allclose(back.probs, ft.probs, rtol=1e-12)
    assert np.array_equal(back.preds, ft.preds)
