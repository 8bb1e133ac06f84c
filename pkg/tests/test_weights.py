import struct

import numpy as np
import pytest

from voicetrigger.embedder import random_embedding_bundle
from voicetrigger.kws import random_kws_bundle
from voicetrigger.weights import (
    WeightFormatError,
    load_weights,
    save_weights,
    validate_bundle,
)


@pytest.fixture
def kws_file(tmp_path):
    path = tmp_path / "kws.pvtw"
    save_weights(path, random_kws_bundle(seed=1))
    return path


def test_round_trip_bit_identical(tmp_path, kws_file):
    bundle = load_weights(kws_file)
    path2 = tmp_path / "again.pvtw"
    save_weights(path2, bundle)
    assert path2.read_bytes() == kws_file.read_bytes()


def test_embedding_round_trip_bit_identical(tmp_path):
    p1, p2 = tmp_path / "a.pvtw", tmp_path / "b.pvtw"
    save_weights(p1, random_embedding_bundle(seed=2))
    save_weights(p2, load_weights(p1))
    assert p1.read_bytes() == p2.read_bytes()


def test_bad_magic(tmp_path, kws_file):
    data = bytearray(kws_file.read_bytes())
    data[:4] = b"XXXX"
    bad = tmp_path / "bad.pvtw"
    bad.write_bytes(bytes(data))
    with pytest.raises(WeightFormatError, match="magic"):
        load_weights(bad)


def test_unsupported_version(tmp_path, kws_file):
    data = bytearray(kws_file.read_bytes())
    data[4:8] = struct.pack("<I", 99)
    bad = tmp_path / "bad.pvtw"
    bad.write_bytes(bytes(data))
    with pytest.raises(WeightFormatError, match="version"):
        load_weights(bad)


def test_truncated_file(tmp_path, kws_file):
    data = kws_file.read_bytes()
    bad = tmp_path / "bad.pvtw"
    bad.write_bytes(data[: len(data) // 2])
    with pytest.raises(WeightFormatError, match="truncated"):
        load_weights(bad)


def test_wrong_shape_names_tensor(tmp_path):
    bundle = random_kws_bundle(seed=3)
    bundle.tensors["lstm1.bias"] = np.zeros(7)
    with pytest.raises(WeightFormatError, match="lstm1.bias"):
        validate_bundle(bundle)


def test_missing_tensor_named(tmp_path):
    bundle = random_kws_bundle(seed=3)
    del bundle.tensors["fc.bias"]
    with pytest.raises(WeightFormatError, match="fc.bias"):
        validate_bundle(bundle)


def test_unknown_arch_rejected():
    bundle = random_kws_bundle(seed=4)
    bundle.config["arch"] = "mystery"
    with pytest.raises(WeightFormatError, match="mystery"):
        validate_bundle(bundle)
