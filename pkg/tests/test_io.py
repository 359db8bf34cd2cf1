import json
import struct

import numpy as np
import pytest

from negstream import io
from negstream.config import ConfigError, ExperimentConfig, dump_config, parse_config


@pytest.mark.parametrize("fmt", ["binary", "text"])
@pytest.mark.parametrize("dtype", ["f32", "f64"])
def test_embedding_round_trip(tmp_path, gen, fmt, dtype):
    x = gen.normal(size=(7, 5))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    ids = [f"s{i}" for i in range(7)]
    p = tmp_path / "e"
    io.write_embeddings(p, x, ids, fmt, dtype)
    y, got = io.read_embeddings(p)
    assert got == ids
    np.testing.assert_allclose(y, x, atol=1e-6 if dtype == "f32" else 1e-15)
    np.testing.assert_allclose(np.linalg.norm(y, axis=1), 1.0, atol=1e-12)


def test_f32_is_default_storage(tmp_path, gen):
    x = gen.normal(size=(3, 4))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    io.write_embeddings(tmp_path / "e", x)
    raw = (tmp_path / "e").read_bytes()
    head = len(io.MAGIC) + 8
    assert raw[head:head + 4] == b"f32\0"
    assert struct.unpack("<II", raw[len(io.MAGIC):head]) == (4, 3)


def test_unnormalized_rows_rejected(tmp_path):
    io.write_embeddings(tmp_path / "e", np.array([[2.0, 0.0]]))
    with pytest.raises(io.FormatError):
        io.read_embeddings(tmp_path / "e")
    y, _ = io.read_embeddings(tmp_path / "e", normalize=False)
    assert y[0, 0] == 2.0


def test_bad_header(tmp_path):
    (tmp_path / "e").write_bytes(b"not an embedding file")
    with pytest.raises(io.FormatError):
        io.read_embeddings(tmp_path / "e")


@pytest.mark.parametrize("fmt", ["csv", "json-lines"])
def test_records_round_trip(tmp_path, fmt):
    rows = [{"a": 1, "b": 0.1 + 0.2, "c": True}, {"a": 2, "b": 1e-300, "c": False}]
    io.write_records(tmp_path / "r", rows, ("a", "b", "c"), fmt)
    back = io.read_records(tmp_path / "r", fmt)
    assert [float(r["b"]) for r in back] == [0.1 + 0.2, 1e-300]


def test_world_round_trip(tmp_path, small_world):
    io.save_world(small_world, tmp_path)
    w = io.load_world(tmp_path)
    # loading re-normalizes, which may move the last bit
    np.testing.assert_allclose(w.pools.id_vectors, small_world.pools.id_vectors, rtol=0, atol=1e-15)
    np.testing.assert_array_equal(w.encoder.projection, small_world.encoder.projection)
    assert [e.token_id for e in w.vocabulary] == [e.token_id for e in small_world.vocabulary]
    np.testing.assert_array_equal(w.vocabulary[3].token_embedding, small_world.vocabulary[3].token_embedding)


def test_config_round_trip():
    text = json.dumps({"seed": 3, "world": {"C": 4, "d": 32, "k": 32}, "engine": {"M": 7, "score": {"G": 2}},
                       "sweep_ratios": [[10, 20]]})
    cfg = parse_config(text)
    assert cfg.engine.M == 7 and cfg.engine.score.G == 2 and cfg.world.C == 4
    assert parse_config(dump_config(cfg)) == cfg
    assert parse_config("{}") == ExperimentConfig()


@pytest.mark.parametrize("text", ['{"sede": 1}', '{"engine": {"betta": 0.2}}', '{"world": {}, "world_dir": "x"}',
                                  '{"engine": {"repermute": "never"}}', "[1, 2"])
def test_bad_config_rejected(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_missing_world_dir(tmp_path):
    with pytest.raises(FileNotFoundError):
        parse_config('{"world_dir": "nowhere"}', tmp_path)
