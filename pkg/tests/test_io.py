import json
import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import array_shapes, arrays

from eventret.checkpoint import MAGIC, decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint
from eventret.config import RunConfig, load_config
from eventret.jsonio import atomic_write_text, read_jsonl, read_tsv, write_json, write_jsonl, write_tsv


def test_checkpoint_roundtrip_is_byte_identical(tmp_path):
    tensors = {"b": np.arange(6, dtype=np.float32).reshape(2, 3), "a": np.array([1.5], dtype=np.float32)}
    save_checkpoint(tmp_path / "c.bin", tensors, {"z": 1, "a": [1, 2]}, 7, {"note": "x"})
    ck = load_checkpoint(tmp_path / "c.bin")
    assert list(ck.tensors) == ["b", "a"] and ck.seed == 7 and ck.config == {"z": 1, "a": [1, 2]}
    assert np.array_equal(ck.tensors["b"], tensors["b"])
    save_checkpoint(tmp_path / "d.bin", ck.tensors, ck.config, ck.seed, ck.meta)
    assert (tmp_path / "c.bin").read_bytes() == (tmp_path / "d.bin").read_bytes()
    assert (tmp_path / "c.bin").read_bytes()[:4] == MAGIC


@settings(max_examples=50, deadline=None)
@given(st.dictionaries(st.text(min_size=1, max_size=8),
                       arrays(np.float32, array_shapes(min_dims=0, max_dims=3, max_side=4),
                              elements=st.floats(-1e6, 1e6, width=32)), max_size=4),
       st.integers(0, 2**31))
def test_checkpoint_property_roundtrip(tensors, seed):
    data = encode_checkpoint(tensors, {"k": 1}, seed)
    ck = decode_checkpoint(data)
    assert list(ck.tensors) == list(tensors)
    for k, v in tensors.items():
        assert ck.tensors[k].shape == v.shape and np.array_equal(ck.tensors[k], v)
    assert encode_checkpoint(ck.tensors, ck.config, ck.seed, ck.meta) == data


def test_checkpoint_corruption_detected():
    data = encode_checkpoint({"w": np.ones(4, np.float32)}, {}, 0)
    with pytest.raises(ValueError, match="magic"):
        decode_checkpoint(b"XXXX" + data[4:])
    with pytest.raises(ValueError, match="version"):
        decode_checkpoint(data[:4] + (2).to_bytes(4, "little") + data[8:])
    with pytest.raises(ValueError, match="truncated"):
        decode_checkpoint(data[:10])
    with pytest.raises(ValueError, match="payload"):
        decode_checkpoint(data[:-4])
    bad = encode_checkpoint({"a": np.ones(2, np.float32), "b": np.ones(2, np.float32)}, {}, 0)
    head_len = int.from_bytes(bad[8:16], "little")
    header = json.loads(bad[16:16 + head_len])
    header["tensors"][1]["offset"] = 4
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    forged = bad[:8] + len(head).to_bytes(8, "little") + head + bad[16 + head_len:]
    with pytest.raises(ValueError, match="overlap"):
        decode_checkpoint(forged)


def test_jsonl_reader_names_bad_line(tmp_path):
    p = tmp_path / "x.jsonl"
    p.write_text('{"a": "1"}\n{"a": 2}\n')
    with pytest.raises(ValueError, match=r"x.jsonl:2: field 'a'"):
        read_jsonl(p, {"a": str})
    p.write_text('{"a": "1"}\nnot json\n')
    with pytest.raises(ValueError, match=r"x.jsonl:2: invalid JSON"):
        read_jsonl(p)
    p.write_text('[1]\n')
    with pytest.raises(ValueError, match="JSON object"):
        read_jsonl(p)
    p.write_text('{"b": 1}\n')
    with pytest.raises(ValueError, match="missing field 'a'"):
        read_jsonl(p, {"a": str})
    p.write_text('{"n": true}\n')
    with pytest.raises(ValueError):
        read_jsonl(p, {"n": int})


def test_writers_roundtrip_and_leave_no_temp_files(tmp_path):
    write_jsonl(tmp_path / "a.jsonl", [{"b": 1, "a": "é"}])
    assert (tmp_path / "a.jsonl").read_text(encoding="utf-8") == '{"a": "é", "b": 1}\n'
    write_tsv(tmp_path / "t.tsv", [("q", "d", 1)])
    assert read_tsv(tmp_path / "t.tsv", 3) == [["q", "d", "1"]]
    with pytest.raises(ValueError, match="t.tsv:1"):
        read_tsv(tmp_path / "t.tsv", 4)
    write_json(tmp_path / "sub" / "r.json", {"z": 1, "a": 2})
    assert (tmp_path / "sub" / "r.json").read_text() == '{\n  "a": 2,\n  "z": 1\n}\n'
    atomic_write_text(tmp_path / "a.jsonl", "replaced")
    assert sorted(os.listdir(tmp_path)) == ["a.jsonl", "sub", "t.tsv"]


def test_config_defaults_and_seed_propagation(tmp_path):
    cfg = RunConfig()
    assert cfg.train.margin == 0.2 and cfg.train.p_q == 0.7 and cfg.bank.factor == 8
    p = tmp_path / "c.yaml"
    p.write_text("seed: 3\ntrain:\n  batch_size: 16\n  seed: 99\nencoder:\n  hidden_dim: 32\n")
    cfg = load_config(p)
    assert cfg.seed == 3 and cfg.train.seed == 3 and cfg.train.batch_size == 16 and cfg.encoder.hidden_dim == 32
    assert load_config(p, seed=11).train.seed == 11
    assert load_config(p, variant="no_event").model.variant == "no_event"
    j = tmp_path / "c.json"
    j.write_text(json.dumps(cfg.to_dict()))
    assert load_config(j).to_dict() == cfg.to_dict()


@pytest.mark.parametrize("text,match", [
    ("bogus: 1\n", "unknown config keys"),
    ("train:\n  nope: 1\n", "unknown config keys in train"),
    ("train: 3\n", "must be a mapping"),
    ("variant: other\n", "variant"),
    ("- 1\n", "mapping"),
    ("annotation:\n  quorum: 9\n", "quorum"),
    ("event:\n  embedder: bert\n", "embedder"),
    ("eval:\n  ks: [0]\n", "eval.ks"),
    ("encoder:\n  hidden_dim: 30\n  num_heads: 4\n", "divisible"),
])
def test_config_rejects_bad_input(tmp_path, text, match):
    p = tmp_path / "c.yaml"
    p.write_text(text)
    with pytest.raises(ValueError, match=match):
        load_config(p)
