"""Checkpoint container: bit-exact round trips, strict validation."""

import os
from array import array

import pytest

from factorweights.harness import (
    Adam, build_model, default_config, load_checkpoint, model_state,
    read_checkpoint, resolve_config, restore_checkpoint, save_checkpoint)


def tiny_cfg(**kw):
    cfg = dict(default_config(), langs=2, vocab=4, d_model=4, layers=1,
               heads=2, d_ff=None, d_feat=None, seed=3, gains=None,
               reverse=None)
    cfg.update(kw)
    return resolve_config(cfg)


def nudge(model, seed_offset=0.001):
    for i, p in enumerate(model.params()):
        p.data[0] += seed_offset * (i + 1)
        p._fin = False


def state_bytes(model):
    return b"".join(p.data.tobytes() for p in model.params())


def test_round_trip_is_bit_exact(tmp_path):
    cfg = tiny_cfg()
    model = build_model(cfg)
    nudge(model)
    path = str(tmp_path / "m.fwf")
    save_checkpoint(path, model_state(model), 17, cfg)

    loaded, info = load_checkpoint(path)
    assert info["step"] == 17
    assert info["config"] == cfg
    assert info["optimizer_arrays"] == {}
    assert state_bytes(loaded) == state_bytes(model)
    assert loaded.config_record() == model.config_record()


def test_save_load_save_is_byte_identical(tmp_path):
    cfg = tiny_cfg(arch="attention")
    model = build_model(cfg)
    nudge(model)
    p1, p2 = str(tmp_path / "a.fwf"), str(tmp_path / "b.fwf")
    save_checkpoint(p1, model_state(model), 5, cfg)
    loaded, info = load_checkpoint(p1)
    save_checkpoint(p2, model_state(loaded), info["step"], info["config"])
    with open(p1, "rb") as f1, open(p2, "rb") as f2:
        assert f1.read() == f2.read()


def test_optimizer_state_round_trip(tmp_path):
    cfg = tiny_cfg()
    model = build_model(cfg)
    opt = Adam(model.params())
    for p in model.params():
        for j in range(len(p.grad)):
            p.grad[j] = 0.01 * (j + 1)
    opt.step(0.005)
    path = str(tmp_path / "m.fwf")
    save_checkpoint(path, model_state(model, opt), 1, cfg)

    fresh = build_model(cfg)
    fresh_opt = Adam(fresh.params())
    info = restore_checkpoint(fresh, path, optimizer=fresh_opt)
    assert info["step"] == 1
    assert fresh_opt.t == 1
    assert state_bytes(fresh) == state_bytes(model)
    for p in model.params():
        assert fresh_opt.m[p.name].tobytes() == opt.m[p.name].tobytes()
        assert fresh_opt.v[p.name].tobytes() == opt.v[p.name].tobytes()


def test_restore_without_adam_arrays_rejected(tmp_path):
    cfg = tiny_cfg()
    model = build_model(cfg)
    path = str(tmp_path / "m.fwf")
    save_checkpoint(path, model_state(model), 0, cfg)  # no optimizer arrays
    fresh = build_model(cfg)
    with pytest.raises(ValueError, match="optimizer"):
        restore_checkpoint(fresh, path, optimizer=Adam(fresh.params()))


def test_payload_corruption_names_the_array(tmp_path):
    cfg = tiny_cfg()
    model = build_model(cfg)
    path = str(tmp_path / "m.fwf")
    save_checkpoint(path, model_state(model), 0, cfg)
    raw = bytearray(open(path, "rb").read())
    # walk the first record header so the flip lands inside its payload
    import struct
    (nlen,) = struct.unpack_from("<H", raw, 12)
    rank = raw[14 + nlen + 1]
    payload_off = 14 + nlen + 2 + 4 * rank
    raw[payload_off] ^= 0x01
    open(path, "wb").write(bytes(raw))
    with pytest.raises(ValueError, match="checkpoint array '.*': checksum"):
        read_checkpoint(path)


def test_trailer_corruption_detected(tmp_path):
    # step counter and config echo sit after all per-array checksums; the
    # whole-file checksum is what protects them
    cfg = tiny_cfg()
    model = build_model(cfg)
    path = str(tmp_path / "m.fwf")
    save_checkpoint(path, model_state(model), 123456, cfg)
    raw = bytearray(open(path, "rb").read())
    from factorweights.harness import render_config
    echo_len = len(render_config(cfg).encode("utf-8"))
    step_off = len(raw) - 8 - echo_len - 4 - 8
    for flip_at in (step_off, len(raw) - 1):
        bad = bytearray(raw)
        bad[flip_at] ^= 0x01
        open(path, "wb").write(bytes(bad))
        with pytest.raises(ValueError, match="file checksum"):
            read_checkpoint(path)


def test_truncation_detected(tmp_path):
    cfg = tiny_cfg()
    model = build_model(cfg)
    path = str(tmp_path / "m.fwf")
    save_checkpoint(path, model_state(model), 0, cfg)
    raw = open(path, "rb").read()
    open(path, "wb").write(raw[:len(raw) - 40])
    with pytest.raises(ValueError, match="truncated"):
        read_checkpoint(path)


def test_trailing_garbage_detected(tmp_path):
    cfg = tiny_cfg()
    model = build_model(cfg)
    path = str(tmp_path / "m.fwf")
    save_checkpoint(path, model_state(model), 0, cfg)
    with open(path, "ab") as f:
        f.write(b"\x00" * 8)
    with pytest.raises(ValueError, match="trailing"):
        read_checkpoint(path)


def test_bad_magic_and_version(tmp_path):
    path = str(tmp_path / "m.fwf")
    open(path, "wb").write(b"XXXX" + bytes(16))
    with pytest.raises(ValueError, match="magic"):
        read_checkpoint(path)
    cfg = tiny_cfg()
    save_checkpoint(path, model_state(build_model(cfg)), 0, cfg)
    raw = bytearray(open(path, "rb").read())
    raw[4] = 99  # version field follows the magic
    open(path, "wb").write(bytes(raw))
    with pytest.raises(ValueError, match="version"):
        read_checkpoint(path)


def test_mismatched_architecture_rejected(tmp_path):
    # arrays from a k=2 model do not map onto a k=1 model
    cfg2 = tiny_cfg(k=2)
    model2 = build_model(cfg2)
    path = str(tmp_path / "m.fwf")
    save_checkpoint(path, model_state(model2), 0, cfg2)
    target = build_model(tiny_cfg(k=1))
    with pytest.raises(ValueError, match="does not match any model parameter"):
        restore_checkpoint(target, path)


def test_missing_parameter_rejected(tmp_path):
    cfg = tiny_cfg()
    model = build_model(cfg)
    arrays = model_state(model)
    del arrays["embedding.table"]
    path = str(tmp_path / "m.fwf")
    save_checkpoint(path, arrays, 0, cfg)
    with pytest.raises(ValueError, match="embedding.table"):
        restore_checkpoint(build_model(cfg), path)


def test_shape_mismatch_rejected(tmp_path):
    cfg = tiny_cfg()
    model = build_model(cfg)
    arrays = dict(model_state(model))
    arrays["in_proj.b_S"] = ((2,), array("d", [0.0, 0.0]))
    path = str(tmp_path / "m.fwf")
    save_checkpoint(path, arrays, 0, cfg)
    with pytest.raises(ValueError, match="in_proj.b_S"):
        restore_checkpoint(build_model(cfg), path)


def test_load_rebuilds_model_from_config_echo(tmp_path):
    cfg = tiny_cfg(arch="attention", factored=0)
    model = build_model(cfg)
    nudge(model)
    path = str(tmp_path / "m.fwf")
    save_checkpoint(path, model_state(model), 9, cfg)
    loaded, info = load_checkpoint(path)
    assert loaded.arch == "attention"
    assert loaded.factored is False
    assert info["config"]["factored"] == 0


def test_save_is_atomic(tmp_path):
    # the temp file never survives a successful save
    cfg = tiny_cfg()
    model = build_model(cfg)
    path = tmp_path / "m.fwf"
    save_checkpoint(str(path), model_state(model), 0, cfg)
    leftovers = [n for n in os.listdir(tmp_path) if n != "m.fwf"]
    assert leftovers == []
