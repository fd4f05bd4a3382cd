"""Self-describing binary checkpoints.

Layout: magic ``FWF1``, u32 version, u32 array count; then for each array
(sorted by name) a u16 name length, utf-8 name, u8 dtype (0 = float64),
u8 rank, u32 per dimension, little-endian payload, and a u64 crc32 of the
payload; then a u64 training step and a length-prefixed canonical config
echo.  Sorting plus the canonical echo make save -> load -> save produce
identical bytes, and every payload is integrity-checked on read.
"""

import os
import struct
import sys
import zlib
from array import array

from ..seq2seq import EncoderDecoderModel
from .config import parse_config_text, render_config

_MAGIC = b"FWF1"
_VERSION = 1
_DTYPE_F64 = 0


def build_model(cfg):
    """Construct the model a resolved config describes."""
    return EncoderDecoderModel(
        arch=cfg["arch"], d_feat=cfg["d_feat"], d_model=cfg["d_model"],
        layers=cfg["layers"], heads=cfg["heads"], d_ff=cfg["d_ff"],
        vocab=cfg["vocab"], langs=cfg["langs"], k=cfg["k"],
        factored=bool(cfg["factored"]), positional=bool(cfg["positional"]),
        seed=cfg["seed"])


def model_state(model, optimizer=None):
    """Named flat arrays for every parameter, plus optimizer moments if given."""
    arrays = {p.name: (p.shape, p.data) for p in model.params()}
    if optimizer is not None:
        arrays.update(optimizer.state_arrays())
    return arrays


def save_checkpoint(path, arrays, step, cfg):
    blob = bytearray()
    blob += _MAGIC
    blob += struct.pack("<II", _VERSION, len(arrays))
    for name in sorted(arrays):
        shape, buf = arrays[name]
        nb = name.encode("utf-8")
        payload = _le_bytes(buf)
        blob += struct.pack("<H", len(nb)) + nb
        blob += struct.pack("<BB", _DTYPE_F64, len(shape))
        for dim in shape:
            blob += struct.pack("<I", dim)
        blob += payload
        blob += struct.pack("<Q", zlib.crc32(payload))
    echo = render_config(cfg).encode("utf-8")
    blob += struct.pack("<QI", step, len(echo))
    blob += echo
    # whole-file checksum: the per-array CRCs do not cover names, shapes, or
    # the step/config trailer, and a silent flip there is just as damaging
    blob += struct.pack("<Q", zlib.crc32(bytes(blob)))
    tmp = path + ".tmp"
    with open(tmp, "wb") as f:
        f.write(blob)
    os.replace(tmp, path)


def read_checkpoint(path):
    """Returns (arrays, step, cfg); every structural problem is a ValueError."""
    with open(path, "rb") as f:
        blob = f.read()
    r = _Reader(blob, path)
    if r.take(4) != _MAGIC:
        raise ValueError(f"{path}: not a checkpoint (bad magic)")
    version, count = r.unpack("<II")
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    arrays = {}
    for _ in range(count):
        (nlen,) = r.unpack("<H")
        name = r.take(nlen).decode("utf-8")
        dtype, rank = r.unpack("<BB")
        if dtype != _DTYPE_F64:
            raise ValueError(f"checkpoint array {name!r}: unknown dtype {dtype}")
        shape = tuple(r.unpack("<I")[0] for _ in range(rank))
        size = 1
        for dim in shape:
            size *= dim
        payload = r.take(8 * size)
        (crc,) = r.unpack("<Q")
        if crc != zlib.crc32(payload):
            raise ValueError(f"checkpoint array {name!r}: checksum mismatch")
        if name in arrays:
            raise ValueError(f"checkpoint array {name!r}: duplicate entry")
        arrays[name] = (shape, _from_le(payload))
    step, echo_len = r.unpack("<QI")
    cfg = parse_config_text(r.take(echo_len).decode("utf-8"))
    body_crc = zlib.crc32(blob[:r.off])
    (file_crc,) = r.unpack("<Q")
    if file_crc != body_crc:
        raise ValueError(f"{path}: file checksum mismatch")
    if not r.done():
        raise ValueError(f"{path}: trailing bytes after checkpoint")
    return arrays, step, cfg


def load_checkpoint(path):
    """Rebuild the model described by the stored config and load its weights."""
    arrays, step, cfg = read_checkpoint(path)
    model = build_model(cfg)
    extra = _apply_arrays(model, arrays)
    return model, {"step": step, "config": cfg, "optimizer_arrays": extra}


def restore_checkpoint(model, path, optimizer=None):
    """Load weights into an existing model, validating names and shapes."""
    arrays, step, cfg = read_checkpoint(path)
    extra = _apply_arrays(model, arrays)
    if optimizer is not None:
        if not extra:
            raise ValueError(f"{path}: checkpoint holds no optimizer state")
        optimizer.load_state_arrays(extra)
    return {"step": step, "config": cfg, "optimizer_arrays": extra}


def _apply_arrays(model, arrays):
    params = model.param_map()
    extra = {}
    loaded = set()
    for name, (shape, buf) in arrays.items():
        if name.startswith("adam."):
            extra[name] = (shape, buf)
            continue
        p = params.get(name)
        if p is None:
            raise ValueError(
                f"checkpoint array {name!r} does not match any model parameter")
        if shape != p.shape:
            raise ValueError(
                f"checkpoint array {name!r} has shape {shape}, model wants {p.shape}")
        p.data[:] = buf
        p._fin = False
        loaded.add(name)
    missing = sorted(set(params) - loaded)
    if missing:
        raise ValueError(f"checkpoint is missing model parameters: {missing[:4]}")
    return extra


class _Reader:
    def __init__(self, blob, path):
        self.blob = blob
        self.off = 0
        self.path = path

    def take(self, n):
        if self.off + n > len(self.blob):
            raise ValueError(f"{self.path}: truncated checkpoint")
        out = self.blob[self.off:self.off + n]
        self.off += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def done(self):
        return self.off == len(self.blob)


def _le_bytes(buf):
    if sys.byteorder == "big":
        buf = array("d", buf)
        buf.byteswap()
    return buf.tobytes()


def _from_le(raw):
    buf = array("d")
    buf.frombytes(raw)
    if sys.byteorder == "big":
        buf.byteswap()
    return buf
