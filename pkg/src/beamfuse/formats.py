"""Binary containers: RDM datasets (BMXD), raw captures (BMXR) and model checkpoints (BMXC).

All integers and floats are little-endian. Every file ends with a CRC-32 of
all preceding bytes.

BMXD layout::

    b"BMXD" | u16 version | u8 dtype tag (1 = f32) | u8 reserved
    u32 x5  axis lengths: range, doppler, beams, timesteps, samples
    f64 range bin (m) | f64 Doppler bin (m/s) | i32 range offset (bins)
    f64 x beams        beam angles (deg)
    per sample: u32 label | i64 sample id | i64 source id | u64 seed
    u32 meta length | meta JSON (utf-8, sorted keys)
    f32 payload, C order over (samples, range, doppler, beams, timesteps)
    u32 CRC-32
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .configio import to_jsonable
from .dataset import Dataset
from .errors import FormatError

DATASET_MAGIC = b"BMXD"
CAPTURE_MAGIC = b"BMXR"
CHECKPOINT_MAGIC = b"BMXC"
FORMAT_VERSION = 1
DTYPE_F32 = 1

_SAMPLE_DTYPE = np.dtype([("label", "<u4"), ("sample_id", "<i8"), ("source_id", "<i8"), ("seed", "<u8")])


def _json_bytes(obj) -> bytes:
    return json.dumps(to_jsonable(obj), sort_keys=True, separators=(",", ":")).encode()


def _seal(body: bytes) -> bytes:
    return body + struct.pack("<I", zlib.crc32(body))


def _unseal(blob: bytes, magic: bytes) -> memoryview:
    if len(blob) < len(magic) + 6 or blob[:4] != magic:
        raise FormatError(f"not a {magic.decode()} file")
    body, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) != crc:
        raise FormatError("checksum mismatch")
    version = struct.unpack_from("<H", body, 4)[0]
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {version}")
    return memoryview(body)


class _Reader:
    def __init__(self, buf: memoryview, pos: int):
        self.buf, self.pos = buf, pos

    def take(self, fmt: str):
        vals = struct.unpack_from(fmt, self.buf, self.pos)
        self.pos += struct.calcsize(fmt)
        return vals

    def array(self, dtype, count: int) -> np.ndarray:
        dtype = np.dtype(dtype)
        end = self.pos + dtype.itemsize * count
        if end > len(self.buf):
            raise FormatError("truncated file")
        out = np.frombuffer(self.buf[self.pos:end], dtype=dtype, count=count).copy()
        self.pos = end
        return out

    def blob(self) -> bytes:
        (n,) = self.take("<I")
        out = bytes(self.buf[self.pos:self.pos + n])
        self.pos += n
        return out


# -- dataset ---------------------------------------------------------------


def dataset_bytes(ds: Dataset) -> bytes:
    n, r, d, b, t = ds.x.shape
    parts = [DATASET_MAGIC, struct.pack("<HBB", FORMAT_VERSION, DTYPE_F32, 0),
             struct.pack("<5I", r, d, b, t, n),
             struct.pack("<ddi", ds.range_bin_m, ds.doppler_bin_mps, ds.range_offset),
             np.asarray(ds.beam_angles_deg, dtype="<f8").tobytes()]
    table = np.empty(n, dtype=_SAMPLE_DTYPE)
    table["label"], table["sample_id"] = ds.labels, ds.sample_ids
    table["source_id"], table["seed"] = ds.source_ids, ds.seeds
    meta = _json_bytes(ds.meta)
    parts += [table.tobytes(), struct.pack("<I", len(meta)), meta,
              np.ascontiguousarray(ds.x, dtype="<f4").tobytes()]
    return _seal(b"".join(parts))


def dataset_from_bytes(blob: bytes) -> Dataset:
    rd = _Reader(_unseal(blob, DATASET_MAGIC), 6)
    dtype_tag, _ = struct.unpack_from("<BB", rd.buf, 6)
    rd.pos = 8
    if dtype_tag != DTYPE_F32:
        raise FormatError(f"unsupported dtype tag {dtype_tag}")
    r, d, b, t, n = rd.take("<5I")
    range_bin, doppler_bin, offset = rd.take("<ddi")
    angles = rd.array("<f8", b)
    table = rd.array(_SAMPLE_DTYPE, n)
    meta = json.loads(rd.blob() or b"{}")
    x = rd.array("<f4", n * r * d * b * t).reshape(n, r, d, b, t)
    if rd.pos != len(rd.buf):
        raise FormatError("payload length does not match axis lengths")
    return Dataset(x.astype(np.float64), table["label"].astype(np.int64), tuple(angles.tolist()),
                   range_bin, doppler_bin, offset, table["sample_id"], table["source_id"],
                   table["seed"], meta)


def write_dataset(ds: Dataset, path: str | Path) -> None:
    Path(path).write_bytes(dataset_bytes(ds))


def read_dataset(path: str | Path) -> Dataset:
    return dataset_from_bytes(Path(path).read_bytes())


# -- raw capture -------------------------------------------------------------


def capture_bytes(capture: np.ndarray, header: dict) -> bytes:
    """Raw complex capture (frames, samples, chirps, beams) with a JSON header."""
    capture = np.asarray(capture)
    if capture.ndim != 4:
        raise FormatError(f"capture must be 4-D, got {capture.shape}")
    head = _json_bytes(header)
    parts = [CAPTURE_MAGIC, struct.pack("<HBB", FORMAT_VERSION, 2, 0), struct.pack("<I", len(head)), head,
             struct.pack("<4I", *capture.shape), np.ascontiguousarray(capture, dtype="<c8").tobytes()]
    return _seal(b"".join(parts))


def capture_from_bytes(blob: bytes) -> tuple[np.ndarray, dict]:
    rd = _Reader(_unseal(blob, CAPTURE_MAGIC), 8)
    header = json.loads(rd.blob())
    shape = rd.take("<4I")
    data = rd.array("<c8", int(np.prod(shape))).reshape(shape)
    if rd.pos != len(rd.buf):
        raise FormatError("payload length does not match capture shape")
    return data, header


def write_capture(capture, header: dict, path: str | Path) -> None:
    Path(path).write_bytes(capture_bytes(capture, header))


def read_capture(path: str | Path) -> tuple[np.ndarray, dict]:
    return capture_from_bytes(Path(path).read_bytes())


# -- checkpoint ----------------------------------------------------------------


def checkpoint_bytes(params: dict[str, np.ndarray], model_config: dict) -> bytes:
    head = _json_bytes(model_config)
    parts = [CHECKPOINT_MAGIC, struct.pack("<HBB", FORMAT_VERSION, 3, 0), struct.pack("<I", len(head)), head,
             struct.pack("<I", len(params))]
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name], dtype="<f8")
        key = name.encode()
        parts += [struct.pack("<H", len(key)), key, struct.pack("<B", arr.ndim),
                  struct.pack(f"<{arr.ndim}I", *arr.shape), arr.tobytes()]
    return _seal(b"".join(parts))


def checkpoint_from_bytes(blob: bytes) -> tuple[dict[str, np.ndarray], dict]:
    rd = _Reader(_unseal(blob, CHECKPOINT_MAGIC), 8)
    config = json.loads(rd.blob())
    (count,) = rd.take("<I")
    params = {}
    for _ in range(count):
        (klen,) = rd.take("<H")
        name = bytes(rd.buf[rd.pos:rd.pos + klen]).decode()
        rd.pos += klen
        (ndim,) = rd.take("<B")
        shape = rd.take(f"<{ndim}I")
        params[name] = rd.array("<f8", int(np.prod(shape))).reshape(shape)
    if rd.pos != len(rd.buf):
        raise FormatError("trailing bytes in checkpoint")
    return params, config


def write_checkpoint(params, model_config: dict, path: str | Path) -> None:
    Path(path).write_bytes(checkpoint_bytes(params, model_config))


def read_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    return checkpoint_from_bytes(Path(path).read_bytes())
