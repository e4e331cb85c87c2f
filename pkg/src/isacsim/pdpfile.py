"""PDP matrix files.

Binary layout (little-endian, 41-byte header)::

    magic  "VIPD"          4s
    version                u32
    rows, cols             u32, u32
    snapshot_interval [s]  f64
    delay_resolution [ns]  f64
    direction              u8   (0 front, 1 left, 2 right)
    seed                   u64
    payload                rows*cols float32, row-major

The CSV variant carries the same six fields after ``version`` as ``# key: value``
comment lines, followed by one comma-separated row per snapshot.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .metrics import PdpMatrix
from .params import Direction

MAGIC = b"VIPD"
VERSION = 1
HEADER = struct.Struct("<4sIIIddBQ")
CSV_KEYS = ("rows", "cols", "snapshot_interval", "delay_resolution", "direction", "seed")


class PdpFormatError(ValueError):
    pass


def encode_header(pdp: PdpMatrix) -> bytes:
    return HEADER.pack(MAGIC, VERSION, pdp.rows, pdp.cols, float(pdp.snapshot_interval),
                       float(pdp.delay_resolution), Direction(pdp.direction).code, int(pdp.seed))


def to_bytes(pdp: PdpMatrix) -> bytes:
    payload = np.ascontiguousarray(pdp.values, dtype="<f4").tobytes()
    return encode_header(pdp) + payload


def from_bytes(data: bytes) -> PdpMatrix:
    if len(data) < HEADER.size:
        raise PdpFormatError("file shorter than the PDP header")
    magic, version, rows, cols, interval, resolution, code, seed = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise PdpFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise PdpFormatError(f"unsupported format version {version}")
    expected = rows * cols * 4
    if len(data) - HEADER.size != expected:
        raise PdpFormatError(f"payload is {len(data) - HEADER.size} bytes, header implies {expected}")
    try:
        direction = Direction.from_code(code)
    except ValueError as exc:
        raise PdpFormatError(str(exc)) from None
    values = np.frombuffer(data, dtype="<f4", offset=HEADER.size).reshape(rows, cols).astype(np.float32)
    return PdpMatrix(values, interval, resolution, direction, seed)


def write_bin(path, pdp: PdpMatrix) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_header(pdp))
        fh.write(np.ascontiguousarray(pdp.values, dtype="<f4").tobytes())


def read_bin(path) -> PdpMatrix:
    return from_bytes(Path(path).read_bytes())


def write_csv(path, pdp: PdpMatrix) -> None:
    # 7 significant digits keep every float32 dB value within 1e-4 dB
    header = {
        "rows": pdp.rows,
        "cols": pdp.cols,
        "snapshot_interval": repr(float(pdp.snapshot_interval)),
        "delay_resolution": repr(float(pdp.delay_resolution)),
        "direction": Direction(pdp.direction).value,
        "seed": int(pdp.seed),
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for key in CSV_KEYS:
            fh.write(f"# {key}: {header[key]}\n")
        np.savetxt(fh, pdp.values, fmt="%.7g", delimiter=",")


def read_csv(path) -> PdpMatrix:
    meta = {}
    with open(path, encoding="utf-8") as fh:
        for key in CSV_KEYS:
            line = fh.readline()
            prefix = f"# {key}:"
            if not line.startswith(prefix):
                raise PdpFormatError(f"expected header line {prefix!r}, got {line.strip()!r}")
            meta[key] = line[len(prefix):].strip()
        values = np.loadtxt(fh, delimiter=",", dtype=np.float64, ndmin=2)
    rows, cols = int(meta["rows"]), int(meta["cols"])
    if values.shape != (rows, cols):
        raise PdpFormatError(f"CSV body is {values.shape}, header says {(rows, cols)}")
    try:
        direction = Direction(meta["direction"])
    except ValueError:
        raise PdpFormatError(f"unknown direction {meta['direction']!r}") from None
    return PdpMatrix(values.astype(np.float32), float(meta["snapshot_interval"]),
                     float(meta["delay_resolution"]), direction, int(meta["seed"]))


def read_pdp(path) -> PdpMatrix:
    """Read either format, sniffing the first bytes."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == MAGIC:
        return read_bin(path)
    if head.startswith(b"#"):
        return read_csv(path)
    raise PdpFormatError(f"bad magic {head!r}")


def write_pdp(path, pdp: PdpMatrix, fmt: str = "bin") -> None:
    if fmt == "bin":
        write_bin(path, pdp)
    elif fmt == "csv":
        write_csv(path, pdp)
    else:
        raise ValueError(f"unknown format {fmt!r}")
