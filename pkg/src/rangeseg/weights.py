"""Single-file weight container.

Layout: 4-byte magic "RSGW", a little-endian u32 manifest length, a JSON
manifest, then a flat blob of little-endian float32 tensors.  The manifest
records the format version, the full network configuration (so a weight
file is self-describing), every tensor's name/shape/byte offset, and the
optional quantization exponents.  save -> load round-trips bit-exactly.
"""

import json
import struct

import numpy as np

from .errors import WeightFormatError
from .network import build_network, config_from_dict, config_to_dict, iter_tensors
from .quantize import QuantParams

MAGIC = b"RSGW"
FORMAT_VERSION = 1


def save_weights(model, path, quant=None):
    entries = []
    blobs = []
    offset = 0
    for name, arr in iter_tensors(model):
        data = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        entries.append({"name": name, "shape": list(arr.shape),
                        "offset": offset})
        blobs.append(data)
        offset += len(data)
    manifest = {
        "format": FORMAT_VERSION,
        "config": config_to_dict(model.config),
        "tensors": entries,
        "quant": None if quant is None else {
            "bitwidth": quant.bitwidth,
            "weights": quant.weights,
            "activations": quant.activations,
        },
    }
    header = json.dumps(manifest).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def load_weights(path):
    """Read a weight file; returns (Model, QuantParams or None)."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise WeightFormatError(f"cannot read weights {path}: {exc}") from exc
    if len(data) < 8 or data[:4] != MAGIC:
        raise WeightFormatError(f"{path} is not a weight file (bad magic)")
    (header_len,) = struct.unpack("<I", data[4:8])
    if len(data) < 8 + header_len:
        raise WeightFormatError(f"{path}: truncated manifest")
    try:
        manifest = json.loads(data[8:8 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise WeightFormatError(f"{path}: unreadable manifest: {exc}") from exc
    if manifest.get("format") != FORMAT_VERSION:
        raise WeightFormatError(
            f"{path}: unsupported format {manifest.get('format')!r}")

    cfg = config_from_dict(manifest.get("config", {}))
    blob = data[8 + header_len:]
    tensors = {}
    for entry in manifest.get("tensors", []):
        name = entry.get("name")
        shape = tuple(entry.get("shape", ()))
        off = entry.get("offset")
        if not isinstance(name, str) or not isinstance(off, int):
            raise WeightFormatError(f"{path}: malformed tensor entry {entry}")
        if name in tensors:
            raise WeightFormatError(f"{path}: duplicate tensor {name}")
        size = 1
        for d in shape:
            size *= int(d)
        if off < 0 or off + 4 * size > len(blob):
            raise WeightFormatError(
                f"{path}: tensor {name} extends past end of file")
        tensors[name] = np.frombuffer(
            blob, dtype="<f4", count=size, offset=off).reshape(shape).copy()

    model = build_network(cfg, tensors=tensors)

    quant = None
    raw = manifest.get("quant")
    if raw is not None:
        try:
            quant = QuantParams(
                bitwidth=int(raw["bitwidth"]),
                weights={str(k): int(v) for k, v in raw["weights"].items()},
                activations={str(k): int(v)
                             for k, v in raw["activations"].items()})
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            raise WeightFormatError(
                f"{path}: malformed quantization section: {exc}") from exc
    return model, quant
