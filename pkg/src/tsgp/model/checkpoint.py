"""Bit-exact binary checkpoint format.

Layout: 8-byte magic ``TSGPMDL1``, little-endian u32 JSON header length,
JSON header (hyperparams, vocabulary, tensor manifest with name/shape/byte
offset), then concatenated little-endian float32 tensor payloads in
manifest order. Saving is deterministic: sorted tensor names, canonical
JSON. Loading reproduces exactly the float32 values that were stored.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .transformer import Hyperparams, SdTransformer
from .vocab import Vocabulary

MAGIC = b"TSGPMDL1"

SD_CONDITIONING = "affine-scalar-prepended"  # recorded for provenance


class CheckpointError(Exception):
    pass


class BadMagicError(CheckpointError):
    pass


class ManifestMismatchError(CheckpointError):
    pass


class TruncatedError(CheckpointError):
    pass


def save_checkpoint(model: SdTransformer, path):
    names = sorted(model.params)
    manifest = []
    offset = 0
    payloads = []
    for name in names:
        data = model.params[name].data.astype("<f4")
        manifest.append({"name": name, "shape": list(data.shape),
                         "offset": offset})
        payloads.append(data.tobytes())
        offset += data.nbytes
    header = {
        "hyperparams": model.hyper.to_json(),
        "vocabulary": model.vocab.to_json(),
        "sd_conditioning": SD_CONDITIONING,
        "tensors": manifest,
    }
    header_bytes = json.dumps(header, sort_keys=True,
                              separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        for p in payloads:
            fh.write(p)


def load_checkpoint(path) -> SdTransformer:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != MAGIC:
        raise BadMagicError(f"bad magic {blob[:8]!r}")
    if len(blob) < 12:
        raise TruncatedError("file ends inside the header length field")
    (hlen,) = struct.unpack("<I", blob[8:12])
    if len(blob) < 12 + hlen:
        raise TruncatedError("file ends inside the JSON header")
    try:
        header = json.loads(blob[12:12 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ManifestMismatchError(f"unreadable header: {e}") from None

    hyper = Hyperparams.from_json(header["hyperparams"])
    vocab = Vocabulary.from_json(header["vocabulary"])
    payload = blob[12 + hlen:]

    params = {}
    expected_offset = 0
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        nbytes = int(np.prod(shape)) * 4
        if entry["offset"] != expected_offset:
            raise ManifestMismatchError(
                f"tensor {entry['name']} offset {entry['offset']} != {expected_offset}")
        if entry["offset"] + nbytes > len(payload):
            raise TruncatedError(
                f"payload too short for tensor {entry['name']}")
        flat = np.frombuffer(payload, dtype="<f4", count=int(np.prod(shape)),
                             offset=entry["offset"])
        params[entry["name"]] = flat.reshape(shape).astype(np.float64)
        expected_offset += nbytes
    if expected_offset != len(payload):
        raise TruncatedError(
            f"payload has {len(payload) - expected_offset} trailing bytes")

    model = SdTransformer(hyper, vocab, params=params)
    expected = set(SdTransformer(hyper, vocab,
                                 rng=np.random.default_rng(0)).params)
    if set(params) != expected:
        missing = expected.symmetric_difference(params)
        raise ManifestMismatchError(f"unexpected tensor set, differs on {missing}")
    return model
