"""EPN1 weight container: magic, JSON architecture descriptor, little-endian f32 tensors.

Layout::

    b"EPN1" | u32 descriptor length | descriptor (UTF-8 JSON) | f32 payload

The descriptor holds the model kind, its constructor arguments and the
ordered ``(name, shape)`` list of every state-dict entry, which fixes how the
payload is cut. Both the completion network and the classifier use it.
"""
import json
import struct
from pathlib import Path

import numpy as np
import torch

from src.errors import DataError, MissingArtifactError
from src.models.network import EncoderPredictor, ShapeClassifier

MAGIC = b"EPN1"
MODEL_KINDS = {"epn": EncoderPredictor, "classifier": ShapeClassifier}


def save_epn1(model, path, extra=None) -> Path:
    kind = next((k for k, cls in MODEL_KINDS.items() if isinstance(model, cls)), None)
    if kind is None:
        raise DataError(f"cannot store {type(model).__name__} in an EPN1 container")
    state = model.state_dict()
    descriptor = {
        "kind": kind,
        "architecture": model.architecture(),
        "tensors": [{"name": name, "shape": list(t.shape)} for name, t in state.items()],
        "extra": extra or {},
    }
    header = json.dumps(descriptor, sort_keys=True).encode("utf-8")
    payload = [t.detach().cpu().to(torch.float64).numpy().astype("<f4").ravel() for t in state.values()]

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(header)))
        f.write(header)
        for arr in payload:
            f.write(arr.tobytes())
    return path


def read_epn1(path):
    """Descriptor and ``{name: float32 array}`` of an EPN1 file."""
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"checkpoint not found: {path}")
    raw = path.read_bytes()
    if raw[:4] != MAGIC or len(raw) < 8:
        raise DataError(f"{path}: not an EPN1 checkpoint")
    (size,) = struct.unpack("<I", raw[4:8])
    try:
        descriptor = json.loads(raw[8:8 + size].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise DataError(f"{path}: corrupt EPN1 descriptor: {err}") from err
    body = np.frombuffer(raw, dtype="<f4", offset=8 + size)

    arrays, offset = {}, 0
    for entry in descriptor["tensors"]:
        n = int(np.prod(entry["shape"], dtype=np.int64))
        if offset + n > body.size:
            raise DataError(f"{path}: truncated EPN1 payload at {entry['name']}")
        arrays[entry["name"]] = body[offset:offset + n].reshape(entry["shape"])
        offset += n
    if offset != body.size:
        raise DataError(f"{path}: {body.size - offset} trailing values in EPN1 payload")
    return descriptor, arrays


def load_epn1(path, map_location="cpu"):
    """Rebuild the stored model in inference mode."""
    descriptor, arrays = read_epn1(path)
    cls = MODEL_KINDS.get(descriptor.get("kind"))
    if cls is None:
        raise DataError(f"{path}: unknown model kind {descriptor.get('kind')!r}")
    model = cls(**descriptor["architecture"])
    reference = model.state_dict()
    if set(reference) != set(arrays):
        raise DataError(f"{path}: stored tensors do not match the {descriptor['kind']} architecture")
    model.load_state_dict({name: torch.from_numpy(arrays[name].copy()).to(reference[name].dtype) for name in reference})
    return model.to(map_location).eval()
