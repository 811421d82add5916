# model/checkpoint.py
"""
Flat binary parameter container.

    magic (8 bytes) | version u32 | header length u32 | header json
    then every state_dict tensor, in declaration order, as little-endian f8

The header holds the ModelConfig and the in-memory dtype; tensor shapes follow
from the config, so none are stored.
"""
import json
import logging
import struct
from pathlib import Path

import numpy as np
import torch

from core.errors import DataError
from model.config import ModelConfig
from model.hierarchical import HierarchicalModel

logger = logging.getLogger(__name__)

MAGIC = b"DLPRCKPT"
VERSION = 1
_PREFIX = struct.Struct("<8sII")
_DTYPES = {"float32": torch.float32, "float64": torch.float64}


def save_checkpoint(model: HierarchicalModel, path: "str | Path") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    dtype_name = str(model.dtype).removeprefix("torch.")
    header = json.dumps(
        {"model": model.config.to_json(), "dtype": dtype_name}, sort_keys=True, separators=(",", ":")
    ).encode("utf-8")

    with open(path, "wb") as f:
        f.write(_PREFIX.pack(MAGIC, VERSION, len(header)))
        f.write(header)
        for tensor in model.state_dict().values():
            f.write(tensor.detach().cpu().to(torch.float64).numpy().astype("<f8").tobytes())

    logger.info(f"Saved checkpoint to {path}")
    return path


def load_checkpoint(path: "str | Path") -> HierarchicalModel:
    path = Path(path)
    if not path.exists():
        raise DataError(f"checkpoint not found: {path}")
    data = path.read_bytes()

    if len(data) < _PREFIX.size:
        raise DataError(f"{path}: truncated checkpoint header")
    magic, version, header_len = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise DataError(f"{path}: not a checkpoint (bad magic)")
    if version != VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")

    try:
        header = json.loads(data[_PREFIX.size : _PREFIX.size + header_len].decode("utf-8"))
        config = ModelConfig.from_json(header["model"])
        dtype = _DTYPES[header.get("dtype", "float32")]
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError) as e:
        raise DataError(f"{path}: malformed checkpoint header ({e})") from e

    model = HierarchicalModel(config).to(dtype)
    state = model.state_dict()

    offset = _PREFIX.size + header_len
    loaded = {}
    for name, tensor in state.items():
        nbytes = tensor.numel() * 8
        if offset + nbytes > len(data):
            raise DataError(f"{path}: truncated at tensor {name}")
        values = np.frombuffer(data, dtype="<f8", count=tensor.numel(), offset=offset)
        loaded[name] = torch.from_numpy(values.copy()).view(tensor.shape).to(dtype)
        offset += nbytes

    if offset != len(data):
        raise DataError(f"{path}: {len(data) - offset} trailing bytes")

    model.load_state_dict(loaded)
    model.eval()
    logger.info(f"Loaded checkpoint from {path} ({model.parameter_count()} parameters)")
    return model
