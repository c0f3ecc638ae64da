"""
CAATCKPT checkpoint codec

Layout (little-endian): magic b"CAATCKPT", format version u32, entry count u32,
then per entry: name length u16, UTF-8 name, ndim u8, dims u32 each, float32
data. Denoiser checkpoints carry their config and vocabulary in a
`<path>.meta.json` sidecar.
"""

import struct
from collections import OrderedDict
from typing import Any, Dict, Mapping, Optional, Tuple

import numpy as np
import torch

from ..utils.errors import ConfigError, IngestionError
from ..utils.file_utils import FileUtils
from .models import ModelConfig
from .unet import ConditionalUNet

MAGIC = b"CAATCKPT"
FORMAT_VERSION = 1


def encode_tensors(state: Mapping[str, torch.Tensor]) -> bytes:
    chunks = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(state))]
    for name, tensor in state.items():
        raw_name = name.encode("utf-8")
        dims = tuple(tensor.shape)
        chunks.append(struct.pack("<H", len(raw_name)))
        chunks.append(raw_name)
        chunks.append(struct.pack(f"<B{len(dims)}I", len(dims), *dims))
        data = tensor.detach().cpu().to(torch.float32).contiguous().numpy()
        chunks.append(data.astype("<f4", copy=False).tobytes())
    return b"".join(chunks)


def _read_entries(payload: bytes, offset: int, count: int) -> Tuple["OrderedDict[str, torch.Tensor]", int]:
    state: "OrderedDict[str, torch.Tensor]" = OrderedDict()
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", payload, offset)
        offset += 2
        name = payload[offset:offset + name_len].decode("utf-8")
        offset += name_len
        (ndim,) = struct.unpack_from("<B", payload, offset)
        offset += 1
        dims = struct.unpack_from(f"<{ndim}I", payload, offset)
        offset += 4 * ndim
        numel = int(np.prod(dims)) if dims else 1
        data = np.frombuffer(payload, dtype="<f4", count=numel, offset=offset)
        offset += 4 * numel
        state[name] = torch.from_numpy(data.astype(np.float32)).reshape(dims)
    return state, offset


def decode_tensors(payload: bytes, source: str = "<bytes>") -> "OrderedDict[str, torch.Tensor]":
    if payload[:len(MAGIC)] != MAGIC:
        raise IngestionError(f"Not a CAATCKPT file: {source}", file=source)
    try:
        version, count = struct.unpack_from("<II", payload, len(MAGIC))
        if version != FORMAT_VERSION:
            raise IngestionError(f"Unsupported checkpoint version {version}: {source}", file=source)
        state, offset = _read_entries(payload, len(MAGIC) + 8, count)
    except (struct.error, ValueError) as e:
        raise IngestionError(f"Corrupt checkpoint {source}: {e}", file=source) from e
    if offset != len(payload):
        raise IngestionError(f"Corrupt checkpoint {source}: {len(payload) - offset} trailing bytes", file=source)
    return state


def save_tensors(state: Mapping[str, torch.Tensor], path: str, metadata: Optional[Dict[str, Any]] = None) -> str:
    FileUtils.save_with_metadata(encode_tensors(state), path, metadata)
    return path


def load_tensors(path: str) -> Tuple["OrderedDict[str, torch.Tensor]", Optional[Dict[str, Any]]]:
    try:
        with open(path, "rb") as f:
            payload = f.read()
    except OSError as e:
        raise IngestionError(f"Cannot read checkpoint {path}: {e}", file=path) from e
    return decode_tensors(payload, path), FileUtils.load_metadata(path)


def save_checkpoint(model: ConditionalUNet, path: str, extra: Optional[Dict[str, Any]] = None) -> str:
    config = model.config.model_copy(update={"vocabulary": list(model.vocabulary.tokens)})
    metadata = {"kind": "denoiser", "model": config.model_dump(), **(extra or {})}
    return save_tensors(model.state_dict(), path, metadata)


def load_checkpoint(path: str, config: Optional[ModelConfig] = None) -> ConditionalUNet:
    state, metadata = load_tensors(path)
    if metadata and "model" in metadata:
        config = ModelConfig(**metadata["model"])
    if config is None:
        raise ConfigError(f"Checkpoint {path} has no metadata sidecar; pass a model config")
    model = ConditionalUNet(config)
    try:
        model.load_state_dict(state)
    except RuntimeError as e:
        raise IngestionError(f"Checkpoint {path} does not match the model config: {e}", file=path) from e
    return model
