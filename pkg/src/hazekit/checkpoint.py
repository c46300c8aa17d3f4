"""Binary checkpoint container (format version 1).

All integers are unsigned 32-bit little-endian.

    magic            8 bytes  b"HZKCKPT\\0"
    version          u32      1
    config_len       u32      byte length of the config text
    config           bytes    UTF-8 ``key = value`` lines (see ``hazekit.config``)
    n_tensors        u32
    n_tensors times:
        name_len     u32
        name         bytes    UTF-8 parameter name, e.g. ``gen.drem.exit_conv.weight``
        ndim         u32
        shape        ndim x u32
        payload      prod(shape) x float32 little-endian, C order

Tensors are written in state-dict order. Readers must reject unknown
versions rather than guess.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
import torch

from . import config as config_mod

MAGIC = b"HZKCKPT\x00"
VERSION = 1


class CheckpointError(ValueError):
    pass


def encode(cfg_text: str, tensors: dict[str, torch.Tensor]) -> bytes:
    parts = [MAGIC, struct.pack("<I", VERSION)]
    cfg_bytes = cfg_text.encode("utf-8")
    parts += [struct.pack("<I", len(cfg_bytes)), cfg_bytes, struct.pack("<I", len(tensors))]
    for name, t in tensors.items():
        arr = t.detach().cpu().numpy().astype("<f4", copy=False)
        nb = name.encode("utf-8")
        parts += [struct.pack("<I", len(nb)), nb, struct.pack("<I", arr.ndim)]
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr).tobytes())
    return b"".join(parts)


def decode(data: bytes) -> tuple[str, dict[str, torch.Tensor]]:
    if data[:8] != MAGIC:
        raise CheckpointError("not a hazekit checkpoint (bad magic)")
    (version,) = struct.unpack_from("<I", data, 8)
    if version != VERSION:
        raise CheckpointError(f"incompatible checkpoint format version {version}; this build reads version {VERSION}")
    pos = 12

    def take(n):
        nonlocal pos
        if pos + n > len(data):
            raise CheckpointError("truncated checkpoint")
        chunk = data[pos : pos + n]
        pos += n
        return chunk

    (cfg_len,) = struct.unpack("<I", take(4))
    cfg_text = take(cfg_len).decode("utf-8")
    (count,) = struct.unpack("<I", take(4))
    tensors = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<I", take(4))
        name = take(name_len).decode("utf-8")
        (ndim,) = struct.unpack("<I", take(4))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
        n = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(take(4 * n), dtype="<f4").reshape(shape)
        tensors[name] = torch.from_numpy(arr.astype(np.float32))
    if pos != len(data):
        raise CheckpointError(f"{len(data) - pos} trailing bytes after the last tensor")
    return cfg_text, tensors


def save(path, cfg, modules: dict[str, torch.nn.Module]) -> None:
    """Write ``modules`` (prefix -> module) and ``cfg`` to ``path``."""
    tensors = {}
    for prefix, module in modules.items():
        for name, t in module.state_dict().items():
            tensors[f"{prefix}.{name}"] = t
    path = Path(path)
    try:
        path.write_bytes(encode(config_mod.dumps(cfg), tensors))
    except OSError as e:
        raise OSError(f"{path}: cannot write checkpoint ({e})") from e


def read(path) -> tuple[config_mod.TrainConfig, dict[str, torch.Tensor]]:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise OSError(f"{path}: cannot read checkpoint ({e})") from e
    try:
        cfg_text, tensors = decode(data)
    except CheckpointError as e:
        raise CheckpointError(f"{path}: {e}") from None
    return config_mod.loads(cfg_text, source=f"{path} [config]"), tensors


def load_into(module: torch.nn.Module, tensors: dict[str, torch.Tensor], prefix: str) -> None:
    sub = {k[len(prefix) + 1 :]: v for k, v in tensors.items() if k.startswith(prefix + ".")}
    missing, unexpected = module.load_state_dict(sub, strict=False)
    if missing or unexpected:
        raise CheckpointError(
            f"checkpoint does not match the {prefix!r} architecture: missing {list(missing)[:5]}, unexpected {list(unexpected)[:5]}"
        )


def parameter_names(path) -> list[str]:
    """Names of every tensor stored in a checkpoint (its manifest)."""
    _, tensors = read(path)
    return list(tensors)
