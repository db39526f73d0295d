"""
Binary checkpoints, little endian:

    8 bytes   magic b"UGMMCKPT"
    u32       format version
    u32       header length H
    H bytes   UTF-8 JSON header: spec, epoch, adam step, run config, tensor manifest
    f64[]     raw tensors in manifest order (parameters, then Adam m, then Adam v)

Tensors are written with their exact bit patterns, so save -> load is lossless.
"""
from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import ValidationError

from src.errors import CheckpointError
from src.models.params import AdamState, NetworkParams, layer_from_tensors
from src.models.run_config import NetworkSpec

log = logging.getLogger(__name__)

MAGIC = b"UGMMCKPT"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<8sII")


@dataclass
class Checkpoint:
    spec: NetworkSpec
    params: NetworkParams
    state: Optional[AdamState] = None
    epoch: int = 0
    run_config: Optional[Dict[str, Any]] = None
    version: int = FORMAT_VERSION


def expected_shapes(spec: NetworkSpec) -> List[Dict[str, Tuple[int, ...]]]:
    shapes = []
    for n_in, n_out in zip(spec.layer_widths, spec.layer_widths[1:]):
        if spec.kind == "ugmm":
            shapes.append({name: (n_out, n_in) for name in ("mu", "log_sigma", "pi_logit")})
        else:
            shapes.append({"W": (n_out, n_in), "b": (n_out,)})
    return shapes


def _manifest(params: NetworkParams, prefix: str) -> List[Tuple[str, np.ndarray]]:
    return [(f"{prefix}.{name}", value) for name, value in params.named_tensors()]


def save_checkpoint(path: Union[str, Path], ckpt: Checkpoint) -> None:
    path = Path(path)
    tensors = _manifest(ckpt.params, "params")
    if ckpt.state is not None:
        tensors += _manifest(ckpt.state.m, "adam_m") + _manifest(ckpt.state.v, "adam_v")

    header = {
        "spec": ckpt.spec.model_dump(mode="json"),
        "epoch": ckpt.epoch,
        "adam_t": None if ckpt.state is None else ckpt.state.t,
        "run_config": ckpt.run_config,
        "tensors": [[name, list(value.shape)] for name, value in tensors],
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")

    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as f:
            f.write(_PREFIX.pack(MAGIC, FORMAT_VERSION, len(header_bytes)))
            f.write(header_bytes)
            for _, value in tensors:
                f.write(np.ascontiguousarray(value, dtype="<f8").tobytes())
    except OSError as e:
        raise CheckpointError(f"Cannot write checkpoint {path}: {e}") from e
    log.info(f"Saved checkpoint {path} ({len(tensors)} tensors, epoch {ckpt.epoch})")


def _rebuild(spec: NetworkSpec, flat: Dict[str, np.ndarray], prefix: str) -> NetworkParams:
    layers = []
    for i, shapes in enumerate(expected_shapes(spec)):
        tensors = {}
        for name, shape in shapes.items():
            key = f"{prefix}.layers.{i}.{name}"
            if key not in flat:
                raise CheckpointError(f"checkpoint is missing tensor {key}")
            if flat[key].shape != shape:
                raise CheckpointError(f"tensor {key} has shape {flat[key].shape}, spec implies {shape}")
            tensors[name] = flat[key]
        layers.append(layer_from_tensors(spec.kind, tensors))
    return NetworkParams(layers)


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    """
    Raises:
        CheckpointError: unreadable file, bad magic, version mismatch, truncation,
            or tensors that do not match the embedded spec
    """
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise CheckpointError(f"Cannot read checkpoint {path}: {e}") from e

    if len(raw) < _PREFIX.size:
        raise CheckpointError(f"{path}: too short to be a checkpoint")
    magic, version, header_len = _PREFIX.unpack_from(raw)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: bad magic {magic!r}, not a uGMM-NN checkpoint")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: format version {version} is not supported (expected {FORMAT_VERSION})")

    offset = _PREFIX.size
    try:
        header = json.loads(raw[offset:offset + header_len].decode("utf-8"))
        spec = NetworkSpec.model_validate(header["spec"])
        manifest = header["tensors"]
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, ValidationError) as e:
        raise CheckpointError(f"{path}: corrupt header: {e}") from e
    offset += header_len

    flat: Dict[str, np.ndarray] = {}
    for name, shape in manifest:
        count = int(np.prod(shape)) if shape else 1
        end = offset + 8 * count
        if end > len(raw):
            raise CheckpointError(f"{path}: truncated while reading {name}")
        flat[name] = np.frombuffer(raw, dtype="<f8", count=count, offset=offset).astype(np.float64).reshape(shape)
        offset = end
    if offset != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - offset} unexpected trailing bytes")

    params = _rebuild(spec, flat, "params")
    state = None
    if header.get("adam_t") is not None:
        state = AdamState(m=_rebuild(spec, flat, "adam_m"), v=_rebuild(spec, flat, "adam_v"), t=int(header["adam_t"]))

    log.info(f"Loaded checkpoint {path} ({spec.kind}, widths {spec.layer_widths}, epoch {header.get('epoch', 0)})")
    return Checkpoint(
        spec=spec,
        params=params,
        state=state,
        epoch=int(header.get("epoch", 0)),
        run_config=header.get("run_config"),
        version=version,
    )
