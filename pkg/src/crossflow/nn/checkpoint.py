"""Binary checkpoint format for Q-network parameters.

Layout (little-endian):

    bytes 0..3   magic "TSCQ"
    bytes 4..5   format version, u16
    bytes 6..9   metadata length, u32
    ...          metadata, UTF-8 JSON with sorted keys (scenario, n_actions,
                 input_shape, train_step, param shapes)
    ...          parameter tensors as raw float32, concatenated in
                 PARAM_LAYOUT order (row-major)

Round trips are bit-exact: float32 tensors are written as their raw bytes.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .qnetwork import PARAM_LAYOUT

MAGIC = b"TSCQ"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, params: dict[str, np.ndarray], scenario: str,
                    train_step: int, n_actions: int,
                    input_shape: tuple[int, int, int],
                    extra: dict | None = None) -> None:
    meta = {
        "scenario": scenario,
        "train_step": int(train_step),
        "n_actions": int(n_actions),
        "input_shape": list(input_shape),
        "shapes": {k: list(params[k].shape) for k in PARAM_LAYOUT},
    }
    if extra:
        meta["extra"] = extra
    blob = json.dumps(meta, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<H", VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for name in PARAM_LAYOUT:
            arr = np.ascontiguousarray(params[name], dtype="<f4")
            fh.write(arr.tobytes())


def load_checkpoint(path, expect_scenario: str | None = None):
    """Returns (params, meta). Raises CheckpointError on malformed input."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 10 or raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a Q-network checkpoint")
    (version,) = struct.unpack("<H", raw[4:6])
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    (meta_len,) = struct.unpack("<I", raw[6:10])
    if len(raw) < 10 + meta_len:
        raise CheckpointError(f"{path}: truncated metadata")
    try:
        meta = json.loads(raw[10:10 + meta_len].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: bad metadata: {exc}") from exc
    if set(meta.get("shapes", {})) != set(PARAM_LAYOUT):
        raise CheckpointError(f"{path}: metadata misses parameter shapes")
    if expect_scenario is not None and meta["scenario"] != expect_scenario:
        raise CheckpointError(
            f"{path}: checkpoint is for scenario {meta['scenario']!r}, "
            f"not {expect_scenario!r}")
    params: dict[str, np.ndarray] = {}
    offset = 10 + meta_len
    for name in PARAM_LAYOUT:
        shape = tuple(meta["shapes"][name])
        count = int(np.prod(shape))
        nbytes = count * 4
        if len(raw) < offset + nbytes:
            raise CheckpointError(f"{path}: truncated at tensor {name}")
        arr = np.frombuffer(raw, dtype="<f4", count=count, offset=offset)
        params[name] = arr.reshape(shape).copy()
        offset += nbytes
    if offset != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - offset} trailing bytes")
    return params, meta
