"""Versioned binary weights container.

Layout: an ASCII header (magic line, variant, embedded config JSON, config
hash, one line per array with name/kind/shape, then "end"), followed by
the raw float64 little-endian arrays in header order.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .model import NetConfig, Network

MAGIC = "WEAVECOUNT-WEIGHTS 1"


def save_weights(net: Network, path: str | Path) -> None:
    lines = [MAGIC, f"variant={net.config.variant}"]
    config_json = json.dumps(
        {k: list(v) if isinstance(v, tuple) else v for k, v in vars(net.config).items()},
        sort_keys=True,
    )
    lines.append(f"config={config_json}")
    lines.append(f"config_hash={net.config.config_hash()}")
    params = {name for name, _ in net.parameters()}
    arrays = net.state_arrays()
    for name, arr in arrays:
        kind = "param" if name in params else "buffer"
        shape = "x".join(str(d) for d in arr.shape)
        lines.append(f"tensor {name} kind={kind} shape={shape}")
    lines.append("end")
    header = ("\n".join(lines) + "\n").encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        for _, arr in arrays:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def _parse_header(data: bytes, path: Path) -> tuple[dict, list[tuple[str, tuple[int, ...]]], int]:
    end_marker = b"\nend\n"
    end = data.find(end_marker)
    if end < 0:
        raise ValueError(f"{path}: missing header terminator")
    header_lines = data[:end].decode("ascii").splitlines()
    if not header_lines or header_lines[0] != MAGIC:
        raise ValueError(f"{path}: not a weights file (bad magic)")
    fields: dict[str, str] = {}
    tensors: list[tuple[str, tuple[int, ...]]] = []
    for line in header_lines[1:]:
        if line.startswith("tensor "):
            parts = line.split()
            name = parts[1]
            shape: tuple[int, ...] = ()
            for token in parts[2:]:
                if token.startswith("shape="):
                    spec = token[len("shape=") :]
                    shape = tuple(int(d) for d in spec.split("x")) if spec else ()
            tensors.append((name, shape))
        elif "=" in line:
            key, value = line.split("=", 1)
            fields[key] = value
    return fields, tensors, end + len(end_marker)


def inspect_weights(path: str | Path) -> str:
    """Header text of a weights file (everything before the binary blob)."""
    data = Path(path).read_bytes()
    _, _, offset = _parse_header(data, Path(path))
    return data[: offset - 1].decode("ascii")


def load_weights(path: str | Path) -> Network:
    path = Path(path)
    data = path.read_bytes()
    fields, tensors, offset = _parse_header(data, path)
    if "config" not in fields:
        raise ValueError(f"{path}: header lacks the embedded config")
    raw = json.loads(fields["config"])
    config = NetConfig(
        variant=raw["variant"],
        depth=raw["depth"],
        filters=tuple(raw["filters"]),
        kernel_sizes=tuple(raw["kernel_sizes"]),
        dropout_p=raw["dropout_p"],
        loss=raw["loss"],
        threshold_rule=raw["threshold_rule"],
        learning_rate=raw["learning_rate"],
        bn_momentum=raw["bn_momentum"],
        bn_eps=raw["bn_eps"],
    )
    if "config_hash" in fields and fields["config_hash"] != config.config_hash():
        raise ValueError(f"{path}: config hash mismatch")
    net = Network(config, seed=0)
    state: dict[str, np.ndarray] = {}
    pos = offset
    for name, shape in tensors:
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 8
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=pos).reshape(shape)
        state[name] = arr.copy()
        pos += nbytes
    expected = {name for name, _ in net.state_arrays()}
    missing = expected.difference(state)
    if missing:
        raise ValueError(f"{path}: missing arrays {sorted(missing)[:3]}...")
    net.import_state(state)
    return net
