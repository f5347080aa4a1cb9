"""Checkpoint container: architecture, normalization constants, named
parameter arrays in full precision, and training metadata.

The on-disk format is a numpy ``.npz`` archive with a JSON header entry
(``__config__``/``__metadata__``) plus one entry per parameter; loading
is round-trip exact.
"""

from __future__ import annotations

import json
from dataclasses import asdict
from typing import Optional, Tuple

import numpy as np

from ..errors import SchemaError
from .model import Gnn, GnnConfig

CHECKPOINT_FORMAT_VERSION = 1


def save_checkpoint(gnn: Gnn, path, metadata: Optional[dict] = None) -> None:
    header = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "config": asdict(gnn.config),
        "parameter_count": gnn.parameter_count,
    }
    arrays = {f"param::{name}": gnn.store.view(name)
              for name in gnn.store.names()}
    np.savez(
        path,
        __config__=np.frombuffer(json.dumps(header).encode(), dtype=np.uint8),
        __metadata__=np.frombuffer(json.dumps(metadata or {}).encode(),
                                   dtype=np.uint8),
        **arrays,
    )


def load_checkpoint(path) -> Tuple[Gnn, dict]:
    """Rebuild a model from disk; returns (model, training metadata)."""
    try:
        with np.load(path) as archive:
            entries = {k: archive[k] for k in archive.files}
    except (OSError, ValueError) as exc:
        raise SchemaError(f"cannot read checkpoint {path}: {exc}") from exc
    if "__config__" not in entries:
        raise SchemaError(f"{path}: missing checkpoint header")
    header = json.loads(bytes(entries["__config__"]).decode())
    if header.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise SchemaError(f"{path}: unsupported checkpoint format_version")
    metadata = json.loads(bytes(entries.get(
        "__metadata__", np.frombuffer(b"{}", dtype=np.uint8))).decode())
    config = GnnConfig(**{k: tuple(v) if isinstance(v, list) else v
                          for k, v in header["config"].items()})
    gnn = Gnn(config)
    arrays = {name[len("param::"):]: value for name, value in entries.items()
              if name.startswith("param::")}
    try:
        gnn.store.load_named_arrays(arrays)
    except KeyError as exc:
        raise SchemaError(f"{path}: {exc}") from exc
    return gnn, metadata
