"""Parameter-tree plumbing: path addressing, graph lifting, checkpoints.

Parameter containers are nested dataclasses with Tensor leaves. Every leaf is
addressable by a dotted path ("mlge.local.conv1.kernel"), which is the key
used by the optimizer, gradient checks and checkpoint manifests.
"""
from __future__ import annotations

import dataclasses
import json
from pathlib import Path
from typing import Callable

import numpy as np

from .autodiff import Var, leaf
from .tensor import Tensor, ValidationError, read_gft, write_gft

__all__ = [
    "flatten",
    "map_leaves",
    "lift",
    "is_trainable",
    "save_checkpoint",
    "load_checkpoint",
]

_STATE_SUFFIXES = ("running_mean", "running_var")


def is_trainable(path: str) -> bool:
    """Running statistics are state, not weights; everything else trains."""
    return not path.endswith(_STATE_SUFFIXES)


def _rebuild(cls, values: dict):
    # bypass __init__ so lifted (Var-leaf) structures skip Tensor validation
    obj = object.__new__(cls)
    for k, v in values.items():
        object.__setattr__(obj, k, v)
    return obj


def flatten(obj, prefix: str = "") -> dict[str, Tensor]:
    """All Tensor leaves of a nested dataclass, keyed by dotted path."""
    out: dict[str, Tensor] = {}

    def walk(node, path):
        if isinstance(node, (Tensor, Var)):
            out[path] = node
        elif dataclasses.is_dataclass(node):
            for f in dataclasses.fields(node):
                child = getattr(node, f.name)
                walk(child, f"{path}.{f.name}" if path else f.name)

    walk(obj, prefix)
    return out


def map_leaves(obj, fn: Callable[[str, Tensor], object], prefix: str = ""):
    """Rebuild a parameter tree with every leaf replaced by fn(path, leaf)."""

    def walk(node, path):
        if isinstance(node, (Tensor, Var)):
            return fn(path, node)
        if dataclasses.is_dataclass(node):
            values = {}
            for f in dataclasses.fields(node):
                child = getattr(node, f.name)
                values[f.name] = walk(child, f"{path}.{f.name}" if path else f.name)
            return _rebuild(type(node), values)
        return node

    return walk(obj, prefix)


def lift(params, *, dtype=np.float32, trainable: bool = False,
         arrays: dict[str, np.ndarray] | None = None):
    """Replace Tensor leaves with graph Vars.

    When ``arrays`` is given its entries are used as the leaf buffers (the
    mutable training state); otherwise the Tensor data is used read-only.
    Returns (lifted tree, {path: Var}).
    """
    var_map: dict[str, Var] = {}

    def make(path, t):
        if arrays is not None:
            a = arrays[path]
        else:
            a = np.asarray(t.data, dtype=dtype) if isinstance(t, Tensor) else t.a
        v = leaf(a, requires=trainable and is_trainable(path))
        var_map[path] = v
        return v

    lifted = map_leaves(params, make)
    return lifted, var_map


# ---------------------------------------------------------------------------
# Checkpoints: one GFT file per leaf plus a manifest mapping path -> file
# ---------------------------------------------------------------------------

def save_checkpoint(directory: str | Path, params) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    mapping = {}
    for i, (path, t) in enumerate(sorted(flatten(params).items())):
        fname = f"{i:04d}_{path.replace('.', '-')}.gft"
        write_gft(directory / fname, t)
        mapping[path] = fname
    manifest = {"format": "gft-checkpoint-v1", "tensors": mapping}
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return directory / "manifest.json"


def load_checkpoint(directory: str | Path, template):
    """Load a checkpoint into the structure of ``template``; shapes must match."""
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    mapping = manifest.get("tensors", {})
    expected = flatten(template)
    missing = sorted(set(expected) - set(mapping))
    extra = sorted(set(mapping) - set(expected))
    if missing or extra:
        raise ValidationError(
            f"checkpoint does not match parameter tree: missing={missing}, extra={extra}"
        )

    def restore(path, t):
        loaded = read_gft(directory / mapping[path])
        if loaded.shape != t.shape:
            raise ValidationError(
                f"checkpoint tensor {path} has shape {loaded.shape}, expected {t.shape}"
            )
        return loaded

    return map_leaves(template, restore)
