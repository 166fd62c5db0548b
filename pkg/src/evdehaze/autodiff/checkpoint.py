"""Checkpoint directory: one .ten per parameter plus ``manifest.json``."""

from __future__ import annotations

import json
import os
from pathlib import Path

from ..errors import FormatError
from ..tensor_core import load_tensor, save_tensor

CHECKPOINT_VERSION = 1


def _fname(name: str) -> str:
    return name.replace("/", "__").replace(".", "_") + ".ten"


def save_checkpoint(directory, params, meta=None) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for p in params:
        fname = _fname(p.name)
        save_tensor(p.value, directory / fname)
        entries.append({"name": p.name, "file": fname, "dims": list(p.shape)})
    manifest = {"format": "evdehaze-checkpoint", "version": CHECKPOINT_VERSION,
                "params": entries, "meta": meta or {}}
    tmp = directory / "manifest.json.tmp"
    tmp.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    os.replace(tmp, directory / "manifest.json")
    return directory


def load_checkpoint(directory):
    """Return ({name: array}, meta)."""
    directory = Path(directory)
    path = directory / "manifest.json"
    try:
        manifest = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"manifest is not valid JSON: {exc}", path=path) from None
    if manifest.get("format") != "evdehaze-checkpoint":
        raise FormatError("not a checkpoint manifest", path=path)
    if manifest.get("version") != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {manifest.get('version')}", path=path)
    values = {}
    for e in manifest["params"]:
        arr = load_tensor(directory / e["file"])
        if list(arr.shape) != list(e["dims"]):
            raise FormatError(f"param {e['name']}: dims {list(arr.shape)} != manifest {e['dims']}",
                              path=directory / e["file"])
        values[e["name"]] = arr
    return values, manifest.get("meta", {})
