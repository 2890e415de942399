"""Model checkpoints: ``<stem>.json`` manifest + ``<stem>.bin`` float64 blob.

The manifest lists layer specs, the input shape, free-form metadata and
every tensor (name, shape, offset in elements) in blob order.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .layers import LayerSpec, Network

CHECKPOINT_VERSION = 1


def _paths(path):
    p = Path(path)
    if p.suffix in (".json", ".bin"):
        p = p.with_suffix("")
    return p.with_suffix(".json"), p.with_suffix(".bin")


def save_network(path, network: Network, metadata: dict | None = None) -> None:
    manifest_path, blob_path = _paths(path)
    state = network.get_state()
    tensors, offset = [], 0
    for name, arr in state.items():
        tensors.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.size
    manifest = {
        "version": CHECKPOINT_VERSION,
        "input_shape": list(network.input_shape),
        "layers": [s.to_dict() for s in network.specs],
        "tensors": tensors,
        "metadata": metadata or {},
    }
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    blob = np.concatenate([a.ravel() for a in state.values()]) if state else np.zeros(0)
    blob_path.write_bytes(blob.astype("<f8").tobytes())


def load_network(path) -> tuple:
    """Return ``(network, metadata)``."""
    manifest_path, blob_path = _paths(path)
    if not manifest_path.exists():
        raise FileNotFoundError(f"checkpoint manifest not found: {manifest_path}")
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {manifest.get('version')!r}")
    specs = [LayerSpec.from_dict(d) for d in manifest["layers"]]
    net = Network(specs, tuple(manifest["input_shape"]), seed=0)
    blob = np.frombuffer(blob_path.read_bytes(), dtype="<f8")
    state = {}
    for t in manifest["tensors"]:
        size = int(np.prod(t["shape"])) if t["shape"] else 1
        state[t["name"]] = blob[t["offset"]:t["offset"] + size].reshape(t["shape"])
    net.set_state(state)
    return net, manifest.get("metadata", {})
