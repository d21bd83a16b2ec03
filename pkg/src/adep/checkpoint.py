"""Checkpoint format: a JSON manifest plus one binary blob.

The manifest records architecture dims, the layer list, and every tensor's
name/shape/byte offset; the blob is the tensors' little-endian float64 bytes
concatenated in manifest order. Loading validates the blob length against
the declared shape totals and rejects manifests whose dims disagree with the
requesting configuration. Round-trips are bit exact.

Baseline models reuse the same scheme (integer columns stored as exact
float64).
"""

import json
from pathlib import Path

import numpy as np

from .errors import CheckpointError

FORMAT = "adep-checkpoint/1"


def save_tensors(manifest_path, blob_path, header, named_tensors):
    """Write named float64 tensors; header is merged into the manifest."""
    tensors = []
    offset = 0
    chunks = []
    for name, arr in named_tensors:
        arr = np.ascontiguousarray(arr, dtype=np.float64)
        raw = arr.astype("<f8", copy=False).tobytes()
        tensors.append({
            "name": name,
            "shape": list(arr.shape),
            "offset_bytes": offset,
            "count": int(arr.size),
        })
        offset += len(raw)
        chunks.append(raw)
    manifest = {"format": FORMAT, **header, "blob_bytes": offset, "tensors": tensors}
    Path(manifest_path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    Path(blob_path).write_bytes(b"".join(chunks))
    return manifest


def load_tensors(manifest_path, blob_path):
    """Read back (manifest, {name: array}); validates sizes and offsets."""
    try:
        manifest = json.loads(Path(manifest_path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read manifest {manifest_path}: {exc}") from exc
    if manifest.get("format") != FORMAT:
        raise CheckpointError(f"unexpected checkpoint format {manifest.get('format')!r}")
    blob = Path(blob_path).read_bytes()
    declared = sum(t["count"] for t in manifest["tensors"]) * 8
    if len(blob) != declared or manifest.get("blob_bytes") != declared:
        raise CheckpointError(
            f"blob holds {len(blob)} bytes but manifest declares {declared}"
        )
    tensors = {}
    for entry in manifest["tensors"]:
        start = entry["offset_bytes"]
        count = entry["count"]
        shape = tuple(entry["shape"])
        if int(np.prod(shape, dtype=np.int64)) != count:
            raise CheckpointError(f"tensor {entry['name']}: shape/count disagree")
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=start)
        tensors[entry["name"]] = arr.astype(np.float64).reshape(shape)
    return manifest, tensors


def save_model(run_dir, model, seed=None, config_hash=None):
    """Write <run_dir>/checkpoint.{json,bin} for an AdepModel (parameters,
    BatchNorm running statistics)."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    header = {
        "kind": "adep-model",
        "architecture": model.arch.to_dict(),
        "layers": {name: [type(l).__name__ for l in net.layers]
                   for name, net in model._subnets()},
        "seed": seed,
        "config_hash": config_hash,
    }
    named = model.named_parameters() + model.named_buffers()
    return save_tensors(run_dir / "checkpoint.json", run_dir / "checkpoint.bin",
                        header, named)


def load_model(run_dir, expected_arch=None):
    """Rebuild an AdepModel from <run_dir>/checkpoint.{json,bin}.

    If expected_arch is given, the stored dims must match exactly.
    """
    from .model import AdepModel, ArchSpec

    run_dir = Path(run_dir)
    manifest, tensors = load_tensors(run_dir / "checkpoint.json", run_dir / "checkpoint.bin")
    if manifest.get("kind") != "adep-model":
        raise CheckpointError(f"checkpoint kind {manifest.get('kind')!r} is not a model")
    arch = ArchSpec.from_dict(manifest["architecture"])
    if expected_arch is not None and arch != expected_arch:
        raise CheckpointError(
            "checkpoint architecture disagrees with the requesting configuration: "
            f"stored {arch.to_dict()}, requested {expected_arch.to_dict()}"
        )
    model = AdepModel(arch, rng=np.random.default_rng(0))
    targets = dict(model.named_parameters() + model.named_buffers())
    if set(targets) != set(tensors):
        raise CheckpointError("checkpoint tensor names do not match the architecture")
    for name, arr in tensors.items():
        if targets[name].shape != arr.shape:
            raise CheckpointError(
                f"tensor {name}: stored shape {arr.shape} vs expected {targets[name].shape}"
            )
        targets[name][...] = arr
    return model, manifest
