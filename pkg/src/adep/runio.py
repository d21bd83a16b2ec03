"""Run-directory bookkeeping: resolved configs, manifests, file hashing.

Every CLI run writes a manifest (config hash, seed, versions, file digests)
beside its outputs. The manifest is the only output that carries a
timestamp, so identical command lines produce byte-identical artifacts
everywhere else.
"""

import hashlib
import json
import platform
import time
from pathlib import Path

import numpy as np

from . import __version__
from .engine import kernels


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(config_obj):
    return hashlib.sha256(canonical_json(config_obj).encode()).hexdigest()


def sha256_file(path):
    digest = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_json(path, obj, sort_keys=True):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=sort_keys) + "\n")


def write_manifest(out_dir, command, config_obj, seed, files=None):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "config_hash": config_hash(config_obj),
        "seed": seed,
        "versions": {
            "adep": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
        },
        "kernel_backend": kernels.backend_name(),
        "created_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    if files:
        manifest["files"] = {name: sha256_file(out_dir / name) for name in files}
    write_json(out_dir / "manifest.json", manifest)
    return manifest


def read_manifest(out_dir):
    path = Path(out_dir) / "manifest.json"
    if not path.exists():
        return None
    return json.loads(path.read_text())
