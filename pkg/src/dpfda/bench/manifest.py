"""Run manifests: everything needed to reproduce an output file bit for bit."""

from __future__ import annotations

import json
import platform
from importlib import metadata

import numpy as np
import scipy

MANIFEST_PREFIX = "# manifest: "


def _package_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        from dpfda import __version__

        return __version__


def versions() -> dict:
    return {
        "dpfda": _package_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


def build_manifest(kind: str, config: dict, seed: int) -> dict:
    return {"kind": kind, "seed": int(seed), "config": config, "versions": versions()}


def manifest_line(manifest: dict) -> str:
    return MANIFEST_PREFIX + json.dumps(manifest, sort_keys=True, default=_jsonable)


def _jsonable(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (tuple, set, np.ndarray)):
        return list(obj)
    raise TypeError(f"not serializable: {type(obj).__name__}")


def read_manifest(path) -> dict | None:
    with open(path) as fh:
        for line in fh:
            if line.startswith(MANIFEST_PREFIX):
                return json.loads(line[len(MANIFEST_PREFIX):])
            if not line.startswith("#"):
                break
    return None
