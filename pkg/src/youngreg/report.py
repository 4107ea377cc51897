"""Run reports: config echo, build stamp, per-check results, and a content-hash
manifest of every emitted file. Serialization uses sorted keys so identical runs
produce identical reports up to the timing block."""

from __future__ import annotations

import hashlib
import json
import subprocess
from pathlib import Path


def build_stamp() -> dict:
    try:
        rev = subprocess.run(
            ["git", "rev-parse", "HEAD"], capture_output=True, text=True, timeout=5,
        ).stdout.strip() or "unknown"
    except Exception:
        rev = "unknown"
    from . import __version__
    return {"git": rev, "version": __version__}


def _hash_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _sanitize(obj):
    """Make results JSON-serializable (numpy scalars/arrays, tuples, paths)."""
    import numpy as np

    if isinstance(obj, dict):
        return {str(k): _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, float) and obj != obj:  # NaN
        return None
    return obj


def write_report(
    out_dir: Path,
    subcommand: str,
    config: dict,
    results: dict,
    flags: list,
    timing_s: float,
) -> dict:
    """Write <out_dir>/report.json and return the report dict.

    The manifest lists every file in out_dir (except the report itself) with its
    sha256, so byte-identical reruns are verifiable from the report alone.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        p.name: _hash_file(p)
        for p in sorted(out_dir.iterdir())
        if p.is_file() and p.name != "report.json"
    }
    report = {
        "subcommand": subcommand,
        "config": _sanitize(config),
        "build": build_stamp(),
        "results": _sanitize(results),
        "flags": _sanitize(list(flags)),
        "manifest": manifest,
        "timing": {"seconds": timing_s},
    }
    with open(out_dir / "report.json", "w") as fh:
        json.dump(report, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return report
