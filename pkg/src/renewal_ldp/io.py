"""Artifact files: deterministic JSON/CSV writers, run manifests, comparisons.

Data artifacts carry a ``schema`` tag (``name/version``) and never contain
timestamps, so re-running a command reproduces them byte for byte.  The
manifest written next to them is the one file with run-time metadata.
"""

from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import io
import json
import math
import platform
from pathlib import Path
from typing import Any

from .exceptions import SchemaError

__all__ = [
    "dump_json",
    "write_json",
    "write_text",
    "sha256_file",
    "write_manifest",
    "read_artifact",
    "compare_artifacts",
]


def _clean(obj):
    """Replace non-finite floats by strings so the JSON stays standard."""
    if isinstance(obj, float):
        if math.isnan(obj):
            return "nan"
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        return obj
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if hasattr(obj, "item") and callable(obj.item):  # numpy scalars
        return _clean(obj.item())
    return obj


def dump_json(obj: Any) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def write_json(path: Path, obj: Any) -> Path:
    path = Path(path)
    path.write_text(dump_json(obj))
    return path


def write_text(path: Path, text: str) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return path


def sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out_dir: Path, command: str, config: dict, artifacts: list[Path], model_path: str | None, version: str):
    out_dir = Path(out_dir)
    manifest = {
        "schema": "manifest/1",
        "command": command,
        "config": config,
        "model_path": model_path,
        "model_sha256": sha256_file(model_path) if model_path and Path(model_path).exists() else None,
        "artifacts": {Path(a).name: sha256_file(a) for a in artifacts},
        "version": version,
        "python": platform.python_version(),
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(),
    }
    return write_json(out_dir / "manifest.json", manifest)


# ---------------------------------------------------------------------------
# comparison
# ---------------------------------------------------------------------------


def read_artifact(path: str | Path) -> tuple[str, Any]:
    """Return ``("csv", rows)`` or ``("json", obj)``."""
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".csv":
        rows = list(csv.DictReader(io.StringIO(text)))
        return "csv", rows
    try:
        return "json", json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: neither CSV nor JSON ({exc})") from None


def _to_num(x):
    if x is None or x == "":
        return None
    if isinstance(x, bool):
        return None
    if isinstance(x, (int, float)):
        return float(x)
    if isinstance(x, str):
        try:
            return float(x)
        except ValueError:
            return None
    return None


def _close(a, b, atol, rtol):
    if a == b:
        return True, 0.0
    if a is None or b is None or math.isinf(a) or math.isinf(b):
        return False, math.inf
    d = abs(a - b)
    return d <= max(atol, rtol * max(abs(a), abs(b))), d


def _flatten(obj, prefix=""):
    if isinstance(obj, dict):
        for k in sorted(obj):
            yield from _flatten(obj[k], f"{prefix}.{k}" if prefix else str(k))
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            yield from _flatten(v, f"{prefix}[{i}]")
    else:
        yield prefix, obj


def compare_artifacts(a: str | Path, b: str | Path, atol: float = 0.0, rtol: float = 0.0, columns=None) -> dict:
    """Column- or leaf-wise comparison of two artifacts of the same schema.

    Numeric entries pass when ``|x - y| <= max(atol, rtol * max(|x|, |y|))``;
    other entries must be equal.  Raises :class:`SchemaError` for mismatched
    kinds, schemas or shapes.
    """
    ka, da = read_artifact(a)
    kb, db = read_artifact(b)
    if ka != kb:
        raise SchemaError(f"cannot compare a {ka} artifact with a {kb} artifact")
    report: dict = {"schema": "comparison/1", "a": str(a), "b": str(b), "atol": atol, "rtol": rtol, "entries": []}
    if ka == "csv":
        cols_a = list(da[0].keys()) if da else []
        cols_b = list(db[0].keys()) if db else []
        if len(da) != len(db) or (columns is None and cols_a != cols_b):
            raise SchemaError("CSV artifacts differ in columns or row count")
        cols = columns or cols_a
        for c in cols:
            if c not in cols_a or c not in cols_b:
                raise SchemaError(f"column {c!r} not present in both artifacts")
            worst, ok = 0.0, True
            for ra, rb in zip(da, db):
                xa, xb = _to_num(ra[c]), _to_num(rb[c])
                if xa is None or xb is None:
                    good = ra[c] == rb[c]
                    d = 0.0 if good else math.inf
                else:
                    good, d = _close(xa, xb, atol, rtol)
                ok &= good
                worst = max(worst, d)
            report["entries"].append({"column": c, "max_abs_diff": worst, "pass": ok})
    else:
        sa, sb = da.get("schema") if isinstance(da, dict) else None, db.get("schema") if isinstance(db, dict) else None
        if sa != sb:
            raise SchemaError(f"schema mismatch: {sa!r} vs {sb!r}")
        fa, fb = dict(_flatten(da)), dict(_flatten(db))
        if set(fa) != set(fb):
            raise SchemaError("JSON artifacts differ in structure")
        for key in sorted(fa):
            if columns and not any(key == c or key.startswith(c + ".") or key.startswith(c + "[") for c in columns):
                continue
            xa, xb = _to_num(fa[key]), _to_num(fb[key])
            if xa is None or xb is None or isinstance(fa[key], str) and not isinstance(fb[key], str):
                good = fa[key] == fb[key]
                d = 0.0 if good else math.inf
            else:
                good, d = _close(xa, xb, atol, rtol)
            report["entries"].append({"column": key, "max_abs_diff": d, "pass": good})
    report["pass"] = all(e["pass"] for e in report["entries"])
    return report
