# utils/artifacts.py
"""
CSV and JSON artifacts.

CSV: one `# {...}` line with the run config and artifact version, then the table (floats as %.17g).
JSON: sorted keys, the run config under "config". Identical inputs give byte-identical files.
"""

from __future__ import annotations

import io
import json
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
import pandas as pd

from config import ARTIFACT_VERSION

PathLike = Union[str, Path]
FLOAT_FORMAT = "%.17g"


def _to_builtin(value: Any):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (set, tuple)):
        return list(value)
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def _header(config: Dict[str, Any]) -> Dict[str, Any]:
    return {"artifact_version": ARTIFACT_VERSION, "config": config}


def render_csv(frame: pd.DataFrame, config: Dict[str, Any]) -> str:
    buf = io.StringIO()
    buf.write("# " + json.dumps(_header(config), sort_keys=True, default=_to_builtin) + "\n")
    frame.to_csv(buf, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return buf.getvalue()


def render_json(payload: Dict[str, Any], config: Dict[str, Any]) -> str:
    body = dict(payload)
    body.update(_header(config))
    return json.dumps(body, sort_keys=True, indent=2, default=_to_builtin) + "\n"


def _write(text: str, path: Optional[PathLike]) -> str:
    if path is not None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    return text


def write_csv(frame: pd.DataFrame, config: Dict[str, Any], path: Optional[PathLike] = None) -> str:
    return _write(render_csv(frame, config), path)


def write_json(payload: Dict[str, Any], config: Dict[str, Any], path: Optional[PathLike] = None) -> str:
    return _write(render_json(payload, config), path)


def read_csv_artifact(path: PathLike) -> Tuple[Dict[str, Any], pd.DataFrame]:
    """Header dict (artifact_version + config) and the table of a CSV artifact."""
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        first = fh.readline()
    header = json.loads(first[1:].strip()) if first.startswith("#") else {}
    frame = pd.read_csv(path, comment="#")
    return header, frame


def read_json_artifact(path: PathLike) -> Dict[str, Any]:
    return json.loads(Path(path).read_text(encoding="utf-8"))
