"""
Local artifact storage for CLI runs.

Matrices are headerless CSV with 17 significant digits; structured artifacts
are JSON with sorted keys so that identical runs produce identical bytes.
"""
from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel

from config.settings import settings
from core.errors import InputError

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
MATRIX_FLOAT_FORMAT = "%.17g"


def _plain(value: Any) -> Any:
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, BaseModel):
        return value.model_dump(mode="json")
    raise TypeError(f"cannot serialize {type(value).__name__}")


def _matrix_frame(m: np.ndarray) -> pd.DataFrame:
    return pd.DataFrame(np.atleast_2d(np.asarray(m, dtype=float)))


def format_matrix(m: np.ndarray) -> str:
    return _matrix_frame(m).to_csv(header=False, index=False, float_format=MATRIX_FLOAT_FORMAT, lineterminator="\n")


def read_matrix_csv(path: Union[str, Path]) -> np.ndarray:
    """Parse a headerless numeric CSV; missing, ragged or non-numeric files raise InputError."""
    path = Path(path)
    try:
        frame = pd.read_csv(path, header=None, dtype=float, encoding="utf-8-sig", skip_blank_lines=True)
    except pd.errors.EmptyDataError as e:
        raise InputError(f"{path} contains no data") from e
    except OSError as e:
        raise InputError(f"cannot read {path}: {e}") from e
    except (pd.errors.ParserError, ValueError) as e:
        raise InputError(f"{path}: not a numeric CSV ({e})") from e
    arr = frame.to_numpy(dtype=float)
    if arr.size == 0:
        raise InputError(f"{path} contains no data")
    bad = np.argwhere(~np.isfinite(arr))
    if bad.size:
        row, col = (int(v) + 1 for v in bad[0])
        raise InputError(f"{path}: row {row}, column {col} is missing or not finite")
    return arr


def read_json(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise InputError(f"cannot read JSON from {path}: {e}") from e


class LocalStorage:
    """Writes run artifacts into one output directory."""

    def __init__(self, root: Optional[Union[str, Path]] = None):
        self.root = Path(root or settings.OUTPUT_DIR)
        self.root.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        return self.root / name

    def write_matrix_csv(self, name: str, m: np.ndarray) -> Path:
        target = self.path(name)
        _matrix_frame(m).to_csv(target, header=False, index=False, float_format=MATRIX_FLOAT_FORMAT, lineterminator="\n")
        logger.debug("Wrote %s", target)
        return target

    def write_json(self, name: str, payload: Any) -> Path:
        target = self.path(name)
        target.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_plain) + "\n", encoding="utf-8")
        logger.debug("Wrote %s", target)
        return target

    def write_frame(self, name: str, frame: pd.DataFrame) -> Path:
        target = self.path(name)
        frame.to_csv(target, index=False, float_format=MATRIX_FLOAT_FORMAT, lineterminator="\n")
        logger.debug("Wrote %s (%d rows)", target, len(frame))
        return target

    def write_manifest(self, manifest: BaseModel) -> Path:
        return self.write_json(MANIFEST_NAME, manifest.model_dump(mode="json"))
