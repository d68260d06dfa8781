"""
Reading and writing grids, label grids, result JSON and tables.
"""
import json
import logging
import math
import sys
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import pandas as pd

from . import __version__
from .errors import DataError
from .lattice import GridData

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
RUNTIME_ONLY_SETTINGS = frozenset({"threads"})


def read_grid_csv(path: PathLike, header: bool = False) -> GridData:
    """A 2-D grid from CSV; ``NA`` (or an empty cell) marks an unobserved site."""
    try:
        frame = pd.read_csv(path, header=0 if header else None, na_values=["NA"])
    except FileNotFoundError:
        raise DataError(f"data file not found: {path}")
    except (pd.errors.EmptyDataError, pd.errors.ParserError) as e:
        raise DataError(f"cannot parse grid CSV {path}: {e}")
    try:
        values = frame.apply(pd.to_numeric, errors="raise").to_numpy(dtype=float)
    except (ValueError, TypeError) as e:
        raise DataError(f"grid CSV {path} holds non-numeric entries: {e}")
    if np.isnan(values).all():
        raise DataError(f"grid CSV {path} has no observed sites")
    logger.info(f"Read {values.shape[0]}x{values.shape[1]} grid from {path}")
    return GridData.from_array(values)


def write_grid_csv(path: PathLike, data: Union[GridData, np.ndarray]) -> None:
    values = data.values if isinstance(data, GridData) else np.asarray(data, dtype=float)
    if values.ndim != 2:
        raise DataError(f"only 2-D grids can be written as CSV, got {values.ndim}-D")
    pd.DataFrame(values).to_csv(path, header=False, index=False, na_rep="NA", float_format="%.10g")


def write_label_csv(path: PathLike, labels: np.ndarray) -> None:
    """Conclique labels 0..q-1, with -1 for unlabelled cells."""
    if labels.ndim != 2:
        raise DataError("only 2-D label grids can be written as CSV")
    pd.DataFrame(labels.astype(int)).to_csv(path, header=False, index=False)


def make_json_serializable(obj: Any) -> Any:
    """
    Recursively convert pydantic models, numpy values and enums to plain JSON types.
    Non-finite floats become null.
    """
    if hasattr(obj, "model_dump"):
        return make_json_serializable(obj.model_dump(mode="json", by_alias=True))
    elif isinstance(obj, Enum):
        return obj.value
    elif isinstance(obj, np.ndarray):
        return make_json_serializable(obj.tolist())
    elif isinstance(obj, np.generic):
        return make_json_serializable(obj.item())
    elif isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    elif isinstance(obj, dict):
        return {str(key): make_json_serializable(value) for key, value in obj.items()}
    elif isinstance(obj, (list, tuple)):
        return [make_json_serializable(item) for item in obj]
    else:
        return obj


def result_document(command: str, config: Any, result: Dict[str, Any]) -> Dict[str, Any]:
    """Result payload with the resolved config and library version attached.

    Settings that cannot change the output (worker threads) are left out of the echo.
    """
    echo = make_json_serializable(config)
    if isinstance(echo, dict):
        echo = {key: value for key, value in echo.items() if key not in RUNTIME_ONLY_SETTINGS}
    return {
        "command": command,
        "version": __version__,
        "result": make_json_serializable(result),
        "config": echo,
    }


def dumps(document: Dict[str, Any]) -> str:
    return json.dumps(make_json_serializable(document), indent=2) + "\n"


def write_json(document: Dict[str, Any], path: Optional[PathLike] = None) -> None:
    """Write to ``path``, or to stdout when no path is given."""
    text = dumps(document)
    if path is None:
        sys.stdout.write(text)
        return
    Path(path).write_text(text, encoding="utf-8")
    logger.info(f"Wrote {path}")


def write_table(rows: Union[pd.DataFrame, List[Dict[str, Any]]], path: Optional[PathLike] = None) -> pd.DataFrame:
    frame = rows if isinstance(rows, pd.DataFrame) else pd.DataFrame(rows)
    if path is None:
        frame.to_csv(sys.stdout, index=False, float_format="%.10g")
    else:
        frame.to_csv(path, index=False, float_format="%.10g")
        logger.info(f"Wrote {len(frame)} rows to {path}")
    return frame
