import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Union
import numpy as np
import pandas as pd
from data_classes.errors import InvalidInputError
from tools.field_io import write_frame

logger = logging.getLogger(__name__)

FORMATS = ("csv", "json")


def _plain(value: Any) -> Any:
    """numpy scalars and arrays as JSON-native values."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    return value


def to_json_text(data: Any) -> str:
    return json.dumps(_plain(data), indent=2)


class OutputWriter:
    """Writes one command's tables and summaries under a single output directory."""

    def __init__(self, directory: Union[str, Path], output_format: str = "csv"):
        if output_format not in FORMATS:
            raise InvalidInputError(f"Unknown output format '{output_format}', expected one of {FORMATS}")
        self.directory = Path(directory)
        self.output_format = output_format
        self.written: List[Path] = []

    def write_table(self, frame: pd.DataFrame, stem: str) -> Path:
        """Write a table as CSV or as a JSON list of row objects."""
        if self.output_format == "csv":
            path = write_frame(frame, self.directory / f"{stem}.csv")
        else:
            path = self.write_json({'columns': list(frame.columns),
                                    'rows': frame.to_dict(orient="records")}, stem)
        if path not in self.written:
            self.written.append(path)
        return path

    def write_json(self, data: Dict[str, Any], stem: str) -> Path:
        path = self.directory / f"{stem}.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(to_json_text(data) + "\n", encoding="utf-8")
        logger.debug(f"Wrote {path}")
        if path not in self.written:
            self.written.append(path)
        return path
