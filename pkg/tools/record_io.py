import logging
from pathlib import Path
from typing import List, Sequence, Union
import pandas as pd
from data_classes.errors import InvalidInputError, InvalidRecordError
from data_classes.records import WorkerRecord
from services.inference_service import records_frame
from tools.field_io import FLOAT_FORMAT

logger = logging.getLogger(__name__)

RECORD_COLUMNS = ["occupation", "earnings", "q_ratio"]


def read_records(path: Union[str, Path]) -> List[WorkerRecord]:
    """Worker records from CSV; errors name the file line of the bad row."""
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except FileNotFoundError as e:
        raise InvalidInputError(f"Records file {path} does not exist") from e
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise InvalidInputError(f"Cannot parse records file {path}: {e}") from e

    if list(frame.columns) != RECORD_COLUMNS:
        raise InvalidRecordError(f"header must be {','.join(RECORD_COLUMNS)}, "
                                 f"got {','.join(map(str, frame.columns))}", line=1)
    records = []
    for index, row in enumerate(frame.to_dict(orient="records")):
        records.append(WorkerRecord.from_row(row, line=index + 2))
    if not records:
        raise InvalidInputError(f"Records file {path} has no rows")
    logger.info(f"Read {len(records)} worker records from {path}")
    return records


def write_records(records: Sequence[WorkerRecord], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    records_frame(records).to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return path
