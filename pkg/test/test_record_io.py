"""
Unit tests for the worker record CSV reader and writer.
Tests cover valid files, header checks and line-numbered record errors.
"""

import pytest

from data_classes.errors import InvalidInputError, InvalidRecordError
from data_classes.records import WorkerRecord
from tools.record_io import read_records, write_records


@pytest.fixture
def records():
    """Three valid worker records."""
    return [WorkerRecord("police", 64.0, 0.9), WorkerRecord("physicians", 184.0, 0.82),
            WorkerRecord("police", 70.25, 0.9)]


class TestRecordIO:
    """Test read_records and write_records."""

    def test_round_trip(self, records, tmp_path):
        """Test that written records are read back unchanged."""
        path = write_records(records, tmp_path / "records.csv")
        assert read_records(path) == records

    def test_bad_header(self, tmp_path):
        """Test that the header is checked on line 1."""
        path = tmp_path / "records.csv"
        path.write_text("job,wage,ratio\npolice,64,0.9\n")
        with pytest.raises(InvalidRecordError) as error:
            read_records(path)
        assert error.value.line == 1

    def test_negative_earnings_line(self, tmp_path):
        """Test that a bad row reports its file line."""
        path = tmp_path / "records.csv"
        path.write_text("occupation,earnings,q_ratio\npolice,64,0.9\nnurses,-3,1.1\n")
        with pytest.raises(InvalidRecordError) as error:
            read_records(path)
        assert error.value.line == 3

    def test_blank_value(self, tmp_path):
        """Test that an empty ratio is rejected."""
        path = tmp_path / "records.csv"
        path.write_text("occupation,earnings,q_ratio\npolice,64,\n")
        with pytest.raises(InvalidRecordError):
            read_records(path)

    def test_header_only(self, tmp_path):
        """Test that a file without rows is rejected."""
        path = tmp_path / "records.csv"
        path.write_text("occupation,earnings,q_ratio\n")
        with pytest.raises(InvalidInputError):
            read_records(path)

    def test_missing_file(self, tmp_path):
        """Test that a missing file is an input error."""
        with pytest.raises(InvalidInputError):
            read_records(tmp_path / "absent.csv")
