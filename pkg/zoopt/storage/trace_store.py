import csv
import os
from abc import ABC, abstractmethod
from typing import Any

import orjson

from ..core.models import RunTrace
from ..utils import format_float
from .models import SummaryRow

TRACE_COLUMNS = ("t", "f_value", "grad_l1_or_s1", "momentum_err_sq", "oracle_calls")
TRACE_DIR = "traces"
SUMMARY_FILE = "summary.csv"


class TraceStore(ABC):
    """
    Abstract class for experiment output storage

    Attributes:
        base_path (str): Directory that receives every output of one experiment

    Every store must allow saving traces, summaries and JSON documents,
    loading the summary back and checking for a file.
    """
    def __init__(self, base_path: str) -> None:
        self.base_path = base_path

    @abstractmethod
    def save_trace(self, file_name: str, trace: RunTrace) -> str:
        pass

    @abstractmethod
    def save_summary(self, rows: list[SummaryRow], file_name: str = SUMMARY_FILE) -> str:
        pass

    @abstractmethod
    def save_table(self, file_name: str, header: list[str], rows: list[list[Any]]) -> str:
        pass

    @abstractmethod
    def save_json(self, file_name: str, payload: Any) -> str:
        pass

    @abstractmethod
    def save_text(self, file_name: str, text: str) -> str:
        pass

    @abstractmethod
    def load_summary(self, file_name: str = SUMMARY_FILE) -> list[dict[str, str]]:
        pass

    @abstractmethod
    def check_file(self, file_name: str) -> bool:
        pass


def _cell(value: Any) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return format_float(value)
    if hasattr(value, "value"):
        return str(value.value)
    return str(value)


class LocalTraceStore(TraceStore):
    """
    Local experiment storage

    Attributes:
        base_path (str): Directory that receives every output of one experiment

    Traces go to ``<base_path>/traces/<name>.csv``; summaries, reports and the
    metadata sidecar sit directly under the base path. Files are written once.
    """
    def _path(self, file_name: str) -> str:
        return os.path.join(self.base_path, file_name)

    def _ensure_dir(self, path: str) -> None:
        directory = os.path.dirname(path)
        if not os.path.exists(directory):
            os.makedirs(directory, exist_ok=True)

    def save_trace(self, file_name: str, trace: RunTrace) -> str:
        path = self._path(os.path.join(TRACE_DIR, file_name))
        self._ensure_dir(path)

        with open(path, "w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(TRACE_COLUMNS)
            for t, f_value, grad_norm, err, calls in trace.rows():
                writer.writerow([t, format_float(f_value), format_float(grad_norm), format_float(err), calls])

        return path

    def save_summary(self, rows: list[SummaryRow], file_name: str = SUMMARY_FILE) -> str:
        header = list(SummaryRow.model_fields)
        return self.save_table(file_name, header, [[getattr(row, k) for k in header] for row in rows])

    def save_table(self, file_name: str, header: list[str], rows: list[list[Any]]) -> str:
        path = self._path(file_name)
        self._ensure_dir(path)

        with open(path, "w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([_cell(v) for v in row])

        return path

    def save_json(self, file_name: str, payload: Any) -> str:
        path = self._path(file_name)
        self._ensure_dir(path)

        with open(path, "wb") as f:
            f.write(orjson.dumps(payload, option=orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS | orjson.OPT_SERIALIZE_NUMPY))

        return path

    def save_text(self, file_name: str, text: str) -> str:
        path = self._path(file_name)
        self._ensure_dir(path)

        with open(path, "w") as f:
            f.write(text)

        return path

    def load_summary(self, file_name: str = SUMMARY_FILE) -> list[dict[str, str]]:
        if not self.check_file(file_name):
            return []

        with open(self._path(file_name), newline="") as f:
            return list(csv.DictReader(f))

    def check_file(self, file_name: str) -> bool:
        return os.path.exists(self._path(file_name))
