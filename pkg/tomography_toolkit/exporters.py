"""JSON and CSV export utilities for protocols, counts, ground truth and results."""

import csv
import json
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np

from .protocols import Protocol
from .simulator import MeasurementData

FORMAT_VERSION = 1
COUNTS_HEADER = ["row_index", "count", "trials"]


def encode_matrix(matrix: np.ndarray) -> list:
    """Complex matrix as nested [re, im] pairs, row-major."""
    array = np.asarray(matrix, dtype=complex)
    return [[[float(value.real), float(value.imag)] for value in row] for row in array]


def to_jsonable(value: Any) -> Any:
    """Convert numpy values into plain JSON types; every 2-D array, real or complex, becomes [re, im] pairs."""
    if isinstance(value, dict):
        return {str(key): to_jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(item) for item in value]
    if isinstance(value, np.ndarray):
        if value.ndim == 2:
            return encode_matrix(value)
        if value.ndim > 2 or np.iscomplexobj(value):
            return [to_jsonable(item) for item in value]
        return value.tolist()
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, complex):
        return [value.real, value.imag]
    return value


def _format_number(value: float) -> str:
    value = float(value)
    return str(int(value)) if value.is_integer() else repr(value)


class JSONExporter:
    """Handles JSON file generation."""

    @staticmethod
    def protocol_to_dict(protocol: Protocol) -> Dict[str, Any]:
        rows = []
        for row in protocol.rows:
            entry: Dict[str, Any] = {}
            if row.is_process_row:
                entry["input"] = encode_matrix(row.input_state)
                entry["output"] = encode_matrix(row.output_effect)
            else:
                entry["lambda"] = encode_matrix(row.effect)
            entry["exposure"] = float(row.exposure)
            entry["group"] = row.group
            entry["provenance"] = to_jsonable(row.provenance)
            rows.append(entry)
        return {
            "version": FORMAT_VERSION,
            "dimension": protocol.dim,
            "kind": protocol.kind,
            "complete_groups": sorted(protocol.complete_groups),
            "rows": rows,
        }

    @staticmethod
    def dumps(payload: Dict[str, Any]) -> str:
        """Serialize a payload; floats keep their shortest round-trip repr."""
        return json.dumps(to_jsonable(payload), indent=2)

    @staticmethod
    def write_json(payload: Dict[str, Any], path: Union[str, Path]) -> str:
        filepath = Path(path)
        filepath.parent.mkdir(parents=True, exist_ok=True)
        filepath.write_text(JSONExporter.dumps(payload) + "\n", encoding="utf-8")
        return str(filepath)

    @staticmethod
    def write_protocol(protocol: Protocol, path: Union[str, Path]) -> str:
        return JSONExporter.write_json(JSONExporter.protocol_to_dict(protocol), path)

    @staticmethod
    def write_truth(path: Union[str, Path], kind: str, dimension: int, fixture: str, matrix: np.ndarray) -> str:
        """Ground-truth sidecar: the density matrix or Choi state behind simulated counts."""
        payload = {
            "version": FORMAT_VERSION, "kind": kind, "dimension": dimension, "fixture": fixture, "matrix": matrix
        }
        return JSONExporter.write_json(payload, path)

    @staticmethod
    def write_result(command: str, payload: Dict[str, Any], path: Union[str, Path]) -> str:
        return JSONExporter.write_json({"version": FORMAT_VERSION, "command": command, **payload}, path)


class CountsExporter:
    """Handles counts CSV generation."""

    @staticmethod
    def truth_path(counts_path: Union[str, Path]) -> Path:
        """Sidecar path <stem>.truth.json next to a counts file."""
        counts_path = Path(counts_path)
        return counts_path.with_name(f"{counts_path.stem}.truth.json")

    @staticmethod
    def write_counts(data: MeasurementData, path: Union[str, Path]) -> str:
        filepath = Path(path)
        filepath.parent.mkdir(parents=True, exist_ok=True)

        with open(filepath, "w", newline="", encoding="utf-8") as csvfile:
            writer = csv.writer(csvfile)

            writer.writerow(COUNTS_HEADER)

            for index, (count, trials) in enumerate(zip(data.counts, data.exposures)):
                writer.writerow([index, _format_number(count), _format_number(trials)])

        return str(filepath)
