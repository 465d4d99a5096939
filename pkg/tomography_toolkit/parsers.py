"""Parsers for protocol, counts, reference and result files."""

import csv
import json
from pathlib import Path
from typing import Any, Dict, List, Union

import numpy as np

from .core import ChoiState, DensityMatrix, KrausSet, QuantumProcess
from .protocols import PROCESS_KIND, STATE_KIND, MeasurementOperator, Protocol
from .simulator import MeasurementData

SUPPORTED_VERSION = 1


def decode_matrix(entries: List[List[List[float]]]) -> np.ndarray:
    """Nested [re, im] pairs back into a complex matrix."""
    try:
        array = np.asarray(entries, dtype=float)
    except (TypeError, ValueError) as e:
        raise ValueError(f"Error: Malformed matrix entries: {str(e)}")
    if array.ndim != 3 or array.shape[2] != 2:
        raise ValueError(f"Error: Matrix must be nested [re, im] pairs, got shape {array.shape}")
    return array[..., 0] + 1j * array[..., 1]


def _is_encoded_matrix(value: list) -> bool:
    try:
        array = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        return False
    return array.ndim == 3 and array.shape[2] == 2


def decode_value(value: Any) -> Any:
    """Decode every nested [re, im] matrix inside a JSON value; other values pass through."""
    if isinstance(value, dict):
        return {key: decode_value(item) for key, item in value.items()}
    if isinstance(value, list):
        if value and _is_encoded_matrix(value):
            return decode_matrix(value)
        return [decode_value(item) for item in value]
    return value


def _read_json(path: Union[str, Path]) -> Dict[str, Any]:
    try:
        with open(path, encoding="utf-8") as handle:
            payload = json.load(handle)
    except json.JSONDecodeError as e:
        raise ValueError(f"Error: {path} is not valid JSON: {str(e)}")
    if not isinstance(payload, dict):
        raise ValueError(f"Error: {path} must hold a JSON object")
    version = payload.get("version")
    if version != SUPPORTED_VERSION:
        raise ValueError(f"Error: Unsupported file version {version!r} in {path}")
    return payload


class ProtocolParser:
    """Handles parsing of protocol JSON files."""

    @staticmethod
    def from_dict(payload: Dict[str, Any]) -> Protocol:
        try:
            dimension = int(payload["dimension"])
            kind = payload["kind"]
            rows = []
            for entry in payload["rows"]:
                common = {
                    "exposure": float(entry.get("exposure", 1.0)),
                    "group": entry.get("group"),
                    "provenance": entry.get("provenance", {}),
                }
                if kind == PROCESS_KIND:
                    row = MeasurementOperator(
                        input_state=decode_matrix(entry["input"]),
                        output_effect=decode_matrix(entry["output"]),
                        **common,
                    )
                else:
                    row = MeasurementOperator(effect=decode_matrix(entry["lambda"]), **common)
                rows.append(row)
        except KeyError as e:
            raise ValueError(f"Error: Protocol file is missing field {str(e)}")
        if kind not in (STATE_KIND, PROCESS_KIND):
            raise ValueError(f"Error: Protocol kind must be 'state' or 'process', got {kind!r}")
        return Protocol(dimension, kind, rows, frozenset(payload.get("complete_groups", [])))

    @staticmethod
    def parse_protocol(path: Union[str, Path]) -> Protocol:
        return ProtocolParser.from_dict(_read_json(path))


class CountsParser:
    """Handles parsing of counts CSV files."""

    @staticmethod
    def parse_counts(path: Union[str, Path], protocol: Protocol) -> MeasurementData:
        """Read row_index,count,trials lines and align them with the protocol rows."""
        with open(path, newline="", encoding="utf-8") as csvfile:
            reader = csv.reader(csvfile)
            header = next(reader, None)
            if header != ["row_index", "count", "trials"]:
                raise ValueError(f"Error: Counts file must start with 'row_index,count,trials', got {header}")
            records = {}
            for line in reader:
                if not line:
                    continue
                try:
                    index, count, trials = int(line[0]), float(line[1]), float(line[2])
                except (IndexError, ValueError):
                    raise ValueError(f"Error: Malformed counts line: {','.join(line)}")
                if index in records:
                    raise ValueError(f"Error: Duplicate row index {index} in counts file")
                records[index] = (count, trials)

        if sorted(records) != list(range(len(protocol))):
            raise ValueError(
                f"Error: Counts file has {len(records)} rows but the protocol has {len(protocol)} rows"
            )
        counts = np.array([records[i][0] for i in range(len(protocol))])
        trials = np.array([records[i][1] for i in range(len(protocol))])
        return MeasurementData(counts, trials, protocol=protocol)


class ResultParser:
    """Handles parsing of result JSON files."""

    @staticmethod
    def parse_result(path: Union[str, Path]) -> Dict[str, Any]:
        """Result document with every encoded matrix decoded back to a complex array."""
        return decode_value(_read_json(path))


class ReferenceParser:
    """Handles parsing of reference states and processes (truth sidecars and result files included)."""

    @staticmethod
    def parse_reference(path: Union[str, Path]) -> Union[DensityMatrix, QuantumProcess]:
        """A {"kind", "matrix"} or {"kind": "process", "kraus": [...]} document, or a reconstruct result."""
        payload = ResultParser.parse_result(path)
        kind = payload.get("kind")
        if kind == PROCESS_KIND and "kraus" in payload:
            return KrausSet(tuple(np.asarray(op, dtype=complex) for op in payload["kraus"]))
        matrix = payload.get("matrix")
        if matrix is None:
            matrix = payload.get("choi" if kind == PROCESS_KIND else "density_matrix")
        if matrix is None:
            raise ValueError("Error: Reference file needs a 'matrix' or 'kraus' field")
        if not isinstance(matrix, np.ndarray):
            raise ValueError("Error: Reference matrix must be nested [re, im] pairs")
        if kind == STATE_KIND:
            return DensityMatrix(matrix)
        if kind == PROCESS_KIND:
            return ChoiState.from_matrix(matrix)
        raise ValueError(f"Error: Reference kind must be 'state' or 'process', got {kind!r}")
