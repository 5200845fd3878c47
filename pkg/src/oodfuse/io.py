"""Bit-exact file formats: the LFTN binary tensor container, score CSVs, and
canonical JSON/CSV report writers.

LFTN layout (all integers little-endian):

  magic      4 bytes  "LFTN"
  version    u32      = 1
  kind       u8       1=scores (N,L)  2=probs (N,L,C)  3=embeddings  4=logits (N,L,K)
  dims       3 x u32  unused trailing dims are 0 (kind 1 stores N,L,0)
  dtype      u8       1=f32  2=f64
  hdr_len    u32      byte length of the JSON header
  header     UTF-8 canonical JSON (TensorMeta + redundant kind/dims/dtype,
             text_shape for embeddings, and a crc32 integrity field)
  payload    row-major numeric data; embeddings store image block then text

The JSON header repeats kind/dims/dtype and carries header_crc32 =
crc32(canonical header JSON without the crc field, then payload bytes), so
any header corruption is detected, not just structural damage.
"""

from __future__ import annotations

import csv
import json
import struct
import zlib
from dataclasses import is_dataclass
from pathlib import Path
from typing import List, Union

import numpy as np

from .analysis import LayerPairMatrix
from .errors import ConfigError, FormatError, ValidationError
from .metrics import EvalReport
from .selection import LayerCombination, SelectionResult
from .tensors import (
    EmbeddingSet,
    ProbTensor,
    RawLogits,
    ScoreTensor,
    TensorMeta,
    ensure_valid,
)

MAGIC = b"LFTN"
VERSION = 1
_FIXED_HEADER = struct.Struct("<4sIBIIIBI")  # magic, version, kind, d0,d1,d2, dtype, hdr_len
_KIND_BY_TYPE = {ScoreTensor: 1, ProbTensor: 2, EmbeddingSet: 3, RawLogits: 4}
_DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}

_META_KEYS = {
    "model_id", "dataset_id", "layer_names", "temperature", "score_rule",
    "created_utc",
}
_HEADER_KEYS = _META_KEYS | {"kind", "dims", "dtype", "header_crc32"}


# ---------------------------------------------------------------------------
# canonical JSON

def _format_float(x: float) -> str:
    if not np.isfinite(x):
        raise ValueError(f"non-finite value {x} cannot be serialized")
    return "%.9g" % x


def canonical_json(obj) -> str:
    """Deterministic JSON: sorted keys, no whitespace, 9-significant-digit
    floats. Same input always yields the same bytes."""
    if isinstance(obj, dict):
        items = sorted(obj.items(), key=lambda kv: kv[0])
        return "{" + ",".join(
            json.dumps(str(k)) + ":" + canonical_json(v) for k, v in items
        ) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(canonical_json(v) for v in obj) + "]"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _format_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if obj is None:
        return "null"
    raise ConfigError(f"cannot serialize {type(obj).__name__}")


# ---------------------------------------------------------------------------
# LFTN tensors

Tensor = Union[ScoreTensor, ProbTensor, EmbeddingSet, RawLogits]


def _payload_bytes(tensor: Tensor, dtype: np.dtype) -> bytes:
    if isinstance(tensor, EmbeddingSet):
        return (
            np.ascontiguousarray(tensor.image, dtype=dtype).tobytes()
            + np.ascontiguousarray(tensor.text, dtype=dtype).tobytes()
        )
    return np.ascontiguousarray(tensor.data, dtype=dtype).tobytes()


def _dims_of(tensor: Tensor) -> tuple:
    if isinstance(tensor, ScoreTensor):
        return (*tensor.data.shape, 0)
    if isinstance(tensor, EmbeddingSet):
        return tensor.image.shape
    return tensor.data.shape


def write_tensor(tensor: Tensor, path, dtype: str = "f64") -> None:
    """Serialize a tensor to the LFTN container."""
    dtype_code = {"f32": 1, "f64": 2}.get(dtype)
    if dtype_code is None:
        raise ConfigError(f"unknown dtype {dtype!r}")
    kind = _KIND_BY_TYPE[type(tensor)]
    dims = _dims_of(tensor)
    np_dtype = _DTYPES[dtype_code]
    payload = _payload_bytes(tensor, np_dtype)

    meta = tensor.meta
    header = {
        "model_id": meta.model_id,
        "dataset_id": meta.dataset_id,
        "layer_names": list(meta.layer_names),
        "temperature": meta.temperature,
        "score_rule": meta.score_rule,
        "created_utc": meta.created_utc,
        "kind": kind,
        "dims": list(dims),
        "dtype": dtype_code,
    }
    if isinstance(tensor, EmbeddingSet):
        header["text_shape"] = list(tensor.text.shape)
    crc = zlib.crc32(canonical_json(header).encode("utf-8") + payload)
    header["header_crc32"] = crc
    header_bytes = canonical_json(header).encode("utf-8")

    fixed = _FIXED_HEADER.pack(
        MAGIC, VERSION, kind, dims[0], dims[1], dims[2], dtype_code, len(header_bytes)
    )
    Path(path).write_bytes(fixed + header_bytes + payload)


def _parse_header_json(raw: bytes, kind: int) -> dict:
    try:
        header = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"header JSON is not parseable: {exc}") from None
    if not isinstance(header, dict):
        raise FormatError("header JSON must be an object")
    allowed = _HEADER_KEYS | ({"text_shape"} if kind == 3 else set())
    keys = set(header)
    if keys - allowed:
        raise FormatError(f"unknown header keys: {sorted(keys - allowed)}")
    if _HEADER_KEYS - keys:
        raise FormatError(f"missing header keys: {sorted(_HEADER_KEYS - keys)}")
    if kind == 3 and "text_shape" not in header:
        raise FormatError("embeddings header requires text_shape")
    return header


def read_tensor(path) -> Tensor:
    """Load and validate a tensor from an LFTN file. f32 payloads are widened
    to f64; all downstream arithmetic is f64."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from None
    if len(data) < _FIXED_HEADER.size:
        raise FormatError(
            f"file too short: {len(data)} bytes < fixed header {_FIXED_HEADER.size}"
        )
    magic, version, kind, d0, d1, d2, dtype_code, hdr_len = _FIXED_HEADER.unpack(
        data[: _FIXED_HEADER.size]
    )
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}, expected {VERSION}")
    if kind not in (1, 2, 3, 4):
        raise FormatError(f"unknown tensor kind {kind}")
    if dtype_code not in _DTYPES:
        raise FormatError(f"unknown dtype code {dtype_code}")

    dims = (d0, d1, d2)
    if kind == 1:
        if d0 < 1 or d1 < 1 or d2 != 0:
            raise FormatError(f"invalid dims {dims} for kind 1 (want N,L,0)")
    else:
        if min(dims) < 1:
            raise FormatError(f"invalid dims {dims} for kind {kind}")

    header_end = _FIXED_HEADER.size + hdr_len
    if header_end > len(data):
        raise FormatError(
            f"declared header length {hdr_len} exceeds file size {len(data)}"
        )
    header = _parse_header_json(data[_FIXED_HEADER.size:header_end], kind)

    if header["kind"] != kind:
        raise FormatError(f"kind mismatch: binary {kind}, header {header['kind']}")
    if tuple(header["dims"]) != dims:
        raise FormatError(f"dims mismatch: binary {dims}, header {header['dims']}")
    if header["dtype"] != dtype_code:
        raise FormatError(
            f"dtype mismatch: binary {dtype_code}, header {header['dtype']}"
        )

    np_dtype = _DTYPES[dtype_code]
    count = d0 * d1 * (d2 if d2 else 1)
    text_shape = None
    if kind == 3:
        text_shape = tuple(int(x) for x in header["text_shape"])
        if len(text_shape) != 2 or min(text_shape) < 1:
            raise FormatError(f"invalid text_shape {header['text_shape']}")
        count += text_shape[0] * text_shape[1]
    expected = count * np_dtype.itemsize
    payload = data[header_end:]
    if len(payload) != expected:
        raise FormatError(
            f"payload length mismatch: expected {expected} bytes, got {len(payload)}"
        )

    crc_stored = header.pop("header_crc32")
    crc_actual = zlib.crc32(canonical_json(header).encode("utf-8") + payload)
    if crc_stored != crc_actual:
        raise FormatError(
            f"header crc mismatch: stored {crc_stored}, computed {crc_actual}"
        )

    try:
        meta = TensorMeta(
            model_id=header["model_id"],
            dataset_id=header["dataset_id"],
            layer_names=tuple(header["layer_names"]),
            temperature=float(header["temperature"]),
            score_rule=header["score_rule"],
            created_utc=header["created_utc"],
        )
    except Exception as exc:
        raise FormatError(f"invalid tensor metadata: {exc}") from None

    values = np.frombuffer(payload, dtype=np_dtype).astype(np.float64)
    try:
        if kind == 1:
            tensor = ScoreTensor(values.reshape(d0, d1), meta)
        elif kind == 2:
            tensor = ProbTensor(values.reshape(d0, d1, d2), meta)
        elif kind == 4:
            tensor = RawLogits(values.reshape(d0, d1, d2), meta)
        else:
            n_img = d0 * d1 * d2
            tensor = EmbeddingSet(
                values[:n_img].reshape(d0, d1, d2),
                values[n_img:].reshape(text_shape),
                meta,
            )
    except Exception as exc:
        raise FormatError(f"cannot assemble tensor: {exc}") from None
    ensure_valid(tensor)
    return tensor


# ---------------------------------------------------------------------------
# CSV scores

def read_csv_scores(path) -> ScoreTensor:
    """Parse a score CSV with header 'sample_id,layer_0,...,layer_{L-1}'."""
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError("empty CSV file") from None
        if len(header) < 2 or header[0] != "sample_id":
            raise FormatError(f"bad CSV header: {header}")
        expected_cols = ["sample_id"] + [f"layer_{i}" for i in range(len(header) - 1)]
        if header != expected_cols:
            raise FormatError(f"bad CSV header: {header}")
        L = len(header) - 1
        rows: List[List[float]] = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != L + 1:
                raise FormatError(
                    f"line {lineno}: expected {L + 1} cells, got {len(row)}"
                )
            values = []
            for cell in row[1:]:
                if cell.strip() == "":
                    raise FormatError(f"line {lineno}: empty cell")
                try:
                    values.append(float(cell))
                except ValueError:
                    raise FormatError(
                        f"line {lineno}: not a number: {cell!r}"
                    ) from None
            rows.append(values)
    if not rows:
        raise FormatError("CSV contains no data rows")
    meta = TensorMeta(
        model_id="csv",
        dataset_id=str(path),
        layer_names=tuple(header[1:]),
    )
    tensor = ScoreTensor(np.array(rows), meta)
    ensure_valid(tensor)
    return tensor


# ---------------------------------------------------------------------------
# reports

def _report_to_obj(report):
    if isinstance(report, EvalReport):
        return {
            "combo": str(report.combo),
            "score_rule": report.score_rule,
            "positive_class": report.positive_class,
            "threshold_at_tpr95": report.threshold_at_tpr95,
            "per_dataset": {
                name: {
                    "fpr95": m.fpr95,
                    "auroc": m.auroc,
                    "n_id": m.n_id,
                    "n_ood": m.n_ood,
                }
                for name, m in report.per_dataset.items()
            },
            "average": {
                "fpr95": report.average_fpr95,
                "auroc": report.average_auroc,
            },
        }
    if isinstance(report, SelectionResult):
        return {
            "best": str(report.best),
            "heuristic": report.heuristic,
            "orientation": report.orientation,
            "criterion_values": {
                str(c): v for c, v in report.criterion_values.items()
            },
        }
    if isinstance(report, LayerPairMatrix):
        return {"kind": report.kind, "values": report.values.tolist()}
    if isinstance(report, dict):
        return report
    if isinstance(report, (list, tuple)):
        return [_report_to_obj(r) for r in report]
    if is_dataclass(report):
        raise ConfigError(f"unsupported report type {type(report).__name__}")
    return report


def _write_csv_rows(obj, path):
    if isinstance(obj, dict) and obj.get("kind") in ("svcca", "top1_agreement", "jsd"):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            for row in obj["values"]:
                writer.writerow([_format_float(v) for v in row])
        return
    if not isinstance(obj, list) or not obj or not all(isinstance(r, dict) for r in obj):
        raise ConfigError("CSV output requires a non-empty list of row dicts")
    columns = list(obj[0].keys())
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in obj:
            if list(row.keys()) != columns:
                raise ConfigError("inconsistent CSV row keys")
            writer.writerow(
                [_format_float(v) if isinstance(v, float) else v for v in row.values()]
            )


def write_report(report, path, format: str = "json") -> None:
    """Write a report deterministically; identical inputs give identical bytes."""
    obj = _report_to_obj(report)
    try:
        if format == "json":
            Path(path).write_text(canonical_json(obj) + "\n")
        elif format == "csv":
            _write_csv_rows(obj, path)
        else:
            raise ConfigError(f"unknown report format {format!r}")
    except OSError as exc:
        raise FormatError(f"cannot write report to {path}: {exc}") from None
