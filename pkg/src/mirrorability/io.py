"""File formats: landmark tables, image widths, symmetry maps, reports and model files.

All text output is comma-delimited, newline-terminated, and written with
17 significant digits so values round-trip exactly and reruns are
byte-identical.
"""

from __future__ import annotations

import csv
import io
import json
import math
import struct
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .cascade import CascadeModel, Stage
from .errors import DuplicateId, InconsistentK, MalformedRow, ModelFormatError
from .shape_model import ShapeModel
from .shapes import SymmetryMap, preset_symmetry

TOOL = f"mirrorability {__version__}"


def fmt(value) -> str:
    """Locale-independent number formatting; ``None`` becomes an empty field."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def _data_lines(path: Path):
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            yield lineno, next(csv.reader([stripped]))


def parse_landmarks(path, expected_k: int | None = None) -> list[tuple[str, np.ndarray]]:
    """Read ``sample_id,x0,y0,...`` rows; an optional header row starts with ``sample_id``."""
    rows = []
    seen = set()
    k = expected_k
    for lineno, fields in _data_lines(Path(path)):
        if fields[0].strip() == "sample_id":
            continue
        sid = fields[0].strip()
        values = fields[1:]
        if not sid:
            raise MalformedRow("empty sample id", lineno)
        if len(values) == 0 or len(values) % 2:
            raise MalformedRow(f"expected an even number of coordinates, got {len(values)}", lineno)
        try:
            coords = np.array([float(v) for v in values])
        except ValueError as exc:
            raise MalformedRow(str(exc), lineno) from None
        if not np.all(np.isfinite(coords)):
            raise MalformedRow("non-finite coordinate", lineno)
        if k is None:
            k = len(values) // 2
        elif len(values) // 2 != k:
            raise InconsistentK(f"row has {len(values) // 2} points, expected {k}", lineno)
        if sid in seen:
            raise DuplicateId(f"sample id {sid!r} repeated", lineno)
        seen.add(sid)
        rows.append((sid, coords.reshape(-1, 2)))
    return rows


def write_landmarks(path, items: Iterable[tuple[str, np.ndarray]]) -> None:
    items = list(items)
    out = io.StringIO()
    if items:
        k = len(items[0][1])
        out.write(",".join(["sample_id"] + [f"{a}{i}" for i in range(k) for a in "xy"]) + "\n")
    for sid, shape in items:
        out.write(",".join([sid] + [fmt(v) for v in np.asarray(shape, dtype=float).ravel()]) + "\n")
    Path(path).write_text(out.getvalue(), encoding="utf-8")


def parse_widths(path) -> dict[str, tuple[float, float | None]]:
    """``sample_id,width[,height]`` rows."""
    out = {}
    for lineno, fields in _data_lines(Path(path)):
        if fields[0].strip() == "sample_id":
            continue
        if len(fields) not in (2, 3):
            raise MalformedRow("expected sample_id,width[,height]", lineno)
        try:
            width = float(fields[1])
            height = float(fields[2]) if len(fields) == 3 and fields[2].strip() else None
        except ValueError as exc:
            raise MalformedRow(str(exc), lineno) from None
        if not (math.isfinite(width) and width > 0):
            raise MalformedRow("width must be positive", lineno)
        sid = fields[0].strip()
        if sid in out:
            raise DuplicateId(f"sample id {sid!r} repeated", lineno)
        out[sid] = (width, height)
    return out


def write_widths(path, rows: Iterable[tuple[str, float, float | None]]) -> None:
    lines = ["sample_id,width,height"] + [f"{sid},{fmt(w)},{fmt(h)}" for sid, w, h in rows]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_symmetry(spec: str) -> SymmetryMap:
    """Load a symmetry map from a JSON file, or by preset name (``face68``, ``body14``, ``face16``)."""
    path = Path(spec)
    if not path.exists():
        try:
            return preset_symmetry(spec)
        except KeyError:
            raise FileNotFoundError(f"no symmetry file or preset named {spec!r}") from None
    return SymmetryMap.from_dict(json.loads(path.read_text(encoding="utf-8")))


def save_symmetry(path, symmetry: SymmetryMap) -> None:
    Path(path).write_text(json.dumps(symmetry.to_dict(), indent=2) + "\n", encoding="utf-8")


def header_lines(**meta) -> list[str]:
    return [f"# tool={TOOL}"] + [f"# {k}={fmt(v)}" for k, v in meta.items()]


def write_table(path, columns: Sequence[str], rows: Iterable[Sequence], **meta) -> None:
    """CSV with ``# key=value`` header comments, then a column row, then data."""
    lines = header_lines(**meta)
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_table(path) -> tuple[dict, list[dict]]:
    """Inverse of :func:`write_table`: returns ``(header_meta, rows)`` with string values."""
    meta = {}
    columns = None
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                meta[key] = value
                continue
            if not line:
                continue
            fields = next(csv.reader([line]))
            if columns is None:
                columns = fields
            else:
                rows.append(dict(zip(columns, fields)))
    return meta, rows


def write_json(path, data) -> None:
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")


# -- model files ---------------------------------------------------------------

MODEL_MAGIC = b"MIRRORABILITY-CASCADE\n"
MODEL_FORMAT_VERSION = 1


def _model_arrays(model: CascadeModel) -> list[tuple[str, np.ndarray]]:
    arrays = [
        ("mean_shape", model.shape_model.mean_shape),
        ("basis", model.shape_model.basis),
        ("basis_scales", model.shape_model.scales),
        ("probe_offsets", model.probe_offsets),
    ]
    for t, stage in enumerate(model.stages):
        arrays += [(f"stage{t}.weights", stage.weights), (f"stage{t}.intercept", stage.intercept)]
    return arrays


def dump_model(model: CascadeModel) -> bytes:
    """Serialize to a self-describing byte string: magic, JSON header line, raw little-endian float64 blocks."""
    arrays = _model_arrays(model)
    header = {
        "format_version": MODEL_FORMAT_VERSION,
        "tool": TOOL,
        "n_stages": model.n_stages,
        "num_points": model.num_points,
        "ridge": model.ridge,
        "seed": model.seed,
        "augment_mirror": model.augment_mirror,
        "train_errors": list(model.train_errors),
        "arrays": [{"name": n, "shape": list(a.shape)} for n, a in arrays],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    parts = [MODEL_MAGIC, struct.pack("<Q", len(blob)), blob]
    parts += [np.ascontiguousarray(a, dtype="<f8").tobytes() for _, a in arrays]
    return b"".join(parts)


def load_model_bytes(data: bytes) -> CascadeModel:
    if not data.startswith(MODEL_MAGIC):
        raise ModelFormatError("not a cascade model file")
    try:
        return _decode_model(data)
    except ModelFormatError:
        raise
    except (struct.error, ValueError, KeyError, TypeError, UnicodeDecodeError) as exc:
        # truncated or hand-edited files
        raise ModelFormatError(f"corrupt model file: {exc}") from None


def _decode_model(data: bytes) -> CascadeModel:
    pos = len(MODEL_MAGIC)
    (n,) = struct.unpack_from("<Q", data, pos)
    pos += 8
    header = json.loads(data[pos : pos + n].decode("utf-8"))
    pos += n
    if header.get("format_version") != MODEL_FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model format version {header.get('format_version')}")
    arrays = {}
    for spec in header["arrays"]:
        shape = tuple(spec["shape"])
        count = int(np.prod(shape)) if shape else 1
        if pos + 8 * count > len(data):
            raise ModelFormatError("model payload is truncated")
        arrays[spec["name"]] = np.frombuffer(data, dtype="<f8", count=count, offset=pos).reshape(shape).astype(np.float64)
        pos += 8 * count
    if pos != len(data):
        raise ModelFormatError("trailing bytes after model payload")
    stages = tuple(
        Stage(arrays[f"stage{t}.weights"], arrays[f"stage{t}.intercept"]) for t in range(header["n_stages"])
    )
    shape_model = ShapeModel(arrays["mean_shape"], arrays["basis"], arrays["basis_scales"])
    return CascadeModel(
        shape_model,
        stages,
        arrays["probe_offsets"],
        float(header["ridge"]),
        int(header["seed"]),
        bool(header["augment_mirror"]),
        tuple(header["train_errors"]),
    )


def save_model(path, model: CascadeModel) -> None:
    Path(path).write_bytes(dump_model(model))


def load_model(path) -> CascadeModel:
    return load_model_bytes(Path(path).read_bytes())
