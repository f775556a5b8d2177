"""Volume file I/O: a MetaImage subset and a raw-plus-JSON sidecar format.

MetaImage files store DimSize as (W H D) and ElementSpacing as
(sx sy sz); in memory arrays are (D, H, W) with spacing (sz, sy, sx), so
both tuples reverse at the boundary.  Payloads are little-endian binary,
either inline (ElementDataFile = LOCAL, the only form written) or in a
sibling file named by the header.  MET_UCHAR payloads whose values are
all 0 or 1 load as masks; everything else loads as an image volume.

Written headers have a fixed key order and shortest-round-trip float
formatting, so writing the same object twice yields identical bytes.
"""

from __future__ import annotations

import json
import os
import warnings

import numpy as np

from .errors import ConfigError, CorruptFileError, RangeError, UnsupportedFormatError
from .tensor import BinaryMask, Volume

# element type -> (little-endian dtype, integer range or None)
_ELEMENT_TYPES = {
    "MET_UCHAR": (np.dtype("u1"), (0, 255)),
    "MET_SHORT": (np.dtype("<i2"), (-32768, 32767)),
    "MET_FLOAT": (np.dtype("<f4"), None),
    "MET_DOUBLE": (np.dtype("<f8"), None),
}

_TRUE = ("true", "1")
_FALSE = ("false", "0")


def _parse_bool(key: str, value: str) -> bool:
    v = value.strip().lower()
    if v in _TRUE:
        return True
    if v in _FALSE:
        return False
    raise CorruptFileError(f"header key {key} has non-boolean value {value!r}")


def _convert_payload(values: np.ndarray, element_type: str, what: str) -> np.ndarray:
    """Round/cast float64 data to the on-disk element type, or raise RangeError."""
    dtype, int_range = _ELEMENT_TYPES[element_type]
    if int_range is not None:
        rounded = np.rint(values)
        lo, hi = int_range
        if rounded.min() < lo or rounded.max() > hi:
            raise RangeError(f"{what} values fall outside the {element_type} range [{lo}, {hi}]")
        return rounded.astype(dtype)
    if element_type == "MET_FLOAT":
        limit = float(np.finfo(np.float32).max)
        if np.abs(values).max() > limit:
            raise RangeError(f"{what} magnitudes exceed the MET_FLOAT range")
    return values.astype(dtype)


def write_mha(obj, path: str, element_type: str | None = None) -> None:
    """Write a Volume or BinaryMask as a single-file MetaImage.

    Volumes default to MET_DOUBLE; integer and MET_FLOAT targets are
    range-checked (integers round to nearest first).  Masks are always
    MET_UCHAR.
    """
    if isinstance(obj, BinaryMask):
        if element_type is not None and element_type != "MET_UCHAR":
            raise ConfigError(f"masks are always written as MET_UCHAR, got {element_type!r}")
        element_type = "MET_UCHAR"
        payload = obj.data.astype("u1")
    elif isinstance(obj, Volume):
        element_type = "MET_DOUBLE" if element_type is None else element_type
        if element_type not in _ELEMENT_TYPES:
            raise UnsupportedFormatError(f"unsupported element type {element_type!r}")
        payload = _convert_payload(obj.data, element_type, "volume")
    else:
        raise ConfigError(f"write_mha expects Volume or BinaryMask, got {type(obj).__name__}")
    d, h, w = obj.shape
    sz, sy, sx = obj.spacing
    header = (
        "ObjectType = Image\n"
        "NDims = 3\n"
        "BinaryData = True\n"
        "BinaryDataByteOrderMSB = False\n"
        f"DimSize = {w} {h} {d}\n"
        f"ElementSpacing = {sx!r} {sy!r} {sz!r}\n"
        f"ElementType = {element_type}\n"
        "ElementDataFile = LOCAL\n"
    )
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        f.write(np.ascontiguousarray(payload).tobytes())


_KNOWN_OK = {
    "ObjectType", "NDims", "BinaryData", "BinaryDataByteOrderMSB", "ElementByteOrderMSB",
    "CompressedData", "DimSize", "ElementSpacing", "ElementType", "ElementNumberOfChannels",
}


def _read_header(f) -> tuple[dict, bytes | None]:
    """Parse 'Key = Value' lines up to ElementDataFile; return fields + inline payload."""
    fields: dict[str, str] = {}
    while True:
        line = f.readline()
        if not line:
            raise CorruptFileError("header ended before ElementDataFile")
        try:
            text = line.decode("ascii")
        except UnicodeDecodeError as exc:
            raise CorruptFileError(f"non-ASCII bytes in header: {exc}") from exc
        text = text.strip()
        if not text:
            continue
        if "=" not in text:
            raise CorruptFileError(f"malformed header line {text!r}")
        key, value = (part.strip() for part in text.split("=", 1))
        fields[key] = value
        if key == "ElementDataFile":
            inline = f.read() if value == "LOCAL" else None
            return fields, inline


def read_mha(path: str):
    """Read a MetaImage file; returns a BinaryMask for binary MET_UCHAR, else a Volume."""
    with open(path, "rb") as f:
        fields, inline = _read_header(f)

    for key in fields:
        if key not in _KNOWN_OK and key != "ElementDataFile":
            warnings.warn(f"ignoring unknown MetaImage header key {key!r}")
    if fields.get("ObjectType", "Image") != "Image":
        raise UnsupportedFormatError(f"unsupported ObjectType {fields['ObjectType']!r}")
    if fields.get("NDims", "3") != "3":
        raise UnsupportedFormatError(f"only 3D images are supported, NDims = {fields['NDims']!r}")
    if not _parse_bool("BinaryData", fields.get("BinaryData", "True")):
        raise UnsupportedFormatError("ASCII payloads are not supported")
    for key in ("BinaryDataByteOrderMSB", "ElementByteOrderMSB"):
        if key in fields and _parse_bool(key, fields[key]):
            raise UnsupportedFormatError("big-endian payloads are not supported")
    if "CompressedData" in fields and _parse_bool("CompressedData", fields["CompressedData"]):
        raise UnsupportedFormatError("compressed payloads are not supported")
    if fields.get("ElementNumberOfChannels", "1") != "1":
        raise UnsupportedFormatError("multi-channel images are not supported")

    for key in ("DimSize", "ElementType"):
        if key not in fields:
            raise CorruptFileError(f"missing required header key {key}")
    try:
        w, h, d = (int(part) for part in fields["DimSize"].split())
    except ValueError as exc:
        raise CorruptFileError(f"DimSize must be three integers, got {fields['DimSize']!r}") from exc
    if min(w, h, d) < 1:
        raise CorruptFileError(f"DimSize entries must be positive, got {fields['DimSize']!r}")
    if "ElementSpacing" in fields:
        try:
            sx, sy, sz = (float(part) for part in fields["ElementSpacing"].split())
        except ValueError as exc:
            raise CorruptFileError(
                f"ElementSpacing must be three floats, got {fields['ElementSpacing']!r}"
            ) from exc
        if not all(np.isfinite(s) and s > 0 for s in (sx, sy, sz)):
            raise CorruptFileError(f"ElementSpacing must be positive, got {fields['ElementSpacing']!r}")
    else:
        sx = sy = sz = 1.0
    element_type = fields["ElementType"]
    if element_type not in _ELEMENT_TYPES:
        raise UnsupportedFormatError(f"unsupported element type {element_type!r}")
    dtype = _ELEMENT_TYPES[element_type][0]

    if inline is None:
        sibling = os.path.join(os.path.dirname(os.path.abspath(path)), fields["ElementDataFile"])
        with open(sibling, "rb") as f:
            inline = f.read()
    expected = w * h * d * dtype.itemsize
    if len(inline) != expected:
        raise CorruptFileError(f"payload holds {len(inline)} bytes, header implies {expected}")
    # disk order is x-fastest, so the flat buffer reshapes directly to (D, H, W)
    arr = np.frombuffer(inline, dtype=dtype).reshape(d, h, w)
    spacing = (sz, sy, sx)
    if element_type == "MET_UCHAR" and np.isin(arr, (0, 1)).all():
        return BinaryMask(arr != 0, spacing)
    values = arr.astype(np.float64)
    if not np.isfinite(values).all():
        warnings.warn(f"volume read from {path!r} contains non-finite values")
        return Volume(values, spacing, check_finite=False)
    return Volume(values, spacing)


def write_raw_json(obj, json_path: str) -> None:
    """Write a JSON sidecar plus a same-stem .raw payload next to it.

    Images store little-endian float64, masks store uint8 {0, 1}; the
    sidecar records shape (D, H, W), spacing (sz, sy, sx), kind, and dtype.
    """
    if isinstance(obj, BinaryMask):
        kind, dtype = "mask", "uint8"
        payload = obj.data.astype("u1")
    elif isinstance(obj, Volume):
        kind, dtype = "image", "float64"
        payload = obj.data.astype("<f8")
    else:
        raise ConfigError(f"write_raw_json expects Volume or BinaryMask, got {type(obj).__name__}")
    raw_path = os.path.splitext(json_path)[0] + ".raw"
    doc = {
        "dtype": dtype,
        "kind": kind,
        "raw_file": os.path.basename(raw_path),
        "shape": list(obj.shape),
        "spacing": list(obj.spacing),
    }
    with open(json_path, "w", encoding="ascii") as f:
        json.dump(doc, f, sort_keys=True, indent=2)
        f.write("\n")
    with open(raw_path, "wb") as f:
        f.write(np.ascontiguousarray(payload).tobytes())


def read_raw_json(json_path: str):
    """Read a raw-plus-JSON pair; returns a Volume or BinaryMask per the sidecar."""
    with open(json_path, "r", encoding="utf-8") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as exc:
            raise CorruptFileError(f"malformed JSON sidecar: {exc}") from exc
    try:
        kind = doc["kind"]
        dtype = doc["dtype"]
        shape = tuple(int(n) for n in doc["shape"])
        spacing = tuple(float(s) for s in doc["spacing"])
        raw_name = doc["raw_file"]
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptFileError(f"JSON sidecar missing or mistyping a field: {exc}") from exc
    if kind not in ("image", "mask"):
        raise UnsupportedFormatError(f"unsupported kind {kind!r}")
    if (kind, dtype) not in (("image", "float64"), ("mask", "uint8")):
        raise UnsupportedFormatError(f"unsupported dtype {dtype!r} for kind {kind!r}")
    if len(shape) != 3 or min(shape) < 1:
        raise CorruptFileError(f"shape must be three positive integers, got {doc['shape']!r}")
    raw_path = os.path.join(os.path.dirname(os.path.abspath(json_path)), raw_name)
    with open(raw_path, "rb") as f:
        payload = f.read()
    np_dtype = np.dtype("<f8") if kind == "image" else np.dtype("u1")
    expected = int(np.prod(shape)) * np_dtype.itemsize
    if len(payload) != expected:
        raise CorruptFileError(f"payload holds {len(payload)} bytes, sidecar implies {expected}")
    arr = np.frombuffer(payload, dtype=np_dtype).reshape(shape)
    if kind == "mask":
        if not np.isin(arr, (0, 1)).all():
            raise CorruptFileError("mask payload contains values other than 0 and 1")
        return BinaryMask(arr != 0, spacing)
    values = arr.astype(np.float64)
    if not np.isfinite(values).all():
        warnings.warn(f"volume read from {json_path!r} contains non-finite values")
        return Volume(values, spacing, check_finite=False)
    return Volume(values, spacing)
