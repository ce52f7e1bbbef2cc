"""Field files: one JSON header line, then raw little-endian float64 blocks.

Layout::

    {"component_order": [...], "d": 2, "kind": "vector", "n": 64}\\n
    <block for component 0><block for component 1>...

Each block holds ``n**d`` values in row-major grid order (axis 0 = x1).
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import FieldFormatError
from .torus import SymTensor0, tensor0_components

KINDS = ("scalar", "vector", "tensor0")
_DTYPE = np.dtype("<f8")


def component_order(kind: str, d: int) -> list:
    if kind == "scalar":
        return ["f"]
    if kind == "vector":
        return ["x%d" % (i + 1) for i in range(d)]
    if kind == "tensor0":
        return list(tensor0_components(d))
    raise FieldFormatError("unknown field kind %r" % (kind,))


def encode_field(data, kind: str, d: int, n: int) -> bytes:
    if kind == "tensor0":
        blocks = np.asarray(data.entries)
    elif kind == "vector":
        blocks = np.asarray(data)
    else:
        blocks = np.asarray(data)[None]
    expected = (len(component_order(kind, d)),) + (n,) * d
    if blocks.shape != expected:
        raise FieldFormatError("field shape %s does not match %s" % (blocks.shape, expected))
    header = {"component_order": component_order(kind, d), "d": d, "kind": kind, "n": n}
    head = json.dumps(header, sort_keys=True).encode("utf-8") + b"\n"
    return head + np.ascontiguousarray(blocks, dtype=_DTYPE).tobytes()


def write_field(path, data, kind: str, d: int, n: int) -> None:
    Path(path).write_bytes(encode_field(data, kind, d, n))


def decode_field(raw: bytes, source: str = "<bytes>"):
    """Parse a field file; returns ``(header, data)``.

    ``data`` is an ndarray for scalar/vector kinds and a :class:`SymTensor0`
    for ``tensor0``. Malformed input raises FieldFormatError with the byte
    offset where parsing failed.
    """
    nl = raw.find(b"\n")
    if nl < 0:
        raise FieldFormatError("%s: no header terminator found (scanned %d bytes from offset 0)"
                               % (source, len(raw)))
    try:
        header = json.loads(raw[:nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        pos = getattr(exc, "pos", getattr(exc, "start", 0))
        raise FieldFormatError("%s: malformed JSON header at byte offset %d: %s"
                               % (source, pos, exc)) from None
    if not isinstance(header, dict):
        raise FieldFormatError("%s: header at byte offset 0 is not an object" % source)
    missing = {"d", "n", "kind", "component_order"} - set(header)
    if missing:
        raise FieldFormatError("%s: header (bytes 0-%d) lacks keys %s" % (source, nl, sorted(missing)))
    d, n, kind = header["d"], header["n"], header["kind"]
    if kind not in KINDS or d not in (1, 2, 3) or not isinstance(n, int) or n <= 0:
        raise FieldFormatError("%s: invalid header values d=%r n=%r kind=%r (bytes 0-%d)"
                               % (source, d, n, kind, nl))
    order = component_order(kind, d)
    if list(header["component_order"]) != order:
        raise FieldFormatError("%s: component_order %r, expected %r"
                               % (source, header["component_order"], order))
    start = nl + 1
    block = n**d * _DTYPE.itemsize
    need = block * len(order)
    have = len(raw) - start
    if have != need:
        which = min(have // block, len(order) - 1) if have < need else len(order)
        raise FieldFormatError(
            "%s: payload starting at byte offset %d has %d bytes, expected %d "
            "(%d components x %d bytes); mismatch detected in block %d at offset %d"
            % (source, start, have, need, len(order), block, which, start + which * block))
    values = np.frombuffer(raw, dtype=_DTYPE, offset=start).astype(float)
    values = values.reshape((len(order),) + (n,) * d)
    if not np.all(np.isfinite(values)):
        bad = int(np.argmax(~np.isfinite(values.ravel())))
        raise FieldFormatError("%s: non-finite value at byte offset %d"
                               % (source, start + bad * _DTYPE.itemsize))
    if kind == "scalar":
        return header, values[0]
    if kind == "vector":
        return header, values
    return header, SymTensor0(d, values)


def read_field(path):
    path = Path(path)
    return decode_field(path.read_bytes(), source=str(path))
