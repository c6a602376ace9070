"""Small shared helpers for binary containers and atomic file output."""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

from .errors import FormatError

FORMAT_VERSION = (1, 0)


def format_version_string() -> str:
    return f"{FORMAT_VERSION[0]}.{FORMAT_VERSION[1]}"


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def write_atomic(path, data: bytes) -> None:
    """Write bytes to a temp file in the target directory, then rename over."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_text_atomic(path, text: str) -> None:
    write_atomic(path, text.encode("utf-8"))


def pack_container(magic: bytes, header: dict, payload: bytes) -> bytes:
    """magic | u16 major | u16 minor | u32 header_len | header JSON | payload."""
    head = canonical_json(header).encode("utf-8")
    return magic + struct.pack("<HHI", *FORMAT_VERSION, len(head)) + head + payload


def unpack_container(blob: bytes, magic: bytes) -> tuple[dict, bytes]:
    if blob[:4] != magic:
        raise FormatError(f"bad magic {blob[:4]!r}, expected {magic!r}")
    major, minor, hlen = struct.unpack_from("<HHI", blob, 4)
    if major != FORMAT_VERSION[0]:
        raise FormatError(f"unsupported major format version {major}.{minor}")
    start = 4 + 8
    header = json.loads(blob[start : start + hlen].decode("utf-8"))
    return header, blob[start + hlen :]
