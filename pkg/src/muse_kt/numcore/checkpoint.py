"""Checkpoint archives: a text manifest plus raw little-endian buffers.

The container is a deterministic ZIP (stored, fixed timestamps, sorted entry
names) so that identical parameters produce byte-identical files. Buffers are
IEEE-754 little-endian and round-trip bit-exactly.
"""

from __future__ import annotations

import zipfile
from pathlib import Path

import numpy as np

MANIFEST_NAME = "manifest.tsv"
META_NAME = "meta.txt"
_EPOCH = (1980, 1, 1, 0, 0, 0)

_DTYPE_TAGS = {
    np.dtype("float32"): "<f4",
    np.dtype("float64"): "<f8",
    np.dtype("int32"): "<i4",
    np.dtype("int64"): "<i8",
}
_TAG_DTYPES = {tag: np.dtype(tag) for tag in _DTYPE_TAGS.values()}


class CheckpointError(RuntimeError):
    """A checkpoint file is missing, truncated, or inconsistent."""


def _write_entry(zf: zipfile.ZipFile, name: str, payload: bytes) -> None:
    info = zipfile.ZipInfo(name, date_time=_EPOCH)
    info.compress_type = zipfile.ZIP_STORED
    info.external_attr = 0o644 << 16
    zf.writestr(info, payload)


def save_arrays(path: str | Path, arrays: dict[str, np.ndarray], meta: dict[str, str] | None = None) -> None:
    """Write named arrays and key=value metadata to ``path`` deterministically."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    manifest_lines = []
    ordered = sorted(arrays)
    for name in ordered:
        arr = np.ascontiguousarray(arrays[name])
        tag = _DTYPE_TAGS.get(arr.dtype)
        if tag is None:
            raise CheckpointError(f"unsupported dtype {arr.dtype} for {name}")
        shape = ",".join(str(s) for s in arr.shape)
        manifest_lines.append(f"{name}\t{shape}\t{tag}")
    manifest = "\n".join(manifest_lines) + ("\n" if manifest_lines else "")
    meta_text = "".join(f"{k} = {v}\n" for k, v in sorted((meta or {}).items()))
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        _write_entry(zf, MANIFEST_NAME, manifest.encode())
        _write_entry(zf, META_NAME, meta_text.encode())
        for name in ordered:
            arr = np.ascontiguousarray(arrays[name])
            buf = arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes()
            _write_entry(zf, f"data/{name}", buf)


def load_arrays(path: str | Path) -> tuple[dict[str, np.ndarray], dict[str, str]]:
    """Read back arrays and metadata; inverse of :func:`save_arrays`."""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    arrays: dict[str, np.ndarray] = {}
    meta: dict[str, str] = {}
    with zipfile.ZipFile(path) as zf:
        try:
            manifest = zf.read(MANIFEST_NAME).decode()
        except KeyError as exc:
            raise CheckpointError(f"{path} has no manifest") from exc
        for raw in zf.read(META_NAME).decode().splitlines():
            if not raw.strip():
                continue
            key, _, value = raw.partition(" = ")
            meta[key] = value
        for line in manifest.splitlines():
            if not line.strip():
                continue
            name, shape_text, tag = line.split("\t")
            shape = tuple(int(s) for s in shape_text.split(",")) if shape_text else ()
            dtype = _TAG_DTYPES.get(tag)
            if dtype is None:
                raise CheckpointError(f"unknown dtype tag {tag} in {path}")
            buf = zf.read(f"data/{name}")
            arr = np.frombuffer(buf, dtype=dtype).reshape(shape)
            arrays[name] = arr.astype(arr.dtype.newbyteorder("="), copy=True)
    return arrays, meta
