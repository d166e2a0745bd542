"""Persistence: matrix blobs, CSV tables, atomic writes, and run manifests."""

from datetime import datetime, timezone
import csv
import hashlib
import io as _io
import json
import math
import os
import struct
import tempfile

import numpy as np

from ._errors import ContractViolation

__all__ = [
    "MAGIC",
    "HEADER_SIZE",
    "matrix_to_bytes",
    "matrix_from_bytes",
    "write_matrix_blob",
    "read_matrix_blob",
    "write_matrix_csv",
    "read_matrix_csv",
    "format_float",
    "table_to_csv_text",
    "read_table_csv",
    "atomic_write_text",
    "atomic_write_bytes",
    "sha256_file",
    "build_manifest",
    "write_manifest",
    "read_manifest",
]

MAGIC = b"GEL1"
# magic, rows, cols, reserved (zero padding to 8-byte alignment), seed
_HEADER = struct.Struct("<4sIIIQ")
HEADER_SIZE = _HEADER.size  # 24


# ---------------------------------------------------------------- matrices


def matrix_to_bytes(M, seed=0):
    """Serialize a 2-D float array: 24-byte header then column-major little-endian float64."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise ContractViolation(f"expected a 2-D matrix, got shape {M.shape}")
    rows, cols = M.shape
    header = _HEADER.pack(MAGIC, rows, cols, 0, int(seed))
    return header + np.asarray(M, dtype="<f8").tobytes(order="F")


def matrix_from_bytes(blob):
    """Inverse of :func:`matrix_to_bytes`; returns ``(matrix, seed)``."""
    if len(blob) < HEADER_SIZE:
        raise ContractViolation("blob is shorter than the header")
    magic, rows, cols, _, seed = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise ContractViolation(f"bad magic {magic!r}")
    expected = HEADER_SIZE + 8 * rows * cols
    if len(blob) != expected:
        raise ContractViolation(f"blob has {len(blob)} bytes, expected {expected}")
    data = np.frombuffer(blob, dtype="<f8", offset=HEADER_SIZE, count=rows * cols)
    return data.reshape((rows, cols), order="F").astype(float), seed


def write_matrix_blob(path, M, seed=0):
    atomic_write_bytes(path, matrix_to_bytes(M, seed))


def read_matrix_blob(path):
    with open(path, "rb") as fh:
        return matrix_from_bytes(fh.read())


def write_matrix_csv(path, M):
    M = np.asarray(M, dtype=float)
    lines = [",".join(format_float(v) for v in row) for row in np.atleast_2d(M)]
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_matrix_csv(path):
    with open(path, encoding="utf-8") as fh:
        rows = [[float(tok) for tok in line.split(",")] for line in fh.read().splitlines() if line]
    return np.array(rows, dtype=float)


# ---------------------------------------------------------------- tables


def format_float(v):
    """Locale-free, round-trip-exact text for a scalar (17 significant digits)."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return "%.17g" % v


def table_to_csv_text(rows, columns):
    """Render dict rows as CSV text with a header line and ``\\n`` line endings."""
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([format_float(row[c]) for c in columns])
    return buf.getvalue()


def _parse_cell(tok):
    if tok in ("true", "false"):
        return tok == "true"
    try:
        return int(tok)
    except ValueError:
        return float(tok)


def read_table_csv(path):
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        return [{k: _parse_cell(v) for k, v in row.items()} for row in reader]


# ---------------------------------------------------------------- files


def atomic_write_bytes(path, data):
    """Write via a temporary file in the target directory, then rename over ``path``."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text):
    atomic_write_bytes(path, text.encode("utf-8"))


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


# ---------------------------------------------------------------- manifests


def _utc_now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def build_manifest(command, config, outputs, out_dir, seeds=(), incomplete=False, started=None, extra=None):
    """Assemble a JSON-compatible run manifest.

    ``outputs`` lists file names relative to ``out_dir``; each gets a sha256
    digest. ``seeds`` holds the per-trial seed derivations. Passing the manifest
    back as ``--config`` replays the run.
    """
    from . import __version__

    doc = {
        "command": command,
        "version": __version__,
        "config": config.to_mapping(),
        "master_seed": config.master_seed,
        "seeds": list(seeds),
        "started": started or _utc_now(),
        "finished": _utc_now(),
        "incomplete": bool(incomplete),
        "outputs": {name: sha256_file(os.path.join(out_dir, name)) for name in outputs},
    }
    if extra:
        doc["extra"] = extra
    return _json_safe(doc)


def write_manifest(path, manifest):
    atomic_write_text(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def read_manifest(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
