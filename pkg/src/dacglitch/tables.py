"""File formats: mapping tables, greedy LUT blobs, the bases catalog, basis names."""

from __future__ import annotations

import csv
import io
import json
import os
import re
import tempfile
from pathlib import Path

import numpy as np

from .core import (
    Basis,
    binary_basis,
    published_basis,
    segmented_basis,
    thermometer_basis,
)
from .errors import ConsistencyError, ValidationError
from .mappers import MappingTable

CATALOG_ENV = "DACGLITCH_CATALOG"
DEFAULT_CATALOG = "bases_catalog.json"


def atomic_write(path, data: bytes | str) -> None:
    """Write via a temporary file in the target directory and rename into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"newline": ""})) as fh:
            fh.write(data)
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# --- memoryless CSV -----------------------------------------------------------


def memoryless_csv(table: MappingTable, meta: dict | None = None) -> str:
    """One row per codeword: the codeword then its L switch bits.

    The header lists the basis weights in switch order; an optional leading
    ``# {json}`` line carries run metadata.
    """
    if table.mode != "memoryless":
        raise ValidationError("only memoryless tables export to CSV")
    b = table.basis
    buf = io.StringIO()
    header = {"bit_depth": b.bit_depth, "mode": "memoryless", **(meta or {})}
    buf.write("# " + json.dumps(header, sort_keys=True) + "\n")
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["codeword", *b.weights])
    for x, m in enumerate(table.masks):
        wr.writerow([x, *((int(m) >> i) & 1 for i in range(b.length))])
    return buf.getvalue()


def save_memoryless_csv(table: MappingTable, path, meta: dict | None = None) -> None:
    atomic_write(path, memoryless_csv(table, meta))


def load_memoryless_csv(path) -> MappingTable:
    meta = {}
    rows = []
    with open(path, newline="") as fh:
        for line in fh:
            if line.startswith("#"):
                meta.update(json.loads(line[1:]))
            elif line.strip():
                rows.append(line)
    data = list(csv.reader(rows))
    if not data or data[0][0] != "codeword":
        raise ValidationError(f"{path}: missing codeword header")
    weights = tuple(int(w) for w in data[0][1:])
    bit_depth = int(meta.get("bit_depth", max(1, (sum(weights)).bit_length())))
    basis = Basis(weights, bit_depth)
    if tuple(basis.weights) != weights:
        raise ValidationError(f"{path}: weights must be listed in ascending order")
    masks = [0] * basis.n_codes
    seen = set()
    for row in data[1:]:
        x = int(row[0])
        bits = [int(v) for v in row[1:]]
        if len(bits) != basis.length or any(v not in (0, 1) for v in bits):
            raise ValidationError(f"{path}: row {x} needs {basis.length} binary fields")
        if not 0 <= x < basis.n_codes:
            raise ValidationError(f"{path}: codeword {x} out of range")
        masks[x] = sum(v << i for i, v in enumerate(bits))
        seen.add(x)
    if len(seen) != basis.n_codes:
        raise ValidationError(f"{path}: {basis.n_codes - len(seen)} codewords missing")
    return MappingTable(basis, "memoryless", masks=masks, meta=meta)


# --- greedy LUT blob ------------------------------------------------------------


def lut_dtype(length: int) -> np.dtype:
    """Smallest little-endian unsigned type holding L bits plus an all-ones sentinel."""
    for nbytes in (1, 2, 4, 8):
        if length + 1 <= 8 * nbytes:
            return np.dtype(f"<u{nbytes}")
    raise ValidationError(f"basis length {length} too large for a LUT blob")


def save_greedy_lut(table: MappingTable, path, meta: dict | None = None) -> dict:
    """Row-major blob, entry ``prev_mask * 2^N + codeword`` holds the chosen pattern.

    Entries for previous patterns outside the code range hold the all-ones
    sentinel.  A JSON sidecar ``<path>.json`` records the layout.
    """
    if table.mode != "greedy-lut":
        raise ValidationError("table is not a greedy LUT")
    b = table.basis
    dt = lut_dtype(b.length)
    sentinel = np.iinfo(dt).max
    flat = table.lut.reshape(-1)
    out = np.where(flat < 0, sentinel, flat).astype(dt)
    side = {"basis": b.to_json(), "bit_depth": b.bit_depth, "length": b.length,
            "entries": int(out.size), "entry_bytes": dt.itemsize, "byteorder": "little",
            "key": "prev_mask * 2^N + codeword", "sentinel": int(sentinel), **(meta or {})}
    atomic_write(path, out.tobytes())
    atomic_write(str(path) + ".json", dump_json(side))
    return side


def load_greedy_lut(path) -> MappingTable:
    side = json.loads(Path(str(path) + ".json").read_text())
    basis = Basis.from_json(side["basis"])
    dt = lut_dtype(basis.length)
    if side.get("entry_bytes", dt.itemsize) != dt.itemsize:
        raise ConsistencyError("sidecar entry width disagrees with the basis length")
    raw = np.fromfile(path, dtype=dt)
    expected = (1 << basis.length) * basis.n_codes
    if raw.size != expected:
        raise ConsistencyError(f"LUT blob holds {raw.size} entries, expected {expected}")
    sentinel = np.iinfo(dt).max
    lut = np.where(raw == sentinel, -1, raw.astype(np.int64)).reshape(1 << basis.length, basis.n_codes)
    return MappingTable(basis, "greedy-lut", lut=lut, meta=side)


def load_table(path) -> MappingTable:
    """Memoryless CSV, or a LUT blob when a JSON sidecar sits next to it."""
    if Path(str(path) + ".json").exists():
        return load_greedy_lut(path)
    return load_memoryless_csv(path)


# --- catalog ----------------------------------------------------------------------


def catalog_path(path=None) -> Path:
    return Path(path or os.environ.get(CATALOG_ENV) or DEFAULT_CATALOG)


def load_catalog(path=None) -> list[dict]:
    p = catalog_path(path)
    if not p.exists():
        return []
    data = json.loads(p.read_text())
    if not isinstance(data, list):
        raise ValidationError(f"{p}: catalog must be a JSON list")
    return data


def add_to_catalog(entry: dict, path=None) -> Path:
    """Insert or replace the entry with the same (bit_depth, length, seed)."""
    p = catalog_path(path)
    key = (entry["bit_depth"], entry["length"], entry["seed"])
    kept = [e for e in load_catalog(p) if (e["bit_depth"], e["length"], e["seed"]) != key]
    kept.append(entry)
    kept.sort(key=lambda e: (e["bit_depth"], e["length"], e["seed"]))
    atomic_write(p, dump_json(kept))
    return p


def catalog_basis(bit_depth: int, length: int, seed: int | None = None, path=None) -> Basis:
    hits = [e for e in load_catalog(path)
            if e["bit_depth"] == bit_depth and e["length"] == length
            and (seed is None or e["seed"] == seed)]
    if not hits:
        raise ValidationError(
            f"no catalog entry for N={bit_depth}, L={length}, seed={seed} in {catalog_path(path)}")
    e = hits[0]
    return Basis(tuple(e["weights"]), bit_depth, name=f"catalog:{bit_depth}:{length}:{e['seed']}")


_SEGMENTED = re.compile(r"^(\d+)T\+(\d+)B$", re.IGNORECASE)
_PURE = re.compile(r"^(\d+)([TB])$", re.IGNORECASE)
_PUBLISHED = re.compile(r"^opt(\d+)$", re.IGNORECASE)


def resolve_basis(text: str, bit_depth: int = 8, catalog=None) -> Basis:
    """Basis from a preset name, a catalog id or inline comma-separated weights.

    Presets: ``8T``, ``8B``, ``kT+mB``, ``opt9`` .. ``opt13``.  Catalog ids are
    ``catalog:N:L`` or ``catalog:N:L:seed``.
    """
    text = text.strip()
    if m := _SEGMENTED.match(text):
        return segmented_basis(int(m[1]), int(m[2]))
    if m := _PURE.match(text):
        n = int(m[1])
        return thermometer_basis(n) if m[2].upper() == "T" else binary_basis(n)
    if m := _PUBLISHED.match(text):
        if bit_depth != 8:
            raise ValidationError("published bases exist only for N = 8")
        return published_basis(int(m[1]))
    if text.startswith("catalog:"):
        parts = text.split(":")[1:]
        if len(parts) not in (2, 3):
            raise ValidationError(f"catalog id {text!r} must be catalog:N:L[:seed]")
        nums = [int(p) for p in parts]
        return catalog_basis(nums[0], nums[1], nums[2] if len(nums) == 3 else None, catalog)
    return Basis.parse(text, bit_depth).check()
