"""Atomic file writes and validated JSONL/TSV readers."""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence


def atomic_write_bytes(path: str | Path, data: bytes) -> None:
    """Write to a temp file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str | Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def dumps(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False)


def write_json(path: str | Path, obj: Any) -> None:
    atomic_write_text(path, json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n")


def write_jsonl(path: str | Path, records: Iterable[Mapping]) -> None:
    atomic_write_text(path, "".join(dumps(r) + "\n" for r in records))


def read_jsonl(path: str | Path, required: Mapping[str, type | tuple[type, ...]] | None = None) -> list[dict]:
    """Parse JSONL, checking that each record carries ``required`` keys of the given types."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(rec, dict):
                raise ValueError(f"{path}:{lineno}: expected a JSON object")
            for key, typ in (required or {}).items():
                if key not in rec:
                    raise ValueError(f"{path}:{lineno}: missing field {key!r}")
                if not isinstance(rec[key], typ) or isinstance(rec[key], bool) and bool not in _as_tuple(typ):
                    raise ValueError(f"{path}:{lineno}: field {key!r} has the wrong type")
            out.append(rec)
    return out


def _as_tuple(t) -> tuple:
    return t if isinstance(t, tuple) else (t,)


def write_tsv(path: str | Path, rows: Iterable[Sequence[Any]]) -> None:
    atomic_write_text(path, "".join("\t".join(str(x) for x in r) + "\n" for r in rows))


def read_tsv(path: str | Path, n_cols: int) -> list[list[str]]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) != n_cols:
                raise ValueError(f"{path}:{lineno}: expected {n_cols} tab-separated columns, got {len(cols)}")
            out.append(cols)
    return out
