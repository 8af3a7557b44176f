"""Run output directory: CSV tables, gnuplot column files, JSON manifest.

Every write goes through a retry-with-backoff wrapper and records the
SHA-256 of the bytes written, so a manifest can list what a run produced.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import os
import threading
import time
from pathlib import Path
from typing import Iterable, Sequence

from src.config import WRITE_BACKOFF_BASE, WRITE_MAX_RETRIES
from src.errors import ConfigurationError

logger = logging.getLogger(__name__)


def _cell(value: object) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


class Store:
    """Single writer for one run directory; safe to share between threads."""

    def __init__(self, base_dir: str | os.PathLike):
        self.base_dir = Path(base_dir)
        self._lock = threading.Lock()
        self._digests: dict[str, str] = {}

    def _path(self, name: str) -> Path:
        return self.base_dir / name

    @property
    def digests(self) -> dict[str, str]:
        """SHA-256 of every file written so far, by relative name."""
        with self._lock:
            return dict(sorted(self._digests.items()))

    # ── Generic file operations ─────────────────────────────────────

    @staticmethod
    def _retry_io(fn, description: str) -> None:
        """Retry a write operation with exponential backoff on OSError."""
        for attempt in range(1, WRITE_MAX_RETRIES + 1):
            try:
                fn()
                return
            except OSError as e:
                if attempt < WRITE_MAX_RETRIES:
                    delay = WRITE_BACKOFF_BASE * (2 ** (attempt - 1))
                    logger.warning(
                        "I/O error on %s (attempt %d/%d), retrying in %.1fs: %s",
                        description, attempt, WRITE_MAX_RETRIES, delay, e,
                    )
                    time.sleep(delay)
                else:
                    logger.error("I/O error on %s after %d attempts: %s", description, WRITE_MAX_RETRIES, e)
                    raise

    def write_bytes(self, name: str, data: bytes) -> Path:
        full = self._path(name)

        def _do():
            full.parent.mkdir(parents=True, exist_ok=True)
            tmp = full.with_name(full.name + ".tmp")
            tmp.write_bytes(data)
            os.replace(tmp, full)

        with self._lock:
            self._retry_io(_do, f"write({name})")
            self._digests[name] = hashlib.sha256(data).hexdigest()
        logger.debug("Written: %s (%d bytes)", full, len(data))
        return full

    def write_text(self, name: str, content: str) -> Path:
        return self.write_bytes(name, content.encode("utf-8"))

    def write_json(self, name: str, data: object) -> Path:
        return self.write_text(name, json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n")

    def write_csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence[object]]) -> Path:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])
        return self.write_text(name, buf.getvalue())

    def write_columns(self, name: str, header: Sequence[str], rows: Iterable[Sequence[object]]) -> Path:
        """Whitespace-separated columns with a ``#`` header line (gnuplot ``using 1:2``)."""
        lines = ["# " + " ".join(header)]
        lines.extend(" ".join(_cell(v) for v in row) for row in rows)
        return self.write_text(name, "\n".join(lines) + "\n")


def read_csv(path: str | os.PathLike) -> tuple[list[str], list[tuple[float, ...]]]:
    """Header and numeric rows of a CSV file; blank lines and ``#`` comments are skipped."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError as e:
        raise ConfigurationError(f"File not found: {path}") from e
    lines = [line for line in text.splitlines() if line.strip() and not line.lstrip().startswith("#")]
    reader = csv.reader(lines)
    header = next(reader, None)
    if header is None:
        raise ConfigurationError(f"{path}: empty CSV")
    rows = []
    for k, row in enumerate(reader, start=2):
        try:
            rows.append(tuple(float(v) for v in row))
        except ValueError as e:
            raise ConfigurationError(f"{path}: row {k} is not numeric: {row}") from e
    return [h.strip() for h in header], rows
