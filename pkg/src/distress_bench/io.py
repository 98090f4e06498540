"""Small file-output helpers: atomic writes and delimited tables."""
from __future__ import annotations

import csv
import io
import math
import os
import tempfile
from typing import Iterable, Sequence


def atomic_write(path: str, data: str | bytes) -> None:
    """Write ``data`` to ``path`` through a temp file in the same directory."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        if isinstance(data, str):
            data = data.encode("utf-8")
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def fmt(value, digits: int = 6) -> str:
    """Format a table cell; floats are rounded to ``digits`` decimals."""
    if value is None:
        return "NA"
    if isinstance(value, float):
        if math.isnan(value):
            return "NA"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return f"{value:.{digits}f}"
    return str(value)


def render_table(header: Sequence[str], rows: Iterable[Sequence], digits: int = 6) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v, digits) for v in row])
    return buf.getvalue()


def write_table(path: str, header: Sequence[str], rows: Iterable[Sequence], digits: int = 6) -> None:
    atomic_write(path, render_table(header, rows, digits))


def read_table(path: str) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [r for r in reader if r]
    return header, rows
