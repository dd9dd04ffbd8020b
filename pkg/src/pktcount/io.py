"""Small file helpers shared by the pipeline stages."""

from __future__ import annotations

import csv
import io
import os
import tempfile
from pathlib import Path


_UMASK = os.umask(0)
os.umask(_UMASK)


class InputError(ValueError):
    """Malformed or inconsistent input file; carries an optional line number."""

    def __init__(self, message: str, path=None, line: int | None = None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
        self.path = path
        self.line = line


def fmt(x) -> str:
    """Serialize a number with 6 significant digits; integers and strings pass through."""
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, int):
        return str(x)
    if isinstance(x, float):
        return f"{x:.6g}"
    try:
        import numpy as np

        if isinstance(x, np.integer):
            return str(int(x))
        if isinstance(x, np.floating):
            return f"{float(x):.6g}"
    except ImportError:  # pragma: no cover
        pass
    return str(x)


def atomic_write_text(path, text: str) -> None:
    """Write via a temp file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.chmod(tmp, 0o666 & ~_UMASK)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    atomic_write_text(path, buf.getvalue())


def read_csv(path, header: list[str]) -> list[tuple[int, dict[str, str]]]:
    """Read rows as ``(line_number, record)``; the header must contain ``header``."""
    path = Path(path)
    try:
        fh = path.open(newline="")
    except OSError as e:
        raise InputError(f"cannot open: {e.strerror}", path) from e
    with fh:
        reader = csv.reader(fh)
        try:
            got = next(reader)
        except StopIteration:
            raise InputError("empty file, expected header", path, 1) from None
        got = [h.strip() for h in got]
        missing = [h for h in header if h not in got]
        if missing:
            raise InputError(f"header missing columns {missing}", path, 1)
        idx = {h: got.index(h) for h in header}
        out = []
        for lineno, raw in enumerate(reader, start=2):
            if not raw or all(not c.strip() for c in raw):
                continue
            if len(raw) != len(got):
                raise InputError(f"expected {len(got)} fields, got {len(raw)}", path, lineno)
            out.append((lineno, {h: raw[i].strip() for h, i in idx.items()}))
    return out


def parse_number(value: str, kind, path, line: int, column: str):
    try:
        v = kind(value)
    except ValueError:
        raise InputError(f"column {column!r}: cannot parse {value!r}", path, line) from None
    if kind is float and v != v:
        raise InputError(f"column {column!r}: NaN not allowed", path, line)
    return v


def data_path(name: str) -> Path:
    """Path of a fixture shipped in the package ``data`` directory."""
    p = Path(__file__).parent / "data" / name
    if not p.exists():
        raise FileNotFoundError(f"no packaged fixture named {name!r}")
    return p
