"""File formats: price/sector CSVs, the panel cache, model JSON, artifacts.

Prices CSV
    header ``date,<ticker>,...``; ISO-8601 dates; comma separated; UTF-8.
    An empty cell is a missing price (the column is then dropped).
Sectors CSV
    header ``ticker,group``.
Panel cache
    first line ``# ellipstress-panel v1``, then a prices-style CSV holding
    log-returns, plus ``groups.csv`` next to it.
Model JSON
    ``{version, kind, nu?, labels, mu, omega, fitted_from}``, floats with
    17 significant digits so that load/dump round-trips bit-identically.
"""

from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import json
import math
import os
import tempfile
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .errors import InputError, NonPositivePrice, ParseError, UnmappedTicker
from .estimation import ReturnPanel, panel_from_prices
from .model import EllipticalModel, Normal, StudentT

PANEL_MAGIC = "# ellipstress-panel v1"
MODEL_VERSION = 1


# ---------------------------------------------------------------------------
# JSON with pinned float formatting


def fmt_float(v: float) -> str:
    return format(float(v), ".17g")


def _scalar(v: Any) -> str:
    if v is None:
        return "null"
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        if not math.isfinite(v):
            return "null"
        s = fmt_float(v)
        return s if any(c in s for c in ".en") else s + ".0"
    if isinstance(v, str):
        return json.dumps(v, ensure_ascii=False)
    raise TypeError(f"cannot serialize {type(v).__name__}")


def _is_flat(seq: Sequence) -> bool:
    return all(not isinstance(v, (list, tuple, dict, np.ndarray)) for v in seq)


def dumps(obj: Any, indent: int = 0) -> str:
    """Deterministic JSON; lists of scalars stay on one line, NaN becomes null."""
    pad = "  " * indent
    inner = "  " * (indent + 1)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, Mapping):
        if not obj:
            return "{}"
        items = [f"{inner}{_scalar(str(k))}: {dumps(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if _is_flat(obj):
            return "[" + ", ".join(_scalar(v) for v in obj) + "]"
        return "[\n" + ",\n".join(inner + dumps(v, indent + 1) for v in obj) + "\n" + pad + "]"
    return _scalar(obj)


# ---------------------------------------------------------------------------
# atomic writes


def write_atomic(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_all(files: Mapping[str, str]) -> None:
    """Write every file after all contents exist; each via temp file + rename."""
    for path, text in files.items():
        write_atomic(path, text)


def sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# ---------------------------------------------------------------------------
# price / sector CSVs


def _rows(path: str) -> Iterable[tuple[int, list[str]]]:
    try:
        fh = open(path, encoding="utf-8", newline="")
    except OSError as exc:
        raise InputError(f"cannot open {path}: {exc.strerror}") from exc
    with fh:
        try:
            for lineno, row in enumerate(csv.reader(fh), start=1):
                yield lineno, row
        except (csv.Error, UnicodeDecodeError) as exc:
            raise ParseError(str(exc), path) from exc


def _iso_date(s: str, path: str, line: int) -> str:
    try:
        return _dt.date.fromisoformat(s.strip()).isoformat()
    except ValueError as exc:
        raise ParseError(f"bad ISO-8601 date {s!r}", path, line) from exc


def read_prices(path: str) -> tuple[list[str], list[str], np.ndarray]:
    """Parse a prices CSV into ``(dates, tickers, prices)``; missing cells are NaN."""
    rows = _rows(path)
    try:
        _, header = next(rows)
    except StopIteration:
        raise ParseError("empty file", path, 1) from None
    header = [h.strip() for h in header]
    if not header or header[0].lower() != "date":
        raise ParseError("first header column must be 'date'", path, 1)
    tickers = header[1:]
    if not tickers or any(not t for t in tickers) or len(set(tickers)) != len(tickers):
        raise ParseError("ticker header must be non-empty and unique", path, 1)
    dates: list[str] = []
    data: list[list[float]] = []
    for line, row in rows:
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", path, line)
        d = _iso_date(row[0], path, line)
        if dates and d <= dates[-1]:
            raise ParseError(f"dates must be strictly increasing ({d} after {dates[-1]})", path, line)
        vals = []
        for t, cell in zip(tickers, row[1:]):
            cell = cell.strip()
            if not cell:
                vals.append(math.nan)
                continue
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(f"bad number {cell!r} for {t}", path, line) from None
            if not v > 0 or not math.isfinite(v):
                raise NonPositivePrice(t, d, v, line)
            vals.append(v)
        dates.append(d)
        data.append(vals)
    if len(dates) < 2:
        raise ParseError("need at least two price rows", path)
    return dates, tickers, np.array(data, dtype=float)


def read_sectors(path: str) -> dict[str, str]:
    rows = _rows(path)
    try:
        _, header = next(rows)
    except StopIteration:
        raise ParseError("empty file", path, 1) from None
    if [h.strip().lower() for h in header] != ["ticker", "group"]:
        raise ParseError("header must be 'ticker,group'", path, 1)
    out: dict[str, str] = {}
    for line, row in rows:
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != 2:
            raise ParseError(f"expected 2 fields, got {len(row)}", path, line)
        t, g = row[0].strip(), row[1].strip()
        if not t or not g:
            raise ParseError("empty ticker or group", path, line)
        if t in out and out[t] != g:
            raise ParseError(f"ticker {t} mapped to two groups", path, line)
        out[t] = g
    return out


def load_panel_from_csv(prices_path: str, sectors_path: str | None) -> ReturnPanel:
    dates, tickers, prices = read_prices(prices_path)
    groups = read_sectors(sectors_path) if sectors_path else None
    if groups is not None:
        missing = [t for t in tickers if t not in groups]
        if missing:
            raise UnmappedTicker(missing)
    return panel_from_prices(dates, tickers, prices, groups)


# ---------------------------------------------------------------------------
# panel cache


def panel_cache_text(panel: ReturnPanel) -> tuple[str, str]:
    lines = [PANEL_MAGIC, "date," + ",".join(panel.tickers)]
    for d, row in zip(panel.dates, panel.returns):
        lines.append(d + "," + ",".join(fmt_float(v) for v in row))
    groups = ""
    if panel.groups is not None:
        groups = "ticker,group\n" + "".join(
            f"{t},{panel.groups[t]}\n" for t in panel.tickers if t in panel.groups
        )
    return "\n".join(lines) + "\n", groups


def groups_path_for(panel_path: str) -> str:
    return os.path.join(os.path.dirname(os.path.abspath(panel_path)), "groups.csv")


def read_panel_cache(path: str) -> ReturnPanel:
    try:
        with open(path, encoding="utf-8") as fh:
            first = fh.readline().rstrip("\n")
    except OSError as exc:
        raise InputError(f"cannot open {path}: {exc.strerror}") from exc
    if first != PANEL_MAGIC:
        raise ParseError(f"not a panel cache (expected {PANEL_MAGIC!r})", path, 1)
    rows = _rows(path)
    next(rows)
    _, header = next(rows)
    tickers = header[1:]
    dates, data = [], []
    for line, row in rows:
        if not row:
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", path, line)
        dates.append(row[0])
        try:
            data.append([float(c) for c in row[1:]])
        except ValueError:
            raise ParseError("bad number", path, line) from None
    gp = groups_path_for(path)
    groups = read_sectors(gp) if os.path.exists(gp) else None
    return ReturnPanel(tuple(dates), tuple(tickers), np.array(data, dtype=float).reshape(len(dates), len(tickers)), groups)


# ---------------------------------------------------------------------------
# model JSON


def model_to_dict(model: EllipticalModel, fitted_from: Mapping[str, Any] | None = None) -> dict:
    d: dict[str, Any] = {"version": MODEL_VERSION, "kind": model.kind.name}
    if isinstance(model.kind, StudentT):
        d["nu"] = model.kind.nu
    d["labels"] = list(model.labels)
    d["mu"] = model.mu.tolist()
    d["omega"] = model.omega.tolist()
    if fitted_from is not None:
        d["fitted_from"] = dict(fitted_from)
    return d


def model_to_json(model: EllipticalModel, fitted_from: Mapping[str, Any] | None = None) -> str:
    return dumps(model_to_dict(model, fitted_from)) + "\n"


def model_from_dict(d: Mapping[str, Any]) -> tuple[EllipticalModel, dict | None]:
    if d.get("version") != MODEL_VERSION:
        raise ParseError(f"unsupported model version {d.get('version')!r}")
    kind = d.get("kind")
    if kind == "normal":
        k = Normal()
    elif kind == "student_t":
        k = StudentT(d["nu"])
    else:
        raise ParseError(f"unknown model kind {kind!r}")
    model = EllipticalModel(np.array(d["mu"], dtype=float), np.array(d["omega"], dtype=float), k, tuple(d["labels"]))
    return model, d.get("fitted_from")


def read_model(path: str) -> tuple[EllipticalModel, dict | None]:
    try:
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot open {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, path, exc.lineno) from exc
    return model_from_dict(d)


# ---------------------------------------------------------------------------
# CSV artifacts


def _cell(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return fmt_float(v) if math.isfinite(v) else ""
    return str(v)


def csv_text(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buf = []
    w = csv.writer(_ListWriter(buf), lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_cell(v) for v in r])
    return "".join(buf)


class _ListWriter:
    def __init__(self, buf: list[str]):
        self.buf = buf

    def write(self, s: str) -> None:
        self.buf.append(s)
