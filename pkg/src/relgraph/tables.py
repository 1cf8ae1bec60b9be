"""Delimiter-separated table reader.

Format: UTF-8, header row, first column ``id``, ``;``-separated list cells.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .errors import DuplicateId, ParseFailure, RaggedRow, DataError
from .graph import NodeInstance
from .schema import TEXT, Kind, NodeType

LIST_SEP = ";"
# plain decimal literals only: int()/float() would also take "1_000", "inf", "nan"
_INT_RE = re.compile(r"[+-]?\d+")
_REAL_RE = re.compile(r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")


@dataclass
class TableSource:
    path: Path
    delimiter: str = ","

    @classmethod
    def for_file(cls, path) -> "TableSource":
        path = Path(path)
        return cls(path, "\t" if path.suffix in (".tsv", ".tab") else ",")


def _parse_scalar(text: str, kind: Kind):
    s = kind.scalar
    if s == "text":
        return text
    if s == "int":
        t = text.strip()
        if not _INT_RE.fullmatch(t):
            raise ValueError(f"not an integer: {text!r}")
        return int(t)
    if s == "real":
        t = text.strip()
        if not _REAL_RE.fullmatch(t):
            raise ValueError(f"not a real: {text!r}")
        return float(t)
    if s == "bool":
        t = text.strip().lower()
        if t in ("true", "1", "yes"):
            return True
        if t in ("false", "0", "no"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    raise ValueError(f"unknown kind {kind}")


def parse_cell(text: str, kind: Kind):
    if kind.is_list:
        if text == "":
            return []
        return [_parse_scalar(part, kind.element()) for part in text.split(LIST_SEP)]
    return _parse_scalar(text, kind)


def read_table(source, node: NodeType, column_kinds: Optional[dict] = None) -> list[NodeInstance]:
    """One instance per row; cells typed by ``column_kinds`` (default text).

    The id is also stored as the ``id`` attribute so sensors can match on it.
    """
    if not isinstance(source, TableSource):
        source = TableSource.for_file(source)
    kinds = column_kinds or {}
    path = source.path
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open table: {exc.strerror}", path) from None
    with fh:
        reader = csv.reader(fh, delimiter=source.delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError("empty table (no header row)", path, 1) from None
        if not header or header[0] != "id":
            raise DataError("first column must be 'id'", path, 1)
        if len(set(header)) != len(header):
            raise DataError("duplicate column names", path, 1)
        columns = [(col, kinds.get(col, TEXT)) for col in header[1:]]
        out = []
        seen = {}
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != len(header):
                raise RaggedRow(f"expected {len(header)} cells, got {len(row)}", path, line)
            ident = row[0]
            if ident in seen:
                raise DuplicateId(f"duplicate id {ident!r} (first on line {seen[ident]})", path, line)
            seen[ident] = line
            attrs = {"id": ident}
            for (col, kind), cell in zip(columns, row[1:]):
                try:
                    attrs[col] = parse_cell(cell, kind)
                except ValueError:
                    raise ParseFailure(f"cannot parse {cell!r} as {kind}", path, line, col) from None
            out.append(NodeInstance(node, ident, attrs))
    return out


def write_table(path, header: list, rows: list, delimiter: str = ",") -> None:
    """Write rows with list cells joined by ``;``; used by the synthetic generator."""

    def cell(v):
        t = type(v)
        if t is str:
            return v
        if t is float:
            return repr(v)
        if isinstance(v, (list, tuple)):
            return LIST_SEP.join(cell(x) for x in v)
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, float):
            return repr(v)
        return str(v)

    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([cell(v) for v in r])
