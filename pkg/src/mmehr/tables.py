"""Schema-checked CSV table parsing.

Source tables are UTF-8, comma-delimited, RFC-4180 quoted CSV with a header
row. Timestamps use the ``YYYY-MM-DD HH:MM:SS`` wall-clock format and are
normalized to UTC-naive epoch seconds at parse time so that no timezone
logic survives past this module.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path

from .errors import DataError

TIMESTAMP_FORMAT = "%Y-%m-%d %H:%M:%S"
_EPOCH = datetime(1970, 1, 1)

COLUMN_KINDS = ("integer", "float", "text", "timestamp", "categorical")


class TableError(DataError):
    pass


class MissingColumn(TableError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"missing column: {name}")


class UnexpectedColumn(TableError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"unexpected column: {name}")


class TypeCoercionError(TableError):
    def __init__(self, row: int, column: str, value: str = ""):
        self.row = row
        self.column = column
        super().__init__(f"row {row}, column {column!r}: cannot coerce {value!r}")


class DuplicateKey(TableError):
    def __init__(self, key: tuple):
        self.key = key
        super().__init__(f"duplicate key: {key}")


def parse_timestamp(text: str) -> float:
    """Parse ``YYYY-MM-DD HH:MM:SS`` into UTC-naive epoch seconds."""
    dt = datetime.strptime(text, TIMESTAMP_FORMAT)
    return (dt - _EPOCH).total_seconds()


def format_timestamp(seconds: float) -> str:
    return (_EPOCH + timedelta(seconds=seconds)).strftime(TIMESTAMP_FORMAT)


@dataclass(frozen=True)
class Column:
    name: str
    kind: str


@dataclass
class SourceSchema:
    table_name: str
    columns: list[Column]
    key_columns: list[str] = field(default_factory=list)

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise ValueError(f"{self.table_name}: duplicate column names")
        for c in self.columns:
            if c.kind not in COLUMN_KINDS:
                raise ValueError(f"{self.table_name}.{c.name}: unknown kind {c.kind!r}")
        for k in self.key_columns:
            if k not in names:
                raise ValueError(f"{self.table_name}: key column {k!r} not declared")

    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]

    def to_dict(self) -> dict:
        return {
            "table_name": self.table_name,
            "columns": [{"name": c.name, "kind": c.kind} for c in self.columns],
            "key_columns": list(self.key_columns),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SourceSchema":
        return cls(
            table_name=data["table_name"],
            columns=[Column(c["name"], c["kind"]) for c in data["columns"]],
            key_columns=list(data.get("key_columns", [])),
        )


@dataclass
class Table:
    name: str
    schema: SourceSchema
    rows: list[dict]

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> list:
        return [r[name] for r in self.rows]


def _coerce(value: str, kind: str, row: int, column: str):
    if value == "":
        return None
    try:
        if kind == "integer":
            return int(value)
        if kind == "float":
            return float(value)
        if kind == "timestamp":
            return parse_timestamp(value)
    except ValueError:
        raise TypeCoercionError(row, column, value) from None
    return value  # text / categorical pass through


def parse_table(path: str | Path, schema: SourceSchema) -> Table:
    """Parse one CSV file against its declared schema.

    The header must contain exactly the schema's column names (any order).
    Values are coerced to the declared kinds; empty fields become None,
    except in key columns where they are a coercion error.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TableError(f"{path}: empty file, header row required") from None
        declared = set(schema.column_names())
        seen = set(header)
        for name in schema.column_names():
            if name not in seen:
                raise MissingColumn(name)
        for name in header:
            if name not in declared:
                raise UnexpectedColumn(name)

        kinds = {c.name: c.kind for c in schema.columns}
        rows: list[dict] = []
        seen_keys: set[tuple] = set()
        for i, raw in enumerate(reader, start=1):
            if len(raw) != len(header):
                raise TableError(f"{path}: row {i} has {len(raw)} fields, expected {len(header)}")
            row = {
                name: _coerce(value, kinds[name], i, name)
                for name, value in zip(header, raw)
            }
            if schema.key_columns:
                key = tuple(row[k] for k in schema.key_columns)
                if any(v is None for v in key):
                    raise TypeCoercionError(i, schema.key_columns[key.index(None)], "")
                if key in seen_keys:
                    raise DuplicateKey(key)
                seen_keys.add(key)
            rows.append(row)
    return Table(schema.table_name, schema, rows)


def write_csv(path: str | Path, header: list[str], rows: list[list]) -> None:
    """Write a CSV with deterministic bytes (LF newlines, minimal quoting)."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def read_csv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, list(reader)


def load_schemas(path: str | Path) -> dict[str, SourceSchema]:
    """Load a schema file: {"tables": [{table_name, columns, key_columns, ...}]}."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    out = {}
    for entry in data["tables"]:
        schema = SourceSchema.from_dict(entry)
        out[schema.table_name] = schema
    return out


def save_schemas(path: str | Path, schemas: dict[str, SourceSchema]) -> None:
    payload = {"tables": [schemas[k].to_dict() for k in sorted(schemas)]}
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
