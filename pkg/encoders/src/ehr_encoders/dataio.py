"""Readers for the master-dataset directory layout.

This package talks to the benchmarking pipeline through files only: the
master layout coming in, the embedding-manifest layout going out. Nothing
here imports the pipeline, so the two sides can evolve independently as
long as the on-disk contract holds.

Master layout consumed here:

    stays.csv      one row per ICU stay; columns addressed by header name
    variables.csv  vitals variable index -> variable id
    events.bin     binary vitals stream, blocks of ``<II`` (stay row index,
                   event count) followed by ``<dId`` records (offset hours,
                   variable index, value)
    notes.csv      stay_id, seq, offset_hours, file (text under notes/)
    images.csv     stay_id, offset_hours, image_path
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

BLOCK_HEADER = struct.Struct("<II")
EVENT_STRUCT = struct.Struct("<dId")


class MasterFormatError(ValueError):
    """The input directory does not follow the master-dataset layout."""


@dataclass
class MasterTimeseries:
    """Windowed vitals for every stay, plus the label needed for training.

    ``events`` holds (offset_hours, variable_index, value) triples sorted
    chronologically; stays with nothing recorded inside the window map to
    an empty list. ``labels`` is in-hospital mortality where the outcome
    columns allow it, None otherwise.
    """

    stay_ids: list[int]
    variables: list[str]
    events: dict[int, list[tuple[float, int, float]]]
    labels: dict[int, int | None] = field(default_factory=dict)


def _read_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    if not path.is_file():
        raise MasterFormatError(f"missing table: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MasterFormatError(f"empty table: {path}") from None
        return header, list(reader)


def _column_index(header: list[str], names: tuple[str, ...], path: Path) -> dict[str, int]:
    missing = [n for n in names if n not in header]
    if missing:
        raise MasterFormatError(f"{path} lacks expected columns: {missing}")
    return {n: header.index(n) for n in names}


def _mortality_from_row(row: list[str], col: dict[str, int]) -> int | None:
    """In-hospital death: a death timestamp inside the admission, or the
    discharge flag set. Returns None when neither outcome field is filled."""
    death = row[col["deathtime"]]
    flag = row[col["hospital_expire_flag"]]
    if not death and not flag:
        return None
    died_in_admission = False
    if death:
        admit = float(row[col["admittime"]])
        discharge = float(row[col["dischtime"]])
        died_in_admission = admit <= float(death) <= discharge
    return 1 if (died_in_admission or (flag and int(flag) == 1)) else 0


def read_timeseries(master_dir: str | Path, window_hours: float | None = None) -> MasterTimeseries:
    """Load vitals events per stay, clipped to the half-open window [0, H)."""
    src = Path(master_dir)
    header, stay_rows = _read_csv(src / "stays.csv")
    col = _column_index(
        header,
        ("stay_id", "admittime", "dischtime", "deathtime", "hospital_expire_flag"),
        src / "stays.csv",
    )
    stay_ids = [int(r[col["stay_id"]]) for r in stay_rows]
    labels = {sid: _mortality_from_row(r, col) for sid, r in zip(stay_ids, stay_rows)}

    var_header, var_rows = _read_csv(src / "variables.csv")
    _column_index(var_header, ("index", "variable_id"), src / "variables.csv")
    variables = [""] * len(var_rows)
    for idx_s, var_id in var_rows:
        idx = int(idx_s)
        if not 0 <= idx < len(var_rows):
            raise MasterFormatError(f"variables.csv index {idx} out of range")
        variables[idx] = var_id

    events: dict[int, list[tuple[float, int, float]]] = {sid: [] for sid in stay_ids}
    bin_path = src / "events.bin"
    if not bin_path.is_file():
        raise MasterFormatError(f"missing event stream: {bin_path}")
    data = bin_path.read_bytes()
    pos = 0
    while pos < len(data):
        if pos + BLOCK_HEADER.size > len(data):
            raise MasterFormatError("events.bin ends inside a block header")
        stay_idx, count = BLOCK_HEADER.unpack_from(data, pos)
        pos += BLOCK_HEADER.size
        if stay_idx >= len(stay_ids):
            raise MasterFormatError(f"events.bin names stay row {stay_idx}, have {len(stay_ids)}")
        if pos + count * EVENT_STRUCT.size > len(data):
            raise MasterFormatError("events.bin ends inside an event block")
        bucket = events[stay_ids[stay_idx]]
        for _ in range(count):
            offset, var_idx, value = EVENT_STRUCT.unpack_from(data, pos)
            pos += EVENT_STRUCT.size
            if var_idx >= len(variables):
                raise MasterFormatError(f"event references variable index {var_idx}")
            if window_hours is None or 0.0 <= offset < window_hours:
                bucket.append((offset, var_idx, value))
    for bucket in events.values():
        bucket.sort(key=lambda e: (e[0], e[1]))
    return MasterTimeseries(stay_ids=stay_ids, variables=variables, events=events, labels=labels)


def read_notes(master_dir: str | Path, window_hours: float | None = None) -> dict[int, list[tuple[float, str]]]:
    """Note texts per stay as (offset_hours, text), chronological. Stays
    without notes in window are simply absent from the mapping."""
    src = Path(master_dir)
    header, rows = _read_csv(src / "notes.csv")
    col = _column_index(header, ("stay_id", "seq", "offset_hours", "file"), src / "notes.csv")
    out: dict[int, list[tuple[float, int, str]]] = {}
    for r in rows:
        offset = float(r[col["offset_hours"]])
        if window_hours is not None and not 0.0 <= offset < window_hours:
            continue
        text_path = src / "notes" / r[col["file"]]
        if not text_path.is_file():
            raise MasterFormatError(f"notes.csv references missing file {text_path.name}")
        out.setdefault(int(r[col["stay_id"]]), []).append(
            (offset, int(r[col["seq"]]), text_path.read_text(encoding="utf-8"))
        )
    return {
        sid: [(off, text) for off, _, text in sorted(triples)]
        for sid, triples in out.items()
    }


def read_images(master_dir: str | Path, window_hours: float | None = None) -> dict[int, list[tuple[float, str]]]:
    """Image references per stay as (offset_hours, path), chronological."""
    src = Path(master_dir)
    header, rows = _read_csv(src / "images.csv")
    col = _column_index(header, ("stay_id", "offset_hours", "image_path"), src / "images.csv")
    out: dict[int, list[tuple[float, str]]] = {}
    for r in rows:
        offset = float(r[col["offset_hours"]])
        if window_hours is not None and not 0.0 <= offset < window_hours:
            continue
        out.setdefault(int(r[col["stay_id"]]), []).append((offset, r[col["image_path"]]))
    for refs in out.values():
        refs.sort()
    return out


def sequence_features(events: list[tuple[float, int, float]], n_variables: int) -> np.ndarray:
    """Turn one stay's event triples into the GRU input sequence.

    One timestep per distinct offset, chronological. Each row concatenates
    three blocks of width ``n_variables``:

      values  last observed value of each variable (zero before the first
              observation; the mask disambiguates)
      mask    1 where the variable was observed at this exact timestep
      delta   hours since the variable was previously observed; zero until
              a variable has been seen once, and it keeps accumulating for
              variables that skip a timestep

    Returns float32 [T, 3V]; T = 0 for a stay with no events in window.
    """
    width = 3 * n_variables
    if not events:
        return np.zeros((0, width), dtype=np.float32)
    by_time: dict[float, list[tuple[int, float]]] = {}
    for offset, var_idx, value in events:
        by_time.setdefault(offset, []).append((var_idx, value))
    times = sorted(by_time)
    rows = np.zeros((len(times), width), dtype=np.float32)
    current = np.zeros(n_variables, dtype=np.float64)
    last_seen = np.full(n_variables, np.nan)
    for i, t in enumerate(times):
        seen = ~np.isnan(last_seen)
        delta = np.zeros(n_variables, dtype=np.float64)
        delta[seen] = t - last_seen[seen]
        mask = np.zeros(n_variables, dtype=np.float64)
        for var_idx, value in sorted(by_time[t]):
            current[var_idx] = value
            mask[var_idx] = 1.0
            last_seen[var_idx] = t
        rows[i, :n_variables] = current
        rows[i, n_variables : 2 * n_variables] = mask
        rows[i, 2 * n_variables :] = delta
    return rows


def build_sequences(ts: MasterTimeseries) -> dict[int, np.ndarray]:
    """Sequence features for every stay, keyed by stay_id."""
    n_vars = len(ts.variables)
    return {sid: sequence_features(ts.events[sid], n_vars) for sid in ts.stay_ids}
