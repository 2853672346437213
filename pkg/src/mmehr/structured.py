"""Vitals cleaning, imputation, hourly binning, demographic encoding.

The time-series path works on a per-stay panel: one (offset, value,
observed) series per variable. Outlier removal marks values missing;
forward imputation fills values while leaving the observed mask alone, so
binned means are always computed over genuinely observed values. The
binned grid is flattened variable-major, giving the fixed structured
embedding (13 default variables x 24 hourly bins = 312 features).

Standardization and vocabulary statistics are computed once on the
training split and frozen to featurizer_state.json so inference can never
leak test-set information.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError
from .ingest import StayRecord, TimedEvent
from .cohort import map_race
from .tables import write_csv, read_csv

DEFAULT_VARIABLES = (
    "heart_rate",
    "sbp",
    "dbp",
    "map",
    "resp_rate",
    "spo2",
    "temperature",
    "glucose",
    "gcs_eye",
    "gcs_verbal",
    "gcs_motor",
    "fio2",
    "urine_rate",
)

DEFAULT_RANGES = {
    "heart_rate": (20.0, 250.0),
    "sbp": (30.0, 300.0),
    "dbp": (10.0, 200.0),
    "map": (20.0, 250.0),
    "resp_rate": (2.0, 80.0),
    "spo2": (50.0, 100.0),
    "temperature": (25.0, 45.0),
    "glucose": (20.0, 1000.0),
    "gcs_eye": (1.0, 4.0),
    "gcs_verbal": (1.0, 5.0),
    "gcs_motor": (1.0, 6.0),
    "fio2": (0.21, 1.0),
    "urine_rate": (0.0, 2000.0),
}


class RangeTableError(DataError):
    pass


@dataclass(frozen=True)
class VariableRangeTable:
    ranges: dict[str, tuple[float, float]]

    def __post_init__(self):
        for var, (lo, hi) in self.ranges.items():
            if not lo < hi:
                raise RangeTableError(f"{var}: min_valid {lo} must be < max_valid {hi}")

    @classmethod
    def default(cls) -> "VariableRangeTable":
        return cls(dict(DEFAULT_RANGES))

    def save(self, path: str | Path) -> None:
        rows = [[v, repr(lo), repr(hi)] for v, (lo, hi) in sorted(self.ranges.items())]
        write_csv(path, ["variable_id", "min_valid", "max_valid"], rows)

    @classmethod
    def load(cls, path: str | Path) -> "VariableRangeTable":
        header, rows = read_csv(path)
        if header != ["variable_id", "min_valid", "max_valid"]:
            raise RangeTableError(f"unexpected ranges header: {header}")
        return cls({v: (float(lo), float(hi)) for v, lo, hi in rows})


@dataclass(frozen=True)
class PanelEntry:
    offset_hours: float
    value: float | None
    observed: bool


@dataclass
class SeriesPanel:
    """Per-variable event series for one stay, each sorted by offset."""

    series: dict[str, list[PanelEntry]]

    @classmethod
    def from_events(cls, events: list[TimedEvent]) -> "SeriesPanel":
        series: dict[str, list[PanelEntry]] = {}
        for e in sorted(events, key=lambda e: (e.offset_hours, e.variable_id)):
            series.setdefault(e.variable_id, []).append(
                PanelEntry(e.offset_hours, e.value, True)
            )
        return cls(series)

    def observed_values(self, variable_id: str) -> list[float]:
        return [e.value for e in self.series.get(variable_id, []) if e.observed]


def remove_outliers(panel: SeriesPanel, ranges: VariableRangeTable) -> tuple[SeriesPanel, int]:
    """Mark values outside their valid range as missing; bounds inclusive.

    Variables without a range entry are passed through unfiltered with a
    warning, since absent bounds mean no procedure was configured.
    """
    removed = 0
    out: dict[str, list[PanelEntry]] = {}
    unranged = []
    for var, entries in panel.series.items():
        bounds = ranges.ranges.get(var)
        if bounds is None:
            unranged.append(var)
            out[var] = list(entries)
            continue
        lo, hi = bounds
        cleaned = []
        for e in entries:
            if e.observed and e.value is not None and not (lo <= e.value <= hi):
                cleaned.append(PanelEntry(e.offset_hours, None, False))
                removed += 1
            else:
                cleaned.append(e)
        out[var] = cleaned
    if unranged:
        warnings.warn(f"no valid range configured for: {sorted(unranged)}", stacklevel=2)
    return SeriesPanel(out), removed


def forward_impute(panel: SeriesPanel) -> SeriesPanel:
    """Fill each missing value with the latest prior observed value.

    The observed mask is untouched: an imputed entry carries a value but
    still counts as missing wherever observation masks matter. Leading
    missing values stay valueless.
    """
    out: dict[str, list[PanelEntry]] = {}
    for var, entries in panel.series.items():
        last: float | None = None
        filled = []
        for e in entries:
            if e.observed:
                last = e.value
                filled.append(e)
            elif last is not None:
                filled.append(PanelEntry(e.offset_hours, last, False))
            else:
                filled.append(e)
        out[var] = filled
    return SeriesPanel(out)


@dataclass
class HourlyGrid:
    values: np.ndarray  # [V, H] float64
    mask: np.ndarray  # [V, H] uint8, 1 iff the bin saw >= 1 observation
    variables: tuple[str, ...]

    def flatten(self) -> np.ndarray:
        return self.values.reshape(-1).copy()


def fixed_interval_aggregate(
    panel: SeriesPanel,
    variables: tuple[str, ...] = DEFAULT_VARIABLES,
    bin_hours: float = 1.0,
    horizon_hours: float = 24.0,
    variable_means: dict[str, float] | None = None,
) -> HourlyGrid:
    """Bin each variable into fixed intervals and average observed values.

    Empty bins are filled by forward-filling along the hour axis, then by
    the training-split variable mean, then by 0. The mask records which
    bins actually saw data. Output is [V, H] with H = horizon / bin width.
    """
    n_bins = int(round(horizon_hours / bin_hours))
    if abs(n_bins * bin_hours - horizon_hours) > 1e-9 or n_bins <= 0:
        raise ValueError("horizon_hours must be a positive multiple of bin_hours")
    values = np.zeros((len(variables), n_bins), dtype=np.float64)
    mask = np.zeros((len(variables), n_bins), dtype=np.uint8)
    means = variable_means or {}
    for vi, var in enumerate(variables):
        sums = np.zeros(n_bins)
        counts = np.zeros(n_bins, dtype=np.int64)
        for e in panel.series.get(var, []):
            if not e.observed or e.value is None:
                continue
            if not (0.0 <= e.offset_hours < horizon_hours):
                continue
            b = int(e.offset_hours // bin_hours)
            sums[b] += e.value
            counts[b] += 1
        fill = means.get(var, 0.0)
        last = None
        for b in range(n_bins):
            if counts[b] > 0:
                cell = sums[b] / counts[b]
                mask[vi, b] = 1
                last = cell
            elif last is not None:
                cell = last
            else:
                cell = fill
            values[vi, b] = cell
    return HourlyGrid(values=values, mask=mask, variables=tuple(variables))


@dataclass
class TrainStats:
    """Frozen training-split statistics for standardization and fills."""

    variable_means: dict[str, float]
    age_mean: float
    age_std: float
    gender_vocab: tuple[str, ...]
    race_vocab: tuple[str, ...]
    n_train: int
    provenance: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "variable_means": dict(sorted(self.variable_means.items())),
            "age_mean": self.age_mean,
            "age_std": self.age_std,
            "gender_vocab": list(self.gender_vocab),
            "race_vocab": list(self.race_vocab),
            "n_train": self.n_train,
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainStats":
        return cls(
            variable_means=dict(d["variable_means"]),
            age_mean=d["age_mean"],
            age_std=d["age_std"],
            gender_vocab=tuple(d["gender_vocab"]),
            race_vocab=tuple(d["race_vocab"]),
            n_train=d["n_train"],
            provenance=dict(d.get("provenance", {})),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )

    @classmethod
    def load(cls, path: str | Path) -> "TrainStats":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def compute_train_stats(
    train_stays: list[StayRecord],
    variables: tuple[str, ...] = DEFAULT_VARIABLES,
    ranges: VariableRangeTable | None = None,
    provenance: dict | None = None,
) -> TrainStats:
    """Single pass over the training split only; result is deterministic."""
    ranges = ranges or VariableRangeTable.default()
    sums = {v: 0.0 for v in variables}
    counts = {v: 0 for v in variables}
    ages = []
    genders = set()
    races = set()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for stay in train_stays:
            panel, _ = remove_outliers(SeriesPanel.from_events(stay.vitals), ranges)
            for var in variables:
                for val in panel.observed_values(var):
                    sums[var] += val
                    counts[var] += 1
            ages.append(stay.demographics.age_years)
            genders.add(stay.demographics.gender)
            races.add(map_race(stay.demographics.race))
    means = {v: (sums[v] / counts[v] if counts[v] else 0.0) for v in variables}
    age_arr = np.asarray(ages, dtype=np.float64)
    return TrainStats(
        variable_means=means,
        age_mean=float(age_arr.mean()) if len(age_arr) else 0.0,
        age_std=float(age_arr.std()) if len(age_arr) else 0.0,
        gender_vocab=tuple(sorted(genders)),
        race_vocab=tuple(sorted(races)),
        n_train=len(train_stays),
        provenance=provenance or {},
    )


def encode_demographics(demo, stats: TrainStats) -> np.ndarray:
    """Standardized age, then one-hot gender and race with unknown slots.

    Order: [age] + gender vocab + gender-unknown + race vocab +
    race-unknown. A zero training std yields 0 for the standardized value.
    """
    if stats.age_std > 0:
        age = (demo.age_years - stats.age_mean) / stats.age_std
    else:
        warnings.warn("age std is 0 on the training split; emitting 0", stacklevel=2)
        age = 0.0
    parts = [age]
    parts.extend(_one_hot(demo.gender, stats.gender_vocab))
    parts.extend(_one_hot(map_race(demo.race), stats.race_vocab))
    return np.asarray(parts, dtype=np.float64)


def _one_hot(value: str, vocab: tuple[str, ...]) -> list[float]:
    enc = [0.0] * (len(vocab) + 1)
    if value in vocab:
        enc[vocab.index(value)] = 1.0
    else:
        enc[-1] = 1.0
    return enc


def demographics_dim(stats: TrainStats) -> int:
    return 1 + (len(stats.gender_vocab) + 1) + (len(stats.race_vocab) + 1)


@dataclass(frozen=True)
class StructuredConfig:
    variables: tuple[str, ...] = DEFAULT_VARIABLES
    bin_hours: float = 1.0
    horizon_hours: float = 24.0
    include_demographics: bool = False

    def grid_dim(self) -> int:
        return len(self.variables) * int(round(self.horizon_hours / self.bin_hours))


def featurize_stay(
    stay: StayRecord,
    stats: TrainStats,
    config: StructuredConfig = StructuredConfig(),
    ranges: VariableRangeTable | None = None,
) -> np.ndarray:
    """The full structured path for one stay: clean, bin, flatten, append.

    Output length is constant across stays: V x H plus the demographic
    block when enabled.
    """
    ranges = ranges or VariableRangeTable.default()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        panel, _ = remove_outliers(SeriesPanel.from_events(stay.vitals), ranges)
    grid = fixed_interval_aggregate(
        panel,
        variables=config.variables,
        bin_hours=config.bin_hours,
        horizon_hours=config.horizon_hours,
        variable_means=stats.variable_means,
    )
    vec = grid.flatten()
    if config.include_demographics:
        vec = np.concatenate([vec, encode_demographics(stay.demographics, stats)])
    return vec
