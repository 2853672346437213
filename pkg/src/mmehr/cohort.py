"""Cohort selection, observation-window clipping, task labels, subgroups.

Selection criteria are applied in a fixed order (age, minimum stay length,
required modalities, optional early-death exclusion) so the exclusion tally
is reproducible. Labels are pure functions of the stay and its admission
record. Subgroup attributes (gender, coarse race group, age band) feed the
fairness metrics downstream.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import DataError
from .ingest import MasterDataset, StayRecord, Demographics, AdmissionOutcome, clip_stay


class EmptyCohort(DataError):
    """Every stay was excluded by the selection criteria."""


class MissingOutcomeField(DataError):
    """Neither a death timestamp nor an expire flag is available."""


VALID_MODALITIES = ("vitals", "images", "notes")

RACE_GROUPS = ("White", "Black", "Hispanic", "Asian", "Other")

# Prefix aliases, checked against the uppercased source string in order.
_RACE_PREFIXES = [
    ("WHITE", "White"),
    ("PORTUGUESE", "White"),
    ("BLACK", "Black"),
    ("HISPANIC", "Hispanic"),
    ("SOUTH AMERICAN", "Hispanic"),
    ("ASIAN", "Asian"),
]

AGE_BANDS = ("18-44", "45-64", "65-79", "80+")
_AGE_EDGES = (18.0, 45.0, 65.0, 80.0)


@dataclass(frozen=True)
class CohortCriteria:
    min_age_years: float = 18.0
    min_stay_hours: float = 0.0
    required_modalities: frozenset[str] = frozenset()
    window_hours: float = 24.0
    exclude_early_death: bool = False

    def __post_init__(self):
        if self.min_age_years < 0:
            raise ValueError("min_age_years must be >= 0")
        if self.window_hours <= 0:
            raise ValueError("window_hours must be > 0")
        unknown = set(self.required_modalities) - set(VALID_MODALITIES)
        if unknown:
            raise ValueError(f"unknown modalities: {sorted(unknown)}")


@dataclass(frozen=True)
class GroupLabels:
    gender: str
    race: str
    age_band: str


@dataclass
class LabeledStay:
    stay: StayRecord  # events clipped to the window
    mortality_label: int
    los_label: int
    groups: GroupLabels

    @property
    def stay_id(self) -> int:
        return self.stay.stay_id


@dataclass
class CohortResult:
    cohort: list[StayRecord]
    tally: dict[str, int] = field(default_factory=dict)

    def report(self) -> dict:
        return {
            "retained": len(self.cohort),
            "excluded": dict(self.tally),
            "excluded_total": sum(self.tally.values()),
        }


def _has_modality(stay: StayRecord, modality: str) -> bool:
    if modality == "vitals":
        return len(stay.vitals) > 0
    if modality == "images":
        return len(stay.images) > 0
    if modality == "notes":
        return len(stay.notes) > 0
    raise ValueError(f"unknown modality: {modality}")


def apply_cohort(master: MasterDataset, criteria: CohortCriteria) -> CohortResult:
    """Filter stays, tallying exclusions per criterion in application order.

    Each stay is charged to the first criterion it fails, so the tally
    counts are disjoint and sum to the number excluded.
    """
    tally = {"age": 0, "min_stay": 0, "modality": 0}
    if criteria.exclude_early_death:
        tally["early_death"] = 0
    kept: list[StayRecord] = []
    for stay in master.stays:
        if stay.demographics.age_years < criteria.min_age_years:
            tally["age"] += 1
            continue
        if stay.key.length_hours < criteria.min_stay_hours:
            tally["min_stay"] += 1
            continue
        if any(not _has_modality(stay, m) for m in sorted(criteria.required_modalities)):
            tally["modality"] += 1
            continue
        if criteria.exclude_early_death:
            death = stay.outcome.deathtime
            if death is not None and death < stay.key.intime + criteria.window_hours * 3600.0:
                tally["early_death"] += 1
                continue
        kept.append(stay)
    if not kept:
        raise EmptyCohort("no stays satisfy the cohort criteria")
    return CohortResult(cohort=kept, tally=tally)


def clip_window(stay: StayRecord, window_hours: float) -> StayRecord:
    """Keep only events in the half-open window [0, window_hours).

    An event exactly at the boundary is excluded so chained windows never
    double-count. Relative order of retained events is preserved.
    """
    return clip_stay(stay, window_hours)


def label_mortality(stay: StayRecord, outcome: AdmissionOutcome | None = None) -> int:
    """1 iff the patient died during the same hospital admission.

    Death is either a death timestamp inside [admittime, dischtime] or a
    discharge flagged as in-hospital death. Death after discharge is 0.
    """
    out = outcome if outcome is not None else stay.outcome
    if out.deathtime is None and out.expire_flag is None:
        raise MissingOutcomeField(f"stay {stay.stay_id}: no death timestamp or expire flag")
    died_in_admission = (
        out.deathtime is not None and out.admittime <= out.deathtime <= out.dischtime
    )
    flagged = out.expire_flag == 1
    return 1 if (died_in_admission or flagged) else 0


def label_los(stay: StayRecord, threshold_days: float = 3.0) -> int:
    """1 iff the ICU stay strictly exceeds the threshold in days."""
    los_days = (stay.key.outtime - stay.key.intime) / 86400.0
    return 1 if los_days > threshold_days else 0


def map_race(raw: str) -> str:
    text = (raw or "").strip().upper()
    for prefix, group in _RACE_PREFIXES:
        if text.startswith(prefix):
            return group
    return "Other"


def age_band(age_years: float) -> str:
    if age_years < _AGE_EDGES[0]:
        return "under-18"
    if age_years < _AGE_EDGES[1]:
        return AGE_BANDS[0]
    if age_years < _AGE_EDGES[2]:
        return AGE_BANDS[1]
    if age_years < _AGE_EDGES[3]:
        return AGE_BANDS[2]
    return AGE_BANDS[3]


def assign_groups(demo: Demographics) -> GroupLabels:
    return GroupLabels(
        gender=demo.gender,
        race=map_race(demo.race),
        age_band=age_band(demo.age_years),
    )


def label_stays(cohort: list[StayRecord], criteria: CohortCriteria) -> list[LabeledStay]:
    """Clip each retained stay to the window and attach labels and groups."""
    labeled = []
    for stay in cohort:
        clipped = clip_window(stay, criteria.window_hours)
        labeled.append(
            LabeledStay(
                stay=clipped,
                mortality_label=label_mortality(stay),
                los_label=label_los(stay),
                groups=assign_groups(stay.demographics),
            )
        )
    return labeled
