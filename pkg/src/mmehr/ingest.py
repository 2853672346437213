"""Stay-level linkage of source tables and the master-dataset layout.

Patients, admissions, and ICU stays are joined on their key identifiers;
timestamped event rows are attached to stays either by a direct stay_id
or by interval containment within [intime, outtime]. The resulting master
dataset is one record per ICU stay, serialized to a directory layout that
round-trips exactly:

    stays.csv      one stay per row: keys, demographics, admission outcome
    events.bin     per-stay blocks of numeric timed events (little-endian)
    variables.csv  variable index -> variable id
    notes.csv      note index: stay_id, seq, offset_hours, file
    notes/         one UTF-8 text file per note, <stay_id>_<seq>.txt
    images.csv     stay_id, offset_hours, image path
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

from .tables import Table, write_csv, read_csv

EVENT_STRUCT = struct.Struct("<dId")  # offset_hours f64, variable index u32, value f64
BLOCK_HEADER = struct.Struct("<II")  # stay index u32, event count u32


@dataclass(frozen=True)
class StayKey:
    stay_id: int
    hadm_id: int
    subject_id: int
    intime: float  # epoch seconds
    outtime: float

    def __post_init__(self):
        if not self.intime < self.outtime:
            raise ValueError(f"stay {self.stay_id}: intime must precede outtime")

    @property
    def length_hours(self) -> float:
        return (self.outtime - self.intime) / 3600.0


@dataclass(frozen=True)
class Demographics:
    age_years: float
    gender: str
    race: str


@dataclass(frozen=True)
class AdmissionOutcome:
    admittime: float
    dischtime: float
    deathtime: float | None
    expire_flag: int | None


@dataclass(frozen=True)
class TimedEvent:
    stay_id: int
    offset_hours: float
    variable_id: str
    value: float
    kind: str = "vital"


@dataclass(frozen=True)
class Note:
    offset_hours: float
    seq: int
    text: str


@dataclass(frozen=True)
class ImageRef:
    offset_hours: float
    path: str


@dataclass
class StayRecord:
    key: StayKey
    demographics: Demographics
    outcome: AdmissionOutcome
    vitals: list[TimedEvent] = field(default_factory=list)
    notes: list[Note] = field(default_factory=list)
    images: list[ImageRef] = field(default_factory=list)

    @property
    def stay_id(self) -> int:
        return self.key.stay_id


@dataclass
class MasterDataset:
    stays: list[StayRecord]

    def __post_init__(self):
        self.stays = sorted(self.stays, key=lambda s: s.stay_id)

    def __len__(self) -> int:
        return len(self.stays)

    def by_id(self) -> dict[int, StayRecord]:
        return {s.stay_id: s for s in self.stays}


@dataclass
class LinkResult:
    stays: list[tuple[StayKey, Demographics, AdmissionOutcome]]
    rejects: list[dict]


def _age_at_admission(patient: dict, admittime: float) -> float:
    """Age in years at admission from either anchor fields or a dob column."""
    from .tables import _EPOCH
    from datetime import timedelta

    if patient.get("anchor_age") is not None and patient.get("anchor_year") is not None:
        admit_year = (_EPOCH + timedelta(seconds=admittime)).year
        return float(patient["anchor_age"]) + (admit_year - int(patient["anchor_year"]))
    if patient.get("dob") is not None:
        return (admittime - float(patient["dob"])) / (365.25 * 86400.0)
    raise KeyError("patients table needs anchor_age/anchor_year or dob")


def link_stays(patients: Table, admissions: Table, icustays: Table) -> LinkResult:
    """Resolve each ICU stay against its admission and patient rows.

    Stays whose hadm_id or subject_id cannot be resolved are not fatal:
    they are excluded and reported in the rejects list with a reason.
    """
    by_subject = {r["subject_id"]: r for r in patients.rows}
    by_hadm = {r["hadm_id"]: r for r in admissions.rows}

    stays: list[tuple[StayKey, Demographics, AdmissionOutcome]] = []
    rejects: list[dict] = []
    for row in icustays.rows:
        adm = by_hadm.get(row["hadm_id"])
        pat = by_subject.get(row["subject_id"])
        if adm is None or pat is None:
            rejects.append(
                {
                    "stay_id": row["stay_id"],
                    "reason": "unresolved_hadm_id" if adm is None else "unresolved_subject_id",
                }
            )
            continue
        if adm["subject_id"] != row["subject_id"]:
            rejects.append({"stay_id": row["stay_id"], "reason": "subject_mismatch"})
            continue
        key = StayKey(
            stay_id=row["stay_id"],
            hadm_id=row["hadm_id"],
            subject_id=row["subject_id"],
            intime=row["intime"],
            outtime=row["outtime"],
        )
        demo = Demographics(
            age_years=_age_at_admission(pat, adm["admittime"]),
            gender=pat.get("gender") or "",
            race=adm.get("race") or pat.get("race") or "UNKNOWN",
        )
        outcome = AdmissionOutcome(
            admittime=adm["admittime"],
            dischtime=adm["dischtime"],
            deathtime=adm.get("deathtime"),
            expire_flag=adm.get("hospital_expire_flag"),
        )
        stays.append((key, demo, outcome))
    stays.sort(key=lambda t: t[0].stay_id)
    return LinkResult(stays=stays, rejects=rejects)


@dataclass
class AttachResult:
    streams: dict[int, list]
    orphans: int
    attached: int


def _sort_events(events: list) -> list:
    # total order: offset, then variable id where present, then insertion order
    return sorted(
        enumerate(events),
        key=lambda t: (t[1][0], getattr(t[1][1], "variable_id", ""), t[0]),
    )


def attach_events(stays: list[StayKey], events: Table, event_kind: str) -> AttachResult:
    """Assign timestamped rows to stays and convert to offsets.

    A row carrying stay_id is matched directly; otherwise the row's
    (hadm_id, timestamp) is matched by containment in [intime, outtime].
    When two stays of the same admission both contain the timestamp, the
    one with the later intime wins. Events outside every interval are
    orphans: counted, never silently dropped.
    """
    by_stay = {s.stay_id: s for s in stays}
    by_hadm: dict[int, list[StayKey]] = {}
    for s in stays:
        by_hadm.setdefault(s.hadm_id, []).append(s)

    streams: dict[int, list] = {s.stay_id: [] for s in stays}
    orphans = 0
    attached = 0
    for row in events.rows:
        ts = row.get("charttime")
        stay = None
        if row.get("stay_id") is not None:
            stay = by_stay.get(row["stay_id"])
        elif row.get("hadm_id") is not None and ts is not None:
            candidates = [
                s for s in by_hadm.get(row["hadm_id"], []) if s.intime <= ts <= s.outtime
            ]
            if candidates:
                stay = max(candidates, key=lambda s: s.intime)
        if stay is None or ts is None or not (stay.intime <= ts <= stay.outtime):
            orphans += 1
            continue
        offset = (ts - stay.intime) / 3600.0
        if event_kind == "vital":
            item = TimedEvent(stay.stay_id, offset, row["variable_id"], row["value"])
        elif event_kind == "note":
            item = (offset, row["text"])
        elif event_kind == "image":
            item = (offset, row["image_path"])
        else:
            raise ValueError(f"unknown event kind: {event_kind}")
        streams[stay.stay_id].append(item)
        attached += 1

    for stay_id, items in streams.items():
        if event_kind == "vital":
            items.sort(key=lambda e: (e.offset_hours, e.variable_id))
        else:
            ordered = sorted(enumerate(items), key=lambda t: (t[1][0], t[0]))
            streams[stay_id] = [item for _, item in ordered]
    return AttachResult(streams=streams, orphans=orphans, attached=attached)


def build_master(
    linked: LinkResult,
    vitals: AttachResult | None = None,
    notes: AttachResult | None = None,
    images: AttachResult | None = None,
) -> MasterDataset:
    """Assemble one StayRecord per linked stay, ordered by stay_id."""
    records = []
    for key, demo, outcome in linked.stays:
        note_stream = notes.streams.get(key.stay_id, []) if notes else []
        image_stream = images.streams.get(key.stay_id, []) if images else []
        records.append(
            StayRecord(
                key=key,
                demographics=demo,
                outcome=outcome,
                vitals=list(vitals.streams.get(key.stay_id, [])) if vitals else [],
                notes=[Note(off, seq, text) for seq, (off, text) in enumerate(note_stream)],
                images=[ImageRef(off, path) for off, path in image_stream],
            )
        )
    return MasterDataset(records)


STAYS_HEADER = [
    "stay_id",
    "hadm_id",
    "subject_id",
    "intime",
    "outtime",
    "age_years",
    "gender",
    "race",
    "admittime",
    "dischtime",
    "deathtime",
    "hospital_expire_flag",
]


def write_master(master: MasterDataset, out_dir: str | Path) -> None:
    """Serialize to the master-dataset layout; byte-identical for equal inputs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "notes").mkdir(exist_ok=True)

    stay_rows = []
    for s in master.stays:
        stay_rows.append(
            [
                s.key.stay_id,
                s.key.hadm_id,
                s.key.subject_id,
                repr(s.key.intime),
                repr(s.key.outtime),
                repr(s.demographics.age_years),
                s.demographics.gender,
                s.demographics.race,
                repr(s.outcome.admittime),
                repr(s.outcome.dischtime),
                "" if s.outcome.deathtime is None else repr(s.outcome.deathtime),
                "" if s.outcome.expire_flag is None else s.outcome.expire_flag,
            ]
        )
    write_csv(out / "stays.csv", STAYS_HEADER, stay_rows)

    variable_ids = sorted({e.variable_id for s in master.stays for e in s.vitals})
    var_index = {v: i for i, v in enumerate(variable_ids)}
    write_csv(out / "variables.csv", ["index", "variable_id"], [[i, v] for v, i in sorted(var_index.items(), key=lambda t: t[1])])

    with (out / "events.bin").open("wb") as fh:
        for idx, s in enumerate(master.stays):
            fh.write(BLOCK_HEADER.pack(idx, len(s.vitals)))
            for e in s.vitals:
                fh.write(EVENT_STRUCT.pack(e.offset_hours, var_index[e.variable_id], e.value))

    note_rows = []
    for s in master.stays:
        for note in s.notes:
            fname = f"{s.stay_id}_{note.seq}.txt"
            (out / "notes" / fname).write_text(note.text, encoding="utf-8")
            note_rows.append([s.stay_id, note.seq, repr(note.offset_hours), fname])
    write_csv(out / "notes.csv", ["stay_id", "seq", "offset_hours", "file"], note_rows)

    image_rows = [
        [s.stay_id, repr(img.offset_hours), img.path]
        for s in master.stays
        for img in s.images
    ]
    write_csv(out / "images.csv", ["stay_id", "offset_hours", "image_path"], image_rows)


def read_master(in_dir: str | Path) -> MasterDataset:
    src = Path(in_dir)
    _, stay_rows = read_csv(src / "stays.csv")
    records: list[StayRecord] = []
    for r in stay_rows:
        key = StayKey(int(r[0]), int(r[1]), int(r[2]), float(r[3]), float(r[4]))
        demo = Demographics(float(r[5]), r[6], r[7])
        outcome = AdmissionOutcome(
            admittime=float(r[8]),
            dischtime=float(r[9]),
            deathtime=float(r[10]) if r[10] else None,
            expire_flag=int(r[11]) if r[11] else None,
        )
        records.append(StayRecord(key=key, demographics=demo, outcome=outcome))

    _, var_rows = read_csv(src / "variables.csv")
    variables = {int(i): v for i, v in var_rows}

    with (src / "events.bin").open("rb") as fh:
        data = fh.read()
    pos = 0
    while pos < len(data):
        stay_idx, count = BLOCK_HEADER.unpack_from(data, pos)
        pos += BLOCK_HEADER.size
        stay = records[stay_idx]
        for _ in range(count):
            offset, var_idx, value = EVENT_STRUCT.unpack_from(data, pos)
            pos += EVENT_STRUCT.size
            stay.vitals.append(TimedEvent(stay.stay_id, offset, variables[var_idx], value))

    by_id = {s.stay_id: s for s in records}
    _, note_rows = read_csv(src / "notes.csv")
    for stay_id, seq, offset, fname in note_rows:
        text = (src / "notes" / fname).read_text(encoding="utf-8")
        by_id[int(stay_id)].notes.append(Note(float(offset), int(seq), text))
    _, image_rows = read_csv(src / "images.csv")
    for stay_id, offset, path in image_rows:
        by_id[int(stay_id)].images.append(ImageRef(float(offset), path))
    return MasterDataset(records)


def clip_stay(stay: StayRecord, window_hours: float) -> StayRecord:
    """Restrict all timed streams to the half-open window [0, window_hours)."""
    return replace(
        stay,
        vitals=[e for e in stay.vitals if 0.0 <= e.offset_hours < window_hours],
        notes=[n for n in stay.notes if 0.0 <= n.offset_hours < window_hours],
        images=[i for i in stay.images if 0.0 <= i.offset_hours < window_hours],
    )


def ingest_report(
    linked: LinkResult,
    parsed_counts: dict[str, int],
    attach_results: dict[str, AttachResult],
) -> dict:
    report = {
        "stays_linked": len(linked.stays),
        "stays_rejected": len(linked.rejects),
        "rejects": linked.rejects,
        "events": {},
    }
    for kind, result in sorted(attach_results.items()):
        parsed = parsed_counts[kind]
        if parsed != result.attached + result.orphans:
            raise AssertionError(f"{kind}: parsed {parsed} != attached+orphans")
        report["events"][kind] = {
            "parsed": parsed,
            "attached": result.attached,
            "orphans": result.orphans,
        }
    return report


def save_report(report: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
