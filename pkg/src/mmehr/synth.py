"""Desk-scale synthetic source tables with known generative ground truth.

A latent severity score per stay drives the vital-sign trajectories and,
together with an independent text latent, the mortality outcome through
a logistic model whose coefficients are written to synth_truth.json. The
text latent controls which signal tokens appear in the notes, so text
embeddings can carry label information the structured features do not.
Everything is drawn from one seeded generator in a fixed order, making
repeated runs byte-identical.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from .tables import format_timestamp, write_csv
from .structured import DEFAULT_VARIABLES, DEFAULT_RANGES, VariableRangeTable

POSITIVE_TOKENS = (
    "deteriorating",
    "hypotension",
    "sepsis",
    "intubated",
    "vasopressors",
    "unresponsive",
    "hemorrhage",
    "critical",
)
NEGATIVE_TOKENS = (
    "stable",
    "improving",
    "extubated",
    "alert",
    "ambulating",
    "comfortable",
    "baseline",
    "tolerating",
)

# baseline mean, per-unit-severity shift, and observation noise per variable
_VITAL_MODEL = {
    "heart_rate": (85.0, 18.0, 6.0),
    "sbp": (120.0, -16.0, 7.0),
    "dbp": (70.0, -9.0, 5.0),
    "map": (87.0, -12.0, 5.0),
    "resp_rate": (17.0, 4.5, 2.0),
    "spo2": (96.5, -2.2, 1.0),
    "temperature": (37.0, 0.6, 0.3),
    "glucose": (120.0, 28.0, 18.0),
    "gcs_eye": (3.7, -0.7, 0.3),
    "gcs_verbal": (4.5, -1.0, 0.4),
    "gcs_motor": (5.6, -0.9, 0.3),
    "fio2": (0.38, 0.14, 0.05),
    "urine_rate": (80.0, -25.0, 15.0),
}

_BASE_TIME = 1546300800  # 2019-01-01 00:00:00


@dataclass(frozen=True)
class SynthConfig:
    n_patients: int = 400
    stays_per_patient_mean: float = 0.25  # extra stays beyond the first
    vitals_rate_per_hour: float = 2.0
    vitals_missingness: float = 0.15  # chance a variable is absent for a stay
    outlier_rate: float = 0.01
    notes_per_stay_mean: float = 2.0
    note_missingness: float = 0.1
    images_per_stay_mean: float = 1.2
    image_missingness: float = 0.2
    mortality_intercept: float = -2.6
    severity_coef: float = 4.0
    text_coef: float = 0.8
    token_sharpness: float = 3.0
    los_log_mean: float = math.log(60.0)  # hours
    los_log_std: float = 0.55
    los_severity_coef: float = 0.35
    seed: int = 0

    def __post_init__(self):
        for name in ("vitals_missingness", "outlier_rate", "note_missingness", "image_missingness"):
            val = getattr(self, name)
            if not 0.0 <= val <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        for name in ("n_patients", "vitals_rate_per_hour", "notes_per_stay_mean", "images_per_stay_mean"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


GENDERS = ("F", "M")
RACES = (
    "WHITE",
    "BLACK/AFRICAN AMERICAN",
    "HISPANIC/LATINO - PUERTO RICAN",
    "ASIAN - CHINESE",
    "OTHER",
    "UNKNOWN",
)


def generate(config: SynthConfig, out_dir: str | Path) -> dict:
    """Write the six source tables, image placeholders, schemas, ranges,
    and the ground-truth file. Returns the truth dict."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "images").mkdir(exist_ok=True)
    rng = np.random.default_rng(config.seed)

    patient_rows = []
    admission_rows = []
    stay_rows = []
    vital_rows = []
    note_rows = []
    image_rows = []
    truth_stays = {}

    next_hadm = 100000
    next_stay = 200000
    next_row = 1
    next_note = 1
    next_image = 1

    for pi in range(config.n_patients):
        subject_id = 10000 + pi
        gender = GENDERS[int(rng.integers(0, len(GENDERS)))]
        race = RACES[int(rng.integers(0, len(RACES)))]
        anchor_age = int(rng.integers(18, 92))
        anchor_year = 2019
        patient_rows.append([subject_id, gender, anchor_age, anchor_year])

        n_stays = 1 + int(rng.poisson(config.stays_per_patient_mean))
        for _ in range(n_stays):
            hadm_id = next_hadm
            next_hadm += 1
            stay_id = next_stay
            next_stay += 1

            severity = float(rng.standard_normal())
            text_latent = float(rng.standard_normal())

            los_hours = float(
                np.exp(
                    config.los_log_mean
                    + config.los_severity_coef * severity
                    + config.los_log_std * rng.standard_normal()
                )
            )
            los_hours = max(6.0, min(los_hours, 24.0 * 21))

            intime = _BASE_TIME + int(rng.integers(0, 4 * 365)) * 86400 + int(
                rng.integers(0, 86400)
            )
            outtime = intime + int(round(los_hours * 3600))
            admit = intime - int(rng.integers(2 * 3600, 48 * 3600))
            disch = outtime + int(rng.integers(12 * 3600, 96 * 3600))

            logit = (
                config.mortality_intercept
                + config.severity_coef * severity
                + config.text_coef * text_latent
            )
            p_death = _sigmoid(logit)
            died = bool(rng.random() < p_death)
            if died:
                span = disch - outtime
                deathtime = outtime + int(rng.random() * max(span - 1, 1))
                disch = deathtime
            else:
                deathtime = None

            admission_rows.append(
                [
                    hadm_id,
                    subject_id,
                    format_timestamp(admit),
                    format_timestamp(disch),
                    format_timestamp(deathtime) if deathtime is not None else "",
                    1 if died else 0,
                    race,
                ]
            )
            stay_rows.append(
                [stay_id, hadm_id, subject_id, format_timestamp(intime), format_timestamp(outtime)]
            )

            # vitals over the observed head of the stay, some past 24h so
            # window clipping has work to do
            obs_hours = min(los_hours, 36.0)
            for var in DEFAULT_VARIABLES:
                if rng.random() < config.vitals_missingness:
                    continue
                base, slope, noise = _VITAL_MODEL[var]
                n_events = int(rng.poisson(config.vitals_rate_per_hour * obs_hours))
                if n_events == 0:
                    continue
                offsets = np.sort(rng.random(n_events)) * obs_hours
                for off in offsets:
                    value = base + slope * severity + noise * float(rng.standard_normal())
                    lo, hi = DEFAULT_RANGES[var]
                    value = float(min(max(value, lo), hi))
                    if rng.random() < config.outlier_rate:
                        value = hi * 10.0 + 5.0
                    # attach by stay_id for half the rows, by interval match
                    # for the rest, to exercise both ingest paths
                    direct = rng.random() < 0.5
                    charttime = intime + int(round(off * 3600))
                    vital_rows.append(
                        [
                            next_row,
                            stay_id if direct else "",
                            hadm_id,
                            format_timestamp(charttime),
                            var,
                            repr(round(value, 4)),
                        ]
                    )
                    next_row += 1

            n_notes = 0
            if rng.random() >= config.note_missingness:
                n_notes = int(rng.poisson(config.notes_per_stay_mean))
            for k in range(n_notes):
                off = float(rng.random()) * min(los_hours, 30.0)
                n_tokens = int(rng.integers(4, 9))
                p_pos = _sigmoid(config.token_sharpness * text_latent)
                tokens = [
                    POSITIVE_TOKENS[int(rng.integers(0, len(POSITIVE_TOKENS)))]
                    if rng.random() < p_pos
                    else NEGATIVE_TOKENS[int(rng.integers(0, len(NEGATIVE_TOKENS)))]
                    for _ in range(n_tokens)
                ]
                text = (
                    f"Radiology report {k + 1}. Patient is "
                    + " ".join(tokens)
                    + " on assessment."
                )
                charttime = intime + int(round(off * 3600))
                note_rows.append(
                    [next_note, "", hadm_id, format_timestamp(charttime), text]
                )
                next_note += 1

            n_images = 0
            if rng.random() >= config.image_missingness:
                n_images = int(rng.poisson(config.images_per_stay_mean))
            for k in range(n_images):
                off = float(rng.random()) * min(los_hours, 30.0)
                rel = f"images/{stay_id}_{k}.png"
                (out / rel).write_bytes(f"placeholder image {stay_id} {k}\n".encode())
                charttime = intime + int(round(off * 3600))
                image_rows.append(
                    [next_image, stay_id, hadm_id, format_timestamp(charttime), rel]
                )
                next_image += 1

            truth_stays[str(stay_id)] = {
                "severity": severity,
                "text_latent": text_latent,
                "p_death": p_death,
                "died": died,
                "los_hours": los_hours,
            }

    write_csv(out / "patients.csv", ["subject_id", "gender", "anchor_age", "anchor_year"], patient_rows)
    write_csv(
        out / "admissions.csv",
        ["hadm_id", "subject_id", "admittime", "dischtime", "deathtime", "hospital_expire_flag", "race"],
        admission_rows,
    )
    write_csv(out / "icustays.csv", ["stay_id", "hadm_id", "subject_id", "intime", "outtime"], stay_rows)
    write_csv(
        out / "vitals.csv",
        ["row_id", "stay_id", "hadm_id", "charttime", "variable_id", "value"],
        vital_rows,
    )
    write_csv(out / "notes.csv", ["note_id", "stay_id", "hadm_id", "charttime", "text"], note_rows)
    write_csv(
        out / "images.csv",
        ["image_id", "stay_id", "hadm_id", "charttime", "image_path"],
        image_rows,
    )
    VariableRangeTable.default().save(out / "ranges.csv")

    truth = {
        "config": asdict(config),
        "coefficients": {
            "intercept": config.mortality_intercept,
            "severity": config.severity_coef,
            "text": config.text_coef,
        },
        "n_stays": len(truth_stays),
        "stays": truth_stays,
    }
    (out / "synth_truth.json").write_text(
        json.dumps(truth, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return truth


SOURCE_SCHEMAS = {
    "patients": {
        "columns": [
            ("subject_id", "integer"),
            ("gender", "categorical"),
            ("anchor_age", "integer"),
            ("anchor_year", "integer"),
        ],
        "key": ["subject_id"],
    },
    "admissions": {
        "columns": [
            ("hadm_id", "integer"),
            ("subject_id", "integer"),
            ("admittime", "timestamp"),
            ("dischtime", "timestamp"),
            ("deathtime", "timestamp"),
            ("hospital_expire_flag", "integer"),
            ("race", "categorical"),
        ],
        "key": ["hadm_id"],
    },
    "icustays": {
        "columns": [
            ("stay_id", "integer"),
            ("hadm_id", "integer"),
            ("subject_id", "integer"),
            ("intime", "timestamp"),
            ("outtime", "timestamp"),
        ],
        "key": ["stay_id"],
    },
    "vitals": {
        "columns": [
            ("row_id", "integer"),
            ("stay_id", "integer"),
            ("hadm_id", "integer"),
            ("charttime", "timestamp"),
            ("variable_id", "text"),
            ("value", "float"),
        ],
        "key": ["row_id"],
    },
    "notes": {
        "columns": [
            ("note_id", "integer"),
            ("stay_id", "integer"),
            ("hadm_id", "integer"),
            ("charttime", "timestamp"),
            ("text", "text"),
        ],
        "key": ["note_id"],
    },
    "images": {
        "columns": [
            ("image_id", "integer"),
            ("stay_id", "integer"),
            ("hadm_id", "integer"),
            ("charttime", "timestamp"),
            ("image_path", "text"),
        ],
        "key": ["image_id"],
    },
}


def source_schemas():
    """SourceSchema objects for the six generated tables."""
    from .tables import SourceSchema, Column

    out = {}
    for name, spec in SOURCE_SCHEMAS.items():
        out[name] = SourceSchema(
            table_name=name,
            columns=tuple(Column(n, k) for n, k in spec["columns"]),
            key_columns=tuple(spec["key"]),
        )
    return out
