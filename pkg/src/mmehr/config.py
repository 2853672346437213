"""Run configuration: one JSON file with per-stage sections.

Every knob lives in the config; command-line overrides address keys by
dotted path (`--evaluation.seed=7`). Validation errors carry the field
path of the offending key. The canonical config hash feeds provenance
tracking so stages can tell when their inputs changed.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

from .errors import ConfigError
from .cohort import CohortCriteria
from .structured import StructuredConfig, DEFAULT_VARIABLES
from .manifests import EncoderSpec, MODALITIES
from .synth import SynthConfig
from .lvlm import EndpointConfig

FAIRNESS_ATTRIBUTES = ("gender", "race", "age_band")


@dataclass
class RunConfig:
    input_dir: str
    work_dir: str
    cohort: CohortCriteria = field(default_factory=CohortCriteria)
    featurizer: StructuredConfig = field(default_factory=StructuredConfig)
    encoders: list[EncoderSpec] = field(default_factory=list)
    task: str = "mortality"
    l2: float | None = None
    max_iter: int = 1000
    tol: float = 1e-6
    split_by: str = "stay"
    split_seed: int | None = None
    train_fraction: float = 0.8
    n_boot: int = 1000
    eval_seed: int | None = None
    threshold: float = 0.5
    fairness_attributes: tuple[str, ...] = FAIRNESS_ATTRIBUTES
    synth: SynthConfig | None = None
    lvlm: EndpointConfig | None = None
    lvlm_max_instances: int = 50


_SECTIONS = ("paths", "cohort", "featurizer", "encoders", "task", "model", "split", "evaluation", "synth", "lvlm")


def _require(raw: dict, section: str, key: str):
    if section not in raw or not isinstance(raw[section], dict) or key not in raw[section]:
        raise ConfigError(f"{section}.{key}", "required key is missing")
    return raw[section][key]


def _optional(raw: dict, section: str, key: str, default):
    return raw.get(section, {}).get(key, default)


def load_config(path: str | Path, overrides: list[str] | None = None) -> RunConfig:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError("paths", f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"config is not valid JSON: {exc}") from exc
    if overrides:
        raw = apply_overrides(raw, overrides)
    return parse_config(raw, base_dir=Path(path).resolve().parent)


def apply_overrides(raw: dict, overrides: list[str]) -> dict:
    """Apply `section.key=value` overrides; values parse as JSON when they can."""
    raw = json.loads(json.dumps(raw))  # deep copy
    for item in overrides:
        if "=" not in item:
            raise ConfigError(item, "override must look like section.key=value")
        dotted, value = item.split("=", 1)
        dotted = dotted.lstrip("-")
        try:
            parsed = json.loads(value)
        except json.JSONDecodeError:
            parsed = value
        node = raw
        parts = dotted.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(dotted, "override path crosses a non-object value")
        node[parts[-1]] = parsed
    return raw


def parse_config(raw: dict, base_dir: Path | None = None) -> RunConfig:
    unknown = set(raw) - set(_SECTIONS)
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown config section")

    input_dir = _require(raw, "paths", "input_dir")
    work_dir = _require(raw, "paths", "work_dir")
    if base_dir is not None:
        input_dir = str((base_dir / input_dir).resolve()) if not Path(input_dir).is_absolute() else input_dir
        work_dir = str((base_dir / work_dir).resolve()) if not Path(work_dir).is_absolute() else work_dir

    try:
        cohort = CohortCriteria(
            min_age_years=float(_optional(raw, "cohort", "min_age_years", 18.0)),
            min_stay_hours=float(_optional(raw, "cohort", "min_stay_hours", 0.0)),
            required_modalities=frozenset(_optional(raw, "cohort", "required_modalities", [])),
            window_hours=float(_optional(raw, "cohort", "window_hours", 24.0)),
            exclude_early_death=bool(_optional(raw, "cohort", "exclude_early_death", False)),
        )
    except ValueError as exc:
        raise ConfigError("cohort", str(exc)) from exc

    try:
        featurizer = StructuredConfig(
            variables=tuple(_optional(raw, "featurizer", "variables", list(DEFAULT_VARIABLES))),
            bin_hours=float(_optional(raw, "featurizer", "bin_hours", 1.0)),
            horizon_hours=float(_optional(raw, "featurizer", "horizon_hours", 24.0)),
            include_demographics=bool(
                _optional(raw, "featurizer", "include_demographics", False)
            ),
        )
    except ValueError as exc:
        raise ConfigError("featurizer", str(exc)) from exc

    encoders = []
    seen_names = set()
    for i, enc in enumerate(raw.get("encoders", [])):
        path_prefix = f"encoders[{i}]"
        for req in ("name", "modality", "dimension"):
            if req not in enc:
                raise ConfigError(f"{path_prefix}.{req}", "required key is missing")
        if enc["modality"] not in MODALITIES:
            raise ConfigError(f"{path_prefix}.modality", f"must be one of {MODALITIES}")
        if enc["name"] in seen_names:
            raise ConfigError(f"{path_prefix}.name", "duplicate encoder name")
        seen_names.add(enc["name"])
        try:
            encoders.append(
                EncoderSpec(
                    name=enc["name"],
                    modality=enc["modality"],
                    dimension=int(enc["dimension"]),
                    kind=enc.get("kind", "native"),
                    command=tuple(enc.get("command", [])),
                    seed=int(enc.get("seed", 0)),
                )
            )
        except ValueError as exc:
            raise ConfigError(path_prefix, str(exc)) from exc

    task = raw.get("task", "mortality")
    if task not in ("mortality", "los"):
        raise ConfigError("task", "must be mortality or los")

    split_by = _optional(raw, "split", "by", "stay")
    if split_by not in ("stay", "patient"):
        raise ConfigError("split.by", "must be stay or patient")
    split_seed = _optional(raw, "split", "seed", None)
    if split_seed is None:
        raise ConfigError("split.seed", "required key is missing")
    train_fraction = float(_optional(raw, "split", "train_fraction", 0.8))
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError("split.train_fraction", "must be in (0, 1)")

    eval_seed = _optional(raw, "evaluation", "seed", None)
    if eval_seed is None:
        raise ConfigError("evaluation.seed", "required key is missing")
    n_boot = int(_optional(raw, "evaluation", "n_boot", 1000))
    if n_boot < 1:
        raise ConfigError("evaluation.n_boot", "must be >= 1")
    threshold = float(_optional(raw, "evaluation", "threshold", 0.5))
    if not 0.0 <= threshold <= 1.0:
        raise ConfigError("evaluation.threshold", "must be in [0, 1]")
    fairness = tuple(_optional(raw, "evaluation", "fairness_attributes", list(FAIRNESS_ATTRIBUTES)))
    for attr in fairness:
        if attr not in FAIRNESS_ATTRIBUTES:
            raise ConfigError("evaluation.fairness_attributes", f"unknown attribute {attr}")

    l2 = _optional(raw, "model", "l2", None)
    if l2 is not None:
        l2 = float(l2)
        if l2 <= 0:
            raise ConfigError("model.l2", "must be positive when set")
    max_iter = int(_optional(raw, "model", "max_iter", 1000))
    tol = float(_optional(raw, "model", "tol", 1e-6))

    synth = None
    if "synth" in raw:
        try:
            synth = SynthConfig(**raw["synth"])
        except (TypeError, ValueError) as exc:
            raise ConfigError("synth", str(exc)) from exc

    lvlm = None
    if "lvlm" in raw and raw["lvlm"].get("base_url"):
        known = {
            "base_url", "model", "auth_env", "timeout_s", "max_retries",
            "backoff_base_s", "concurrency", "max_images", "redact_prompts",
            "refusal_policy",
        }
        extra = {k: v for k, v in raw["lvlm"].items() if k in known}
        try:
            lvlm = EndpointConfig(**extra)
        except ValueError as exc:
            raise ConfigError("lvlm", str(exc)) from exc

    return RunConfig(
        input_dir=input_dir,
        work_dir=work_dir,
        cohort=cohort,
        featurizer=featurizer,
        encoders=encoders,
        task=task,
        l2=l2,
        max_iter=max_iter,
        tol=tol,
        split_by=split_by,
        split_seed=int(split_seed),
        train_fraction=train_fraction,
        n_boot=n_boot,
        eval_seed=int(eval_seed),
        threshold=threshold,
        fairness_attributes=fairness,
        synth=synth,
        lvlm=lvlm,
        lvlm_max_instances=int(_optional(raw, "lvlm", "max_instances", 50)),
    )


def config_hash(config: RunConfig) -> str:
    """Canonical hash over everything that affects pipeline outputs."""
    payload = asdict(config)
    payload["cohort"]["required_modalities"] = sorted(config.cohort.required_modalities)
    if payload.get("lvlm"):
        payload["lvlm"] = dict(payload["lvlm"])
    canonical = json.dumps(payload, sort_keys=True, default=list)
    return "sha256:" + hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def section_hash(config: RunConfig, *fields_used: str) -> str:
    """Hash of the named RunConfig fields, for per-stage provenance."""
    payload = {}
    full = asdict(config)
    full["cohort"]["required_modalities"] = sorted(config.cohort.required_modalities)
    for f in fields_used:
        payload[f] = full[f]
    canonical = json.dumps(payload, sort_keys=True, default=list)
    return "sha256:" + hashlib.sha256(canonical.encode("utf-8")).hexdigest()
