"""Command-line entry point: one config file, one subcommand per stage.

Exit codes: 0 success, 2 config error, 3 data/staleness error, 4
external encoder or endpoint failure.
"""

from __future__ import annotations

import argparse
import sys

from .errors import ConfigError, DataError, ExternalFailure, StaleInput
from .config import load_config
from .pipeline import Pipeline

COMMANDS = (
    "synth",
    "ingest",
    "cohort",
    "featurize",
    "encode",
    "train",
    "evaluate",
    "lvlm-eval",
    "report",
    "run-all",
)

CONFIG_HELP = """\
config keys (JSON; override any key with --section.key=value):
  paths.input_dir            source tables directory (required)
  paths.work_dir             pipeline output directory (required)
  cohort.min_age_years       minimum age at admission (default 18)
  cohort.min_stay_hours      minimum ICU stay length (default 0)
  cohort.required_modalities subset of [vitals, images, notes] (default [])
  cohort.window_hours        observation window (default 24)
  cohort.exclude_early_death drop stays with death inside the window (default false)
  featurizer.variables       vital variable ids (default: the 13 built-ins)
  featurizer.bin_hours       aggregation bin width (default 1)
  featurizer.horizon_hours   aggregation horizon (default 24)
  featurizer.include_demographics  append demographic block (default false)
  encoders                   list of {name, modality, dimension, kind, command, seed}
  task                       mortality | los (default mortality)
  model.l2                   L2 penalty; default 1/N_train
  model.max_iter, model.tol  optimizer limits (default 1000, 1e-6)
  split.by                   stay | patient (default stay)
  split.seed                 split seed (required)
  split.train_fraction       default 0.8
  evaluation.seed            bootstrap seed (required)
  evaluation.n_boot          bootstrap resamples (default 1000)
  evaluation.threshold       classification threshold (default 0.5)
  evaluation.fairness_attributes  subset of [gender, race, age_band]
  synth                      synthetic generator settings (enables `synth`)
  lvlm.base_url              chat endpoint URL (enables `lvlm-eval`)
  lvlm.model, lvlm.auth_env, lvlm.timeout_s, lvlm.max_retries,
  lvlm.concurrency, lvlm.max_images, lvlm.redact_prompts,
  lvlm.refusal_policy, lvlm.max_instances
"""


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="mmehr",
        description="Multimodal EHR benchmarking pipeline.",
        epilog=CONFIG_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="path to the JSON run config")
    args, extra = parser.parse_known_args(argv)

    overrides = []
    for item in extra:
        if item.startswith("--") and "=" in item:
            overrides.append(item[2:])
        else:
            parser.error(f"unrecognized argument: {item}")

    try:
        config = load_config(args.config, overrides)
        pipeline = Pipeline(config)
        if args.command == "run-all":
            results = pipeline.run_all()
        else:
            runner = {
                "synth": pipeline.run_synth,
                "ingest": pipeline.run_ingest,
                "cohort": pipeline.run_cohort,
                "featurize": pipeline.run_featurize,
                "encode": pipeline.run_encode,
                "train": pipeline.run_train,
                "evaluate": pipeline.run_evaluate,
                "lvlm-eval": pipeline.run_lvlm_eval,
                "report": pipeline.run_report,
            }[args.command]
            results = [runner()]
    except ConfigError as exc:
        print(f"config error ({exc.field_path}): {exc}", file=sys.stderr)
        return 2
    except StaleInput as exc:
        print(f"stale input: {exc}", file=sys.stderr)
        return 3
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except ExternalFailure as exc:
        print(f"external failure: {exc}", file=sys.stderr)
        return 4

    for r in results:
        print(f"{r.name}: {r.status}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
