#!/usr/bin/env python3
"""Exercise the chat-endpoint evaluation loop against the built-in mock.

Builds a small cohort, starts the scripted mock endpoint in-process,
renders prompts for the held-out stays, and prints the scored report.
Useful for checking prompt rendering and scoring without any real
model behind the URL; point lvlm.base_url at a live endpoint to run
the same loop for real.
"""

import argparse
import json
import sys
from pathlib import Path

from mmehr.config import load_config
from mmehr.lvlm import MockEndpoint
from mmehr.pipeline import Pipeline


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--root", default="lvlm_run")
    ap.add_argument("--patients", type=int, default=60)
    ap.add_argument("--max-instances", type=int, default=20)
    ap.add_argument(
        "--reply",
        default="Yes.",
        help="what the mock answers when a stay has no scripted reply",
    )
    ap.add_argument("--task", choices=("mortality", "los"), default="mortality")
    args = ap.parse_args()

    root = Path(args.root)
    root.mkdir(parents=True, exist_ok=True)

    base = {
        "paths": {"input_dir": "input", "work_dir": "work"},
        "synth": {"n_patients": args.patients, "seed": 3},
        "split": {"seed": 7},
        "evaluation": {"seed": 11, "n_boot": 50},
        "task": args.task,
    }
    cfg = root / "config.json"
    cfg.write_text(json.dumps(base, indent=2) + "\n", encoding="utf-8")
    pipeline = Pipeline(load_config(cfg))
    pipeline.run_synth()
    pipeline.run_ingest()
    pipeline.run_cohort()

    with MockEndpoint({"default": args.reply}) as url:
        base["lvlm"] = {
            "base_url": url,
            "timeout_s": 10.0,
            "backoff_base_s": 0.1,
            "max_instances": args.max_instances,
        }
        cfg.write_text(json.dumps(base, indent=2) + "\n", encoding="utf-8")
        Pipeline(load_config(cfg)).run_lvlm_eval()

    report = json.loads((root / "work" / "lvlm" / "lvlm_report.json").read_text())
    print(json.dumps(report, indent=2, sort_keys=True))
    print(f"\nper-call log: {root / 'work' / 'lvlm' / 'lvlm_log.jsonl'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
