"""Adapter command line.

The pipeline invokes every external encoder the same way:

    <command> --input <master_dir> --output <manifest_dir> --window-hours <H>

and expects exit 0 plus the manifest layout in the output directory.
Encoder choice and hyperparameters are baked into <command>, e.g.

    ehr-encode --encoder gru --hidden-size 1024 --epochs 5

The GRU path trains on the stays of the supplied master (mortality label
derived from the outcome columns), saves its checkpoint next to the
manifest, then embeds every stay with at least one windowed event.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import dataio, manifest, pretrained
from .gru import EmptySequence, GruEncoderConfig, encode_gru, train_gru_encoder

GRU_CHECKPOINT = "gru_checkpoint.pt"


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="ehr-encode",
        description="Embed ICU stays from a master-dataset directory into an embedding manifest.",
    )
    p.add_argument("--input", required=True, help="master-dataset directory")
    p.add_argument("--output", required=True, help="manifest output directory")
    p.add_argument("--window-hours", required=True, type=float, help="observation window [0, H)")
    p.add_argument(
        "--encoder",
        default="gru",
        choices=["gru"] + sorted(pretrained.REGISTRY),
        help="which encoder to run (default: gru)",
    )
    p.add_argument("--name", default=None, help="encoder_name for the manifest header")
    p.add_argument("--modality", default=None, help="override the manifest modality tag")
    p.add_argument("--hidden-size", type=int, default=1024)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--learning-rate", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    return p


def _run_gru(args: argparse.Namespace) -> tuple[str, list[int], np.ndarray]:
    ts = dataio.read_timeseries(args.input, window_hours=args.window_hours)
    sequences = dataio.build_sequences(ts)
    config = GruEncoderConfig(
        hidden_size=args.hidden_size,
        epochs=args.epochs,
        learning_rate=args.learning_rate,
        batch_size=args.batch_size,
        seed=args.seed,
    )
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    encoder = train_gru_encoder(
        sequences, ts.labels, config, checkpoint_path=out / GRU_CHECKPOINT
    )
    ids, vectors = encode_gru(encoder, sequences)
    return "timeseries", ids, vectors


def _run_pretrained(args: argparse.Namespace) -> tuple[str, list[int], np.ndarray]:
    spec = pretrained.get_spec(args.encoder)
    if spec.constant:
        ts = dataio.read_timeseries(args.input, window_hours=args.window_hours)
        inputs = {sid: ["*"] for sid in ts.stay_ids}
    elif spec.modality == "text":
        notes = dataio.read_notes(args.input, window_hours=args.window_hours)
        inputs = {sid: [text for _, text in items] for sid, items in notes.items()}
    else:
        images = dataio.read_images(args.input, window_hours=args.window_hours)
        inputs = {sid: [path for _, path in items] for sid, items in images.items()}
    ids, vectors = pretrained.encode_pretrained(spec.modality, args.encoder, inputs)
    return spec.modality, ids, vectors


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.encoder == "gru":
            modality, ids, vectors = _run_gru(args)
        else:
            modality, ids, vectors = _run_pretrained(args)
        if not ids:
            print(f"{args.encoder}: no stay produced an embedding", file=sys.stderr)
            return 1
        manifest.write_manifest(
            args.output,
            args.modality or modality,
            args.name or args.encoder,
            ids,
            vectors,
        )
    except (dataio.MasterFormatError, manifest.ManifestWriteError, EmptySequence) as exc:
        print(f"{args.encoder}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"{args.encoder}: {exc}", file=sys.stderr)
        return 1
    print(f"{args.encoder}: wrote {len(ids)} embeddings to {args.output}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
