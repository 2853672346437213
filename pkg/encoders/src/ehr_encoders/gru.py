"""GRU stay encoder.

A single-layer GRU consumes the chronological timestep sequence built by
``dataio.sequence_features`` (values, observation mask, time since last
observation per variable). Training attaches a linear classification head
and minimizes binary cross-entropy on the task label; the head is thrown
away afterwards and the embedding of a stay is the final hidden state.

Everything runs on CPU with a single thread so that the same seed gives
bitwise-identical embeddings run to run.
"""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn


class NonConvergence(UserWarning):
    """Mean training loss failed to improve from one epoch to the next."""


class EmptySequence(ValueError):
    """A stay with no windowed events has no sequence to encode."""


@dataclass
class GruEncoderConfig:
    hidden_size: int = 1024
    epochs: int = 5
    learning_rate: float = 1e-3
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.hidden_size <= 0:
            raise ValueError(f"hidden_size must be positive, got {self.hidden_size}")
        if self.epochs <= 0:
            raise ValueError(f"epochs must be positive, got {self.epochs}")
        if self.learning_rate < 0:
            raise ValueError(f"learning_rate must be nonnegative, got {self.learning_rate}")
        if self.batch_size <= 0:
            raise ValueError(f"batch_size must be positive, got {self.batch_size}")


class _GruWithHead(nn.Module):
    def __init__(self, input_size: int, hidden_size: int):
        super().__init__()
        self.gru = nn.GRU(input_size, hidden_size, batch_first=True)
        self.head = nn.Linear(hidden_size, 1)

    def final_hidden(self, padded: torch.Tensor, lengths: torch.Tensor) -> torch.Tensor:
        packed = nn.utils.rnn.pack_padded_sequence(
            padded, lengths, batch_first=True, enforce_sorted=False
        )
        _, h_n = self.gru(packed)
        return h_n[-1]

    def forward(self, padded: torch.Tensor, lengths: torch.Tensor) -> torch.Tensor:
        return self.head(self.final_hidden(padded, lengths)).squeeze(-1)


@dataclass
class GruEncoder:
    """A trained encoder: the GRU weights plus how they were obtained."""

    gru: nn.GRU
    config: GruEncoderConfig
    input_size: int
    loss_log: list[float] = field(default_factory=list)


def _pad_batch(seqs: list[np.ndarray]) -> tuple[torch.Tensor, torch.Tensor]:
    lengths = torch.tensor([len(s) for s in seqs], dtype=torch.int64)
    width = seqs[0].shape[1]
    padded = torch.zeros((len(seqs), int(lengths.max()), width), dtype=torch.float32)
    for i, s in enumerate(seqs):
        padded[i, : len(s)] = torch.from_numpy(np.asarray(s, dtype=np.float32))
    return padded, lengths


def train_gru_encoder(
    sequences: dict[int, np.ndarray],
    labels: dict[int, int | None],
    config: GruEncoderConfig,
    checkpoint_path: str | Path | None = None,
) -> GruEncoder:
    """Fit the GRU on the supplied stays and return the bare encoder.

    Stays with an empty sequence or without a usable label are skipped for
    training (they can still be encoded later). The per-epoch mean loss is
    recorded in ``loss_log``; the first epoch that fails to improve on its
    predecessor raises a NonConvergence warning but training continues.
    """
    usable = sorted(
        sid for sid, seq in sequences.items() if len(seq) > 0 and labels.get(sid) is not None
    )
    if not usable:
        raise EmptySequence("no stay has both windowed events and a label")
    input_size = sequences[usable[0]].shape[1]

    torch.manual_seed(config.seed)
    torch.set_num_threads(1)
    model = _GruWithHead(input_size, config.hidden_size)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    criterion = nn.BCEWithLogitsLoss(reduction="mean")
    shuffle = np.random.default_rng(config.seed)

    loss_log: list[float] = []
    warned = False
    for _ in range(config.epochs):
        order = shuffle.permutation(len(usable))
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            batch_ids = [usable[i] for i in order[start : start + config.batch_size]]
            padded, lengths = _pad_batch([sequences[sid] for sid in batch_ids])
            target = torch.tensor([float(labels[sid]) for sid in batch_ids])
            optimizer.zero_grad()
            loss = criterion(model(padded, lengths), target)
            loss.backward()
            optimizer.step()
            total += float(loss.item()) * len(batch_ids)
        loss_log.append(total / len(usable))
        if not warned and len(loss_log) >= 2 and loss_log[-1] >= loss_log[-2]:
            warnings.warn(
                f"epoch {len(loss_log)} loss {loss_log[-1]:.6f} did not improve "
                f"on {loss_log[-2]:.6f}",
                NonConvergence,
                stacklevel=2,
            )
            warned = True

    encoder = GruEncoder(
        gru=model.gru.eval(), config=config, input_size=input_size, loss_log=loss_log
    )
    if checkpoint_path is not None:
        save_checkpoint(encoder, checkpoint_path)
    return encoder


def encode_gru(encoder: GruEncoder, sequences: dict[int, np.ndarray]) -> tuple[list[int], np.ndarray]:
    """Embed every encodable stay; returns (stay_ids, float32 [N, hidden]).

    Stays whose sequence is empty are omitted, by ascending stay_id, which
    downstream consumers see as a coverage gap rather than a zero vector.
    """
    torch.set_num_threads(1)
    ids: list[int] = []
    rows: list[np.ndarray] = []
    with torch.no_grad():
        for sid in sorted(sequences):
            seq = sequences[sid]
            if len(seq) == 0:
                continue
            x = torch.from_numpy(np.asarray(seq, dtype=np.float32)).unsqueeze(0)
            _, h_n = encoder.gru(x)
            rows.append(h_n[-1, 0].numpy().astype("<f4"))
            ids.append(sid)
    if not rows:
        return [], np.zeros((0, encoder.config.hidden_size), dtype="<f4")
    return ids, np.stack(rows)


def save_checkpoint(encoder: GruEncoder, path: str | Path) -> None:
    """Persist weights together with the config and seed that made them."""
    torch.save(
        {
            "config": asdict(encoder.config),
            "input_size": encoder.input_size,
            "loss_log": list(encoder.loss_log),
            "gru_state": encoder.gru.state_dict(),
        },
        str(path),
    )


def load_checkpoint(path: str | Path) -> GruEncoder:
    payload = torch.load(str(path), weights_only=True)
    config = GruEncoderConfig(**payload["config"])
    gru = nn.GRU(payload["input_size"], config.hidden_size, batch_first=True)
    gru.load_state_dict(payload["gru_state"])
    return GruEncoder(
        gru=gru.eval(),
        config=config,
        input_size=payload["input_size"],
        loss_log=list(payload["loss_log"]),
    )
