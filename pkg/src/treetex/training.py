"""Joint training of the sequence decoder and the relation head."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tape
from .corpus import CorpusRecord
from .model import (
    Batch,
    JointModel,
    ModelConfig,
    make_batch,
    predict_parents_batch,
    seq_loss,
    struct_loss,
    total_loss,
)
from .optim import AdamState, adam_step
from .rng import stream
from .vocab import TokenSeq, Vocab


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 32
    lr: float = 1e-3
    lambda_struct: float = 1.0
    seed: int = 0


@dataclass
class EpochStats:
    epoch: int
    l_seq: float
    l_struct: float  # nan when the relation branch is off
    token_acc: float
    parent_acc: float  # nan when the relation branch is off

    def row(self) -> list[str]:
        return [
            str(self.epoch),
            f"{self.l_seq:.6f}",
            f"{self.l_struct:.6f}",
            f"{self.token_acc:.6f}",
            f"{self.parent_acc:.6f}",
        ]


LOG_HEADER = ["epoch", "L_seq", "L_struct", "token_acc", "parent_acc"]


def records_to_ids(records: list[CorpusRecord], vocab: Vocab) -> tuple[list[list[int]], list[list[int]]]:
    id_seqs = []
    parent_seqs = []
    for r in records:
        seq = TokenSeq.from_tokens(r.tokens, vocab)
        id_seqs.append(list(seq.ids))
        parent_seqs.append(list(r.parents))
    return id_seqs, parent_seqs


def _batch_metrics(model: JointModel, batch: Batch, logits, scores) -> tuple[float, float]:
    """Token accuracy over non-PAD targets; parent accuracy over
    contributing rows (nan when scores are unavailable)."""
    targets = batch.targets
    keep = targets != batch.pad_id
    pred_tok = logits.data.argmax(axis=-1)
    token_acc = float((pred_tok == targets)[keep].mean())
    if scores is None:
        return token_acc, float("nan")
    structural = frozenset()  # gold rows for structural tokens never contribute
    pred_par = predict_parents_batch(scores, batch.tokens, structural, batch.pad_id)
    contributing = batch.parents >= 0
    if contributing.any():
        parent_acc = float((pred_par == batch.parents)[contributing].mean())
    else:
        parent_acc = float("nan")
    return token_acc, parent_acc


def train_model(
    records: list[CorpusRecord],
    vocab: Vocab,
    model_config: ModelConfig,
    train_config: TrainConfig,
    log_path: str | Path | None = None,
    checkpoint_path: str | Path | None = None,
    progress=None,
) -> tuple[JointModel, list[EpochStats]]:
    """Adam training of the joint loss L_seq + lambda * L_struct.

    With lambda_struct == 0 the relation branch is skipped entirely, so
    the run is bit-identical to training an ablated model from the same
    seed. All randomness (shuffling, observation noise) derives from
    named streams of train_config.seed.
    """
    id_seqs, parent_seqs = records_to_ids(records, vocab)
    model = JointModel(model_config)
    state = AdamState()
    lam = train_config.lambda_struct
    n = len(id_seqs)
    bs = train_config.batch_size
    history: list[EpochStats] = []

    for epoch in range(1, train_config.epochs + 1):
        order = stream(train_config.seed, f"train/shuffle/{epoch}").permutation(n)
        seq_losses, struct_losses, tok_accs, par_accs = [], [], [], []
        for b_idx, start in enumerate(range(0, n, bs)):
            take = order[start : start + bs]
            noise_rng = stream(train_config.seed, f"train/noise/{epoch}/{b_idx}")
            batch = make_batch(
                [id_seqs[i] for i in take],
                [parent_seqs[i] for i in take],
                len(vocab),
                vocab.pad_id,
                vocab.sos_id,
                vocab.eos_id,
                noise_rng,
                model_config.noise_sigma,
            )
            tape = Tape()
            tape.watch(*model.params.values())
            feats, logits = model.forward(batch)
            l_seq = seq_loss(logits, batch.targets, batch.pad_id)
            scores = None
            if lam != 0 and model_config.relation_head:
                scores = model.relation_matrix(feats, batch)
                l_struct = struct_loss(scores, batch.struct_targets)
                loss = total_loss(l_seq, l_struct, lam)
                struct_losses.append(float(l_struct.data))
            else:
                loss = l_seq
            seq_losses.append(float(l_seq.data))
            ad.backward(loss)
            adam_step(model.params, state, lr=train_config.lr)
            t_acc, p_acc = _batch_metrics(model, batch, logits, scores)
            tok_accs.append(t_acc)
            if not np.isnan(p_acc):
                par_accs.append(p_acc)

        stats = EpochStats(
            epoch=epoch,
            l_seq=float(np.mean(seq_losses)),
            l_struct=float(np.mean(struct_losses)) if struct_losses else float("nan"),
            token_acc=float(np.mean(tok_accs)),
            parent_acc=float(np.mean(par_accs)) if par_accs else float("nan"),
        )
        history.append(stats)
        if progress is not None:
            progress(stats)

    for p in model.params.values():
        p.tape = None
        p.grad = None

    if log_path is not None:
        write_log(log_path, history)
    if checkpoint_path is not None:
        model.save(
            checkpoint_path,
            extra_meta={"vocab": list(vocab.symbols[3:])},
        )
    return model, history


def write_log(path: str | Path, history: list[EpochStats]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(LOG_HEADER)
        for stats in history:
            writer.writerow(stats.row())


def teacher_forced_parent_predictions(
    model: JointModel,
    vocab: Vocab,
    records: list[CorpusRecord],
    seed: int,
    batch_size: int = 64,
) -> list[np.ndarray]:
    """Predicted parent arrays for each record's gold token sequence."""
    from .treebank import NO_PARENT

    id_seqs, parent_seqs = records_to_ids(records, vocab)
    for p in model.params.values():
        p.tape = None
    structural = vocab.structural_ids()
    out: list[np.ndarray] = []
    for start in range(0, len(id_seqs), batch_size):
        chunk = id_seqs[start : start + batch_size]
        pchunk = parent_seqs[start : start + batch_size]
        rng = stream(seed, f"eval/parent-noise/{start}")
        batch = make_batch(
            chunk,
            pchunk,
            len(vocab),
            vocab.pad_id,
            vocab.sos_id,
            vocab.eos_id,
            rng,
            model.config.noise_sigma,
        )
        feats, _ = model.forward(batch)
        scores = model.relation_matrix(feats, batch)
        pred = predict_parents_batch(scores, batch.tokens, structural, batch.pad_id)
        for row, ids in enumerate(chunk):
            out.append(pred[row, : len(ids)].copy())
    return out
