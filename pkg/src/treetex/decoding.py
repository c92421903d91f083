"""Beam-search decoding with tree-structure score reranking.

A candidate's sequence score is its length-normalized cumulative
log-probability, including the closing EOS term. The structure score of
a complete candidate is the mean, over its contributing rows, of the
best parent log-probability the relation head assigns; confident tree
structure scores near zero, diffuse structure scores negative. The
reranker selects the candidate maximizing

    composite = seq_score + lambda_rerank * struct_score.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (
    JointModel,
    make_source,
    relation_encode,
    relation_scores,
    run_decoder,
)
from .rng import stream
from .vocab import Vocab


class NoFinishedHypothesisError(RuntimeError):
    pass


class NoCandidatesError(ValueError):
    pass


@dataclass(frozen=True)
class Hypothesis:
    """A (partial) decoded sequence of core token ids (no SOS/EOS)."""

    tokens: tuple[int, ...]
    logprob_sum: float
    finished: bool

    @property
    def steps(self) -> int:
        return len(self.tokens) + (1 if self.finished else 0)

    @property
    def seq_score(self) -> float:
        """Length-normalized log-probability; empty prefix scores 0."""
        return self.logprob_sum / self.steps if self.steps else 0.0


def _detach(model: JointModel) -> None:
    for p in model.params.values():
        p.tape = None


def _next_logprobs(
    model: JointModel,
    source: np.ndarray,
    prefixes: list[tuple[int, ...]],
    sos_id: int,
) -> np.ndarray:
    """Next-token log-probabilities (H, V) for same-length prefixes."""
    h = len(prefixes)
    length = len(prefixes[0])
    dec_ids = np.empty((h, length + 1), dtype=np.int64)
    dec_ids[:, 0] = sos_id
    for row, pref in enumerate(prefixes):
        dec_ids[row, 1 : 1 + length] = pref
    dec_valid = np.ones((h, length + 1), dtype=bool)
    src = np.broadcast_to(source, (h,) + source.shape)
    src_valid = np.ones((h, source.shape[0]), dtype=bool)
    _, logits = run_decoder(model.params, model.config, dec_ids, dec_valid, src, src_valid)
    row = logits.data[:, -1, :]
    shifted = row - row.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def beam_search(
    model: JointModel,
    source: np.ndarray,
    beam_width: int,
    max_len: int,
    pad_id: int = 0,
    sos_id: int = 1,
    eos_id: int = 2,
    allow_unfinished: bool = False,
) -> list[Hypothesis]:
    """Length-normalized beam search over the decoder.

    Returns up to beam_width finished candidates sorted by seq_score
    descending (ties keep expansion order). Raises
    NoFinishedHypothesisError if nothing emits EOS within max_len,
    unless allow_unfinished is set, in which case the last live beam is
    returned unfinished.
    """
    if beam_width < 1:
        raise ValueError("beam_width must be >= 1")
    _detach(model)
    v = model.config.vocab_size
    live = [Hypothesis((), 0.0, False)]
    finished: list[Hypothesis] = []
    last_live: list[Hypothesis] = []
    while live:
        logp = _next_logprobs(model, source, [h.tokens for h in live], sos_id)
        cand = logp + np.array([h.logprob_sum for h in live])[:, None]
        cand[:, sos_id] = -np.inf
        cand[:, pad_id] = -np.inf
        if len(live[0].tokens) >= max_len:
            eos_col = cand[:, eos_id].copy()
            cand[:] = -np.inf
            cand[:, eos_id] = eos_col
        flat = cand.reshape(-1)
        order = np.argsort(-flat, kind="stable")[:beam_width]
        new_live: list[Hypothesis] = []
        for idx in order:
            score = float(flat[idx])
            if not np.isfinite(score):
                break
            hyp = live[idx // v]
            tok = int(idx % v)
            if tok == eos_id:
                finished.append(Hypothesis(hyp.tokens, score, True))
            else:
                new_live.append(Hypothesis(hyp.tokens + (tok,), score, False))
        last_live = live
        live = new_live
    ranked = sorted(finished, key=lambda h: -h.seq_score)
    if not ranked:
        if allow_unfinished and last_live:
            return sorted(last_live, key=lambda h: -h.seq_score)[:beam_width]
        raise NoFinishedHypothesisError(f"no hypothesis emitted EOS within {max_len} steps")
    return ranked[:beam_width]


def struct_score(
    model: JointModel,
    source: np.ndarray,
    token_ids: tuple[int, ...] | list[int],
    structural_ids: frozenset[int],
    sos_id: int = 1,
) -> float:
    """Tree-structure confidence of one complete sequence.

    Teacher-forces the sequence through the decoder and relation head,
    then averages max_j log softmax(row_i)_j over contributing rows
    (non-structural tokens at positions i > 0). Sequences with no
    contributing row score 0.
    """
    t = len(token_ids)
    if t == 0:
        return 0.0
    _detach(model)
    dec_ids = np.empty((1, t + 1), dtype=np.int64)
    dec_ids[0, 0] = sos_id
    dec_ids[0, 1:] = token_ids
    ones = np.ones((1, t + 1), dtype=bool)
    src = np.asarray(source)[None, ...]
    src_valid = np.ones((1, src.shape[1]), dtype=bool)
    feats, _ = run_decoder(model.params, model.config, dec_ids, ones, src, src_valid)
    encoded = relation_encode(model.params, model.config, feats, ones)
    matrix = relation_scores(model.params, model.config, encoded, np.array([t]))
    rows = matrix.scores.data[0]
    vals = []
    for i in range(1, t):
        if token_ids[i] in structural_ids:
            continue
        row = rows[i]
        m = row.max()
        log_z = m + np.log(np.exp(row - m).sum())
        vals.append(float(row.max() - log_z))
    return float(np.mean(vals)) if vals else 0.0


@dataclass
class RerankResult:
    candidates: list[Hypothesis]
    seq_scores: list[float]
    struct_scores: list[float]
    composite: list[float]
    selected: int

    @property
    def best(self) -> Hypothesis:
        return self.candidates[self.selected]


def rerank(
    model: JointModel,
    source: np.ndarray,
    candidates: list[Hypothesis],
    structural_ids: frozenset[int],
    lambda_rerank: float = 1.0,
) -> RerankResult:
    """Composite scoring of complete candidates; ties select the lower
    candidate index."""
    if not candidates:
        raise NoCandidatesError("rerank needs at least one candidate")
    seq_scores = [h.seq_score for h in candidates]
    struct_scores = [
        struct_score(model, source, h.tokens, structural_ids) for h in candidates
    ]
    composite = [s + lambda_rerank * t for s, t in zip(seq_scores, struct_scores)]
    selected = int(np.argmax(composite))
    return RerankResult(list(candidates), seq_scores, struct_scores, composite, selected)


def decode_corpus(
    model: JointModel,
    vocab: Vocab,
    id_seqs: list[list[int]],
    seed: int,
    beam_width: int,
    max_len: int,
    lambda_rerank: float = 1.0,
) -> tuple[list[tuple[int, ...]], list[RerankResult]]:
    """Decode noisy observations of each sequence and rerank.

    Observation noise draws from a per-record stream of `seed`, so two
    runs with the same seed see identical sources. Records that never
    finish fall back to unfinished candidates rather than failing.
    """
    structural = vocab.structural_ids()
    preds: list[tuple[int, ...]] = []
    results: list[RerankResult] = []
    for idx, ids in enumerate(id_seqs):
        rng = stream(seed, f"decode/noise/{idx}")
        source = make_source(
            ids, len(vocab), vocab.eos_id, rng, model.config.noise_sigma
        )
        cands = beam_search(
            model,
            source,
            beam_width,
            max_len,
            pad_id=vocab.pad_id,
            sos_id=vocab.sos_id,
            eos_id=vocab.eos_id,
            allow_unfinished=True,
        )
        result = rerank(model, source, cands, structural, lambda_rerank)
        preds.append(result.best.tokens)
        results.append(result)
    return preds, results
