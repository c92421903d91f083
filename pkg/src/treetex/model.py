"""Joint sequence + tree-structure model.

The sequence side is a small encoder-free stand-in for a full
recognizer: the observation is a noisy one-hot rendering of the target
tokens, projected and position-encoded into a memory that a causal
Transformer decoder cross-attends while predicting the token sequence.

The structure side maps the decoder's per-step features through a
bidirectional Transformer encoder, projects them into child and parent
vectors, adds them pairwise, and scores each (child i, parent j) pair
with a ReLU followed by a dot product against a learned vector. Row i
of the resulting matrix is a distribution (after softmax over the
candidate mask j < i) over the parent of token i.

Feature-row alignment: decoder output row t is the feature that emits
token t; the trailing row emits EOS. The EOS row takes part in the
relation encoder's attention but never contributes to the structure
loss, and PAD rows are masked out everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict, field
from functools import lru_cache

import numpy as np

from . import autodiff as ad
from .autodiff import EmptyLossError, MASK_FILL, Tensor
from .checkpoint import load_checkpoint, save_checkpoint
from .rng import stream
from .treebank import NO_PARENT, ParentAnnotation
from .vocab import TokenSeq, TokenClass

#: Marker for padded rows in parent-target arrays (NO_PARENT is -1).
PAD_PARENT = -2


class TargetMaskError(ValueError):
    """A gold parent index fell outside the candidate mask. This means
    the annotation and the mask disagree; abort rather than skip."""


@dataclass
class ModelConfig:
    vocab_size: int
    d_model: int = 256
    heads: int = 8
    d_ff: int = 1024
    decoder_layers: int = 3
    relation_layers: int = 1
    max_len: int = 64
    noise_sigma: float = 0.1
    relation_positional: bool = True
    relation_head: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.d_model < 1 or self.heads < 1 or self.d_ff < 1:
            raise ValueError("all model dimensions must be >= 1")
        if self.d_model % self.heads:
            raise ValueError(
                f"d_model={self.d_model} not divisible by heads={self.heads}"
            )
        if self.vocab_size < 4:
            raise ValueError("vocabulary must contain the reserved ids")

    @classmethod
    def toy(cls, vocab_size: int, **overrides) -> "ModelConfig":
        """Desk-scale defaults: d_model 64, 4 heads, d_ff 128, 2 layers."""
        base = dict(d_model=64, heads=4, d_ff=128, decoder_layers=2)
        base.update(overrides)
        return cls(vocab_size=vocab_size, **base)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


@dataclass
class Batch:
    """Padded training batch.

    tokens: (B, T) token ids, PAD-filled after each row's length.
    parents: (B, T) parent indices, NO_PARENT within the expression and
        PAD_PARENT on padded positions.
    source: (B, T+1, V) observation rows: noisy one-hots of the tokens,
        then a noisy EOS row, then zeros.
    """

    tokens: np.ndarray
    parents: np.ndarray
    source: np.ndarray
    pad_id: int
    sos_id: int
    eos_id: int

    def __post_init__(self):
        b, t = self.tokens.shape
        if self.parents.shape != (b, t):
            raise ValueError("parents shape does not match tokens")
        if self.source.shape[:2] != (b, t + 1):
            raise ValueError("source must have T+1 rows per sample")
        pad = self.tokens == self.pad_id
        if not ((self.parents == PAD_PARENT) == pad).all():
            raise ValueError("PAD markers inconsistent between tokens and parents")

    @property
    def lengths(self) -> np.ndarray:
        return (self.tokens != self.pad_id).sum(axis=1)

    @property
    def dec_input(self) -> np.ndarray:
        b, t = self.tokens.shape
        ids = np.full((b, t + 1), self.pad_id, dtype=np.int64)
        ids[:, 0] = self.sos_id
        ids[:, 1:] = self.tokens
        return ids

    @property
    def dec_valid(self) -> np.ndarray:
        """(B, S) rows that exist: SOS plus the L tokens (indices 0..L)."""
        s = self.tokens.shape[1] + 1
        return np.arange(s)[None, :] <= self.lengths[:, None]

    @property
    def src_valid(self) -> np.ndarray:
        """(B, S) observation rows that exist: L tokens plus EOS."""
        return self.dec_valid

    @property
    def targets(self) -> np.ndarray:
        """(B, S) next-token targets: the tokens, then EOS, then PAD."""
        b, t = self.tokens.shape
        out = np.full((b, t + 1), self.pad_id, dtype=np.int64)
        out[:, :t] = self.tokens
        out[np.arange(b), self.lengths] = self.eos_id
        return out

    @property
    def struct_targets(self) -> np.ndarray:
        """(B, S) parent targets aligned with decoder rows; the EOS row
        carries NO_PARENT and padded rows carry PAD_PARENT."""
        b, t = self.tokens.shape
        out = np.full((b, t + 1), PAD_PARENT, dtype=np.int64)
        out[:, :t] = self.parents
        out[np.arange(b), self.lengths] = NO_PARENT
        return out


def make_source(
    token_ids: list[int] | np.ndarray,
    vocab_size: int,
    eos_id: int,
    rng: np.random.Generator,
    sigma: float,
) -> np.ndarray:
    """(L+1, V) noisy one-hot observation of one expression."""
    ids = list(token_ids)
    rows = len(ids) + 1
    src = np.zeros((rows, vocab_size))
    src[np.arange(len(ids)), ids] = 1.0
    src[len(ids), eos_id] = 1.0
    if sigma > 0:
        src = src + rng.normal(0.0, sigma, size=src.shape)
    return src


def make_batch(
    id_seqs: list[list[int]],
    parent_seqs: list[list[int]],
    vocab_size: int,
    pad_id: int,
    sos_id: int,
    eos_id: int,
    rng: np.random.Generator,
    sigma: float,
) -> Batch:
    b = len(id_seqs)
    t = max((len(s) for s in id_seqs), default=0)
    tokens = np.full((b, t), pad_id, dtype=np.int64)
    parents = np.full((b, t), PAD_PARENT, dtype=np.int64)
    source = np.zeros((b, t + 1, vocab_size))
    for row, (ids, pars) in enumerate(zip(id_seqs, parent_seqs)):
        n = len(ids)
        tokens[row, :n] = ids
        parents[row, :n] = pars
        source[row, np.arange(n), ids] = 1.0
        source[row, n, eos_id] = 1.0
    if sigma > 0:
        noise = rng.normal(0.0, sigma, size=source.shape)
        lengths = (tokens != pad_id).sum(axis=1)
        valid = np.arange(t + 1)[None, :] <= lengths[:, None]
        source = source + noise * valid[:, :, None]
    return Batch(tokens, parents, source, pad_id, sos_id, eos_id)


# -- parameters ---------------------------------------------------------


def _glorot(rng: np.random.Generator, shape: tuple[int, int]) -> np.ndarray:
    std = math.sqrt(2.0 / (shape[0] + shape[1]))
    return rng.normal(0.0, std, size=shape)


def _attn_params(p, rng, prefix, d):
    for name in ("Wq", "Wk", "Wv", "Wo"):
        p[f"{prefix}/{name}"] = Tensor(_glorot(rng, (d, d)))
    for name in ("bq", "bk", "bv", "bo"):
        p[f"{prefix}/{name}"] = Tensor(np.zeros(d))


def _ln_params(p, prefix, d):
    p[f"{prefix}/g"] = Tensor(np.ones(d))
    p[f"{prefix}/b"] = Tensor(np.zeros(d))


def _ffn_params(p, rng, prefix, d, d_ff):
    p[f"{prefix}/W1"] = Tensor(_glorot(rng, (d, d_ff)))
    p[f"{prefix}/b1"] = Tensor(np.zeros(d_ff))
    p[f"{prefix}/W2"] = Tensor(_glorot(rng, (d_ff, d)))
    p[f"{prefix}/b2"] = Tensor(np.zeros(d))


def init_params(config: ModelConfig) -> dict[str, Tensor]:
    """Seeded initialization. Decoder and relation-head parameters draw
    from separate streams so an ablated model (relation_head=False)
    starts from the identical decoder weights."""
    d, v = config.d_model, config.vocab_size
    p: dict[str, Tensor] = {}
    dec = stream(config.seed, "init/decoder")
    p["embed/W"] = Tensor(dec.normal(0.0, d**-0.5, size=(v, d)))
    p["src/W"] = Tensor(_glorot(dec, (v, d)))
    p["src/b"] = Tensor(np.zeros(d))
    for layer in range(config.decoder_layers):
        _attn_params(p, dec, f"dec{layer}/self", d)
        _ln_params(p, f"dec{layer}/ln1", d)
        _attn_params(p, dec, f"dec{layer}/cross", d)
        _ln_params(p, f"dec{layer}/ln2", d)
        _ffn_params(p, dec, f"dec{layer}/ffn", d, config.d_ff)
        _ln_params(p, f"dec{layer}/ln3", d)
    p["out/W"] = Tensor(_glorot(dec, (d, v)))
    p["out/b"] = Tensor(np.zeros(v))
    if config.relation_head:
        rel = stream(config.seed, "init/relation")
        for layer in range(config.relation_layers):
            _attn_params(p, rel, f"rel{layer}/self", d)
            _ln_params(p, f"rel{layer}/ln1", d)
            _ffn_params(p, rel, f"rel{layer}/ffn", d, config.d_ff)
            _ln_params(p, f"rel{layer}/ln2", d)
        p["rel/Wc"] = Tensor(_glorot(rel, (d, d)))
        p["rel/Wp"] = Tensor(_glorot(rel, (d, d)))
        p["rel/vs"] = Tensor(rel.normal(0.0, d**-0.5, size=(d,)))
    return p


@lru_cache(maxsize=32)
def _posenc(rows: int, d: int) -> np.ndarray:
    pos = np.arange(rows)[:, None]
    idx = np.arange(d)[None, :]
    angles = pos / np.power(10000.0, (2 * (idx // 2)) / d)
    enc = np.where(idx % 2 == 0, np.sin(angles), np.cos(angles))
    enc.setflags(write=False)
    return enc


# -- forward pieces ------------------------------------------------------


def _attention(params, config, prefix, q_in, kv_in, valid_mask):
    """Multi-head attention. valid_mask broadcasts to (B, h, Tq, Tk)."""
    h = config.heads
    d = config.d_model
    dh = d // h
    b, tq = q_in.shape[0], q_in.shape[1]
    tk = kv_in.shape[1]

    def proj(x, name):
        return ad.add(
            ad.matmul(x, params[f"{prefix}/W{name}"]), params[f"{prefix}/b{name}"]
        )

    def heads_first(x, t):
        return ad.transpose(ad.reshape(x, (b, t, h, dh)), (0, 2, 1, 3))

    q = heads_first(proj(q_in, "q"), tq)
    k = heads_first(proj(kv_in, "k"), tk)
    v = heads_first(proj(kv_in, "v"), tk)
    scores = ad.scale(ad.matmul(q, ad.transpose(k, (0, 1, 3, 2))), dh**-0.5)
    scores = ad.masked_fill(scores, ~valid_mask, MASK_FILL)
    attn = ad.softmax(scores, axis=-1)
    ctx = ad.reshape(ad.transpose(ad.matmul(attn, v), (0, 2, 1, 3)), (b, tq, d))
    return ad.add(ad.matmul(ctx, params[f"{prefix}/Wo"]), params[f"{prefix}/bo"])


def _ffn(params, prefix, x):
    hidden = ad.relu(ad.add(ad.matmul(x, params[f"{prefix}/W1"]), params[f"{prefix}/b1"]))
    return ad.add(ad.matmul(hidden, params[f"{prefix}/W2"]), params[f"{prefix}/b2"])


def _residual_norm(params, prefix, x, sub):
    return ad.layer_norm(ad.add(x, sub), params[f"{prefix}/g"], params[f"{prefix}/b"])


def run_decoder(
    params: dict[str, Tensor],
    config: ModelConfig,
    dec_ids: np.ndarray,
    dec_valid: np.ndarray,
    source: np.ndarray,
    src_valid: np.ndarray,
) -> tuple[Tensor, Tensor]:
    """Observation projection plus causal decoder.

    dec_ids (B, S) and source (B, S_src, V) may have different lengths;
    the decoder cross-attends whatever memory rows src_valid admits.
    Returns (features (B, S, d), vocab logits (B, S, V)).
    """
    d = config.d_model
    s = dec_ids.shape[1]
    s_src = source.shape[1]

    x = ad.scale(ad.embedding(params["embed/W"], dec_ids), math.sqrt(d))
    x = ad.add(x, Tensor(_posenc(s, d)))

    mem = ad.add(ad.matmul(Tensor(source), params["src/W"]), params["src/b"])
    mem = ad.add(mem, Tensor(_posenc(s_src, d)))

    causal = np.tril(np.ones((s, s), dtype=bool))
    self_mask = causal[None, None, :, :] & dec_valid[:, None, None, :]
    cross_mask = src_valid[:, None, None, :]

    for layer in range(config.decoder_layers):
        sa = _attention(params, config, f"dec{layer}/self", x, x, self_mask)
        x = _residual_norm(params, f"dec{layer}/ln1", x, sa)
        ca = _attention(params, config, f"dec{layer}/cross", x, mem, cross_mask)
        x = _residual_norm(params, f"dec{layer}/ln2", x, ca)
        ff = _ffn(params, f"dec{layer}/ffn", x)
        x = _residual_norm(params, f"dec{layer}/ln3", x, ff)

    logits = ad.add(ad.matmul(x, params["out/W"]), params["out/b"])
    return x, logits


def decoder_features(
    params: dict[str, Tensor], config: ModelConfig, batch: Batch
) -> tuple[Tensor, Tensor]:
    """run_decoder over a padded training batch (S = T+1)."""
    return run_decoder(
        params, config, batch.dec_input, batch.dec_valid, batch.source, batch.src_valid
    )


def relation_encode(
    params: dict[str, Tensor],
    config: ModelConfig,
    feats: Tensor,
    row_valid: np.ndarray,
) -> Tensor:
    """Bidirectional encoding of decoder features for relation scoring.

    Attention keys are limited to rows that exist; queries are left
    unrestricted because invalid rows are dropped downstream.
    """
    b, s, d = feats.shape
    x = feats
    if config.relation_positional:
        x = ad.add(x, Tensor(_posenc(s, d)))
    key_mask = row_valid[:, None, None, :]
    for layer in range(config.relation_layers):
        sa = _attention(params, config, f"rel{layer}/self", x, x, key_mask)
        x = _residual_norm(params, f"rel{layer}/ln1", x, sa)
        ff = _ffn(params, f"rel{layer}/ffn", x)
        x = _residual_norm(params, f"rel{layer}/ln2", x, ff)
    return x


@dataclass
class RelationScoreMatrix:
    """(B, S, S) pairwise scores; entry [b, i, j] scores token i as a
    child of token j. Entries outside the candidate mask hold the
    large-negative fill."""

    scores: Tensor
    mask: np.ndarray


def candidate_mask(lengths: np.ndarray, rows: int) -> np.ndarray:
    """Valid parent candidates: strictly earlier positions that are
    real tokens (j < i and j < length)."""
    i_idx = np.arange(rows)[None, :, None]
    j_idx = np.arange(rows)[None, None, :]
    return (j_idx < i_idx) & (j_idx < np.asarray(lengths)[:, None, None])


def relation_scores(
    params: dict[str, Tensor],
    config: ModelConfig,
    encoded: Tensor,
    lengths: np.ndarray,
) -> RelationScoreMatrix:
    """Project encoded features to child/parent vectors, add pairwise,
    apply ReLU and the scoring vector, then mask candidates."""
    b, s, d = encoded.shape
    xc = ad.matmul(encoded, params["rel/Wc"])
    xp = ad.matmul(encoded, params["rel/Wp"])
    pair = ad.add(ad.reshape(xc, (b, s, 1, d)), ad.reshape(xp, (b, 1, s, d)))
    raw = ad.matmul(ad.relu(pair), params["rel/vs"])
    mask = candidate_mask(lengths, s)
    return RelationScoreMatrix(ad.masked_fill(raw, ~mask, MASK_FILL), mask)


# -- losses --------------------------------------------------------------


def seq_loss(logits: Tensor, targets: np.ndarray, pad_id: int) -> Tensor:
    """Mean cross-entropy over non-PAD target positions."""
    b, s, v = logits.shape
    return ad.cross_entropy(
        ad.reshape(logits, (b * s, v)), np.asarray(targets).reshape(-1), ignore_index=pad_id
    )


def struct_loss(scores: RelationScoreMatrix, struct_targets: np.ndarray) -> Tensor:
    """Mean cross-entropy of row softmaxes against gold parent indices.

    Rows whose target is NO_PARENT or PAD do not contribute. A gold
    parent outside the candidate mask raises TargetMaskError: that is
    an annotation/mask inconsistency, not a skippable row.
    """
    b, s, _ = scores.scores.shape
    t = np.asarray(struct_targets)
    contributing = t >= 0
    if not contributing.any():
        raise EmptyLossError("no contributing rows in struct_loss")
    bi, ri = np.nonzero(contributing)
    if not scores.mask[bi, ri, t[bi, ri]].all():
        raise TargetMaskError("gold parent outside candidate mask")
    flat = ad.reshape(scores.scores, (b * s, s))
    ce_targets = np.where(contributing, t, -1).reshape(-1)
    return ad.cross_entropy(flat, ce_targets, ignore_index=-1)


def total_loss(seq_l: Tensor, struct_l: Tensor | None, lambda_struct: float = 1.0) -> Tensor:
    """L = L_seq + lambda * L_struct (unweighted sum by default)."""
    if struct_l is None:
        return seq_l
    return ad.add(seq_l, ad.scale(struct_l, lambda_struct))


# -- prediction ------------------------------------------------------------


def predict_parents(
    scores: RelationScoreMatrix, seq: TokenSeq, batch_index: int = 0
) -> ParentAnnotation:
    """Row-argmax parent prediction for one sequence.

    Row 0 and structural-token rows are NO_PARENT by construction (the
    token identities come from the sequence, not the scores); ties
    break toward the smallest candidate index.
    """
    s = scores.scores.data[batch_index]
    m = scores.mask[batch_index]
    parents = []
    for i in range(len(seq)):
        if i == 0 or seq.vocab.token_class(seq[i]) is TokenClass.STRUCTURAL:
            parents.append(NO_PARENT)
        else:
            row = np.where(m[i], s[i], -np.inf)
            parents.append(int(np.argmax(row)))
    return ParentAnnotation(tuple(parents))


def predict_parents_batch(
    scores: RelationScoreMatrix,
    tokens: np.ndarray,
    structural_ids: frozenset[int],
    pad_id: int,
) -> np.ndarray:
    """(B, T) predicted parents; PAD positions marked PAD_PARENT."""
    s = scores.scores.data
    masked = np.where(scores.mask, s, -np.inf)
    b, t = tokens.shape
    pred = masked[:, :t, :].argmax(axis=-1).astype(np.int64)
    if structural_ids:
        pred = np.where(np.isin(tokens, list(structural_ids)), NO_PARENT, pred)
    pred[:, 0] = NO_PARENT
    return np.where(tokens == pad_id, PAD_PARENT, pred)


class JointModel:
    """Configuration plus named parameters, with the full loss pipeline."""

    def __init__(self, config: ModelConfig, params: dict[str, Tensor] | None = None):
        self.config = config
        self.params = params if params is not None else init_params(config)

    def forward(self, batch: Batch) -> tuple[Tensor, Tensor]:
        return decoder_features(self.params, self.config, batch)

    def relation_matrix(self, feats: Tensor, batch: Batch) -> RelationScoreMatrix:
        encoded = relation_encode(self.params, self.config, feats, batch.dec_valid)
        return relation_scores(self.params, self.config, encoded, batch.lengths)

    def losses(self, batch: Batch, lambda_struct: float = 1.0):
        """Returns (seq_loss, struct_loss or None, total).

        With lambda_struct == 0 the relation branch is not evaluated at
        all, so the training trajectory matches an ablated model
        bit for bit.
        """
        feats, logits = self.forward(batch)
        l_seq = seq_loss(logits, batch.targets, batch.pad_id)
        if lambda_struct == 0 or not self.config.relation_head:
            return l_seq, None, l_seq
        scores = self.relation_matrix(feats, batch)
        l_struct = struct_loss(scores, batch.struct_targets)
        return l_seq, l_struct, total_loss(l_seq, l_struct, lambda_struct)

    def save(self, path, extra_meta: dict | None = None) -> None:
        meta = {"config": self.config.to_dict()}
        if extra_meta:
            meta.update(extra_meta)
        save_checkpoint(path, {k: v.data for k, v in self.params.items()}, meta)

    @classmethod
    def load(cls, path) -> tuple["JointModel", dict]:
        arrays, meta = load_checkpoint(path)
        config = ModelConfig.from_dict(meta["config"])
        params = {k: Tensor(v) for k, v in arrays.items()}
        return cls(config, params), meta
