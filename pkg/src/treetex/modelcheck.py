"""End-to-end gradient check case: the joint loss of a miniature model.

Builds a (B=1, T=6, d=8, V=12) model with a fixed noisy observation and
fixed parent targets, and exposes the total loss as a deterministic
scalar function of every parameter, suitable for finite-difference
checking at a looser tolerance than single ops (the loss composes a few
hundred primitives, so rounding accumulates).
"""

from __future__ import annotations

import numpy as np

from .model import (
    JointModel,
    ModelConfig,
    make_batch,
    seq_loss,
    struct_loss,
    total_loss,
)
from .rng import stream


def full_model_case(seed: int = 0):
    """Returns (params, f) with f() = L_seq + L_struct of the mini model."""
    config = ModelConfig(
        vocab_size=12,
        d_model=8,
        heads=2,
        d_ff=16,
        decoder_layers=2,
        relation_layers=1,
        max_len=8,
        noise_sigma=0.2,
        seed=seed,
    )
    model = JointModel(config)
    tokens = [5, 6, 7, 8, 9, 10]
    parents = [-1, 0, 1, 0, 3, 1]
    batch = make_batch(
        [tokens],
        [parents],
        config.vocab_size,
        pad_id=0,
        sos_id=1,
        eos_id=2,
        rng=stream(seed, "modelcheck/noise"),
        sigma=config.noise_sigma,
    )

    def f():
        feats, logits = model.forward(batch)
        l_seq = seq_loss(logits, batch.targets, batch.pad_id)
        scores = model.relation_matrix(feats, batch)
        l_struct = struct_loss(scores, batch.struct_targets)
        return total_loss(l_seq, l_struct, 1.0)

    return model.params, f
