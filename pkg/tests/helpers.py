"""Shared toy fixtures: a character vocabulary and a copy-task corpus."""

import math

import numpy as np

from mnmt.corpus import encode_pair
from mnmt.langs import Direction
from mnmt.subword import SubwordModel

CHARS = "abcde"

TOY_MCONFIG_FIELDS = dict(
    d_model=32, n_heads=2, n_enc_layers=1, n_dec_layers=1, d_ff=64,
    dropout=0.0, label_smoothing=0.0, max_len=32, dtype="float32",
)


def toy_subword() -> SubwordModel:
    pieces = sorted(CHARS) + ["▁"]
    logp = math.log(1.0 / len(pieces))
    return SubwordModel([(p, logp) for p in pieces], control_langs=("en", "hi", "te"))


def toy_lines(n=20, seed=5) -> list[str]:
    rng = np.random.Generator(np.random.PCG64(seed))
    lines = []
    for _ in range(n):
        words = [
            "".join(rng.choice(list(CHARS), size=rng.integers(1, 5)))
            for _ in range(rng.integers(1, 4))
        ]
        lines.append(" ".join(words))
    return lines


def copy_corpus(model, lines):
    d = Direction("en", "en")
    return [encode_pair(model, line, line, d, "copy") for line in lines]
