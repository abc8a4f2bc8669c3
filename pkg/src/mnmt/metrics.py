"""BLEU scoring and the all-pairs translation evaluation grid.

Two scorers live here. ``corpus_bleu`` is the reporting metric: unsmoothed,
pooled over the corpus, orders 1 to 4, so a single zero precision zeroes the
score. ``sentence_bleu_smoothed`` is the sentence-similarity function used by
the aligner: add-one smoothing keeps higher orders non-degenerate on short
sentences, while the raw order-1 precision still gates the score.
"""

from __future__ import annotations

import math
import unicodedata
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .checkpoint import Checkpoint
from .errors import ConfigError, InputError
from .langs import require_registered
from .model import translate_batch
from .subword import SubwordModel

MODES = ("whitespace", "subword")
ABSENT_CELL = "—"  # rendered for directions with no test data

_ORDERS = 4  # corpus BLEU always pools orders 1..4


def whitespace_tokens(line: str) -> list[str]:
    """NFC normalization followed by Unicode-whitespace splitting."""
    return unicodedata.normalize("NFC", line).split()


def _tokens(line: str, mode: str, model: SubwordModel | None) -> list:
    if mode == "whitespace":
        return whitespace_tokens(line)
    return model.encode(line)


def _ngrams(tokens: list, n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _clipped_matches(hyp_tokens: list, ref_tokens: list, n: int) -> int:
    hyp_counts = _ngrams(hyp_tokens, n)
    ref_counts = _ngrams(ref_tokens, n)
    return sum(min(count, ref_counts[gram]) for gram, count in hyp_counts.items())


def _check_mode(mode: str, model: SubwordModel | None) -> None:
    if mode not in MODES:
        raise ConfigError(f"unknown tokenization mode {mode!r}; expected one of {MODES}")
    if mode == "subword" and model is None:
        raise ConfigError("subword mode requires a subword model")


@dataclass(frozen=True)
class BleuReport:
    """Corpus BLEU with its components, on the 0-100 scale."""

    bleu: float
    precisions: tuple[float, float, float, float]
    brevity_penalty: float
    hyp_len: int
    ref_len: int

    def as_dict(self) -> dict:
        return {
            "bleu": self.bleu,
            "precisions": list(self.precisions),
            "brevity_penalty": self.brevity_penalty,
            "hyp_len": self.hyp_len,
            "ref_len": self.ref_len,
        }


def corpus_bleu(
    hyps: list[str],
    refs: list[str],
    mode: str = "whitespace",
    model: SubwordModel | None = None,
) -> BleuReport:
    """Pooled clipped n-gram BLEU over single-reference pairs.

    Unsmoothed: if any order has zero matches the score is 0. An empty
    hypothesis line contributes zero matches but is not an error.
    """
    _check_mode(mode, model)
    if len(hyps) != len(refs):
        raise InputError(f"{len(hyps)} hypotheses vs {len(refs)} references")
    if not hyps:
        raise InputError("empty corpus")

    matches = [0] * _ORDERS
    totals = [0] * _ORDERS
    hyp_len = 0
    ref_len = 0
    for hyp, ref in zip(hyps, refs):
        hyp_tokens = _tokens(hyp, mode, model)
        ref_tokens = _tokens(ref, mode, model)
        hyp_len += len(hyp_tokens)
        ref_len += len(ref_tokens)
        for n in range(1, _ORDERS + 1):
            totals[n - 1] += max(len(hyp_tokens) - n + 1, 0)
            matches[n - 1] += _clipped_matches(hyp_tokens, ref_tokens, n)

    precisions = tuple(m / t if t else 0.0 for m, t in zip(matches, totals))
    # max() keeps the penalty finite and in (0, 1] when every hypothesis is
    # empty; the score is already 0 in that case.
    if hyp_len >= ref_len:
        brevity_penalty = 1.0
    else:
        brevity_penalty = math.exp(1.0 - ref_len / max(hyp_len, 1))
    if all(p > 0.0 for p in precisions):
        mean_log = math.fsum(math.log(p) for p in precisions) / _ORDERS
        bleu = 100.0 * brevity_penalty * math.exp(mean_log)
    else:
        bleu = 0.0
    return BleuReport(bleu, precisions, brevity_penalty, hyp_len, ref_len)


def sentence_bleu_smoothed(hyp: str, ref: str, max_order: int = 2) -> float:
    """Sentence-level similarity in [0, 1] for the aligner.

    Order-1 precision is raw, so disjoint token sets score exactly 0; orders
    2 and up use add-one smoothing on match and total counts. Whitespace
    tokenization only. Empty strings score 0.
    """
    if not 1 <= max_order <= 4:
        raise ConfigError(f"max_order must be in 1..4, got {max_order}")
    hyp_tokens = whitespace_tokens(hyp)
    ref_tokens = whitespace_tokens(ref)
    if not hyp_tokens or not ref_tokens:
        return 0.0
    unigram_matches = _clipped_matches(hyp_tokens, ref_tokens, 1)
    if unigram_matches == 0:
        return 0.0
    logs = [math.log(unigram_matches / len(hyp_tokens))]
    for n in range(2, max_order + 1):
        total = max(len(hyp_tokens) - n + 1, 0)
        matched = _clipped_matches(hyp_tokens, ref_tokens, n)
        logs.append(math.log((matched + 1) / (total + 1)))
    brevity_penalty = min(1.0, math.exp(1.0 - len(ref_tokens) / len(hyp_tokens)))
    return brevity_penalty * math.exp(math.fsum(logs) / max_order)


@dataclass(frozen=True)
class EvalGrid:
    """All-pairs BLEU over an ordered language list.

    ``cells`` maps (src, tgt) to a report; directions without test data are
    simply missing, which is distinct from a score of 0.
    """

    langs: tuple[str, ...]
    cells: dict[tuple[str, str], BleuReport]

    def cell(self, src: str, tgt: str) -> BleuReport | None:
        return self.cells.get((src, tgt))


def _tuple_sentences(entry) -> dict[str, str]:
    return getattr(entry, "sentences", entry)


def eval_grid(
    ckpt: Checkpoint,
    model: SubwordModel,
    testset,
    mode: str = "whitespace",
    *,
    langs: tuple[str, ...] | None = None,
    max_out: int = 64,
    batch_size: int = 32,
    workers: int = 4,
) -> EvalGrid:
    """Greedy-decode and score every ordered language pair with test data.

    ``testset`` is a sequence of multiway tuples (anything exposing a
    ``sentences`` mapping of language code to line, or such a mapping
    itself). Same-language cells decode with tgt = src, the copy probe.
    Cells evaluate concurrently; assembly order is fixed by the language
    list, so the result is deterministic.
    """
    _check_mode(mode, model)
    tuples = [_tuple_sentences(t) for t in testset]
    if not tuples:
        raise InputError("empty test set")
    seen: list[str] = []
    for sentences in tuples:
        for code in sentences:
            require_registered(code)
            if code not in seen:
                seen.append(code)
    grid_langs = tuple(langs) if langs is not None else tuple(sorted(seen))

    def score_direction(src: str, tgt: str) -> BleuReport | None:
        pairs = [
            (s[src], s[tgt]) for s in tuples if src in s and tgt in s
        ]
        if not pairs:
            return None
        sources = [p[0] for p in pairs]
        refs = [p[1] for p in pairs]
        hyps: list[str] = []
        for start in range(0, len(sources), batch_size):
            chunk = sources[start : start + batch_size]
            hyps.extend(
                translate_batch(ckpt.params, ckpt.mconfig, model, chunk, tgt, max_out=max_out)
            )
        return corpus_bleu(hyps, refs, mode=mode, model=model)

    directions = [(a, b) for a in grid_langs for b in grid_langs]
    cells: dict[tuple[str, str], BleuReport] = {}
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        reports = pool.map(lambda d: score_direction(*d), directions)
        for direction, report in zip(directions, reports):
            if report is not None:
                cells[direction] = report
    return EvalGrid(grid_langs, cells)


def render_grid_tsv(grid: EvalGrid) -> str:
    """TSV matrix: header row/column of codes, two-decimal scores, absent cells rendered as a dash."""
    lines = ["\t".join(["", *grid.langs])]
    for src in grid.langs:
        row = [src]
        for tgt in grid.langs:
            report = grid.cell(src, tgt)
            row.append(ABSENT_CELL if report is None else f"{report.bleu:.2f}")
        lines.append("\t".join(row))
    return "\n".join(lines) + "\n"


def grid_records(grid: EvalGrid) -> list[dict]:
    """One machine-readable record per cell; absent cells carry bleu None."""
    records = []
    for src in grid.langs:
        for tgt in grid.langs:
            report = grid.cell(src, tgt)
            if report is None:
                records.append({"src": src, "tgt": tgt, "bleu": None})
            else:
                records.append({"src": src, "tgt": tgt, **report.as_dict()})
    return records
