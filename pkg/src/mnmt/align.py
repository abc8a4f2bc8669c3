"""BLEU-anchored monotone sentence alignment and pivot-joined test tuples.

The aligner scores every (machine-translated source, target) sentence pair
with the smoothed sentence BLEU, then picks the monotone 1-1 matching of
maximal total similarity by dynamic programming. Gap filling between anchor
links is intentionally out of scope; unlinked sentences are reported, not
second-guessed.

Multiway test sets come from joining per-language (english, other) pair
lists on a normalized form of the English side.
"""

from __future__ import annotations

import logging
import unicodedata
from dataclasses import dataclass
from typing import Iterable, Mapping

from .errors import ConfigError, InputError
from .metrics import ABSENT_CELL, sentence_bleu_smoothed

log = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.1
PIVOT = "en"


@dataclass(frozen=True)
class DocumentPair:
    """Two sentence-split documents plus an MT of the source into the target
    language, one line per source sentence."""

    src_sents: tuple[str, ...]
    tgt_sents: tuple[str, ...]
    mt_src: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "src_sents", tuple(self.src_sents))
        object.__setattr__(self, "tgt_sents", tuple(self.tgt_sents))
        object.__setattr__(self, "mt_src", tuple(self.mt_src))
        if len(self.mt_src) != len(self.src_sents):
            raise InputError(
                f"{len(self.mt_src)} machine translations for {len(self.src_sents)} source sentences"
            )


@dataclass(frozen=True)
class AlignmentLink:
    src_idx: int
    tgt_idx: int
    score: float


def best_monotone_matching(scores: list[list[float]]) -> list[tuple[int, int]]:
    """Monotone 1-1 matching maximizing total score.

    Skips on either side cost nothing. Ties break toward more links, then
    smaller summed indices. Strict monotonicity in both coordinates is
    structural: every link consumes one row and one column.
    """
    n = len(scores)
    m = len(scores[0]) if n else 0
    zero = (0.0, 0, 0)  # (total, links, negated index sum)
    best = [[zero] * (m + 1) for _ in range(n + 1)]
    move = [[0] * (m + 1) for _ in range(n + 1)]  # 1 link, 2 skip src, 3 skip tgt
    for i in range(1, n + 1):
        row = scores[i - 1]
        for j in range(1, m + 1):
            prev = best[i - 1][j - 1]
            linked = (prev[0] + row[j - 1], prev[1] + 1, prev[2] - (i - 1) - (j - 1))
            chosen, chosen_move = linked, 1
            if best[i - 1][j] > chosen:
                chosen, chosen_move = best[i - 1][j], 2
            if best[i][j - 1] > chosen:
                chosen, chosen_move = best[i][j - 1], 3
            best[i][j] = chosen
            move[i][j] = chosen_move

    links: list[tuple[int, int]] = []
    i, j = n, m
    while i > 0 and j > 0:
        step = move[i][j]
        if step == 1:
            links.append((i - 1, j - 1))
            i -= 1
            j -= 1
        elif step == 2:
            i -= 1
        else:
            j -= 1
    links.reverse()
    return links


def bleualign(doc: DocumentPair, threshold: float = DEFAULT_THRESHOLD) -> list[AlignmentLink]:
    """Anchor links between source and target sentences.

    The similarity matrix uses the smoothed sentence BLEU at max_order 2
    between the source's machine translation and each target sentence. The
    threshold filters the already-optimal matching, so raising it can only
    remove links.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ConfigError(f"threshold must be in [0, 1], got {threshold}")
    if not doc.src_sents:
        raise InputError("empty source side")
    if not doc.tgt_sents:
        raise InputError("empty target side")
    scores = [
        [sentence_bleu_smoothed(mt, tgt, 2) for tgt in doc.tgt_sents]
        for mt in doc.mt_src
    ]
    matching = best_monotone_matching(scores)
    links = [
        AlignmentLink(i, j, scores[i][j])
        for i, j in matching
        if scores[i][j] >= threshold
    ]
    linked_src = {link.src_idx for link in links}
    linked_tgt = {link.tgt_idx for link in links}
    gaps_src = len(doc.src_sents) - len(linked_src)
    gaps_tgt = len(doc.tgt_sents) - len(linked_tgt)
    if gaps_src or gaps_tgt:
        log.info("unaligned gaps: %d source, %d target sentences", gaps_src, gaps_tgt)
    return links


def unaligned_indices(doc: DocumentPair, links: list[AlignmentLink]) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Source and target sentence indices left out of the matching."""
    linked_src = {link.src_idx for link in links}
    linked_tgt = {link.tgt_idx for link in links}
    src = tuple(i for i in range(len(doc.src_sents)) if i not in linked_src)
    tgt = tuple(j for j in range(len(doc.tgt_sents)) if j not in linked_tgt)
    return src, tgt


def pivot_key(line: str) -> str:
    """Join key for an English line: NFC, lowercase, collapsed whitespace,
    terminal punctuation stripped."""
    text = unicodedata.normalize("NFC", line).lower()
    text = " ".join(text.split())
    while True:
        before = text
        while text and unicodedata.category(text[-1]).startswith("P"):
            text = text[:-1]
        text = text.rstrip()
        if text == before:
            return text


@dataclass(frozen=True)
class MultiwayTuple:
    """One meaning expressed in several languages, keyed by its pivot line."""

    sentences: dict[str, str]
    pivot_key: str
    pivot: str = PIVOT

    def __post_init__(self):
        object.__setattr__(self, "sentences", dict(self.sentences))
        if self.pivot not in self.sentences:
            raise InputError(f"tuple is missing its pivot language {self.pivot!r}")
        if len(self.sentences) < 2:
            raise InputError("tuple needs the pivot plus at least one other language")

    def langs(self) -> tuple[str, ...]:
        return tuple(self.sentences)


def build_multiway(
    pairs: Mapping[str, list[tuple[str, str]]],
    pivot: str = PIVOT,
) -> list[MultiwayTuple]:
    """Join per-language (pivot_line, other_line) lists on the pivot key.

    Emits one tuple per key, in first-appearance order; the stored pivot
    sentence is the first surface form seen. Duplicate keys within one
    language keep the first pair and log the rest.
    """
    if not pairs:
        raise InputError("no pair lists to join")
    if pivot in pairs:
        raise ConfigError(f"pivot language {pivot!r} cannot also be a joined pair list")
    joined: dict[str, dict[str, str]] = {}
    for lang, pair_list in pairs.items():
        for pivot_line, other_line in pair_list:
            key = pivot_key(pivot_line)
            slot = joined.setdefault(key, {pivot: pivot_line})
            if lang in slot:
                log.warning("duplicate pivot key %r for %s: keeping the first pair", key, lang)
                continue
            slot[lang] = other_line
    return [MultiwayTuple(sentences, key, pivot=pivot) for key, sentences in joined.items()]


def links_to_tsv(links: Iterable[AlignmentLink]) -> str:
    """One (src_idx, tgt_idx, score) row per link."""
    lines = [f"{link.src_idx}\t{link.tgt_idx}\t{link.score:.6f}" for link in links]
    return "".join(line + "\n" for line in lines)


def _check_cell(text: str) -> str:
    if "\t" in text or "\n" in text:
        raise InputError("sentences in TSV cells cannot contain tabs or newlines")
    return text


def multiway_to_tsv(tuples: list[MultiwayTuple], langs: tuple[str, ...] | None = None) -> str:
    """Header of language codes, one row per tuple, absent languages dashed."""
    if not tuples:
        raise InputError("no tuples to render")
    pivot = tuples[0].pivot
    if langs is None:
        seen: list[str] = [pivot]
        for entry in tuples:
            for code in entry.sentences:
                if code not in seen:
                    seen.append(code)
        langs = (pivot, *sorted(seen[1:]))
    rows = ["\t".join(langs)]
    for entry in tuples:
        rows.append(
            "\t".join(
                _check_cell(entry.sentences[code]) if code in entry.sentences else ABSENT_CELL
                for code in langs
            )
        )
    return "".join(row + "\n" for row in rows)


def read_multiway_tsv(text: str, pivot: str = PIVOT) -> list[MultiwayTuple]:
    """Inverse of multiway_to_tsv; dashed cells mean the language is absent."""
    lines = [line for line in text.split("\n") if line != ""]
    if not lines:
        raise InputError("empty multiway TSV")
    langs = lines[0].split("\t")
    if pivot not in langs:
        raise InputError(f"multiway TSV header lacks the pivot language {pivot!r}")
    tuples = []
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.split("\t")
        if len(cells) != len(langs):
            raise InputError(f"line {lineno}: {len(cells)} cells for {len(langs)} languages")
        sentences = {
            code: cell for code, cell in zip(langs, cells) if cell != ABSENT_CELL
        }
        if pivot not in sentences:
            raise InputError(f"line {lineno}: missing pivot sentence")
        tuples.append(MultiwayTuple(sentences, pivot_key(sentences[pivot]), pivot=pivot))
    return tuples
