"""Corpus ingestion, mixture sampling, and token-budgeted batching.

Parallel text arrives as paired line-aligned files or a two-column TSV and is
tokenized into :class:`ParallelExample` records: the source row carries the
target-language control token, then content, then eos; the target row is
framed bos ... eos.  A :class:`MixtureStream` draws examples from several
corpora with temperature-scaled probabilities, and :func:`make_batches` packs
one epoch of examples into padded matrices under a token budget.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, InputError
from .langs import Direction
from .subword import SubwordModel, normalize

log = logging.getLogger(__name__)

PROVENANCES = ("authentic", "backtranslated", "copy")


@dataclass(frozen=True)
class ParallelExample:
    """One tokenized sentence pair with its direction and origin."""

    src_ids: tuple[int, ...]
    tgt_ids: tuple[int, ...]
    direction: Direction
    provenance: str = "authentic"

    def __post_init__(self):
        object.__setattr__(self, "src_ids", tuple(int(i) for i in self.src_ids))
        object.__setattr__(self, "tgt_ids", tuple(int(i) for i in self.tgt_ids))
        if self.provenance not in PROVENANCES:
            raise ConfigError(f"unknown provenance {self.provenance!r}; want one of {PROVENANCES}")
        if self.direction.src == self.direction.tgt and self.provenance != "copy":
            raise ConfigError("same-language direction is reserved for copy provenance")
        if len(self.src_ids) < 2 or len(self.tgt_ids) < 3:
            raise InputError("example too short: need control+eos source and bos+content+eos target")
        if self.tgt_ids[0] != SubwordModel.bos_id or self.tgt_ids[-1] != SubwordModel.eos_id:
            raise InputError("target sequence must be framed bos ... eos")
        if self.src_ids[-1] != SubwordModel.eos_id:
            raise InputError("source sequence must end with eos")
        if SubwordModel.pad_id in self.src_ids or SubwordModel.pad_id in self.tgt_ids:
            raise InputError("pad id inside a sequence")


def encode_pair(
    model: SubwordModel,
    src_text: str,
    tgt_text: str,
    direction: Direction,
    provenance: str = "authentic",
) -> ParallelExample:
    """Tokenize one sentence pair and frame it for the model."""
    src_ids = (model.control_id(direction.tgt), *model.encode(src_text), model.eos_id)
    tgt_ids = (model.bos_id, *model.encode(tgt_text), model.eos_id)
    return ParallelExample(src_ids, tgt_ids, direction, provenance)


def _read_lines(path: str | Path) -> list[str]:
    """Read a UTF-8 text file, reporting the line number of any bad bytes."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    raw_lines = data.split(b"\n")
    if raw_lines and raw_lines[-1] == b"":
        raw_lines.pop()
    lines = []
    for lineno, raw in enumerate(raw_lines, start=1):
        if raw.endswith(b"\r"):
            raw = raw[:-1]
        try:
            lines.append(raw.decode("utf-8"))
        except UnicodeDecodeError as exc:
            raise InputError(f"{path}: line {lineno}: undecodable bytes ({exc.reason})") from exc
    return lines


def _pair_examples(
    rows: list[tuple[str, str]],
    direction: Direction,
    model: SubwordModel,
    provenance: str,
    origin: str,
) -> list[ParallelExample]:
    examples = []
    dropped = 0
    for lineno, (src_text, tgt_text) in enumerate(rows, start=1):
        if not normalize(src_text) or not normalize(tgt_text):
            dropped += 1
            log.warning("%s: line %d: empty side, pair dropped", origin, lineno)
            continue
        examples.append(encode_pair(model, src_text, tgt_text, direction, provenance))
    if dropped:
        log.warning("%s: dropped %d pairs with an empty side", origin, dropped)
    return examples


def ingest_parallel(
    src_file: str | Path,
    tgt_file: str | Path,
    direction: Direction,
    model: SubwordModel,
    provenance: str = "authentic",
) -> list[ParallelExample]:
    """Read two line-aligned files into examples; line i pairs with line i."""
    src_lines = _read_lines(src_file)
    tgt_lines = _read_lines(tgt_file)
    if len(src_lines) != len(tgt_lines):
        raise InputError(
            f"line-count mismatch: {src_file} has {len(src_lines)} lines, "
            f"{tgt_file} has {len(tgt_lines)}"
        )
    rows = list(zip(src_lines, tgt_lines))
    return _pair_examples(rows, direction, model, provenance, str(src_file))


def ingest_tsv(
    tsv_file: str | Path,
    direction: Direction,
    model: SubwordModel,
    provenance: str = "authentic",
) -> list[ParallelExample]:
    """Read a two-column ``source<TAB>target`` file into examples."""
    rows = []
    for lineno, line in enumerate(_read_lines(tsv_file), start=1):
        if "\t" not in line:
            raise InputError(f"{tsv_file}: line {lineno}: expected source<TAB>target")
        src_text, tgt_text = line.split("\t", 1)
        rows.append((src_text, tgt_text))
    return _pair_examples(rows, direction, model, provenance, str(tsv_file))


def copy_augment(mono_file: str | Path, lang: str, model: SubwordModel) -> list[ParallelExample]:
    """Turn monolingual lines into same-language copy examples."""
    direction = Direction(lang, lang)
    rows = [(line, line) for line in _read_lines(mono_file)]
    return _pair_examples(rows, direction, model, "copy", str(mono_file))


class _CorpusCursor:
    """Walk one corpus in seeded permutations, reshuffling each cycle."""

    def __init__(self, examples: tuple[ParallelExample, ...], seed: int, index: int):
        self._examples = examples
        self._seed = seed
        self._index = index
        self._cycle = -1
        self._pos = 0
        self._order = np.empty(0, dtype=np.int64)

    def next(self) -> ParallelExample:
        if self._pos >= len(self._order):
            self._cycle += 1
            rng = np.random.Generator(np.random.PCG64([self._seed, self._index, self._cycle]))
            self._order = rng.permutation(len(self._examples))
            self._pos = 0
        example = self._examples[int(self._order[self._pos])]
        self._pos += 1
        return example


class MixtureStream:
    """Deterministic example stream over several weighted corpora.

    Corpus ``i`` is drawn with probability proportional to
    ``(weight_i * len(corpus_i)) ** (1 / temperature)``.  Within a corpus,
    examples come out in seeded permutations that reshuffle when exhausted,
    so the stream is reproducible given (seed, corpora order) and an
    ``epoch_size`` of draws touches corpora in expectation proportionally.
    """

    def __init__(
        self,
        corpora: list[tuple[list[ParallelExample], float]],
        temperature: float = 1.7,
        seed: int = 0,
    ):
        if not corpora:
            raise InputError("no corpora given")
        if not temperature > 0:
            raise ConfigError(f"temperature must be positive, got {temperature}")
        self._corpora = []
        for examples, weight in corpora:
            if not weight > 0:
                raise ConfigError(f"corpus weight must be positive, got {weight}")
            self._corpora.append((tuple(examples), float(weight)))
        self.epoch_size = sum(len(ex) for ex, _ in self._corpora)
        if self.epoch_size == 0:
            raise InputError("all corpora are empty")
        scores = [
            (w * len(ex)) ** (1.0 / temperature) if ex else 0.0 for ex, w in self._corpora
        ]
        total = math.fsum(scores)
        self.probs = tuple(s / total for s in scores)
        self._cum = np.cumsum(self.probs)
        self._cum[-1] = 1.0  # guard the float edge
        self._seed = int(seed)
        self._choice_rng = np.random.Generator(np.random.PCG64(self._seed))
        self._cursors = [
            _CorpusCursor(examples, self._seed, i)
            for i, (examples, _) in enumerate(self._corpora)
        ]

    def __iter__(self):
        return self

    def __next__(self) -> ParallelExample:
        i = int(np.searchsorted(self._cum, self._choice_rng.random(), side="right"))
        while not self._corpora[i][0]:  # zero-probability plateau edge
            i += 1
        return self._cursors[i].next()

    def take(self, n: int) -> list[ParallelExample]:
        return [next(self) for _ in range(n)]

    def next_epoch(self) -> list[ParallelExample]:
        """One epoch's worth of draws: the summed size of all corpora."""
        return self.take(self.epoch_size)


def sample_mixture(
    corpora: list[tuple[list[ParallelExample], float]],
    temperature: float = 1.7,
    seed: int = 0,
) -> MixtureStream:
    """Build the deterministic temperature-weighted mixture stream."""
    return MixtureStream(corpora, temperature=temperature, seed=seed)


@dataclass(frozen=True, eq=False)
class Batch:
    """Padded token matrices for one optimizer step.

    Masks are true exactly on non-pad positions; ``token_count`` counts
    non-pad target tokens, the quantity the token budget bounds.
    """

    src: np.ndarray
    tgt: np.ndarray
    src_mask: np.ndarray
    tgt_mask: np.ndarray
    token_count: int
    directions: tuple[Direction, ...]
    provenances: tuple[str, ...]

    @property
    def size(self) -> int:
        return self.src.shape[0]


def _build_batch(examples: list[ParallelExample]) -> Batch:
    pad = SubwordModel.pad_id
    src_len = max(len(ex.src_ids) for ex in examples)
    tgt_len = max(len(ex.tgt_ids) for ex in examples)
    src = np.full((len(examples), src_len), pad, dtype=np.int64)
    tgt = np.full((len(examples), tgt_len), pad, dtype=np.int64)
    for row, ex in enumerate(examples):
        src[row, : len(ex.src_ids)] = ex.src_ids
        tgt[row, : len(ex.tgt_ids)] = ex.tgt_ids
    src_mask = src != pad
    tgt_mask = tgt != pad
    return Batch(
        src=src,
        tgt=tgt,
        src_mask=src_mask,
        tgt_mask=tgt_mask,
        token_count=int(tgt_mask.sum()),
        directions=tuple(ex.direction for ex in examples),
        provenances=tuple(ex.provenance for ex in examples),
    )


def make_batches(
    stream,
    token_budget: int,
    bucket_width: int = 4,
    seed: int = 0,
) -> tuple[list[Batch], int]:
    """Pack one epoch of examples into batches under a per-side token budget.

    Examples are grouped into length buckets of width ``bucket_width`` and
    each bucket is filled greedily: a batch closes when adding the next
    example would push padded rows*max_len past ``token_budget`` on either
    side.  Batch order is then shuffled by ``seed``.  Returns the batches and
    the number of examples dropped for exceeding the budget on their own.
    """
    if token_budget < 1:
        raise ConfigError(f"token_budget must be positive, got {token_budget}")
    if bucket_width < 1:
        raise ConfigError(f"bucket_width must be positive, got {bucket_width}")
    examples = stream.next_epoch() if isinstance(stream, MixtureStream) else list(stream)

    dropped = 0
    buckets: dict[int, list[ParallelExample]] = {}
    for ex in examples:
        longest = max(len(ex.src_ids), len(ex.tgt_ids))
        if longest > token_budget:
            dropped += 1
            continue
        buckets.setdefault(longest // bucket_width, []).append(ex)
    if dropped:
        log.warning("dropped %d examples longer than the %d-token budget", dropped, token_budget)

    batches: list[Batch] = []
    for key in sorted(buckets):
        open_rows: list[ParallelExample] = []
        src_max = tgt_max = 0
        for ex in buckets[key]:
            new_src = max(src_max, len(ex.src_ids))
            new_tgt = max(tgt_max, len(ex.tgt_ids))
            rows = len(open_rows) + 1
            if open_rows and (rows * new_src > token_budget or rows * new_tgt > token_budget):
                batches.append(_build_batch(open_rows))
                open_rows, src_max, tgt_max = [], 0, 0
                new_src, new_tgt = len(ex.src_ids), len(ex.tgt_ids)
            open_rows.append(ex)
            src_max, tgt_max = new_src, new_tgt
        if open_rows:
            batches.append(_build_batch(open_rows))

    order = np.random.Generator(np.random.PCG64(seed)).permutation(len(batches))
    return [batches[int(i)] for i in order], dropped


@dataclass(frozen=True)
class CorpusEntry:
    """One corpus declaration from a manifest file."""

    name: str
    direction: Direction
    src: Path | None = None
    tgt: Path | None = None
    tsv: Path | None = None
    weight: float = 1.0
    provenance: str = "authentic"

    def load(self, model: SubwordModel) -> list[ParallelExample]:
        if self.tsv is not None:
            return ingest_tsv(self.tsv, self.direction, model, self.provenance)
        return ingest_parallel(self.src, self.tgt, self.direction, model, self.provenance)


_MANIFEST_KEYS = {"name", "direction", "src", "tgt", "tsv", "weight", "provenance"}


def read_manifest(path: str | Path) -> list[CorpusEntry]:
    """Parse a corpus manifest: ``key = value`` lines, blank-line separated.

    Each block names one corpus with a ``direction`` (``src-tgt``), either
    ``src``/``tgt`` paths or a ``tsv`` path (relative to the manifest), and
    optional ``weight`` and ``provenance``.
    """
    path = Path(path)
    blocks: list[dict[str, str]] = [{}]
    for lineno, line in enumerate(_read_lines(path), start=1):
        line = line.strip()
        if not line:
            if blocks[-1]:
                blocks.append({})
            continue
        if line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}: line {lineno}: expected key = value")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _MANIFEST_KEYS:
            raise ConfigError(f"{path}: line {lineno}: unknown manifest key {key!r}")
        if key in blocks[-1]:
            raise ConfigError(f"{path}: line {lineno}: duplicate key {key!r} in one block")
        blocks[-1][key] = value

    entries = []
    for block in blocks:
        if not block:
            continue
        if "direction" not in block:
            raise ConfigError(f"{path}: corpus block missing 'direction'")
        src_code, sep, tgt_code = block["direction"].partition("-")
        if not sep:
            raise ConfigError(f"{path}: direction must look like 'en-hi', got {block['direction']!r}")
        direction = Direction(src_code, tgt_code)
        has_pair = "src" in block and "tgt" in block
        if has_pair == ("tsv" in block):
            raise ConfigError(f"{path}: corpus block needs either src+tgt or tsv, not both/neither")
        try:
            weight = float(block.get("weight", "1.0"))
        except ValueError as exc:
            raise ConfigError(f"{path}: bad weight {block['weight']!r}") from exc
        if not weight > 0:
            raise ConfigError(f"{path}: weight must be positive, got {weight}")
        provenance = block.get("provenance", "authentic")
        if provenance not in PROVENANCES:
            raise ConfigError(f"{path}: unknown provenance {provenance!r}")
        root = path.parent
        entries.append(
            CorpusEntry(
                name=block.get("name", str(direction)),
                direction=direction,
                src=root / block["src"] if "src" in block else None,
                tgt=root / block["tgt"] if "tgt" in block else None,
                tsv=root / block["tsv"] if "tsv" in block else None,
                weight=weight,
                provenance=provenance,
            )
        )
    if not entries:
        raise ConfigError(f"{path}: manifest declares no corpora")
    return entries
