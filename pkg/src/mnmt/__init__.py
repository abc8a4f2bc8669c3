"""Desk-scale multilingual neural machine translation toolkit.

Subpackages cover the full pipeline: unigram subword vocabularies
(:mod:`mnmt.subword`), corpus ingestion and batching (:mod:`mnmt.corpus`),
a control-token multiway transformer with exact gradients
(:mod:`mnmt.model`), training regimens including backtranslation and
fine-tuning (:mod:`mnmt.training`), BLEU metrics and evaluation grids
(:mod:`mnmt.metrics`), BLEU-anchored sentence alignment (:mod:`mnmt.align`),
and a command-line / HTTP surface (:mod:`mnmt.cli`, :mod:`mnmt.serve`).
"""

from .align import (AlignmentLink, DocumentPair, MultiwayTuple, bleualign,
                    build_multiway)
from .checkpoint import (Checkpoint, checkpoint_bytes, checkpoint_digest,
                         load_checkpoint, save_checkpoint)
from .corpus import (Batch, CorpusEntry, MixtureStream, ParallelExample,
                     copy_augment, encode_pair, make_batches, read_manifest)
from .errors import ConfigError, InputError, MnmtError, NumericsError
from .langs import Direction, register_language, registered_languages
from .metrics import (BleuReport, EvalGrid, corpus_bleu, eval_grid,
                      render_grid_tsv, sentence_bleu_smoothed)
from .model import (ModelConfig, Parameters, greedy_decode, init_parameters,
                    translate_batch)
from .serve import TranslationService, make_server
from .subword import SubwordModel, merge_vocabularies, train_unigram
from .training import TrainConfig, backtranslate, train

__all__ = [
    "AlignmentLink",
    "Batch",
    "BleuReport",
    "Checkpoint",
    "ConfigError",
    "CorpusEntry",
    "Direction",
    "DocumentPair",
    "EvalGrid",
    "InputError",
    "MixtureStream",
    "MnmtError",
    "ModelConfig",
    "MultiwayTuple",
    "NumericsError",
    "ParallelExample",
    "Parameters",
    "SubwordModel",
    "TrainConfig",
    "TranslationService",
    "backtranslate",
    "bleualign",
    "build_multiway",
    "checkpoint_bytes",
    "checkpoint_digest",
    "copy_augment",
    "corpus_bleu",
    "encode_pair",
    "eval_grid",
    "greedy_decode",
    "init_parameters",
    "load_checkpoint",
    "make_batches",
    "make_server",
    "merge_vocabularies",
    "read_manifest",
    "register_language",
    "registered_languages",
    "render_grid_tsv",
    "save_checkpoint",
    "sentence_bleu_smoothed",
    "train",
    "train_unigram",
    "translate_batch",
]

__version__ = "0.1.0"
