"""Command-line surface: one subcommand per pipeline stage.

Exit codes: 0 success, 1 input error (bad data, unreadable files, usage),
2 configuration error, 3 numerical abort. Primary output goes to stdout;
all diagnostics go to stderr so the data stream stays pipeable.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .align import DocumentPair, bleualign, build_multiway, links_to_tsv, multiway_to_tsv, read_multiway_tsv, unaligned_indices
from .checkpoint import Checkpoint, checkpoint_digest, load_checkpoint
from .corpus import MixtureStream, _read_lines, read_manifest
from .errors import ConfigError, InputError, NumericsError
from .langs import register_language, require_registered
from .metrics import corpus_bleu, eval_grid, grid_records, render_grid_tsv
from .model import ModelConfig, translate_batch
from .serve import TranslationService, make_server
from .subword import SubwordModel, merge_vocabularies, train_unigram
from .training import TrainConfig, backtranslate, finetune, train

log = logging.getLogger(__name__)

_MODEL_CASTS = {
    "d_model": int, "n_heads": int, "n_enc_layers": int, "n_dec_layers": int,
    "d_ff": int, "dropout": float, "label_smoothing": float, "max_len": int,
    "dtype": str,
}
_TRAIN_CASTS = {
    "peak_lr": float, "warmup_steps": int, "max_epochs": int, "max_steps": int,
    "grad_clip_norm": float, "checkpoint_every": int, "token_budget": int,
    "bucket_width": int,
}


@dataclass
class RunManifest:
    """One training run, fully specified: a rerun with the same manifest is
    byte-identical. The seed lands in the run directory's config.json."""

    vocab: Path
    corpora: Path
    out: Path
    seed: int = 1
    temperature: float = 1.7
    init: Path | None = None
    model_fields: dict = field(default_factory=dict)
    train_fields: dict = field(default_factory=dict)


def _read_kv(path: Path) -> dict[str, str]:
    pairs: dict[str, str] = {}
    for lineno, line in enumerate(_read_lines(path), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}: line {lineno}: expected key = value")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key in pairs:
            raise ConfigError(f"{path}: line {lineno}: duplicate key {key!r}")
        pairs[key] = value
    return pairs


def _cast(path: Path, key: str, value: str, caster):
    try:
        return caster(value)
    except ValueError as exc:
        raise ConfigError(f"{path}: bad value for {key}: {value!r}") from exc


def read_run_manifest(path: str | Path) -> RunManifest:
    """Parse a run manifest and check every referenced path resolves."""
    path = Path(path)
    pairs = _read_kv(path)
    base = path.parent
    for required in ("vocab", "corpora", "out"):
        if required not in pairs:
            raise ConfigError(f"{path}: missing required key {required!r}")
    manifest = RunManifest(
        vocab=base / pairs.pop("vocab"),
        corpora=base / pairs.pop("corpora"),
        out=base / pairs.pop("out"),
    )
    if "seed" in pairs:
        manifest.seed = _cast(path, "seed", pairs.pop("seed"), int)
    if "temperature" in pairs:
        manifest.temperature = _cast(path, "temperature", pairs.pop("temperature"), float)
    if "init" in pairs:
        manifest.init = base / pairs.pop("init")
    for key, value in pairs.items():
        if key in _MODEL_CASTS:
            manifest.model_fields[key] = _cast(path, key, value, _MODEL_CASTS[key])
        elif key in _TRAIN_CASTS:
            manifest.train_fields[key] = _cast(path, key, value, _TRAIN_CASTS[key])
        else:
            raise ConfigError(f"{path}: unknown manifest key {key!r}")
    for name in ("vocab", "corpora", "init"):
        target = getattr(manifest, name)
        if target is not None and not target.exists():
            raise InputError(f"{path}: {name} path {target} does not exist")
    return manifest


@contextlib.contextmanager
def _run_lock(run_dir: Path):
    """One training run per output directory at a time."""
    run_dir.mkdir(parents=True, exist_ok=True)
    lock = run_dir / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise ConfigError(
            f"{run_dir} is locked by another training run; remove {lock} if it is stale"
        ) from None
    try:
        os.write(fd, f"{os.getpid()}\n".encode())
        os.close(fd)
        yield
    finally:
        lock.unlink(missing_ok=True)


def _load_run_inputs(manifest: RunManifest):
    model = SubwordModel.load(manifest.vocab)
    entries = read_manifest(manifest.corpora)
    corpora = [(entry.load(model), entry.weight) for entry in entries]
    stream = MixtureStream(corpora, temperature=manifest.temperature, seed=manifest.seed)
    mconfig = ModelConfig(vocab_size=len(model), **manifest.model_fields)
    tconfig = TrainConfig(seed=manifest.seed, **manifest.train_fields)
    return model, stream, mconfig, tconfig


def _print_run_result(ckpt: Checkpoint, run_dir: Path) -> None:
    print(f"{checkpoint_digest(ckpt)}\t{run_dir / 'best.ckpt'}")


def _stdin_lines() -> list[str]:
    return [line.rstrip("\n") for line in sys.stdin]


# -- subcommands ----------------------------------------------------------


def _cmd_spm_train(args) -> int:
    lines: list[str] = []
    for source in args.inputs:
        lines.extend(_read_lines(source))
    controls = None
    if args.langs:
        controls = tuple(register_language(code) for code in args.langs.split(","))
    model = train_unigram(lines, args.vocab_size, control_langs=controls)
    model.save(args.out)
    log.info("trained %d-piece vocabulary -> %s", len(model), args.out)
    return 0


def _cmd_spm_encode(args) -> int:
    model = SubwordModel.load(args.vocab)
    for line in _stdin_lines():
        ids = model.encode(line)
        if args.ids:
            print(" ".join(str(i) for i in ids))
        else:
            print(" ".join(model.piece_of(i) for i in ids))
    return 0


def _cmd_spm_merge(args) -> int:
    merged = merge_vocabularies([SubwordModel.load(path) for path in args.vocabs])
    merged.save(args.out)
    log.info("merged %d vocabularies into %d pieces -> %s", len(args.vocabs), len(merged), args.out)
    return 0


def _cmd_train(args) -> int:
    manifest = read_run_manifest(args.manifest)
    model, stream, mconfig, tconfig = _load_run_inputs(manifest)
    init = load_checkpoint(manifest.init) if manifest.init is not None else None
    with _run_lock(manifest.out):
        ckpt = train(
            mconfig, tconfig, stream,
            init=init, vocab_hash=model.vocab_hash, run_dir=manifest.out,
        )
    _print_run_result(ckpt, manifest.out)
    return 0


def _cmd_finetune(args) -> int:
    manifest = read_run_manifest(args.manifest)
    init_path = Path(args.init) if args.init else manifest.init
    if init_path is None:
        raise ConfigError("finetune needs an init checkpoint (--init or manifest key)")
    model, stream, _, tconfig = _load_run_inputs(manifest)
    ckpt = load_checkpoint(init_path)
    with _run_lock(manifest.out):
        tuned = finetune(
            ckpt, stream, tconfig.for_finetune(),
            vocab_hash=model.vocab_hash, run_dir=manifest.out,
        )
    _print_run_result(tuned, manifest.out)
    return 0


def _cmd_backtranslate(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    model = SubwordModel.load(args.vocab)
    mono = _read_lines(args.mono)
    examples = backtranslate(
        ckpt, model, mono, args.lang, args.pivot,
        allow_any_pivot=args.allow_any_pivot, max_out=args.max_out,
    )
    out = sys.stdout if args.out is None else open(args.out, "w", encoding="utf-8")
    try:
        for ex in examples:
            out.write(f"{model.decode(ex.src_ids)}\t{model.decode(ex.tgt_ids)}\n")
    finally:
        if out is not sys.stdout:
            out.close()
    log.info("kept %d of %d monolingual lines", len(examples), len(mono))
    return 0


def _cmd_translate(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    model = SubwordModel.load(args.vocab)
    require_registered(args.src)
    require_registered(args.tgt)
    lines = _stdin_lines()
    for start in range(0, len(lines), args.batch_size):
        chunk = lines[start : start + args.batch_size]
        for hyp in translate_batch(ckpt.params, ckpt.mconfig, model, chunk, args.tgt, max_out=args.max_out):
            print(hyp)
    return 0


def _cmd_score(args) -> int:
    hyps = _read_lines(args.hyps)
    refs = _read_lines(args.refs)
    model = SubwordModel.load(args.vocab) if args.vocab else None
    report = corpus_bleu(hyps, refs, mode=args.mode, model=model)
    if args.json:
        print(json.dumps(report.as_dict(), ensure_ascii=False))
    else:
        print(f"BLEU = {report.bleu:.2f}")
    return 0


def _cmd_grid(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    model = SubwordModel.load(args.vocab)
    tuples = read_multiway_tsv("\n".join(_read_lines(args.testset)) + "\n")
    langs = tuple(args.langs.split(",")) if args.langs else None
    grid = eval_grid(
        ckpt, model, tuples, mode=args.mode,
        langs=langs, max_out=args.max_out,
    )
    if args.json:
        print(json.dumps(grid_records(grid), ensure_ascii=False))
    else:
        sys.stdout.write(render_grid_tsv(grid))
    return 0


def _cmd_align(args) -> int:
    doc = DocumentPair(
        tuple(_read_lines(args.src)),
        tuple(_read_lines(args.tgt)),
        tuple(_read_lines(args.mt)),
    )
    links = bleualign(doc, threshold=args.threshold)
    sys.stdout.write(links_to_tsv(links))
    gaps_src, gaps_tgt = unaligned_indices(doc, links)
    if gaps_src or gaps_tgt:
        log.info("unlinked source indices: %s; unlinked target indices: %s",
                 list(gaps_src), list(gaps_tgt))
    return 0


def _cmd_multiway_join(args) -> int:
    pairs: dict[str, list[tuple[str, str]]] = {}
    for spec in args.pairs:
        lang, sep, path = spec.partition("=")
        if not sep or not lang or not path:
            raise ConfigError(f"--pairs wants lang=path, got {spec!r}")
        rows = []
        for lineno, line in enumerate(_read_lines(path), start=1):
            left, tab, right = line.partition("\t")
            if not tab:
                raise InputError(f"{path}: line {lineno}: expected two tab-separated columns")
            rows.append((left, right))
        pairs[lang] = rows
    tuples = build_multiway(pairs)
    sys.stdout.write(multiway_to_tsv(tuples))
    return 0


def _cmd_serve(args) -> int:
    import threading

    service = TranslationService(workers=args.workers, max_out=args.max_out)
    server = make_server(service, args.host, args.port)
    worker = threading.Thread(target=server.serve_forever, daemon=True)
    worker.start()
    host, port = server.server_address[:2]
    log.info("listening on %s:%d; loading model", host, port)
    service.load(load_checkpoint(args.ckpt), SubwordModel.load(args.vocab))
    log.info("ready at step %d", service.ckpt.step)
    try:
        worker.join()
    except KeyboardInterrupt:
        log.info("shutting down")
        server.shutdown()
    return 0


# -- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mnmt",
        description="Desk-scale multilingual translation toolkit.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="subcommand")

    p = sub.add_parser("spm-train", help="train a unigram subword vocabulary")
    p.add_argument("inputs", nargs="+", help="text files, one sentence per line")
    p.add_argument("--vocab-size", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--langs", help="comma-separated control-token languages (default: full registry)")
    p.set_defaults(func=_cmd_spm_train)

    p = sub.add_parser("spm-encode", help="segment stdin lines with a vocabulary")
    p.add_argument("--vocab", required=True)
    p.add_argument("--ids", action="store_true", help="emit token ids instead of pieces")
    p.set_defaults(func=_cmd_spm_encode)

    p = sub.add_parser("spm-merge", help="merge vocabularies (mean probability, renormalized)")
    p.add_argument("vocabs", nargs="+", help="vocabulary files to merge")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_spm_merge)

    p = sub.add_parser("train", help="train a model from a run manifest")
    p.add_argument("--manifest", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("finetune", help="warm-start training at the fine-tuning learning rate")
    p.add_argument("--manifest", required=True)
    p.add_argument("--init", help="checkpoint to start from (overrides the manifest key)")
    p.set_defaults(func=_cmd_finetune)

    p = sub.add_parser("backtranslate", help="decode monolingual lines into a pivot and emit a TSV corpus")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--mono", required=True, help="monolingual target-language lines")
    p.add_argument("--lang", required=True, help="language of the monolingual file")
    p.add_argument("--pivot", required=True, help="language to decode into (en or hi)")
    p.add_argument("--allow-any-pivot", action="store_true")
    p.add_argument("--max-out", type=int, default=64)
    p.add_argument("--out", help="output TSV (default stdout)")
    p.set_defaults(func=_cmd_backtranslate)

    p = sub.add_parser("translate", help="translate stdin lines to stdout")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--src", required=True)
    p.add_argument("--tgt", required=True)
    p.add_argument("--max-out", type=int, default=64)
    p.add_argument("--batch-size", type=int, default=32)
    p.set_defaults(func=_cmd_translate)

    p = sub.add_parser("score", help="corpus BLEU of a hypothesis file against a reference file")
    p.add_argument("--hyps", required=True)
    p.add_argument("--refs", required=True)
    p.add_argument("--mode", choices=("whitespace", "subword"), default="whitespace")
    p.add_argument("--vocab", help="subword model (required for subword mode)")
    p.add_argument("--json", action="store_true", help="full report as JSON")
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("grid", help="decode and score every language pair in a multiway TSV")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--testset", required=True, help="multiway TSV test set")
    p.add_argument("--mode", choices=("whitespace", "subword"), default="whitespace")
    p.add_argument("--langs", help="comma-separated subset/order of languages")
    p.add_argument("--max-out", type=int, default=64)
    p.add_argument("--json", action="store_true", help="one JSON record per cell")
    p.set_defaults(func=_cmd_grid)

    p = sub.add_parser("align", help="monotone BLEU-anchored sentence alignment")
    p.add_argument("--src", required=True, help="source sentences, one per line")
    p.add_argument("--tgt", required=True, help="target sentences, one per line")
    p.add_argument("--mt", required=True, help="machine translation of each source sentence")
    p.add_argument("--threshold", type=float, default=0.1)
    p.set_defaults(func=_cmd_align)

    p = sub.add_parser("multiway-join", help="join per-language pair TSVs on the pivot line")
    p.add_argument("--pairs", action="append", required=True, metavar="LANG=PATH",
                   help="repeatable; TSV of (pivot_line, lang_line) rows")
    p.set_defaults(func=_cmd_multiway_join)

    p = sub.add_parser("serve", help="HTTP translation service")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--workers", type=int, default=4)
    p.add_argument("--max-out", type=int, default=64)
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    if not logging.getLogger().handlers:
        logging.basicConfig(
            stream=sys.stderr, level=logging.INFO,
            format="%(levelname)s %(name)s: %(message)s",
        )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors; remap
        code = exc.code if isinstance(exc.code, int) else 1
        return 0 if code == 0 else 1
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
