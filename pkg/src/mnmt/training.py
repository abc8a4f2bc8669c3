"""Optimization loop, warm starts, fine-tuning, and backtranslation.

The step loop is plain mini-batch gradient descent with adaptive moments
(beta1 0.9, beta2 0.98, eps 1e-9), linear warmup followed by inverse-sqrt
decay, and global-norm gradient clipping.  Everything is deterministic given
the seed: batch order, dropout masks, and therefore every checkpoint byte.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .checkpoint import (
    Checkpoint,
    require_compatible,
    save_checkpoint,
)
from .corpus import Batch, MixtureStream, ParallelExample, encode_pair, make_batches
from .errors import ConfigError, NumericsError
from .langs import Direction
from .model import ModelConfig, init_parameters, loss, loss_and_grads, translate_batch
from .subword import SubwordModel

log = logging.getLogger(__name__)

# Epoch budget of the full-scale reference system: 120 epochs of multilingual
# training, then 72 further epochs once backtranslated data is mixed in.
REFERENCE_REGIMEN = {"multilingual_epochs": 120, "backtranslation_extra_epochs": 72}

# Synthetic sources are only trusted into high-resource pivots by default.
DEFAULT_PIVOTS = ("en", "hi")

# Synthetic pairs whose source/target token-length ratio leaves this band
# are dropped as noise.
LENGTH_RATIO_BAND = (0.3, 3.0)

FINETUNE_LR_FACTOR = 0.2


@dataclass(frozen=True)
class TrainConfig:
    """Optimization knobs for one training run."""

    peak_lr: float = 2e-3
    warmup_steps: int = 400
    max_epochs: int | None = None
    max_steps: int | None = None
    grad_clip_norm: float = 1.0
    seed: int = 1
    checkpoint_every: int = 500
    token_budget: int = 1024
    bucket_width: int = 4

    def __post_init__(self):
        if (self.max_epochs is None) == (self.max_steps is None):
            raise ConfigError("set exactly one of max_epochs or max_steps")
        for name in ("peak_lr", "warmup_steps", "grad_clip_norm",
                     "checkpoint_every", "token_budget", "bucket_width"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        limit = self.max_epochs if self.max_steps is None else self.max_steps
        if limit < 0:
            raise ConfigError(f"run length must be non-negative, got {limit}")

    def for_finetune(self, **overrides) -> "TrainConfig":
        """Derived config with the conservative fine-tuning learning rate."""
        fields = asdict(self)
        fields["peak_lr"] = self.peak_lr * FINETUNE_LR_FACTOR
        fields.update(overrides)
        return TrainConfig(**fields)


def learning_rate(step: int, peak_lr: float, warmup_steps: int) -> float:
    """Linear warmup to ``peak_lr``, then inverse-sqrt decay. step >= 1."""
    return peak_lr * min(step / warmup_steps, math.sqrt(warmup_steps / step))


def clip_gradients(grads: dict[str, np.ndarray], names, max_norm: float) -> float:
    """Scale ``grads[names]`` in place to a global norm of at most max_norm."""
    total = 0.0
    for name in names:
        g = grads[name]
        total += float(np.dot(g.ravel(), g.ravel()))
    norm = math.sqrt(total)
    if norm > max_norm:
        scale = max_norm / norm
        for name in names:
            grads[name] = grads[name] * scale
    return norm


def adam_step(params, grads, opt: dict, lr: float,
              beta1: float = 0.9, beta2: float = 0.98, eps: float = 1e-9) -> None:
    """Bias-corrected adaptive-moment update of every trainable tensor."""
    opt["t"] += 1
    t = opt["t"]
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for name, tensor in params.trainable():
        g = grads[name]
        m = opt["m"][name]
        v = opt["v"][name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        update = (m / bc1) / (np.sqrt(v / bc2) + eps)
        tensor.data -= lr * update.astype(tensor.data.dtype, copy=False)


def _epoch_seed(seed: int, epoch: int) -> int:
    return int(np.random.SeedSequence([seed, epoch]).generate_state(1)[0])


def _epoch_examples(stream, epoch: int) -> list[ParallelExample]:
    if isinstance(stream, MixtureStream):
        return stream.next_epoch()
    return list(stream)


def _mean_loss(params, mconfig, batches: list[Batch]) -> float:
    total, count = 0.0, 0
    for batch in batches:
        n = int(batch.tgt_mask[:, 1:].sum())
        total += loss(params, mconfig, batch) * n
        count += n
    return total / max(count, 1)


def train(
    mconfig: ModelConfig,
    tconfig: TrainConfig,
    stream,
    init: Checkpoint | None = None,
    *,
    vocab_hash: str = "",
    run_dir: str | Path | None = None,
    dev_batches: list[Batch] | None = None,
) -> Checkpoint:
    """Run the step loop and return the final checkpoint.

    ``stream`` is a :class:`MixtureStream` (a fresh epoch per pass) or a plain
    example list (the same epoch repeated).  With ``init`` the parameters and
    optimizer moments continue from the checkpoint; the learning-rate schedule
    restarts, which is the warm-start convention fine-tuning relies on.
    Artifacts land in ``run_dir``: ``config.json``, ``loss.log`` lines of
    ``step<TAB>loss``, periodic ``step-<N>.ckpt``, and ``best.ckpt`` (lowest
    held-out loss when ``dev_batches`` is given, else the final state).
    """
    if init is not None:
        require_compatible(init, mconfig, vocab_hash or None)
        current = init.clone()
        if not vocab_hash:
            vocab_hash = init.vocab_hash
    else:
        current = Checkpoint(
            params=init_parameters(mconfig, seed=tconfig.seed),
            mconfig=mconfig,
            optimizer_state={},
            vocab_hash=vocab_hash,
        )
    params = current.params
    opt = current.optimizer_state

    run_path = Path(run_dir) if run_dir is not None else None
    if run_path is not None:
        run_path.mkdir(parents=True, exist_ok=True)
        snapshot = {
            "model": mconfig.to_dict(),
            "train": asdict(tconfig),
            "vocab_hash": vocab_hash,
        }
        (run_path / "config.json").write_text(
            json.dumps(snapshot, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )

    drop_rng = (
        np.random.Generator(np.random.PCG64([tconfig.seed, 977]))
        if mconfig.dropout > 0
        else None
    )
    loss_lines: list[str] = []
    last_good = current.clone()
    best_dev = math.inf
    best_ckpt: Checkpoint | None = None
    run_step = 0
    global_step = current.step
    epoch = current.epoch
    total_dropped = 0

    def snapshot_checkpoint() -> Checkpoint:
        return Checkpoint(
            params=params,
            mconfig=mconfig,
            optimizer_state=opt,
            vocab_hash=vocab_hash,
            step=global_step,
            epoch=epoch,
        ).clone()

    def flush_artifacts(final: Checkpoint) -> None:
        if run_path is None:
            return
        (run_path / "loss.log").write_text("".join(loss_lines), encoding="utf-8")
        save_checkpoint(final, run_path / f"step-{final.step}.ckpt")
        chosen = best_ckpt if best_ckpt is not None else final
        save_checkpoint(chosen, run_path / "best.ckpt")

    def consider_dev(ckpt: Checkpoint) -> None:
        nonlocal best_dev, best_ckpt
        if dev_batches is None:
            return
        dev = _mean_loss(params, mconfig, dev_batches)
        if dev < best_dev:
            best_dev = dev
            best_ckpt = ckpt

    budget_steps = tconfig.max_steps if tconfig.max_steps is not None else None
    budget_epochs = tconfig.max_epochs if tconfig.max_epochs is not None else None

    try:
        while True:
            if budget_steps is not None and run_step >= budget_steps:
                break
            if budget_epochs is not None and (epoch - current.epoch) >= budget_epochs:
                break
            examples = _epoch_examples(stream, epoch)
            batches, dropped = make_batches(
                examples,
                token_budget=tconfig.token_budget,
                bucket_width=tconfig.bucket_width,
                seed=_epoch_seed(tconfig.seed, epoch),
            )
            total_dropped += dropped
            for batch in batches:
                if budget_steps is not None and run_step >= budget_steps:
                    break
                run_step += 1
                global_step += 1
                value, grads = loss_and_grads(params, mconfig, batch, rng=drop_rng)
                names = [n for n, _ in params.trainable()]
                clip_gradients(grads, names, tconfig.grad_clip_norm)
                lr = learning_rate(run_step, tconfig.peak_lr, tconfig.warmup_steps)
                adam_step(params, grads, opt, lr)
                loss_lines.append(f"{global_step}\t{value:.6f}\n")
                if run_step % tconfig.checkpoint_every == 0:
                    ckpt = snapshot_checkpoint()
                    last_good = ckpt
                    consider_dev(ckpt)
                    if run_path is not None:
                        save_checkpoint(ckpt, run_path / f"step-{global_step}.ckpt")
            epoch += 1
    except NumericsError as exc:
        exc.checkpoint = last_good
        if run_path is not None:
            (run_path / "loss.log").write_text("".join(loss_lines), encoding="utf-8")
            save_checkpoint(last_good, run_path / "best.ckpt")
        raise

    final = snapshot_checkpoint()
    consider_dev(final)
    if total_dropped:
        log.warning("dropped %d over-budget examples during training", total_dropped)
    flush_artifacts(final)
    return final


def finetune(
    ckpt: Checkpoint,
    domain_stream,
    tconfig: TrainConfig,
    *,
    vocab_hash: str | None = None,
    run_dir: str | Path | None = None,
    dev_batches: list[Batch] | None = None,
) -> Checkpoint:
    """Continue training from ``ckpt`` on a narrow-domain stream."""
    return train(
        ckpt.mconfig,
        tconfig,
        domain_stream,
        init=ckpt,
        vocab_hash=vocab_hash if vocab_hash is not None else ckpt.vocab_hash,
        run_dir=run_dir,
        dev_batches=dev_batches,
    )


def backtranslate(
    ckpt: Checkpoint,
    model: SubwordModel,
    mono: list[str],
    lang: str,
    pivot: str,
    *,
    allow_any_pivot: bool = False,
    max_out: int = 64,
    chunk: int = 64,
) -> list[ParallelExample]:
    """Greedy-decode monolingual ``lang`` lines into ``pivot`` and pair them.

    The output examples translate pivot -> lang: synthetic decoded source,
    authentic monolingual target.  Pairs with an empty decode or a
    source/target token-length ratio outside ``LENGTH_RATIO_BAND`` are
    dropped and counted.
    """
    if pivot not in DEFAULT_PIVOTS and not allow_any_pivot:
        raise ConfigError(
            f"pivot {pivot!r} is outside the {{hi, en}} restriction for synthetic "
            "sources; pass allow_any_pivot to override"
        )
    if model.vocab_hash != ckpt.vocab_hash and ckpt.vocab_hash:
        raise ConfigError("vocabulary hash mismatch between checkpoint and tokenizer")
    direction = Direction(pivot, lang)
    lo, hi = LENGTH_RATIO_BAND
    out: list[ParallelExample] = []
    skipped_empty = 0
    skipped_ratio = 0
    for start in range(0, len(mono), chunk):
        lines = mono[start : start + chunk]
        hyps = translate_batch(ckpt.params, ckpt.mconfig, model, lines, pivot, max_out=max_out)
        for line, hyp in zip(lines, hyps):
            if not hyp.strip():
                skipped_empty += 1
                continue
            src_len = len(model.encode(hyp))
            tgt_len = len(model.encode(line))
            if tgt_len == 0:
                skipped_empty += 1
                continue
            ratio = src_len / tgt_len
            if not lo <= ratio <= hi:
                skipped_ratio += 1
                continue
            out.append(encode_pair(model, hyp, line, direction, "backtranslated"))
    if skipped_empty or skipped_ratio:
        log.warning(
            "backtranslation skipped %d empty decodes and %d length-ratio outliers",
            skipped_empty,
            skipped_ratio,
        )
    return out
