import pytest

from mnmt.corpus import MixtureStream
from mnmt.model import ModelConfig
from mnmt.training import TrainConfig, train

from helpers import TOY_MCONFIG_FIELDS, copy_corpus, toy_lines, toy_subword


@pytest.fixture(scope="session")
def copy_run(tmp_path_factory):
    """A tiny model trained to copy its input, plus its run directory.

    Session-scoped: training takes a few seconds and several test modules
    (training, cli, serve) need a checkpoint that decodes accurately.
    """
    model = toy_subword()
    lines = toy_lines()
    corpus = copy_corpus(model, lines)
    mconfig = ModelConfig(vocab_size=len(model), **TOY_MCONFIG_FIELDS)
    tconfig = TrainConfig(
        peak_lr=5e-3, warmup_steps=30, max_steps=1200, checkpoint_every=100,
        token_budget=512, seed=3,
    )
    run_dir = tmp_path_factory.mktemp("copyrun")
    stream = MixtureStream([(corpus, 1.0)], temperature=1.0, seed=3)
    ckpt = train(mconfig, tconfig, stream, vocab_hash=model.vocab_hash, run_dir=run_dir)
    return ckpt, model, lines, run_dir, (mconfig, tconfig, corpus)


@pytest.fixture(scope="session")
def copy_artifacts(copy_run, tmp_path_factory):
    """The copy model's vocabulary and best checkpoint as on-disk files."""
    ckpt, model, lines, run_dir, _ = copy_run
    vocab_path = tmp_path_factory.mktemp("artifacts") / "toy.vocab"
    model.save(vocab_path)
    return vocab_path, run_dir / "best.ckpt", model, ckpt, lines
