"""Score translations with corpus BLEU and render a full evaluation grid.

A multiway model is probed in every language direction at once; the grid
reports same-language cells as copy quality and leaves directions without
test data absent rather than faking a zero.
"""

import numpy as np

from mnmt import (Direction, MixtureStream, ModelConfig, SubwordModel,
                  TrainConfig, corpus_bleu, encode_pair, eval_grid,
                  register_language, render_grid_tsv, sentence_bleu_smoothed,
                  train, translate_batch)

for code in ("en", "xx"):
    register_language(code)

# language "xx" writes every word backwards
flip = lambda line: " ".join(w[::-1] for w in line.split())

alphabet = "adehilmorstw"
model = SubwordModel([(c, float(np.log(1 / 13))) for c in sorted(alphabet)] + [("▁", float(np.log(1 / 13)))],
                     control_langs=("en", "xx"))

rng = np.random.Generator(np.random.PCG64(7))
words = ["the", "dart", "mash", "oil", "slow", "hem", "rita", "dos"]
lines = [" ".join(words[int(rng.integers(8))] for _ in range(int(rng.integers(2, 5))))
         for _ in range(30)]
examples = []
for line in lines:
    examples.append(encode_pair(model, line, flip(line), Direction("en", "xx")))
    examples.append(encode_pair(model, flip(line), line, Direction("xx", "en")))

mconfig = ModelConfig(vocab_size=len(model), d_model=48, n_heads=4,
                      n_enc_layers=1, n_dec_layers=1, d_ff=96, dropout=0.0,
                      label_smoothing=0.0, max_len=48, dtype="float32")
tconfig = TrainConfig(seed=5, peak_lr=4e-3, warmup_steps=100, max_steps=1500,
                      checkpoint_every=1500, token_budget=1024)
ckpt = train(mconfig, tconfig, MixtureStream([(examples, 1.0)], temperature=1.0, seed=5),
             vocab_hash=model.vocab_hash)

# plain corpus BLEU on one direction
hyps = translate_batch(ckpt.params, mconfig, model, lines[:10], "xx")
report = corpus_bleu(hyps, [flip(l) for l in lines[:10]])
print(f"en->xx BLEU {report.bleu:.2f}  precisions "
      f"{tuple(round(p, 3) for p in report.precisions)}  BP {report.brevity_penalty:.3f}")

# sentence-level smoothed score, the alignment building block
print("sentence score:", round(sentence_bleu_smoothed("the dart", "the dart oil"), 4))

# the grid decodes every (src, tgt) cell from one shared test set
testset = [{"en": l, "xx": flip(l)} for l in lines[:10]]
grid = eval_grid(ckpt, model, testset)
print(render_grid_tsv(grid), end="")
print("note: the diagonal lags because this run trained no copy examples")
