"""Augment a low-resource direction with backtranslation, then fine-tune.

Backtranslation decodes monolingual target-side text into the pivot
language and pairs the synthetic source with the authentic target.
Fine-tuning warm-starts from a checkpoint at a conservative learning rate.
"""

import numpy as np

from mnmt import (Direction, MixtureStream, ModelConfig, SubwordModel,
                  TrainConfig, backtranslate, encode_pair, register_language,
                  train)

for code in ("en", "xx"):
    register_language(code)

flip = lambda line: " ".join(w[::-1] for w in line.split())

alphabet = "adehilmorstw"
model = SubwordModel([(c, float(np.log(1 / 13))) for c in sorted(alphabet)] + [("▁", float(np.log(1 / 13)))],
                     control_langs=("en", "xx"))

rng = np.random.Generator(np.random.PCG64(9))
words = ["the", "dart", "mash", "oil", "slow", "hem", "rita", "dos"]
make = lambda: " ".join(words[int(rng.integers(8))]
                        for _ in range(int(rng.integers(2, 5))))
parallel = [make() for _ in range(24)]
mono_xx = [flip(make()) for _ in range(12)]  # target-side text with no source

examples = []
for line in parallel:
    examples.append(encode_pair(model, line, flip(line), Direction("en", "xx")))
    examples.append(encode_pair(model, flip(line), line, Direction("xx", "en")))

mconfig = ModelConfig(vocab_size=len(model), d_model=48, n_heads=4,
                      n_enc_layers=1, n_dec_layers=1, d_ff=96, dropout=0.0,
                      label_smoothing=0.0, max_len=48, dtype="float32")
base_cfg = TrainConfig(seed=9, peak_lr=4e-3, warmup_steps=100, max_steps=1200,
                       checkpoint_every=1200, token_budget=1024)
base = train(mconfig, base_cfg, MixtureStream([(examples, 1.0)], temperature=1.0, seed=9),
             vocab_hash=model.vocab_hash)

# synthetic en->xx pairs: decoded en source, authentic xx target
synthetic = backtranslate(base, model, mono_xx, lang="xx", pivot="en")
print(f"backtranslation kept {len(synthetic)}/{len(mono_xx)} pairs "
      f"(empty decodes and wild length ratios are dropped)")
print("provenances:", {e.provenance for e in synthetic})

extended = MixtureStream([(examples, 1.0), (synthetic, 1.0)], temperature=1.0, seed=10)
more = TrainConfig(seed=10, peak_lr=1e-3, warmup_steps=50, max_steps=300,
                   checkpoint_every=300, token_budget=1024)
augmented = train(mconfig, more, extended, init=base, vocab_hash=model.vocab_hash)
print(f"extended training to step {augmented.step} with the augmented mixture")

# domain fine-tuning reuses the same loop at 0.2x the learning rate
ft_cfg = more.for_finetune()
print(f"fine-tune peak_lr {ft_cfg.peak_lr} (base was {more.peak_lr})")
domain = [make() for _ in range(8)]
domain_examples = [encode_pair(model, l, flip(l), Direction("en", "xx")) for l in domain]
tuned = train(mconfig, ft_cfg, MixtureStream([(domain_examples, 1.0)], temperature=1.0, seed=11),
              init=augmented, vocab_hash=model.vocab_hash)
print(f"fine-tuned checkpoint at step {tuned.step}")
