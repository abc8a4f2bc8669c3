"""Train a unigram subword vocabulary and round-trip some text through it.

The vocabulary owns everything downstream: token ids, control tokens for
target languages, and the hash that guards checkpoint compatibility.
"""

from mnmt import merge_vocabularies, register_language, train_unigram

register_language("en")
register_language("de")

corpus = [
    "the cat sat on the mat",
    "the dog sat on the log",
    "a cat and a dog met on the mat",
    "the mat was flat",
    "a flat mat and a fat cat",
] * 20

# target_size counts specials and control tokens too, not just pieces
model = train_unigram(corpus, target_size=48, control_langs=("en", "de"))
print(f"vocabulary of {len(model)} tokens, hash {model.vocab_hash[:12]}")
print("fixed-vocabulary EM trace:", [round(x, 3) for x in model.em_trace])

for line in ["the fat cat sat", "dogs on mats"]:
    ids = model.encode(line)
    pieces = [model.piece_of(i) for i in ids]
    print(f"{line!r} -> {pieces} -> {model.decode(ids)!r}")

# vocabularies merge by piece surface; probabilities renormalize
other = train_unigram(["ein hund und eine katze"] * 30, target_size=40,
                      control_langs=("en", "de"))
merged = merge_vocabularies([model, other])
print(f"merged {len(model)} + {len(other)} -> {len(merged)} tokens")
