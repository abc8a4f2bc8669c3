"""Recover sentence alignments from noisy document translations.

The aligner scores every (machine-translated source, target) sentence
pair with smoothed sentence BLEU, then picks the best strictly monotone
1-1 matching by dynamic programming. Unaligned sentences are reported as
gaps, never silently bridged.
"""

from mnmt import DocumentPair, bleualign, build_multiway

src = [
    "the treaty was signed in march",
    "both parties agreed to the terms",
    "a dispute arose over clause nine",
    "the court ruled in june",
    "an appeal followed the ruling",
    "the final settlement came a year later",
]
# the target document dropped sentence 2 entirely
tgt_keep = [0, 1, 3, 4, 5]
target = [src[i] for i in tgt_keep]

# a rough machine translation of the source: word drops and substitutions
mt = [
    "the treaty was signed in march",
    "both parties agreed to terms",
    "a dispute over clause nine",
    "the court ruled in july",
    "an appeal followed that ruling",
    "the settlement came a year later",
]

doc = DocumentPair(src_sents=src, tgt_sents=target, mt_src=mt)
links = bleualign(doc, threshold=0.1)
for link in links:
    print(f"src[{link.src_idx}] -> tgt[{link.tgt_idx}]  score {link.score:.3f}")
missing = set(range(len(src))) - {l.src_idx for l in links}
print("unaligned source sentences:", sorted(missing))

# multiway join: same English pivot line across two language pair lists
pairs = {
    "de": [("The treaty was signed.", "der vertrag wurde unterzeichnet"),
           ("The court ruled.", "das gericht entschied")],
    "fr": [("the treaty was signed", "le traité a été signé")],
}
tuples = build_multiway(pairs)
for t in sorted(tuples, key=lambda t: t.pivot_key):
    print(f"{t.pivot_key!r}: languages {sorted(t.sentences)}")
