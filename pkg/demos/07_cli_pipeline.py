"""Drive the whole pipeline through the command-line entry point.

Every subcommand here is also available as `mnmt <subcommand>` on an
installed package; calling main() keeps the demo in one process.
"""

import sys
import tempfile
from pathlib import Path

from mnmt.cli import main

work = Path(tempfile.mkdtemp(prefix="mnmt-cli-demo-"))
text = work / "corpus.txt"
text.write_text("the cat sat\nthe dog sat\na cat and a dog\nthe mat was flat\n" * 12,
                encoding="utf-8")

def run(*argv):
    code = main(list(argv))
    print(f"$ mnmt {' '.join(str(a) for a in argv)}  (exit {code})")
    assert code == 0, code

# 1. train a vocabulary
vocab = work / "demo.vocab"
run("spm-train", str(text), "--vocab-size", "40", "--langs", "en",
    "--out", str(vocab))

# 2. build a copy corpus and its manifest
tsv = work / "copy.tsv"
tsv.write_text("".join(f"{l}\t{l}\n" for l in text.read_text().splitlines()[:16]),
               encoding="utf-8")
(work / "corpora.manifest").write_text(
    "name = copy\ndirection = en-en\ntsv = copy.tsv\nprovenance = copy\n",
    encoding="utf-8")

# 3. train from a run manifest (seed pinned, artifacts under out/)
(work / "run.manifest").write_text(
    f"vocab = demo.vocab\ncorpora = corpora.manifest\nout = {work / 'run'}\n"
    "seed = 4\nd_model = 32\nn_heads = 2\nn_enc_layers = 1\nn_dec_layers = 1\n"
    "d_ff = 64\ndropout = 0.0\nlabel_smoothing = 0.0\nmax_len = 48\n"
    "max_steps = 700\nwarmup_steps = 50\ncheckpoint_every = 350\n"
    "token_budget = 512\n", encoding="utf-8")
run("train", "--manifest", str(work / "run.manifest"))

# 4. translate stdin -> stdout with the trained checkpoint
ckpt = work / "run" / "best.ckpt"
hyp = work / "hyp.txt"
src = work / "src.txt"
src.write_text("a cat and a dog\nthe mat was flat\n", encoding="utf-8")
old_stdin, old_stdout = sys.stdin, sys.stdout
with open(src, encoding="utf-8") as fin, open(hyp, "w", encoding="utf-8") as fout:
    sys.stdin, sys.stdout = fin, fout
    try:
        code = main(["translate", "--ckpt", str(ckpt), "--vocab", str(vocab),
                     "--src", "en", "--tgt", "en"])
    finally:
        sys.stdin, sys.stdout = old_stdin, old_stdout
print(f"$ mnmt translate < src.txt > hyp.txt  (exit {code})")
print("decoded:", hyp.read_text().splitlines())

# 5. score the hypotheses
run("score", "--hyps", str(hyp), "--refs", str(src))
