import math
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mnmt.checkpoint import Checkpoint
from mnmt.errors import ConfigError, InputError
from mnmt.metrics import (
    ABSENT_CELL,
    corpus_bleu,
    eval_grid,
    grid_records,
    render_grid_tsv,
    sentence_bleu_smoothed,
    whitespace_tokens,
)
from mnmt.model import ModelConfig, init_parameters, translate_batch
from mnmt.subword import SubwordModel

CHARS = "abcde"


def char_model(controls=("en", "hi", "te")) -> SubwordModel:
    pieces = sorted(CHARS) + ["▁"]
    logp = math.log(1.0 / len(pieces))
    return SubwordModel([(p, logp) for p in pieces], control_langs=controls)


token_lists = st.lists(st.sampled_from(["a", "b", "cc", "dd"]), min_size=0, max_size=6)


class TestCorpusBleu:
    def test_identity_scores_100(self):
        refs = ["the cat sat on the mat", "a b c d e"]
        report = corpus_bleu(list(refs), refs)
        assert report.bleu == 100.0
        assert report.precisions == (1.0, 1.0, 1.0, 1.0)
        assert report.brevity_penalty == 1.0
        assert report.hyp_len == report.ref_len == 11

    def test_truncated_hypothesis_hand_value(self):
        # Hand count: unigrams 5/5, bigrams 3/4, trigrams 2/3, 4-grams 1/2,
        # BP = exp(1 - 6/5); bleu = 100 * BP * (1 * 3/4 * 2/3 * 1/2) ** (1/4).
        report = corpus_bleu(["the cat sat on mat"], ["the cat sat on the mat"])
        assert report.precisions == (1.0, 3 / 4, 2 / 3, 1 / 2)
        assert report.brevity_penalty == pytest.approx(math.exp(-0.2), rel=1e-14)
        oracle = 100.0 * math.exp(1.0 - 6 / 5) * 0.25 ** 0.25
        assert report.bleu == pytest.approx(oracle, rel=1e-12)
        assert round(report.bleu, 2) == 57.89

    def test_zero_overlap_scores_zero(self):
        report = corpus_bleu(["w x y z"], ["a b c d"])
        assert report.bleu == 0.0
        assert report.precisions == (0.0, 0.0, 0.0, 0.0)

    def test_missing_order_zeroes_unsmoothed_score(self):
        # Perfect match, but too short to contain any trigram or 4-gram.
        report = corpus_bleu(["a b"], ["a b"])
        assert report.precisions == (1.0, 1.0, 0.0, 0.0)
        assert report.bleu == 0.0
        assert report.brevity_penalty == 1.0

    def test_empty_hypothesis_line_contributes_zero_matches(self):
        report = corpus_bleu(["", "the cat sat on the mat"], ["the dog", "the cat sat on the mat"])
        assert report.hyp_len == 6
        assert report.ref_len == 8
        assert report.precisions == (1.0, 1.0, 1.0, 1.0)
        assert report.bleu == pytest.approx(100.0 * math.exp(1.0 - 8 / 6), rel=1e-12)

    def test_all_empty_hypotheses_score_zero_with_penalty_in_range(self):
        report = corpus_bleu(["", ""], ["a b", "c"])
        assert report.bleu == 0.0
        assert report.hyp_len == 0
        assert 0.0 < report.brevity_penalty <= 1.0

    def test_length_mismatch_rejected(self):
        with pytest.raises(InputError, match="2 hypotheses vs 1"):
            corpus_bleu(["a", "b"], ["a"])

    def test_empty_corpus_rejected(self):
        with pytest.raises(InputError, match="empty"):
            corpus_bleu([], [])

    def test_unknown_mode_rejected(self):
        with pytest.raises(ConfigError, match="mode"):
            corpus_bleu(["a"], ["a"], mode="char")

    def test_subword_mode_requires_model(self):
        with pytest.raises(ConfigError, match="model"):
            corpus_bleu(["a"], ["a"], mode="subword")

    def test_pooling_invariant_to_pair_order(self):
        hyps = ["the cat sat on mat", "a b c d", "x y"]
        refs = ["the cat sat on the mat", "a b c e", "x z"]
        forward = corpus_bleu(hyps, refs)
        backward = corpus_bleu(hyps[::-1], refs[::-1])
        assert forward == backward

    @given(hyps=st.lists(token_lists, min_size=1, max_size=4), refs_seed=st.integers(0, 3))
    @settings(max_examples=60, deadline=None)
    def test_brevity_penalty_law(self, hyps, refs_seed):
        refs = [h[refs_seed % (len(h) + 1) :] for h in hyps]
        report = corpus_bleu([" ".join(h) for h in hyps], [" ".join(r) for r in refs])
        assert 0.0 < report.brevity_penalty <= 1.0
        if report.hyp_len >= report.ref_len:
            assert report.brevity_penalty == 1.0
        assert 0.0 <= report.bleu <= 100.0

    def test_subword_identity_scores_100(self):
        model = char_model()
        refs = ["abcde", "ab cde ba"]
        detok = [model.decode(model.encode(line)) for line in refs]
        report = corpus_bleu(detok, refs, mode="subword", model=model)
        assert report.bleu == 100.0

    def test_modes_tokenize_differently(self):
        model = char_model()
        ws = corpus_bleu(["ab cd"], ["ab ce"], mode="whitespace")
        sw = corpus_bleu(["ab cd"], ["ab ce"], mode="subword", model=model)
        assert ws.precisions[0] == 1 / 2
        assert sw.precisions[0] == 4 / 5


class TestSentenceBleu:
    def test_identity_scores_one(self):
        for order in (1, 2, 3, 4):
            assert sentence_bleu_smoothed("a b c", "a b c", order) == 1.0

    def test_disjoint_tokens_hit_the_raw_order1_gate(self):
        # Smoothing starts at order 2, so zero unigram matches floor the
        # score at exactly 0 regardless of the smoothed higher orders.
        assert sentence_bleu_smoothed("a b c", "x y z", 2) == 0.0
        assert sentence_bleu_smoothed("a b c", "x y z", 4) == 0.0

    def test_partial_overlap_hand_value(self):
        # p1 = 2/3 (clip: second "b" has no ref partner); bigram matches 1 of
        # 2, smoothed to (1+1)/(2+1); BP 1; score = sqrt(2/3 * 2/3) = 2/3.
        assert sentence_bleu_smoothed("a b b", "a b c", 2) == pytest.approx(2 / 3, rel=1e-12)

    def test_pure_smoothing_floor_at_order_two(self):
        # No bigram matches at all: the order-2 factor is purely the add-one
        # floor (0+1)/(1+1); with p1 = 1/2 the score is sqrt(1/4) = 1/2.
        assert sentence_bleu_smoothed("a x", "a y", 2) == pytest.approx(0.5, rel=1e-12)

    def test_brevity_penalty_applies(self):
        assert sentence_bleu_smoothed("a", "a b c", 1) == pytest.approx(math.exp(-2.0), rel=1e-12)

    def test_appending_creditable_token_never_lowers_order1(self):
        # Exhaustive over two-symbol sentences up to 4 tokens.
        def all_sentences(max_len):
            acc = []
            frontier = [[]]
            for _ in range(max_len):
                frontier = [s + [c] for s in frontier for c in "ab"]
                acc.extend(frontier)
            return acc

        for hyp in all_sentences(3):
            for ref in all_sentences(4):
                h_counts, r_counts = Counter(hyp), Counter(ref)
                for tok in "ab":
                    if h_counts[tok] >= r_counts[tok]:
                        continue  # clipped already; credit exhausted
                    before = sentence_bleu_smoothed(" ".join(hyp), " ".join(ref), 1)
                    after = sentence_bleu_smoothed(" ".join(hyp + [tok]), " ".join(ref), 1)
                    assert after >= before - 1e-12
                    m_before = sum(min(h_counts[t], r_counts[t]) for t in h_counts)
                    m_after = m_before + 1
                    assert m_after / (len(hyp) + 1) >= (m_before / len(hyp) if hyp else 0.0)

    def test_order_out_of_range_rejected(self):
        with pytest.raises(ConfigError, match="max_order"):
            sentence_bleu_smoothed("a", "a", 0)
        with pytest.raises(ConfigError, match="max_order"):
            sentence_bleu_smoothed("a", "a", 5)

    def test_empty_sides_score_zero(self):
        assert sentence_bleu_smoothed("", "a b", 2) == 0.0
        assert sentence_bleu_smoothed("a b", "", 2) == 0.0
        assert sentence_bleu_smoothed("", "", 2) == 0.0
        assert sentence_bleu_smoothed("   ", "a", 2) == 0.0

    @given(hyp=token_lists, ref=token_lists, order=st.integers(1, 4))
    @settings(max_examples=80, deadline=None)
    def test_score_stays_in_unit_interval(self, hyp, ref, order):
        score = sentence_bleu_smoothed(" ".join(hyp), " ".join(ref), order)
        assert 0.0 <= score <= 1.0


TINY_FIELDS = dict(
    d_model=16, n_heads=2, n_enc_layers=1, n_dec_layers=1,
    d_ff=32, dropout=0.0, label_smoothing=0.0, max_len=32, dtype="float32",
)

TESTSET = [
    {"en": "ab cd", "hi": "ba dc"},
    {"en": "abc", "te": "cba"},
    {"en": "dd e", "hi": "ee d"},
]

PRESENT = {
    ("en", "en"), ("hi", "hi"), ("te", "te"),
    ("en", "hi"), ("hi", "en"), ("en", "te"), ("te", "en"),
}


@pytest.fixture(scope="module")
def grid_setup():
    """An untrained model: grid laws hold regardless of decode quality."""
    model = char_model()
    mconfig = ModelConfig(vocab_size=len(model), **TINY_FIELDS)
    params = init_parameters(mconfig, seed=0)
    ckpt = Checkpoint(params, mconfig, vocab_hash=model.vocab_hash)
    return ckpt, model


class TestEvalGrid:
    def test_langs_sorted_and_presence_matches_data(self, grid_setup):
        ckpt, model = grid_setup
        grid = eval_grid(ckpt, model, TESTSET, max_out=8)
        assert grid.langs == ("en", "hi", "te")
        assert set(grid.cells) == PRESENT
        assert grid.cell("hi", "te") is None
        assert grid.cell("te", "hi") is None

    def test_cells_agree_with_standalone_corpus_bleu(self, grid_setup):
        ckpt, model = grid_setup
        grid = eval_grid(ckpt, model, TESTSET, max_out=8)
        for src, tgt in sorted(PRESENT):
            pairs = [(t[src], t[tgt]) for t in TESTSET if src in t and tgt in t]
            hyps = translate_batch(
                ckpt.params, ckpt.mconfig, model, [p[0] for p in pairs], tgt, max_out=8
            )
            direct = corpus_bleu(hyps, [p[1] for p in pairs])
            assert grid.cell(src, tgt) == direct

    def test_worker_count_does_not_change_results(self, grid_setup):
        ckpt, model = grid_setup
        serial = eval_grid(ckpt, model, TESTSET, max_out=8, workers=1)
        threaded = eval_grid(ckpt, model, TESTSET, max_out=8, workers=4)
        assert serial == threaded

    def test_subword_mode_cells_match_standalone(self, grid_setup):
        ckpt, model = grid_setup
        grid = eval_grid(ckpt, model, TESTSET, mode="subword", max_out=8)
        pairs = [(t["en"], t["en"]) for t in TESTSET]
        hyps = translate_batch(
            ckpt.params, ckpt.mconfig, model, [p[0] for p in pairs], "en", max_out=8
        )
        direct = corpus_bleu(hyps, [p[1] for p in pairs], mode="subword", model=model)
        assert grid.cell("en", "en") == direct

    def test_tsv_rendering(self, grid_setup):
        ckpt, model = grid_setup
        grid = eval_grid(ckpt, model, TESTSET, max_out=8)
        text = render_grid_tsv(grid)
        lines = text.splitlines()
        assert lines[0] == "\ten\thi\tte"
        assert len(lines) == 4
        hi_row = lines[2].split("\t")
        assert hi_row[0] == "hi"
        assert hi_row[3] == ABSENT_CELL
        for cell in lines[1].split("\t")[1:]:
            assert cell == ABSENT_CELL or len(cell.split(".")[1]) == 2
        assert text.endswith("\n")

    def test_records_cover_every_cell(self, grid_setup):
        ckpt, model = grid_setup
        grid = eval_grid(ckpt, model, TESTSET, max_out=8)
        records = grid_records(grid)
        assert len(records) == 9
        by_key = {(r["src"], r["tgt"]): r for r in records}
        assert by_key[("hi", "te")]["bleu"] is None
        full = by_key[("en", "en")]
        assert len(full["precisions"]) == 4
        assert {"brevity_penalty", "hyp_len", "ref_len"} <= set(full)

    def test_langs_override_restricts_and_orders(self, grid_setup):
        ckpt, model = grid_setup
        grid = eval_grid(ckpt, model, TESTSET, max_out=8, langs=("te", "en"))
        assert grid.langs == ("te", "en")
        assert set(grid.cells) == {("te", "te"), ("te", "en"), ("en", "te"), ("en", "en")}

    def test_empty_testset_rejected(self, grid_setup):
        ckpt, model = grid_setup
        with pytest.raises(InputError, match="empty"):
            eval_grid(ckpt, model, [])

    def test_unregistered_language_rejected(self, grid_setup):
        ckpt, model = grid_setup
        with pytest.raises(ConfigError, match="unregistered"):
            eval_grid(ckpt, model, [{"en": "a", "zz": "b"}])


def test_whitespace_tokens_normalize_and_split():
    assert whitespace_tokens("a b\tc") == ["a", "b", "c"]
    assert whitespace_tokens("  a  b  ") == ["a", "b"]
    assert whitespace_tokens("") == []
