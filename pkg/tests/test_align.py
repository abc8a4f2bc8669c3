import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mnmt.align import (
    AlignmentLink,
    DocumentPair,
    MultiwayTuple,
    best_monotone_matching,
    bleualign,
    build_multiway,
    links_to_tsv,
    multiway_to_tsv,
    pivot_key,
    read_multiway_tsv,
    unaligned_indices,
)
from mnmt.errors import ConfigError, InputError


def matching_key(scores, links):
    """(total, link count, negated index sum): larger is better."""
    total = math.fsum(scores[i][j] for i, j in links)
    return (total, len(links), -sum(i + j for i, j in links))


def brute_force_optima(scores):
    """All monotone 1-1 matchings achieving the maximal key.

    Sorted index subsets pair up in order; that order-preserving pairing is
    the only strictly monotone one, so subset pairs enumerate everything.
    """
    n, m = len(scores), len(scores[0])
    best_key = None
    best: list[list[tuple[int, int]]] = []
    for k in range(0, min(n, m) + 1):
        for rows in itertools.combinations(range(n), k):
            for cols in itertools.combinations(range(m), k):
                links = list(zip(rows, cols))
                key = matching_key(scores, links)
                if best_key is None or key > best_key:
                    best_key, best = key, [links]
                elif key == best_key:
                    best.append(links)
    return best_key, best


def disjoint_sentences(n, tag):
    return tuple(f"{tag}{i}a {tag}{i}b {tag}{i}c" for i in range(n))


class TestMatchingDP:
    def test_identity_matrix_links_diagonal(self):
        scores = [[1.0 if i == j else 0.0 for j in range(4)] for i in range(4)]
        assert best_monotone_matching(scores) == [(i, i) for i in range(4)]

    def test_more_links_preferred_on_total_tie(self):
        scores = [[1.0, 0.0], [0.0, 0.0]]
        assert best_monotone_matching(scores) == [(0, 0), (1, 1)]

    def test_smaller_index_sum_preferred_on_full_tie(self):
        scores = [[0.5, 0.5]]
        assert best_monotone_matching(scores) == [(0, 0)]

    @pytest.mark.parametrize("shape,seed", [
        ((3, 3), 0), ((4, 5), 1), ((5, 4), 2), ((6, 6), 3), ((8, 8), 4), ((2, 7), 5),
    ])
    def test_matches_brute_force_key(self, shape, seed):
        rng = np.random.Generator(np.random.PCG64(seed))
        # Multiples of 1/64 keep every partial sum exact, so the DP's
        # left-to-right additions agree bit for bit with fsum.
        scores = (rng.integers(0, 64, size=shape) / 64.0).tolist()
        links = best_monotone_matching(scores)
        best_key, optima = brute_force_optima(scores)
        assert matching_key(scores, links) == best_key
        assert links in optima

    @given(seed=st.integers(0, 200), n=st.integers(1, 4), m=st.integers(1, 4))
    @settings(max_examples=60, deadline=None)
    def test_monotone_and_optimal_on_small_matrices(self, seed, n, m):
        rng = np.random.Generator(np.random.PCG64(seed))
        scores = (rng.integers(0, 32, size=(n, m)) / 32.0).tolist()
        links = best_monotone_matching(scores)
        for (i1, j1), (i2, j2) in zip(links, links[1:]):
            assert i1 < i2 and j1 < j2
        best_key, optima = brute_force_optima(scores)
        assert matching_key(scores, links) == best_key
        assert links in optima


class TestBleualign:
    def test_identity_alignment(self):
        tgt = disjoint_sentences(5, "w")
        doc = DocumentPair(disjoint_sentences(5, "s"), tgt, tgt)
        links = bleualign(doc)
        assert [(l.src_idx, l.tgt_idx) for l in links] == [(i, i) for i in range(5)]
        assert all(l.score == 1.0 for l in links)

    def test_deleted_target_sentence_shifts_links(self):
        mt = disjoint_sentences(6, "w")
        k = 2
        tgt = mt[:k] + mt[k + 1 :]
        doc = DocumentPair(disjoint_sentences(6, "s"), tgt, mt)
        links = [(l.src_idx, l.tgt_idx) for l in bleualign(doc)]
        assert links == [(0, 0), (1, 1), (3, 2), (4, 3), (5, 4)]
        src_gaps, tgt_gaps = unaligned_indices(doc, bleualign(doc))
        assert src_gaps == (k,)
        assert tgt_gaps == ()

    def test_threshold_is_a_subset_filter(self):
        mt = ("a b c d", "e f g h", "x y z w")
        tgt = ("a b c d", "e f q h", "p q r s")
        doc = DocumentPair(disjoint_sentences(3, "s"), tgt, mt)
        by_threshold = {t: set(bleualign(doc, threshold=t)) for t in (0.0, 0.3, 0.9)}
        assert by_threshold[0.9] <= by_threshold[0.3] <= by_threshold[0.0]
        assert len(by_threshold[0.0]) > len(by_threshold[0.9])
        for t, links in by_threshold.items():
            assert all(l.score >= t for l in links)

    def test_threshold_one_keeps_only_exact_matches(self):
        mt = ("a b c d", "e f g h")
        tgt = ("a b c d", "e f q h")
        doc = DocumentPair(disjoint_sentences(2, "s"), tgt, mt)
        links = bleualign(doc, threshold=1.0)
        assert [(l.src_idx, l.tgt_idx) for l in links] == [(0, 0)]

    def test_empty_sides_rejected(self):
        with pytest.raises(InputError, match="source"):
            bleualign(DocumentPair((), ("a",), ()))
        with pytest.raises(InputError, match="target"):
            bleualign(DocumentPair(("a",), (), ("a",)))

    def test_mt_length_mismatch_rejected(self):
        with pytest.raises(InputError, match="machine translations"):
            DocumentPair(("a", "b"), ("a",), ("a",))

    def test_threshold_out_of_range_rejected(self):
        doc = DocumentPair(("a",), ("a",), ("a",))
        with pytest.raises(ConfigError, match="threshold"):
            bleualign(doc, threshold=-0.1)
        with pytest.raises(ConfigError, match="threshold"):
            bleualign(doc, threshold=1.5)


class TestPivotKey:
    def test_normalization_steps(self):
        assert pivot_key("  Good   MORNING!  ") == "good morning"
        assert pivot_key("Hello, world.") == "hello, world"
        assert pivot_key("hi ? !") == "hi"
        assert pivot_key("...") == ""

    def test_nfc_unifies_composed_and_decomposed(self):
        assert pivot_key("café") == pivot_key("café")

    def test_idempotent(self):
        for line in ("A b C.", "x  y ?!", "", "Fin."):
            assert pivot_key(pivot_key(line)) == pivot_key(line)


class TestBuildMultiway:
    def test_single_language_passthrough(self):
        tuples = build_multiway({"hi": [("Hello.", "H1"), ("World", "W1")]})
        assert len(tuples) == 2
        assert tuples[0].sentences == {"en": "Hello.", "hi": "H1"}
        assert tuples[0].pivot_key == "hello"
        assert tuples[1].sentences == {"en": "World", "hi": "W1"}

    def test_shared_and_private_lines(self):
        shared = [("Good morning.", None), ("See you", None)]
        pairs = {}
        for lang in ("hi", "te", "ta"):
            pairs[lang] = [(en, f"{lang}-{i}") for i, (en, _) in enumerate(shared)]
            pairs[lang].append((f"Only {lang}", f"{lang}-private"))
        tuples = build_multiway(pairs)
        sizes = sorted(len(t.sentences) for t in tuples)
        assert sizes == [2, 2, 2, 4, 4]

    def test_surface_variants_unify_on_one_key(self):
        tuples = build_multiway({
            "hi": [("Good morning.", "h")],
            "te": [("good MORNING", "t")],
            "ta": [("Good morning !!", "a")],
        })
        assert len(tuples) == 1
        assert tuples[0].sentences == {"en": "Good morning.", "hi": "h", "te": "t", "ta": "a"}

    def test_duplicate_key_within_language_keeps_first(self, caplog):
        with caplog.at_level("WARNING", logger="mnmt.align"):
            tuples = build_multiway({"hi": [("Same line", "first"), ("same line!", "second")]})
        assert len(tuples) == 1
        assert tuples[0].sentences["hi"] == "first"
        assert any("duplicate pivot key" in rec.getMessage() for rec in caplog.records)

    def test_idempotent_on_its_own_output(self):
        pairs = {
            "hi": [("A line.", "h1"), ("Another", "h2")],
            "te": [("a LINE", "t1"), ("Third one", "t3")],
        }
        first = build_multiway(pairs)
        langs = sorted({c for t in first for c in t.sentences if c != "en"})
        rebuilt_pairs = {
            lang: [(t.sentences["en"], t.sentences[lang]) for t in first if lang in t.sentences]
            for lang in langs
        }
        second = build_multiway(rebuilt_pairs)
        as_set = lambda ts: {(t.pivot_key, frozenset(t.sentences.items())) for t in ts}
        assert as_set(first) == as_set(second)

    def test_pivot_as_pair_list_rejected(self):
        with pytest.raises(ConfigError, match="pivot"):
            build_multiway({"en": [("a", "b")]})

    def test_empty_input_rejected(self):
        with pytest.raises(InputError, match="no pair lists"):
            build_multiway({})

    def test_tuple_invariants(self):
        with pytest.raises(InputError, match="pivot"):
            MultiwayTuple({"hi": "x"}, "k")
        with pytest.raises(InputError, match="at least one other"):
            MultiwayTuple({"en": "x"}, "x")


class TestTsv:
    def test_links_format(self):
        text = links_to_tsv([AlignmentLink(0, 1, 0.5), AlignmentLink(2, 3, 1.0)])
        assert text == "0\t1\t0.500000\n2\t3\t1.000000\n"
        assert links_to_tsv([]) == ""

    def test_multiway_round_trip(self):
        tuples = build_multiway({
            "hi": [("One.", "h1"), ("Two.", "h2")],
            "te": [("one", "t1"), ("Three.", "t3")],
        })
        text = multiway_to_tsv(tuples)
        lines = text.splitlines()
        assert lines[0] == "en\thi\tte"
        assert "—" in text
        back = read_multiway_tsv(text)
        assert [t.sentences for t in back] == [t.sentences for t in tuples]
        assert [t.pivot_key for t in back] == [t.pivot_key for t in tuples]

    def test_tab_in_sentence_rejected(self):
        tuples = [MultiwayTuple({"en": "a\tb", "hi": "x"}, "a b")]
        with pytest.raises(InputError, match="tabs"):
            multiway_to_tsv(tuples)

    def test_read_errors(self):
        with pytest.raises(InputError, match="empty"):
            read_multiway_tsv("")
        with pytest.raises(InputError, match="pivot"):
            read_multiway_tsv("hi\tte\nx\ty\n")
        with pytest.raises(InputError, match="line 2: 1 cells"):
            read_multiway_tsv("en\thi\nonly-en\n")
        with pytest.raises(InputError, match="line 2: missing pivot"):
            read_multiway_tsv("en\thi\n—\tx\n")
