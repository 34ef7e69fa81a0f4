import numpy as np
import pytest
from hypothesis import given, strategies as st

from anchorkgc.textfeat import Segment, build_sequence, fnv1a_64, hash_token, tokenize


class TestTokenize:
    def test_examples(self):
        assert tokenize("Earth Science") == ["earth", "science"]
        assert tokenize("") == []
        assert tokenize("a-b_c 9") == ["a", "b", "c", "9"]

    def test_unicode_letters_kept(self):
        assert tokenize("Zürich–Genève") == ["zürich", "genève"]


class TestHash:
    def test_fnv_offset_basis(self):
        assert fnv1a_64(b"") == 0xCBF29CE484222325

    def test_fnv_published_vector(self):
        # 64-bit FNV-1a of "a"
        assert fnv1a_64(b"a") == 0xAF63DC4C8601EC8C

    @given(st.text(), st.integers(2, 1 << 20))
    def test_range_and_determinism(self, word, H):
        idx = hash_token(word, H)
        assert 0 <= idx < H and idx == hash_token(word, H)

    def test_small_vocab_rejected(self):
        with pytest.raises(ValueError):
            hash_token("x", 1)


class TestBuildSequence:
    def test_long_description_truncated_to_max_len(self):
        seq = build_sequence("name", " ".join(f"w{i}" for i in range(200)), "rel", 10, 60)
        assert len(seq) == 60
        assert seq.segments[-1] == Segment.RELATION_TEXT

    def test_empty_text(self):
        seq = build_sequence("", "", None, 10, 60)
        assert len(seq) == 10
        assert np.all(seq.segments == Segment.ANCHOR)
        assert seq.token_ids.tolist() == list(range(10))

    def test_context_layout(self):
        H = 1000
        seq = build_sequence("a", "", "r", 3, 60, H)
        assert seq.token_ids.tolist() == [0, 1, 2, hash_token("a", H), H, hash_token("r", H)]
        assert seq.segments.tolist() == [0, 0, 0, Segment.HEAD_TEXT, Segment.SEPARATOR, Segment.RELATION_TEXT]

    def test_entity_sequence_has_no_separator(self):
        seq = build_sequence("a", "b c", None, 2, 60, 50)
        assert Segment.SEPARATOR not in seq.segments
        assert np.all(seq.segments[2:] == Segment.ENTITY_TEXT)

    def test_precondition(self):
        with pytest.raises(ValueError):
            build_sequence("a", "", None, 10, 12)

    @given(
        st.lists(st.sampled_from("abcdefgh"), max_size=80),
        st.lists(st.sampled_from("xyz"), min_size=1, max_size=80),
        st.integers(0, 12),
        st.integers(15, 70),
    )
    def test_truncation_keeps_anchors_and_relation(self, ent, rel, n, max_len):
        seq = build_sequence(" ".join(ent), "", " ".join(rel), n, max_len)
        assert len(seq) <= max_len
        assert np.all(seq.segments[:n] == Segment.ANCHOR)
        assert np.sum(seq.segments == Segment.SEPARATOR) == 1
        assert np.sum(seq.segments == Segment.RELATION_TEXT) >= 1
        if len(ent) + len(rel) + n + 1 > max_len:
            assert len(seq) == max_len
