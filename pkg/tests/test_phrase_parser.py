import re

import pytest
from hypothesis import given, strategies as st

from prosodic_codes.errors import MissingAlignment, OverlapError
from prosodic_codes.phrase_parser import (Klass, Lexicon, Token, classify_token, parse_phrases,
                                          phrase_frame_ranges, split_contractions, tokenize)

from conftest import SINGLE_PHRASE_SENTENCES

C, K = Klass.CHINK, Klass.CHUNK


def _toks(klasses):
    return [Token(f"w{i}", None, k) for i, k in enumerate(klasses)]


def test_classify_examples():
    assert classify_token("him", "PRP") is K
    assert classify_token("wanted", "VBD") is C
    assert classify_token("turnip", "NN") is K


def test_classify_priority():
    # objective pronoun beats everything
    assert classify_token("them") is K
    # tagged untensed verb is content
    assert classify_token("move", "VB") is K
    assert classify_token("moves", "VBZ") is C
    # "it" is a function word unless tagged as object
    assert classify_token("it") is C
    assert classify_token("it", "PRP-OBJ") is K
    # suffix rule applies only without a tag
    assert classify_token("jumped") is C
    assert classify_token("red") is K


def test_parse_empty():
    assert parse_phrases([]) == []


def test_parse_cat_sat():
    tokens, _ = tokenize("The cat sat on the mat")
    phrases = parse_phrases(tokens)
    assert [p.text for p in phrases] == ["The cat", "sat on the mat"]


def test_whats_the_matter():
    tokens, final = tokenize("What's the matter now?")
    assert [t.text for t in tokens] == ["What", "'s", "the", "matter", "now"]
    assert [t.klass for t in tokens] == [C, C, C, K, K]
    assert final == "?"
    assert len(parse_phrases(tokens)) == 1


@pytest.mark.parametrize("sentence", SINGLE_PHRASE_SENTENCES)
def test_short_sentence_single_phrase(sentence):
    tokens, _ = tokenize(sentence)
    assert len(parse_phrases(tokens)) == 1


def test_tagged_input():
    tokens, _ = tokenize("He/PRP wanted/VBD a/DT turnip/NN ./.")
    assert [t.klass for t in tokens] == [C, C, C, K]


def test_split_contractions():
    assert split_contractions("didn't") == ["did", "n't"]
    assert split_contractions("We'd") == ["We", "'d"]
    assert split_contractions("cat") == ["cat"]


def test_lexicon_override(tmp_path):
    path = tmp_path / "lex.txt"
    path.write_text("[function_words]\nturnip\n[objective_pronouns]\nthee\n")
    lex = Lexicon.from_file(path)
    assert classify_token("turnip", None, lex) is C
    assert classify_token("thee", None, lex) is K


klass_lists = st.lists(st.sampled_from([C, K]), max_size=40)


@given(klass_lists)
def test_reconstruction(klasses):
    toks = _toks(klasses)
    flat = [t for p in parse_phrases(toks) for t in p.tokens]
    assert flat == toks


@given(klass_lists)
def test_pattern_and_index(klasses):
    for i, p in enumerate(parse_phrases(_toks(klasses))):
        assert p.index == i and len(p.tokens) > 0
        s = "".join("c" if t.klass is C else "k" for t in p.tokens)
        assert re.fullmatch("c*k*", s)


@given(klass_lists)
def test_boundary_characterisation(klasses):
    phrases = parse_phrases(_toks(klasses))
    starts, pos = set(), 0
    for p in phrases:
        starts.add(pos)
        pos += len(p.tokens)
    for i in range(1, len(klasses)):
        expected = klasses[i] is C and klasses[i - 1] is K
        assert (i in starts) == expected


def test_frame_ranges():
    one = parse_phrases(_toks([C, K]))
    assert phrase_frame_ranges(one, [(0, 40), (40, 90)]) == [(0, 90)]
    two = parse_phrases(_toks([K, C]))
    assert phrase_frame_ranges(two, [(0, 50), (50, 120)]) == [(0, 50), (50, 120)]


def test_frame_ranges_errors():
    two = parse_phrases(_toks([K, C]))
    with pytest.raises(MissingAlignment):
        phrase_frame_ranges(two, [(0, 50), (55, 120)])
    with pytest.raises(OverlapError):
        phrase_frame_ranges(two, [(0, 50), (45, 120)])
    with pytest.raises(MissingAlignment):
        phrase_frame_ranges(two, [(0, 50)])
