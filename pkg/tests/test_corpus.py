import io

import pytest
from hypothesis import given, settings, strategies as st

from conftest import write_text
from ner_forge.corpus import (
    Dataset,
    EntitySpan,
    Sentence,
    TagScheme,
    convert_scheme,
    extract_spans,
    read_conll,
    repair_bio,
    spans_to_tags,
    split_columns,
    validate_sequence,
    write_conll,
)
from ner_forge.errors import CorpusError, TagSchemeError

TYPES = ["D", "C", "S"]


@st.composite
def bio_sequences(draw, max_len=12):
    """Valid BIO sequences built from non-overlapping typed chunks."""
    n = draw(st.integers(1, max_len))
    tags = []
    while len(tags) < n:
        if draw(st.booleans()):
            tags.append("O")
            continue
        etype = draw(st.sampled_from(TYPES))
        width = draw(st.integers(1, n - len(tags)))
        tags += [f"B-{etype}"] + [f"I-{etype}"] * (width - 1)
    return tags


def tag_soup(max_len=12):
    pool = ["O"] + [f"{p}-{t}" for p in "BI" for t in TYPES]
    return st.lists(st.sampled_from(pool), min_size=1, max_size=max_len)


def test_read_two_sentences(tmp_path):
    path = write_text(tmp_path / "a.conll", "He O\nate O\n\naspirin B-Chemical\n")
    data = read_conll(path)
    assert len(data) == 2
    assert data[0].surfaces == ["He", "ate"]
    assert set(data.tag_set) == {"O", "B-Chemical"}
    assert data.entity_types == ("Chemical",)


def test_read_skips_docstart(tmp_path):
    path = write_text(tmp_path / "a.conll", "-DOCSTART- O\n\nx O\n")
    data = read_conll(path)
    assert len(data) == 1
    assert data[0].surfaces == ["x"]


def test_read_short_line_reports_line(tmp_path):
    path = write_text(tmp_path / "a.conll", "badline\n")
    with pytest.raises(CorpusError) as err:
        read_conll(path)
    assert err.value.line == 1
    assert "line 1" in str(err.value)


def test_read_bad_tag_reports_tag(tmp_path):
    path = write_text(tmp_path / "a.conll", "a O\nb E-X\n")
    with pytest.raises(CorpusError) as err:
        read_conll(path, TagScheme.BIO)
    assert err.value.line == 2
    assert err.value.tag == "E-X"


def test_read_middle_columns_crlf_and_blank_runs(tmp_path):
    path = tmp_path / "a.conll"
    path.write_bytes(b"EU NNP B-ORG\r\nrejects VBZ O\r\n\r\n\r\n\r\nGerman\tJJ\tB-MISC\r\n")
    data = read_conll(path)
    assert len(data) == 2
    assert data[0].tags == ["B-ORG", "O"]
    assert data[1].surfaces == ["German"]


def test_read_splits_on_spaces_and_tabs_only(tmp_path):
    path = write_text(tmp_path / "a.conll", "5\u00a0mg O\nof \t O\nheparin\u2009sodium  B-Chemical\n")
    data = read_conll(path)
    assert data[0].surfaces == ["5\u00a0mg", "of", "heparin\u2009sodium"]
    assert data[0].tags == ["O", "O", "B-Chemical"]


@pytest.mark.parametrize("line, columns", [
    ("a b\tc\n", ["a", "b", "c"]),
    ("  a \t  b  \r\n", ["a", "b"]),
    (" \t\r\n", []),
    ("x\u00a0y O", ["x\u00a0y", "O"]),
])
def test_split_columns(line, columns):
    assert split_columns(line) == columns


def test_read_empty_file_is_an_error(tmp_path):
    path = write_text(tmp_path / "empty.conll", "\n\n")
    with pytest.raises(CorpusError):
        read_conll(path)


def test_read_untagged(tmp_path):
    path = write_text(tmp_path / "raw.conll", "Aspirin\nhelps\n\nyes\n")
    data = read_conll(path, tagged=False)
    assert [s.tags for s in data] == [["O", "O"], ["O"]]


def test_read_bioes(tmp_path):
    path = write_text(tmp_path / "a.conll", "a S-C\nb B-D\nc E-D\n")
    data = read_conll(path, TagScheme.BIOES)
    assert data.scheme is TagScheme.BIOES
    assert data.converted(TagScheme.BIO)[0].tags == ["B-C", "B-D", "I-D"]


def test_write_then_read(tmp_path, corpus):
    path = tmp_path / "out.conll"
    with open(path, "w", encoding="utf-8") as handle:
        write_conll(corpus, handle)
    assert read_conll(path).sentences == corpus.sentences


@pytest.mark.parametrize(
    "tags, scheme, expected",
    [
        (["B-D", "I-D", "O"], TagScheme.BIO, True),
        (["I-D", "O"], TagScheme.BIO, False),
        (["B-D", "I-C"], TagScheme.BIO, False),
        (["B-D", "E-D", "S-C"], TagScheme.BIOES, True),
        (["B-D", "I-D"], TagScheme.BIOES, False),
        (["B-D", "O", "E-D"], TagScheme.BIOES, False),
        (["S-D"], TagScheme.BIO, False),
    ],
)
def test_validate_sequence(tags, scheme, expected):
    assert validate_sequence(tags, scheme) is expected


def test_convert_examples():
    assert convert_scheme(["B-D", "I-D", "I-D"], TagScheme.BIO, TagScheme.BIOES) == ["B-D", "I-D", "E-D"]
    assert convert_scheme(["S-D"], TagScheme.BIOES, TagScheme.BIO) == ["B-D"]
    assert convert_scheme(["B-D", "O"], TagScheme.BIO, TagScheme.BIO) == ["B-D", "O"]


def test_convert_rejects_invalid_input():
    with pytest.raises(TagSchemeError):
        convert_scheme(["I-D"], TagScheme.BIO, TagScheme.BIOES)


@pytest.mark.parametrize(
    "tags, spans",
    [
        (["B-D", "I-D", "O", "B-C"], [EntitySpan(0, 1, "D"), EntitySpan(3, 3, "C")]),
        (["O", "O"], []),
        (["I-D", "I-D", "B-D"], [EntitySpan(0, 1, "D"), EntitySpan(2, 2, "D")]),
        (["B-D", "I-C"], [EntitySpan(0, 0, "D"), EntitySpan(1, 1, "C")]),
    ],
)
def test_extract_spans(tags, spans):
    assert extract_spans(tags) == spans


def test_repair_promotes_dangling_inside():
    assert repair_bio(["I-D", "I-D", "O", "I-C", "B-D", "I-C"]) == ["B-D", "I-D", "O", "B-C", "B-D", "B-C"]


def test_dataset_merge_converts_scheme():
    bio = Dataset((Sentence.from_pairs(["a", "b"], ["B-D", "I-D"]),))
    bioes = Dataset((Sentence.from_pairs(["c"], ["S-C"]),), TagScheme.BIOES)
    merged = bio.merged(bioes)
    assert len(merged) == 2
    assert merged[1].tags == ["B-C"]
    assert merged.num_tokens == 3


@settings(max_examples=10_000, deadline=None)
@given(bio_sequences())
def test_bio_bioes_round_trip(tags):
    bioes = convert_scheme(tags, TagScheme.BIO, TagScheme.BIOES)
    assert validate_sequence(bioes, TagScheme.BIOES)
    assert convert_scheme(bioes, TagScheme.BIOES, TagScheme.BIO) == tags


@given(bio_sequences())
def test_spans_rebuild_valid_sequence(tags):
    spans = extract_spans(tags)
    assert spans_to_tags(spans, len(tags)) == tags
    assert len(spans) == sum(t.startswith("B-") for t in tags)


@given(tag_soup())
def test_repair_always_yields_valid_bio(tags):
    repaired = repair_bio(tags)
    assert validate_sequence(repaired, TagScheme.BIO)
    assert len(extract_spans(tags)) == sum(t.startswith("B-") for t in repaired)


def test_write_conll_layout():
    out = io.StringIO()
    write_conll([Sentence.from_pairs(["a", "b"], ["O", "B-X"])], out)
    assert out.getvalue() == "a O\nb B-X\n\n"
