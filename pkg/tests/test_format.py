import random
import re

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from doclair.format import (
    MIP,
    BBox,
    Block,
    EmptyInput,
    InvalidPrompt,
    Page,
    PageDims,
    PresenceMismatch,
    PromptSpec,
    SemanticClass,
    TextMode,
    VocabSpec,
    enumerate_valid_prompts,
    parse_page,
    serialize_page,
    vocab_extra_tokens,
)
from helpers import all_prompts, random_page

DIMS = PageDims(1280, 1024)
BOXES_NO_CLASSES = PromptSpec(TextMode.STRUCTURED, True, False)
PLAIN_ONLY = PromptSpec(TextMode.PLAIN, False, False)


def test_parse_single_mip_block():
    report = parse_page("<x_10><y_20>Hello world<x_200><y_40><class_Text>", MIP, DIMS)
    assert report.blocks == [Block(BBox(10, 20, 200, 40), "Hello world", SemanticClass.TEXT)]
    assert report.rejected == []


def test_parse_box_free_mode_is_pass_through():
    report = parse_page("plain body text", PLAIN_ONLY, DIMS)
    assert report.blocks == [Block(text="plain body text")]


def test_parse_keeps_valid_prefix_and_rejects_malformed_tail():
    raw = "<x_1><y_1>ok<x_9><y_9><class_Text><x_3><y_"
    report = parse_page(raw, MIP, DIMS)
    assert report.blocks == [Block(BBox(1, 1, 9, 9), "ok", SemanticClass.TEXT)]
    (span,) = report.rejected
    assert raw[span.start : span.end] == "<x_3><y_"
    assert span.reason == "MalformedToken"


def test_empty_input_is_an_error_only_without_boxes():
    with pytest.raises(EmptyInput):
        parse_page("", PLAIN_ONLY, DIMS)
    assert parse_page("", MIP, DIMS).blocks == []


def test_text_stops_at_first_coordinate_token_and_may_hold_angle_brackets():
    raw = "<x_1><y_2>a < b <y_7> <x_c<x_30><y_40><class_Formula>"
    (block,) = parse_page(raw, MIP, DIMS).blocks
    assert block.text == "a < b <y_7> <x_c"
    assert block.bbox == BBox(1, 2, 30, 40)


def test_coordinates_are_not_range_checked_and_unknown_class_survives():
    (block,) = parse_page("<x_5000><y_1>t<x_1><y_9999><class_Paragraph>", MIP, DIMS).blocks
    assert block.bbox == BBox(5000, 1, 1, 9999)
    assert block.cls == "Paragraph" and block.semantic_class is None


def test_empty_text_group_is_accepted():
    (block,) = parse_page("<x_1><y_1><x_2><y_2><class_Text>", MIP, DIMS).blocks
    assert block.text == ""


@pytest.mark.parametrize(
    "raw, reason",
    [
        ("junk<x_1><y_1>a<x_2><y_2><class_Text>", "UnexpectedContent"),
        ("<x_1><y_1>text with no end", "TruncatedBlock"),
        ("<x_1><y_1>a<x_2><y_2>", "TruncatedBlock"),
        ("<x_1><y_1>a<x_2><y_2><class_Text", "MalformedToken"),
    ],
)
def test_rejection_reasons(raw, reason):
    report = parse_page(raw, MIP, DIMS)
    assert report.rejected[0].reason == reason
    assert report.rejected[0].end == len(raw)


def test_reduced_prompts_parse_their_own_grammar():
    no_text = PromptSpec(TextMode.NO_TEXT, True, True)
    (block,) = parse_page("<x_1><y_2><x_3><y_4><class_Title>", no_text, DIMS).blocks
    assert block == Block(BBox(1, 2, 3, 4), None, SemanticClass.TITLE)
    report = parse_page("<x_1><y_2>a<x_3><y_4><x_5><y_6>b<x_7><y_8>", BOXES_NO_CLASSES, DIMS)
    assert [b.text for b in report.blocks] == ["a", "b"]
    assert all(b.cls is None for b in report.blocks)


def test_serialize_examples():
    page = Page(DIMS, (Block(BBox(10, 20, 200, 40), "Hi", SemanticClass.TITLE),))
    assert serialize_page(page, MIP) == "<x_10><y_20>Hi<x_200><y_40><class_Title>"
    assert serialize_page(Page(DIMS, ()), MIP) == ""
    two = Page(DIMS, (Block(BBox(1, 2, 3, 4), "a"), Block(BBox(5, 6, 7, 8), "b")))
    assert serialize_page(two, BOXES_NO_CLASSES) == "<x_1><y_2>a<x_3><y_4><x_5><y_6>b<x_7><y_8>"


def test_serialize_rejects_missing_facets():
    page = Page(DIMS, (Block(BBox(1, 2, 3, 4), "a"),))
    with pytest.raises(PresenceMismatch):
        serialize_page(page, MIP)


@pytest.mark.parametrize("prompt", all_prompts(), ids=lambda p: p.name)
def test_round_trip_every_prompt(prompt):
    rng = random.Random(prompt.name)
    for _ in range(50):
        page = random_page(rng, prompt, DIMS)
        assert parse_page(serialize_page(page, prompt), prompt, DIMS).page() == page


def test_elision_keeps_remaining_facets():
    rng = random.Random(3)
    for _ in range(30):
        page = random_page(rng, MIP, DIMS)
        reduced = parse_page(serialize_page(page.with_blocks(
            [Block(b.bbox, b.text) for b in page.blocks]), BOXES_NO_CLASSES), BOXES_NO_CLASSES, DIMS)
        assert [(b.bbox, b.text) for b in reduced.blocks] == [(b.bbox, b.text) for b in page.blocks]


_BLOCK_ORACLE = re.compile(
    r"<x_(\d+)><y_(\d+)>((?:(?!<x_\d+>).)*)<x_(\d+)><y_(\d+)><class_([^>]+)>", re.S
)


def _oracle_prefix(raw):
    pos, blocks = 0, []
    while True:
        m = _BLOCK_ORACLE.match(raw, pos)
        if m is None:
            return blocks, pos
        x1, y1, text, x2, y2, label = m.groups()
        blocks.append((BBox(int(x1), int(y1), int(x2), int(y2)), text, label))
        pos = m.end()


@settings(max_examples=300, deadline=None)
@given(
    st.lists(
        st.sampled_from(["<x_1>", "<y_2>", "<x_30>", "<y_4>", "<class_Text>", "<class_Foo>", "ab", "<", ">", "<x_", "\n"]),
        max_size=20,
    )
)
def test_prefix_maximality(parts):
    raw = "".join(parts)
    report = parse_page(raw, MIP, DIMS)
    blocks, consumed = _oracle_prefix(raw)
    assert [(b.bbox, b.text, str(b.cls)) for b in report.blocks] == blocks
    if consumed < len(raw):
        (span,) = report.rejected
        assert (span.start, span.end) == (consumed, len(raw))
    else:
        assert report.rejected == []


def test_vocab_extra_tokens():
    assert vocab_extra_tokens(VocabSpec(PageDims(1280, 1024), 11)) == 2322
    assert vocab_extra_tokens(VocabSpec(PageDims(1, 1), 0)) == 9
    assert vocab_extra_tokens(VocabSpec(PageDims(80, 64), 11)) == 162


def test_valid_prompts():
    valid = enumerate_valid_prompts()
    assert len(valid) == 8
    assert MIP in valid
    assert all(p.boxes or not p.classes for p in valid)
    with pytest.raises(InvalidPrompt):
        PromptSpec(TextMode.NO_TEXT, False, False)
    with pytest.raises(InvalidPrompt):
        PromptSpec(TextMode.PLAIN, False, True)


def test_prompt_names_round_trip():
    for p in enumerate_valid_prompts():
        assert PromptSpec.from_name(p.name) == p
        assert PromptSpec.from_name(p.tokens) == p
    assert MIP.tokens == "<structured_text><bbox><classes>"
    with pytest.raises(InvalidPrompt):
        PromptSpec.from_name("no_text,no_bbox,no_classes")


def test_page_dims_must_be_positive():
    with pytest.raises(ValueError):
        PageDims(0, 10)
