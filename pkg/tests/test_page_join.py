import random

import pytest

from doclair.format import BBox, Block, Page, PageDims, SemanticClass as C
from doclair.page_join import (
    FlowState,
    JoinConfig,
    MissingBBox,
    UncanonicalInput,
    assign_captions,
    caption_costs,
    detect_skip_section,
    join_document,
    merge_flow,
    strip_markdown,
)
from helpers import exhaustive_assignment, random_bbox

DIMS = PageDims(1000, 1000)
BOX = BBox(0, 0, 10, 10)


def blk(cls, text="", bbox=BOX):
    return Block(bbox, text, cls)


def centered(cx, cy, cls=C.PICTURE, half=10):
    return Block(BBox(cx - half, cy - half, cx + half, cy + half), "", cls)


def page(*blocks):
    return Page(DIMS, tuple(blocks))


def test_merge_flow_examples():
    out, state = merge_flow(FlowState("The quick brown"), [blk(C.TEXT, "fox jumps.")])
    assert out == ["The quick brown fox jumps."] and state.open_paragraph is None
    out, state = merge_flow(FlowState(), [blk(C.TEXT, "Intro."), blk(C.TEXT, "Next part")])
    assert out == ["Intro."] and state.open_paragraph == "Next part"
    out, state = merge_flow(
        FlowState("Pending"), [blk(C.SECTION_HEADER, "Results"), blk(C.TEXT, "All good.")]
    )
    assert out == ["Pending", "Results", "All good."]


def test_list_items_merge_and_formula_stands_alone():
    body = [blk(C.LIST_ITEM, "first item"), blk(C.LIST_ITEM, "second."), blk(C.FORMULA, "$x=1$"), blk(C.TEXT, "End.")]
    out, _ = merge_flow(FlowState(), body)
    assert out == ["first item second.", "$x=1$", "End."]


def test_detect_skip_section():
    assert detect_skip_section(blk(C.SECTION_HEADER, "References"))
    assert detect_skip_section(blk(C.TITLE, "Table of Contents"))
    assert not detect_skip_section(blk(C.SECTION_HEADER, "Results"))
    assert not detect_skip_section(blk(C.TEXT, "References"))


def test_skip_section_spans_pages_until_next_heading():
    doc = join_document(
        [
            page(blk(C.TEXT, "Body."), blk(C.SECTION_HEADER, "References"), blk(C.TEXT, "[1] Foo")),
            page(blk(C.TEXT, "[2] Bar"), blk(C.SECTION_HEADER, "Appendix"), blk(C.TEXT, "Kept.")),
        ]
    )
    assert doc.flow == ["Body.", "Appendix", "Kept."]


@pytest.mark.parametrize(
    "raw, clean",
    [
        ("## Title", "Title"),
        ("a **bold** [link](http://x) end", "a bold link end"),
        ("plain", "plain"),
        ("- item\n1. other", "item\nother"),
        ("see ![alt](img.png) and `code` and ~~gone~~ and _em_ and *em*", "see alt and code and gone and em and em"),
        ("***both***", "both"),
        ("$a*b*c$ snake_case_name", "$abc$ snake_case_name"),
    ],
)
def test_strip_markdown_examples(raw, clean):
    assert strip_markdown(raw) == clean


def test_strip_markdown_idempotent_on_random_snippets():
    rng = random.Random(31)
    pieces = ["#", "## ", "*", "**", "_", "__", "`", "~~", "[", "]", "(", ")", "!", "- ", "1. ", "\n", " ", "word", "x", "http://a"]
    for _ in range(500):
        text = "".join(rng.choice(pieces) for _ in range(rng.randint(0, 25)))
        once = strip_markdown(text)
        assert strip_markdown(once) == once


def test_assign_captions_examples():
    caption = centered(50, 500, C.CAPTION)
    pairs, lone_c, lone_o = assign_captions([caption], [centered(60, 480), centered(400, 100)])
    assert pairs == [(0, 0)] and lone_c == [] and lone_o == [1]
    pairs, lone_c, lone_o = assign_captions([], [centered(20, 20)])
    assert pairs == [] and lone_o == [0]
    caps = [centered(100, 100, C.CAPTION), centered(500, 500, C.CAPTION)]
    objs = [centered(480, 480), centered(120, 120)]
    assert assign_captions(caps, objs)[0] == [(0, 1), (1, 0)]
    with pytest.raises(MissingBBox):
        assign_captions([Block(text="c")], [centered(20, 20)])


def test_assign_captions_matches_exhaustive_search():
    rng = random.Random(32)
    for _ in range(300):
        caps = [Block(random_bbox(rng, DIMS), "", C.CAPTION) for _ in range(rng.randint(1, 5))]
        objs = [Block(random_bbox(rng, DIMS), "", C.TABLE) for _ in range(rng.randint(1, 5))]
        pairs, _, _ = assign_captions(caps, objs)
        cost = caption_costs(caps, objs).tolist()
        assert pairs == exhaustive_assignment(cost, maximize=False)


def test_join_single_page_and_carry_over():
    assert join_document([page(blk(C.TEXT, "Hello."))]).flow == ["Hello."]
    doc = join_document([page(blk(C.TEXT, "to be")), page(blk(C.TEXT, "continued."))])
    assert doc.flow == ["to be continued."]
    doc = join_document([page(blk(C.TEXT, "dangling"))])
    assert doc.flow == ["dangling"]


def test_join_floats_footnotes_and_dropped_headers():
    p = page(
        blk(C.PAGE_HEADER, "Running head"),
        blk(C.TEXT, "Body **text**."),
        Block(BBox(90, 130, 110, 140), "Table 1: numbers", C.CAPTION),
        blk(C.TABLE, "| a |", BBox(90, 90, 110, 120)),
        blk(C.PICTURE, "", BBox(500, 500, 600, 600)),
        blk(C.FOOTNOTE, "1 A note."),
        blk(C.PAGE_FOOTER, "Page 3"),
    )
    doc = join_document([p])
    assert [it.render() for it in doc.items] == ["Body text.", "[TABLE] Table 1: numbers", "[FIGURE]", "1 A note."]
    kept = join_document([p], JoinConfig(drop_classes=frozenset()))
    assert kept.items[0].render() == "Running head" and kept.items[-1].render() == "Page 3"
    assert doc.to_text() == "Body text.\n\n[TABLE] Table 1: numbers\n\n[FIGURE]\n\n1 A note.\n"


def test_unmatched_caption_is_kept():
    doc = join_document([page(blk(C.TEXT, "x."), blk(C.CAPTION, "Orphan caption"))])
    assert [it.render() for it in doc.items] == ["x.", "Orphan caption"]


def test_join_rejects_uncanonical_page():
    with pytest.raises(UncanonicalInput):
        join_document([page(blk(C.FOOTNOTE, "n"), blk(C.TEXT, "t."))])


def test_text_conservation_on_terminal_pages():
    rng = random.Random(33)
    for _ in range(100):
        pages, expected = [], []
        for _ in range(rng.randint(1, 3)):
            texts = [f"w{rng.randint(0, 99)} v{rng.randint(0, 99)}." for _ in range(rng.randint(0, 5))]
            expected.extend(texts)
            pages.append(page(*(blk(C.TEXT, t) for t in texts)))
        assert join_document(pages).flow == expected


def test_flow_is_subsequence_of_body_order():
    rng = random.Random(34)
    words = ["alpha", "beta.", "gamma", "delta!", "eps"]
    for _ in range(100):
        pages, body = [], []
        for _ in range(rng.randint(1, 3)):
            texts = [rng.choice(words) for _ in range(rng.randint(0, 5))]
            body.extend(texts)
            pages.append(page(*(blk(C.TEXT, t) for t in texts)))
        joined = " ".join(join_document(pages).flow).split()
        assert joined == body
