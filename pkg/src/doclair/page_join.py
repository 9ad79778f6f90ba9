"""Join per-page predictions into one clean document text.

Per page: drop running headers/footers, pull out pictures and tables and pair
them with captions, merge body text across block and page boundaries, skip
tables of contents / bibliographies / indexes, strip markdown, then flush the
page's floating objects after its flow text.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import FrozenSet, List, Optional, Sequence, Tuple

import numpy as np

from .assignment import min_cost_assignment
from .format import Block, Page, SemanticClass
from .reading_order import is_canonical
from .text_metrics import normalize


class JoinError(ValueError):
    pass


class MissingBBox(JoinError):
    pass


class UncanonicalInput(JoinError):
    pass


FLOAT_CLASSES = frozenset({SemanticClass.PICTURE, SemanticClass.TABLE})
PARAGRAPH_CLASSES = frozenset({SemanticClass.TEXT, SemanticClass.LIST_ITEM})
HEADING_CLASSES = frozenset({SemanticClass.SECTION_HEADER, SemanticClass.TITLE})
STANDALONE_CLASSES = HEADING_CLASSES | {SemanticClass.FORMULA}
BODY_CLASSES = PARAGRAPH_CLASSES | STANDALONE_CLASSES

DEFAULT_SKIP_HEADINGS = frozenset(
    {
        "table of contents",
        "contents",
        "bibliography",
        "references",
        "index",
        "indexes",
        "list of figures",
        "list of tables",
    }
)


@dataclass(frozen=True)
class JoinConfig:
    skip_headings: FrozenSet[str] = DEFAULT_SKIP_HEADINGS
    terminal_punctuation: FrozenSet[str] = frozenset(".!?")
    drop_classes: FrozenSet[SemanticClass] = frozenset({SemanticClass.PAGE_HEADER, SemanticClass.PAGE_FOOTER})
    caption_distance: str = "center"

    def __post_init__(self):
        object.__setattr__(
            self, "skip_headings", frozenset(normalize(h).raw_normalized for h in self.skip_headings)
        )
        if self.caption_distance not in ("center", "corner"):
            raise ValueError("caption_distance must be 'center' or 'corner'")


@dataclass
class FlowState:
    open_paragraph: Optional[str] = None
    pending_floats: List["FloatItem"] = field(default_factory=list)
    skipping: bool = False


@dataclass(frozen=True)
class FloatItem:
    obj: Block
    caption: Optional[Block] = None

    @property
    def kind(self) -> str:
        if self.obj.cls is SemanticClass.TABLE:
            return "table"
        if self.obj.cls is SemanticClass.PICTURE:
            return "figure"
        return "caption"

    def render(self) -> str:
        if self.kind == "caption":
            return strip_markdown(self.obj.text or "")
        parts = ["[TABLE]" if self.kind == "table" else "[FIGURE]"]
        if self.caption is not None and self.caption.text:
            parts.append(strip_markdown(self.caption.text))
        return " ".join(parts)


@dataclass(frozen=True)
class JoinedItem:
    kind: str  # "paragraph" | "footnote" | "float"
    text: str = ""
    page_index: int = 0
    float_item: Optional[FloatItem] = None

    def render(self) -> str:
        return self.float_item.render() if self.float_item is not None else self.text

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "page": self.page_index, "text": self.render()}
        if self.float_item is not None:
            f = self.float_item
            out["object_class"] = str(f.obj.cls)
            out["object_text"] = f.obj.text
            out["caption"] = f.caption.text if f.caption is not None else None
        return out


@dataclass
class JoinedDocument:
    items: List[JoinedItem] = field(default_factory=list)

    @property
    def flow(self) -> List[str]:
        return [it.text for it in self.items if it.kind != "float"]

    @property
    def floats(self) -> List[Tuple[Block, Optional[Block]]]:
        return [(it.float_item.obj, it.float_item.caption) for it in self.items if it.float_item]

    def to_text(self) -> str:
        rendered = [it.render() for it in self.items]
        return "\n\n".join(r for r in rendered if r) + ("\n" if rendered else "")

    def token_count(self) -> int:
        return sum(len(it.render().split()) for it in self.items)


def _box_distance(a: Block, b: Block, mode: str) -> float:
    if mode == "center":
        (ax, ay), (bx, by) = a.bbox.center, b.bbox.center
        return abs(ax - bx) + abs(ay - by)
    ca = [(a.bbox.x1, a.bbox.y1), (a.bbox.x2, a.bbox.y1), (a.bbox.x1, a.bbox.y2), (a.bbox.x2, a.bbox.y2)]
    cb = [(b.bbox.x1, b.bbox.y1), (b.bbox.x2, b.bbox.y1), (b.bbox.x1, b.bbox.y2), (b.bbox.x2, b.bbox.y2)]
    return min(abs(p[0] - q[0]) + abs(p[1] - q[1]) for p in ca for q in cb)


def caption_costs(captions: Sequence[Block], objects: Sequence[Block], mode: str = "center") -> np.ndarray:
    for block in list(captions) + list(objects):
        if block.bbox is None:
            raise MissingBBox("caption assignment needs boxes on every caption and object")
    return np.array([[_box_distance(c, o, mode) for o in objects] for c in captions], dtype=float).reshape(
        len(captions), len(objects)
    )


def assign_captions(
    captions: Sequence[Block], objects: Sequence[Block], mode: str = "center"
) -> Tuple[List[Tuple[int, int]], List[int], List[int]]:
    """Pair captions with pictures/tables by minimum total Manhattan distance.

    Returns (pairs, unmatched caption indices, unmatched object indices).
    """
    pairs = min_cost_assignment(caption_costs(captions, objects, mode))
    used_c = {c for c, _ in pairs}
    used_o = {o for _, o in pairs}
    return (
        pairs,
        [i for i in range(len(captions)) if i not in used_c],
        [j for j in range(len(objects)) if j not in used_o],
    )


_HEADING = re.compile(r"^[ \t]{0,3}#{1,6}[ \t]+", re.M)
_LIST_MARKER = re.compile(r"^([ \t]*)(?:[-*+]|\d+[.)])[ \t]+", re.M)
_IMAGE = re.compile(r"!\[([^\[\]]*)\]\([^()\s]*\)")
_LINK = re.compile(r"\[([^\[\]]*)\]\([^()\s]*\)")
_STRONG = re.compile(r"(\*\*|__)(?=\S)(.+?)(?<=\S)\1", re.S)
_STRIKE = re.compile(r"~~(?=\S)(.+?)(?<=\S)~~", re.S)
_EM_STAR = re.compile(r"\*(?=[^\s*])(.+?)(?<=[^\s*])\*", re.S)
_EM_UNDERSCORE = re.compile(r"(?<![\w_])_(?=[^\s_])(.+?)(?<=[^\s_])_(?![\w_])", re.S)
_CODE = re.compile(r"(`+)(.+?)\1", re.S)


def _strip_once(text: str) -> str:
    text = _HEADING.sub("", text)
    text = _LIST_MARKER.sub(r"\1", text)
    text = _IMAGE.sub(r"\1", text)
    text = _LINK.sub(r"\1", text)
    text = _CODE.sub(r"\2", text)
    text = _STRONG.sub(r"\2", text)
    text = _STRIKE.sub(r"\1", text)
    text = _EM_STAR.sub(r"\1", text)
    text = _EM_UNDERSCORE.sub(r"\1", text)
    return text


def strip_markdown(text: str) -> str:
    """Remove headings, list markers, emphasis, code ticks, strikethrough,
    links and images, keeping the visible text. LaTeX is left alone.

    Every rule deletes characters, so applying them until nothing changes
    terminates and makes the function idempotent.
    """
    while True:
        stripped = _strip_once(text)
        if stripped == text:
            return text
        text = stripped


def detect_skip_section(block: Block, config: JoinConfig = JoinConfig()) -> bool:
    if block.cls not in HEADING_CLASSES:
        return False
    return normalize(block.text or "").raw_normalized in config.skip_headings


def _ends_open(text: str, config: JoinConfig) -> bool:
    stripped = text.rstrip()
    return not stripped or stripped[-1] not in config.terminal_punctuation


def merge_flow(
    state: FlowState, page_body: Sequence[Block], config: JoinConfig = JoinConfig()
) -> Tuple[List[str], FlowState]:
    """Merge a page's body blocks into paragraphs.

    Text and list items keep appending to the open paragraph until it ends in
    terminal punctuation. Headings, titles and formulas close it and stand
    alone. A paragraph still open after the last block is carried in the
    returned state instead of being emitted.
    """
    out: List[str] = []
    current = state.open_paragraph
    skipping = state.skipping
    for block in page_body:
        text = (block.text or "").strip()
        if block.cls in HEADING_CLASSES:
            if detect_skip_section(block, config):
                skipping = True
                if current is not None:
                    out.append(current)
                    current = None
                continue
            skipping = False
        if skipping or not text:
            continue
        if block.cls in STANDALONE_CLASSES:
            if current is not None:
                out.append(current)
                current = None
            out.append(text)
            continue
        current = text if current is None else f"{current} {text}"
        if not _ends_open(current, config):
            out.append(current)
            current = None
    return out, FlowState(open_paragraph=current, pending_floats=[], skipping=skipping)


def _page_floats(blocks: Sequence[Block], config: JoinConfig) -> List[FloatItem]:
    objects = [b for b in blocks if b.cls in FLOAT_CLASSES]
    captions = [b for b in blocks if b.cls is SemanticClass.CAPTION]
    pairs, lone_captions, _ = assign_captions(captions, objects, config.caption_distance)
    caption_of = {o: c for c, o in pairs}
    items = [FloatItem(obj, captions[caption_of[k]] if k in caption_of else None) for k, obj in enumerate(objects)]
    items.extend(FloatItem(captions[c]) for c in lone_captions)
    return items


def join_document(pages: Sequence[Page], config: JoinConfig = JoinConfig()) -> JoinedDocument:
    doc = JoinedDocument()
    state = FlowState()
    for page_no, page in enumerate(pages):
        if not is_canonical(page):
            raise UncanonicalInput(f"page {page_no} is not in canonical reading order")
        blocks = [b for b in page.blocks if b.cls not in config.drop_classes]
        state.pending_floats = _page_floats(blocks, config)
        flow_blocks = [b for b in blocks if b.cls in BODY_CLASSES or b.semantic_class is None]
        # headers and footers only get here when not dropped; they stay standalone
        for b in blocks:
            if b.cls is SemanticClass.PAGE_HEADER and b.text and b.text.strip():
                doc.items.append(JoinedItem("paragraph", strip_markdown(b.text.strip()), page_no))
        paragraphs, new_state = merge_flow(state, flow_blocks, config)
        doc.items.extend(JoinedItem("paragraph", strip_markdown(p), page_no) for p in paragraphs)
        doc.items.extend(JoinedItem("float", page_index=page_no, float_item=f) for f in state.pending_floats)
        for b in blocks:
            if b.cls is SemanticClass.FOOTNOTE and b.text and b.text.strip():
                doc.items.append(JoinedItem("footnote", strip_markdown(b.text.strip()), page_no))
        for b in blocks:
            if b.cls is SemanticClass.PAGE_FOOTER and b.text and b.text.strip():
                doc.items.append(JoinedItem("paragraph", strip_markdown(b.text.strip()), page_no))
        state = new_state
    if state.open_paragraph is not None:
        doc.items.append(JoinedItem("paragraph", strip_markdown(state.open_paragraph), len(pages) - 1))
    return doc
