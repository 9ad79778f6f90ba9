"""Domain types and the block output grammar.

One block under the maximal-information prompt looks like::

    <x_10><y_20>Hello world<x_200><y_40><class_Text>

Groups are dropped according to the prompt: the class token disappears
without ``classes``, the text between the coordinate pairs disappears under
``no_text``, and without ``bbox`` the whole output is a single text blob.
"""

from __future__ import annotations

import enum
import itertools
import re
from dataclasses import dataclass, field
from typing import List, Optional, Union


class FormatError(ValueError):
    pass


class EmptyInput(FormatError):
    """Raised when a text-only prompt receives an empty string."""


class PresenceMismatch(FormatError):
    """A block does not carry exactly the facets its prompt asks for."""


class InvalidPrompt(FormatError):
    pass


class SemanticClass(str, enum.Enum):
    CAPTION = "Caption"
    FOOTNOTE = "Footnote"
    FORMULA = "Formula"
    LIST_ITEM = "List-item"
    PAGE_FOOTER = "Page-footer"
    PAGE_HEADER = "Page-header"
    PICTURE = "Picture"
    SECTION_HEADER = "Section-header"
    TABLE = "Table"
    TEXT = "Text"
    TITLE = "Title"

    def __str__(self) -> str:
        return self.value

    @classmethod
    def from_name(cls, name: str) -> "SemanticClass":
        try:
            return cls(name)
        except ValueError:
            raise FormatError(f"unknown semantic class {name!r}") from None


CLASSES: List[SemanticClass] = list(SemanticClass)
NUM_CLASSES = len(CLASSES)
CLASS_INDEX = {c: i for i, c in enumerate(CLASSES)}


class TextMode(str, enum.Enum):
    STRUCTURED = "structured_text"
    PLAIN = "plain_text"
    NO_TEXT = "no_text"


@dataclass(frozen=True)
class PageDims:
    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"page dims must be positive, got {self.width}x{self.height}")


@dataclass(frozen=True)
class BBox:
    """Integer corner box. Range and ordering are checked by the sanitizer."""

    x1: int
    y1: int
    x2: int
    y2: int

    @property
    def area(self) -> int:
        return max(self.x2 - self.x1, 0) * max(self.y2 - self.y1, 0)

    @property
    def center(self) -> tuple[float, float]:
        return (self.x1 + self.x2) / 2, (self.y1 + self.y2) / 2

    def is_ordered(self) -> bool:
        return self.x2 > self.x1 and self.y2 > self.y1

    def in_bounds(self, dims: PageDims) -> bool:
        return all(0 <= v < dims.width for v in (self.x1, self.x2)) and all(
            0 <= v < dims.height for v in (self.y1, self.y2)
        )

    def as_list(self) -> List[int]:
        return [self.x1, self.y1, self.x2, self.y2]


@dataclass(frozen=True)
class PromptSpec:
    text_mode: TextMode = TextMode.STRUCTURED
    boxes: bool = True
    classes: bool = True

    def __post_init__(self):
        if self.classes and not self.boxes:
            raise InvalidPrompt("classes require boxes")
        if self.text_mode is TextMode.NO_TEXT and not self.boxes:
            raise InvalidPrompt("prompt suppresses every output facet")

    @property
    def has_text(self) -> bool:
        return self.text_mode is not TextMode.NO_TEXT

    @property
    def name(self) -> str:
        """Comma-joined facet names, e.g. ``structured_text,bbox,classes``."""
        return ",".join(
            [
                self.text_mode.value,
                "bbox" if self.boxes else "no_bbox",
                "classes" if self.classes else "no_classes",
            ]
        )

    @property
    def tokens(self) -> str:
        return "".join(f"<{part}>" for part in self.name.split(","))

    @classmethod
    def from_name(cls, name: str) -> "PromptSpec":
        parts = [p.strip().strip("<>") for p in name.replace("><", ",").split(",") if p.strip()]
        if len(parts) != 3:
            raise InvalidPrompt(f"prompt needs three facets, got {name!r}")
        text, box, klass = parts
        try:
            mode = TextMode(text)
        except ValueError:
            raise InvalidPrompt(f"unknown text facet {text!r}") from None
        if box not in ("bbox", "no_bbox") or klass not in ("classes", "no_classes"):
            raise InvalidPrompt(f"unknown prompt facets in {name!r}")
        return cls(mode, box == "bbox", klass == "classes")


MIP = PromptSpec(TextMode.STRUCTURED, True, True)


def enumerate_valid_prompts() -> set[PromptSpec]:
    valid = set()
    for mode, boxes, classes in itertools.product(TextMode, (True, False), (True, False)):
        try:
            valid.add(PromptSpec(mode, boxes, classes))
        except InvalidPrompt:
            continue
    return valid


# A class label outside the schema survives parsing as a plain str so that the
# sanitizer can reject it with a proper reason.
ClassLabel = Union[SemanticClass, str]


@dataclass(frozen=True)
class Block:
    bbox: Optional[BBox] = None
    text: Optional[str] = None
    cls: Optional[ClassLabel] = None
    score: Optional[float] = None

    def __post_init__(self):
        if self.cls is not None and self.bbox is None:
            raise ValueError("a classed block needs a bbox")

    @property
    def semantic_class(self) -> Optional[SemanticClass]:
        return self.cls if isinstance(self.cls, SemanticClass) else None


@dataclass(frozen=True)
class Page:
    dims: PageDims
    blocks: tuple[Block, ...] = ()

    def __post_init__(self):
        if not isinstance(self.blocks, tuple):
            object.__setattr__(self, "blocks", tuple(self.blocks))

    def with_blocks(self, blocks) -> "Page":
        return Page(self.dims, tuple(blocks))


@dataclass(frozen=True)
class VocabSpec:
    dims: PageDims
    num_classes: int = NUM_CLASSES


def vocab_extra_tokens(spec: VocabSpec) -> int:
    """Special tokens added to the text tokenizer: one per x and y coordinate,
    one per class and seven prompt tokens."""
    if spec.num_classes < 0:
        raise ValueError("num_classes must be nonnegative")
    return spec.dims.height + spec.dims.width + spec.num_classes + 7


@dataclass(frozen=True)
class RejectedSpan:
    start: int
    end: int
    reason: str
    text: str


@dataclass
class ParseReport:
    prompt: PromptSpec
    dims: PageDims
    blocks: List[Block] = field(default_factory=list)
    rejected: List[RejectedSpan] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.rejected

    def page(self) -> Page:
        return Page(self.dims, tuple(self.blocks))


MALFORMED_TOKEN = "MalformedToken"
UNEXPECTED_CONTENT = "UnexpectedContent"
TRUNCATED_BLOCK = "TruncatedBlock"

_X_TOKEN = re.compile(r"<x_(\d+)>")
_Y_TOKEN = re.compile(r"<y_(\d+)>")
_CLASS_TOKEN = re.compile(r"<class_([^>]+)>")
_OPENER = re.compile(r"<(?:x|y|class)_")


class _Reject(Exception):
    def __init__(self, reason: str):
        self.reason = reason


def _expect(pattern: re.Pattern, raw: str, pos: int) -> re.Match:
    m = pattern.match(raw, pos)
    if m is not None:
        return m
    if pos >= len(raw):
        raise _Reject(TRUNCATED_BLOCK)
    opener = _OPENER.match(raw, pos)
    if opener is not None and ">" not in raw[opener.end():]:
        raise _Reject(MALFORMED_TOKEN)
    raise _Reject(UNEXPECTED_CONTENT)


def _parse_label(name: str) -> ClassLabel:
    try:
        return SemanticClass(name)
    except ValueError:
        return name


def _parse_block(raw: str, pos: int, prompt: PromptSpec) -> tuple[Block, int]:
    x1 = _expect(_X_TOKEN, raw, pos)
    y1 = _expect(_Y_TOKEN, raw, x1.end())
    pos = y1.end()
    text = None
    if prompt.has_text:
        # non-greedy: the text runs up to the first well-formed x token
        nxt = _X_TOKEN.search(raw, pos)
        if nxt is None:
            tail = raw[pos:]
            opener = _OPENER.search(tail)
            raise _Reject(MALFORMED_TOKEN if opener and ">" not in tail[opener.end():] else TRUNCATED_BLOCK)
        text = raw[pos:nxt.start()]
        pos = nxt.start()
    x2 = _expect(_X_TOKEN, raw, pos)
    y2 = _expect(_Y_TOKEN, raw, x2.end())
    pos = y2.end()
    label = None
    if prompt.classes:
        m = _expect(_CLASS_TOKEN, raw, pos)
        label = _parse_label(m.group(1))
        pos = m.end()
    bbox = BBox(int(x1.group(1)), int(y1.group(1)), int(x2.group(1)), int(y2.group(1)))
    return Block(bbox=bbox, text=text, cls=label), pos


def parse_page(raw: str, prompt: PromptSpec = MIP, dims: Optional[PageDims] = None) -> ParseReport:
    """Parse a raw model output string into blocks.

    Blocks are accepted greedily from the start of the stream; the first
    non-conforming position and everything after it becomes a single
    rejected tail. Coordinates are not range-checked here.
    """
    dims = dims or PageDims(1, 1)
    report = ParseReport(prompt=prompt, dims=dims)
    if not prompt.boxes:
        if raw == "":
            raise EmptyInput("empty output under a text-only prompt")
        report.blocks.append(Block(text=raw))
        return report

    pos = 0
    while pos < len(raw):
        try:
            block, pos_after = _parse_block(raw, pos, prompt)
        except _Reject as exc:
            report.rejected.append(RejectedSpan(pos, len(raw), exc.reason, raw[pos:]))
            break
        report.blocks.append(block)
        pos = pos_after
    return report


def _check_presence(block: Block, prompt: PromptSpec) -> None:
    if (block.bbox is not None) != prompt.boxes:
        raise PresenceMismatch(f"bbox presence does not match prompt {prompt.name}")
    if (block.cls is not None) != prompt.classes:
        raise PresenceMismatch(f"class presence does not match prompt {prompt.name}")
    if (block.text is not None) != prompt.has_text:
        raise PresenceMismatch(f"text presence does not match prompt {prompt.name}")


def serialize_page(page: Page, prompt: PromptSpec = MIP) -> str:
    if not prompt.boxes:
        if len(page.blocks) != 1:
            raise PresenceMismatch("a text-only prompt carries exactly one block")
        _check_presence(page.blocks[0], prompt)
        return page.blocks[0].text

    parts = []
    for block in page.blocks:
        _check_presence(block, prompt)
        b = block.bbox
        parts.append(f"<x_{b.x1}><y_{b.y1}>")
        if prompt.has_text:
            if _X_TOKEN.search(block.text):
                raise FormatError("block text contains a coordinate token and cannot round-trip")
            parts.append(block.text)
        parts.append(f"<x_{b.x2}><y_{b.y2}>")
        if prompt.classes:
            parts.append(f"<class_{block.cls}>")
    return "".join(parts)
