"""Hallucination and bad-box filtering for parsed pages."""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .format import MIP, Block, Page, PageDims, ParseReport, PromptSpec, SemanticClass


class RejectionReason(str, enum.Enum):
    SYNTAX_NON_COMPLIANT = "SyntaxNonCompliant"
    DEGENERATE_BOX = "DegenerateBox"
    OUT_OF_RANGE_COORDINATE = "OutOfRangeCoordinate"
    UNKNOWN_CLASS = "UnknownClass"
    REPETITION_LOOP = "RepetitionLoop"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class SanitizeConfig:
    repetition_min_unit_chars: int = 12
    repetition_min_repeats: int = 4
    enable_repetition_filter: bool = True

    def __post_init__(self):
        if self.repetition_min_unit_chars < 1:
            raise ValueError("repetition_min_unit_chars must be positive")
        if self.repetition_min_repeats < 2:
            raise ValueError("repetition_min_repeats must be at least 2")


@dataclass(frozen=True)
class Repetition:
    start: int
    unit: str
    repeats: int


@dataclass(frozen=True)
class AuditEntry:
    reason: RejectionReason
    detail: str

    def to_dict(self) -> dict:
        return {"reason": self.reason.value, "detail": self.detail}


def block_rejection(block: Block, dims: PageDims, require_class: bool = True) -> Optional[RejectionReason]:
    """First failing predicate for a parsed block, or None if it is valid."""
    if block.bbox is None:
        return RejectionReason.SYNTAX_NON_COMPLIANT
    if not block.bbox.in_bounds(dims):
        return RejectionReason.OUT_OF_RANGE_COORDINATE
    if not block.bbox.is_ordered():
        return RejectionReason.DEGENERATE_BOX
    if require_class and not isinstance(block.cls, SemanticClass):
        return RejectionReason.UNKNOWN_CLASS
    return None


def filter_boxes(
    report: ParseReport, dims: Optional[PageDims] = None
) -> Tuple[List[Block], List[Tuple[Block, RejectionReason]]]:
    """Split a parse report into valid blocks and rejected ones.

    The rejected tail of the report (if any) is appended to ``rejected`` as a
    text-only block tagged ``SyntaxNonCompliant``.
    """
    dims = dims or report.dims
    accepted: List[Block] = []
    rejected: List[Tuple[Block, RejectionReason]] = []
    for block in report.blocks:
        reason = block_rejection(block, dims, require_class=report.prompt.classes)
        if reason is None:
            accepted.append(block)
        else:
            rejected.append((block, reason))
    for span in report.rejected:
        rejected.append((Block(text=span.text), RejectionReason.SYNTAX_NON_COMPLIANT))
    return accepted, rejected


def _trailing_period_start(codes: np.ndarray, unit: int) -> int:
    """Smallest s such that codes[s:] has period ``unit``."""
    n = len(codes)
    mismatch = np.flatnonzero(codes[: n - unit] != codes[unit:])
    return 0 if mismatch.size == 0 else int(mismatch[-1]) + 1


def detect_repetition(text: str, config: SanitizeConfig = SanitizeConfig()) -> Optional[Repetition]:
    """Find a loop that runs to the end of ``text``.

    Returns the earliest start ``s`` such that ``text[s:]`` is some unit of at
    least ``repetition_min_unit_chars`` characters repeated at least
    ``repetition_min_repeats`` times; for that start the shortest such unit
    is reported.
    """
    n = len(text)
    min_unit = config.repetition_min_unit_chars
    min_repeats = config.repetition_min_repeats
    if n < min_unit * min_repeats:
        return None
    codes = np.frombuffer(text.encode("utf-32-le"), dtype=np.uint32)
    best: Optional[Tuple[int, int]] = None
    for unit in range(min_unit, n // min_repeats + 1):
        s = _trailing_period_start(codes, unit)
        s += (n - s) % unit
        if (n - s) // unit < min_repeats:
            continue
        if best is None or s < best[0]:
            best = (s, unit)
    if best is None:
        return None
    s, unit = best
    return Repetition(start=s, unit=text[s : s + unit], repeats=(n - s) // unit)


def truncate_repetitions(text: str, config: SanitizeConfig) -> Tuple[str, List[Repetition]]:
    """Cut trailing loops down to a single unit, repeating until none remain."""
    found = []
    while True:
        rep = detect_repetition(text, config)
        if rep is None:
            return text, found
        found.append(rep)
        text = text[: rep.start + len(rep.unit)]


def sanitize_page(
    report: ParseReport,
    dims: Optional[PageDims] = None,
    config: SanitizeConfig = SanitizeConfig(),
) -> Tuple[Page, List[AuditEntry]]:
    dims = dims or report.dims
    accepted, rejected = filter_boxes(report, dims)
    audit = [AuditEntry(reason, _describe(block)) for block, reason in rejected]
    cleaned = []
    for block in accepted:
        if config.enable_repetition_filter and block.text:
            text, loops = truncate_repetitions(block.text, config)
            for rep in loops:
                audit.append(
                    AuditEntry(
                        RejectionReason.REPETITION_LOOP,
                        f"offset={rep.start} repeats={rep.repeats} unit={rep.unit!r}",
                    )
                )
            if loops:
                block = replace(block, text=text)
        cleaned.append(block)
    return Page(dims, tuple(cleaned)), audit


def sanitize_blocks(
    blocks: Sequence[Block],
    dims: PageDims,
    config: SanitizeConfig = SanitizeConfig(),
    prompt: PromptSpec = MIP,
) -> Tuple[Page, List[AuditEntry]]:
    """Sanitize already-structured blocks (no raw stream, so no syntax tail)."""
    return sanitize_page(ParseReport(prompt, dims, list(blocks)), dims, config)


def _describe(block: Block) -> str:
    if block.bbox is None:
        return repr(block.text or "")[:200]
    return f"bbox={block.bbox.as_list()} class={block.cls}"
