"""Canonical block ordering: page headers first, body in emission order,
floats, footnotes and footers last."""

from __future__ import annotations

import enum
import warnings
from typing import Optional

from .format import Page, SemanticClass


class OrderGroup(enum.IntEnum):
    HEADER = 0
    BODY = 1
    TRAILER = 2


class MissingClassWarning(UserWarning):
    pass


_GROUPS = {
    SemanticClass.PAGE_HEADER: OrderGroup.HEADER,
    SemanticClass.TEXT: OrderGroup.BODY,
    SemanticClass.SECTION_HEADER: OrderGroup.BODY,
    SemanticClass.LIST_ITEM: OrderGroup.BODY,
    SemanticClass.TITLE: OrderGroup.BODY,
    SemanticClass.FORMULA: OrderGroup.BODY,
    SemanticClass.FOOTNOTE: OrderGroup.TRAILER,
    SemanticClass.PAGE_FOOTER: OrderGroup.TRAILER,
    SemanticClass.PICTURE: OrderGroup.TRAILER,
    SemanticClass.TABLE: OrderGroup.TRAILER,
    SemanticClass.CAPTION: OrderGroup.TRAILER,
}


def order_group(cls: SemanticClass) -> OrderGroup:
    return _GROUPS[cls]


def _group_of(cls: Optional[object]) -> Optional[OrderGroup]:
    return _GROUPS.get(cls) if isinstance(cls, SemanticClass) else None


def canonicalize(page: Page) -> Page:
    """Stable partition of the blocks into header, body and trailer groups.

    Blocks without a known class are kept in the body and reported through a
    ``MissingClassWarning``.
    """
    buckets = {g: [] for g in OrderGroup}
    for i, block in enumerate(page.blocks):
        group = _group_of(block.cls)
        if group is None:
            warnings.warn(f"block {i} has no semantic class; kept in body", MissingClassWarning, stacklevel=2)
            group = OrderGroup.BODY
        buckets[group].append(block)
    return page.with_blocks(buckets[OrderGroup.HEADER] + buckets[OrderGroup.BODY] + buckets[OrderGroup.TRAILER])


def is_canonical(page: Page) -> bool:
    groups = [_group_of(b.cls) for b in page.blocks]
    groups = [OrderGroup.BODY if g is None else g for g in groups]
    return all(a <= b for a, b in zip(groups, groups[1:]))
