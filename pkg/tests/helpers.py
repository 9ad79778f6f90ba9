"""Synthetic data and independent brute-force oracles for the test suite."""

from __future__ import annotations

import itertools
import random
from typing import List, Sequence, Tuple

from doclair.corpus_io import PageRecord
from doclair.format import (
    CLASSES,
    BBox,
    Block,
    Page,
    PageDims,
    PromptSpec,
    SemanticClass,
    TextMode,
)

WORDS = (
    "the of and to in is for that with as on by this are be from at or an it which was "
    "model page layout table figure caption section results method data text said"
).split()


def random_text(rng: random.Random, max_words: int = 12, allow_empty: bool = True) -> str:
    n = rng.randint(0 if allow_empty else 1, max_words)
    words = [rng.choice(WORDS) for _ in range(n)]
    extras = ["$x^2$", "**bold**", "<b>", "a<x", "<y_3>", "\n", "é", "#"]
    if words and rng.random() < 0.3:
        words.insert(rng.randrange(len(words)), rng.choice(extras))
    return " ".join(words)


def random_bbox(rng: random.Random, dims: PageDims) -> BBox:
    x1 = rng.randrange(0, dims.width - 1)
    y1 = rng.randrange(0, dims.height - 1)
    return BBox(x1, y1, rng.randrange(x1 + 1, dims.width), rng.randrange(y1 + 1, dims.height))


def random_page(rng: random.Random, prompt: PromptSpec, dims: PageDims, max_blocks: int = 8) -> Page:
    if not prompt.boxes:
        return Page(dims, (Block(text=random_text(rng, allow_empty=False) or "x"),))
    blocks = []
    for _ in range(rng.randint(0, max_blocks)):
        blocks.append(
            Block(
                bbox=random_bbox(rng, dims),
                text=random_text(rng) if prompt.has_text else None,
                cls=rng.choice(CLASSES) if prompt.classes else None,
            )
        )
    return Page(dims, tuple(blocks))


def all_prompts() -> List[PromptSpec]:
    out = []
    for mode, boxes, classes in itertools.product(TextMode, (True, False), (True, False)):
        try:
            out.append(PromptSpec(mode, boxes, classes))
        except ValueError:
            pass
    return out


# ------------------------------------------------------------------ oracles


def levenshtein_oracle(a: Sequence, b: Sequence) -> int:
    prev = list(range(len(b) + 1))
    for i in range(1, len(a) + 1):
        cur = [i] + [0] * len(b)
        for j in range(1, len(b) + 1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] != b[j - 1]))
        prev = cur
    return prev[-1]


def exhaustive_assignment(weight, maximize: bool = True, tol: float = 1e-9) -> List[Tuple[int, int]]:
    """Enumerate every injective assignment of size min(n, m); keep the best
    total and, among ties, the lexicographically smallest sorted pair list."""
    n = len(weight)
    m = len(weight[0]) if n else 0
    if n == 0 or m == 0:
        return []
    k = min(n, m)
    candidates = []
    for rows in itertools.combinations(range(n), k):
        for cols in itertools.permutations(range(m), k):
            pairs = sorted(zip(rows, cols))
            total = sum(weight[i][j] for i, j in pairs)
            candidates.append((total, pairs))
    best = max(t for t, _ in candidates) if maximize else min(t for t, _ in candidates)
    tied = [p for t, p in candidates if abs(t - best) <= tol]
    return min(tied)


def repetition_oracle(text: str, min_unit: int, min_repeats: int):
    """O(n^3) scan: earliest start, then shortest unit."""
    n = len(text)
    for s in range(n):
        for unit in range(min_unit, n - s + 1):
            if (n - s) % unit:
                continue
            k = (n - s) // unit
            if k >= min_repeats and text[s : s + unit] * k == text[s:]:
                return s, text[s : s + unit], k
    return None


def indexed_multiset(tokens: Sequence[str]) -> set:
    """Occurrence-indexed elements word_k, as in said_1 ... said_4."""
    seen = {}
    out = set()
    for t in tokens:
        seen[t] = seen.get(t, 0) + 1
        out.add((t, seen[t]))
    return out


def max_alignment_min_chunks(ref: Sequence[str], hyp: Sequence[str]) -> Tuple[int, int]:
    """Exhaustive search over all one-to-one exact-match alignments.

    Returns (max matches, min chunks among maximum alignments)."""
    best = (0, 0)

    def chunks(pairs):
        pairs = sorted(pairs)
        c = 0
        for k, (i, j) in enumerate(pairs):
            if k == 0 or i != pairs[k - 1][0] + 1 or j != pairs[k - 1][1] + 1:
                c += 1
        return c

    def rec(i, used, pairs):
        nonlocal best
        if i == len(hyp):
            m = len(pairs)
            c = chunks(pairs)
            if m > best[0] or (m == best[0] and m and c < best[1]):
                best = (m, c)
            return
        for j, tok in enumerate(ref):
            if tok == hyp[i] and j not in used:
                used.add(j)
                pairs.append((i, j))
                rec(i + 1, used, pairs)
                pairs.pop()
                used.discard(j)
        rec(i + 1, used, pairs)

    rec(0, set(), [])
    return best


# ------------------------------------------------------------------ corpora


def synthetic_corpus(n_pages: int, seed: int = 0, scored: bool = False, n_docs: int = 10):
    """Ground-truth and prediction records with realistic noise.

    Predictions jitter boxes, swap some classes, drop and hallucinate a few
    boxes and perturb some words.
    """
    rng = random.Random(seed)
    dims = PageDims(1024, 1280)
    gt, pred = [], []
    for k in range(n_pages):
        doc_id = f"doc{k % n_docs:03d}"
        page_index = k // n_docs
        gblocks, pblocks = [], []
        y = 20
        for _ in range(rng.randint(4, 14)):
            h = rng.randint(20, 120)
            if y + h >= dims.height - 1:
                break
            x1 = rng.randint(20, 200)
            x2 = rng.randint(x1 + 200, dims.width - 20)
            box = BBox(x1, y, x2, y + h)
            y += h + rng.randint(5, 30)
            cls = rng.choice(CLASSES)
            text = " ".join(rng.choice(WORDS) for _ in range(rng.randint(5, 40))) + "."
            gblocks.append(Block(box, text, cls))
            if rng.random() < 0.08:
                continue
            j = lambda v, hi: min(max(v + rng.randint(-12, 12), 0), hi)
            pbox = BBox(j(box.x1, dims.width - 2), j(box.y1, dims.height - 2), 0, 0)
            pbox = BBox(pbox.x1, pbox.y1, max(j(box.x2, dims.width - 1), pbox.x1 + 1), max(j(box.y2, dims.height - 1), pbox.y1 + 1))
            pcls = cls if rng.random() > 0.1 else rng.choice(CLASSES)
            words = text.split()
            if rng.random() < 0.5:
                words[rng.randrange(len(words))] = rng.choice(WORDS)
            score = round(rng.random(), 3) if scored else None
            pblocks.append(Block(pbox, " ".join(words), pcls, score))
        if rng.random() < 0.3:
            box = random_bbox(rng, dims)
            score = round(rng.random(), 3) if scored else None
            pblocks.append(Block(box, "spurious", rng.choice(CLASSES), score))
        gt.append(PageRecord(doc_id, page_index, dims.width, dims.height, blocks=gblocks))
        pred.append(PageRecord(doc_id, page_index, dims.width, dims.height, blocks=pblocks))
    return pred, gt


def labeled(blocks):
    from doclair.layout_metrics import LabeledBox

    return [LabeledBox(b.bbox, b.cls, b.score) for b in blocks]


__all__ = [
    "SemanticClass",
    "all_prompts",
    "exhaustive_assignment",
    "indexed_multiset",
    "labeled",
    "levenshtein_oracle",
    "max_alignment_min_chunks",
    "random_bbox",
    "random_page",
    "random_text",
    "repetition_oracle",
    "synthetic_corpus",
]
