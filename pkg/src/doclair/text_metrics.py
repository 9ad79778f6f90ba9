"""Document-level text accuracy metrics.

Both texts are normalized first (case folded, every non-alphanumeric
character turned into a space, whitespace collapsed), then compared at the
word or character level.
"""

from __future__ import annotations

import heapq
import math
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass
from typing import Dict, List, Sequence, Tuple

from rapidfuzz.distance import Levenshtein

BLEU_FLOOR = 1e-9


@dataclass(frozen=True)
class NormalizedText:
    tokens: Tuple[str, ...]

    @property
    def raw_normalized(self) -> str:
        return " ".join(self.tokens)

    def __len__(self) -> int:
        return len(self.tokens)


def normalize(text: str, keep_case: bool = False) -> NormalizedText:
    if not keep_case:
        text = text.lower()
    cleaned = "".join(ch if ch.isalnum() else " " for ch in text)
    return NormalizedText(tuple(cleaned.split()))


def _as_normalized(value) -> NormalizedText:
    return value if isinstance(value, NormalizedText) else normalize(value)


def word_error_rate(ref: NormalizedText, hyp: NormalizedText) -> float:
    """Word-level Levenshtein distance over the reference length.

    An empty reference gives 0 against an empty hypothesis and otherwise the
    hypothesis length (every word is an insertion).
    """
    ref, hyp = _as_normalized(ref), _as_normalized(hyp)
    if not ref.tokens:
        return float(len(hyp.tokens))
    return Levenshtein.distance(ref.tokens, hyp.tokens) / len(ref.tokens)


def char_edit_distance(ref: NormalizedText, hyp: NormalizedText) -> float:
    ref, hyp = _as_normalized(ref), _as_normalized(hyp)
    a, b = ref.raw_normalized, hyp.raw_normalized
    return Levenshtein.distance(a, b) / max(len(a), len(b), 1)


def _prf(overlap: float, n_hyp: float, n_ref: float) -> Tuple[float, float, float]:
    p = overlap / n_hyp if n_hyp else 0.0
    r = overlap / n_ref if n_ref else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def word_prf(ref: NormalizedText, hyp: NormalizedText) -> Tuple[float, float, float]:
    """Precision, recall and F1 over the sets of distinct words."""
    ref, hyp = _as_normalized(ref), _as_normalized(hyp)
    r, h = set(ref.tokens), set(hyp.tokens)
    return _prf(len(r & h), len(h), len(r))


def counting_prf(ref: NormalizedText, hyp: NormalizedText) -> Tuple[float, float, float]:
    ref, hyp = _as_normalized(ref), _as_normalized(hyp)
    # the k-th occurrence of a word only matches another k-th occurrence
    overlap = sum((Counter(ref.tokens) & Counter(hyp.tokens)).values())
    return _prf(overlap, len(hyp.tokens), len(ref.tokens))


def counting_f1(ref: NormalizedText, hyp: NormalizedText) -> float:
    return counting_prf(ref, hyp)[2]


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(ref: NormalizedText, hyp: NormalizedText, max_order: int = 4) -> float:
    """Single-reference corpus BLEU with uniform weights.

    Orders above the hypothesis length are dropped and the weights
    renormalized; a zero n-gram precision is floored at ``BLEU_FLOOR``.
    """
    ref, hyp = _as_normalized(ref), _as_normalized(hyp)
    h, r = hyp.tokens, ref.tokens
    if not h:
        return 0.0
    orders = min(max_order, len(h))
    log_sum = 0.0
    for n in range(1, orders + 1):
        h_counts = _ngrams(h, n)
        clipped = sum((h_counts & _ngrams(r, n)).values())
        p_n = clipped / sum(h_counts.values())
        log_sum += math.log(max(p_n, BLEU_FLOOR))
    bp = 1.0 if len(h) >= len(r) else math.exp(1 - len(r) / len(h))
    return bp * math.exp(log_sum / orders)


def align_unigrams(ref: Sequence[str], hyp: Sequence[str]) -> List[Tuple[int, int]]:
    """Exact-match one-to-one alignment as (hyp position, ref position) pairs.

    Greedy tiling: repeatedly align the longest run of consecutive words that
    appears unaligned in both texts (earliest in the hypothesis, then in the
    reference, on ties). This reaches the maximum number of matches and
    keeps long runs together, which keeps the chunk count low.
    """
    positions: Dict[str, List[int]] = defaultdict(list)
    for j, tok in enumerate(ref):
        positions[tok].append(j)
    heap = []
    for i, tok in enumerate(hyp):
        for j in positions.get(tok, ()):
            if i and j and hyp[i - 1] == ref[j - 1]:
                continue
            length = 1
            while i + length < len(hyp) and j + length < len(ref) and hyp[i + length] == ref[j + length]:
                length += 1
            heap.append((-length, i, j))
    heapq.heapify(heap)

    used_h = [False] * len(hyp)
    used_r = [False] * len(ref)
    pairs = []
    while heap:
        neg_len, i, j = heapq.heappop(heap)
        length = -neg_len
        free = [not used_h[i + k] and not used_r[j + k] for k in range(length)]
        if all(free):
            for k in range(length):
                used_h[i + k] = used_r[j + k] = True
                pairs.append((i + k, j + k))
            continue
        # re-queue the unaligned pieces of a partially covered run
        k = 0
        while k < length:
            if free[k]:
                start = k
                while k < length and free[k]:
                    k += 1
                heapq.heappush(heap, (-(k - start), i + start, j + start))
            else:
                k += 1
    pairs.sort()
    return pairs


def count_chunks(pairs: Sequence[Tuple[int, int]]) -> int:
    """Number of runs adjacent in both texts, with ``pairs`` sorted by hyp position."""
    chunks = 0
    prev = None
    for i, j in pairs:
        if prev is None or i != prev[0] + 1 or j != prev[1] + 1:
            chunks += 1
        prev = (i, j)
    return chunks


def meteor_from_alignment(n_ref: int, n_hyp: int, matches: int, chunks: int) -> float:
    if matches == 0:
        return 0.0
    p = matches / n_hyp
    r = matches / n_ref
    fmean = 10 * p * r / (r + 9 * p)
    penalty = 0.5 * (chunks / matches) ** 3
    return fmean * (1 - penalty)


def meteor(ref: NormalizedText, hyp: NormalizedText) -> float:
    """METEOR with exact unigram matching only (no stemming or synonyms)."""
    ref, hyp = _as_normalized(ref), _as_normalized(hyp)
    pairs = align_unigrams(ref.tokens, hyp.tokens)
    return meteor_from_alignment(len(ref.tokens), len(hyp.tokens), len(pairs), count_chunks(pairs))


@dataclass(frozen=True)
class TextScores:
    wer: float
    edit_distance: float
    f1: float
    precision: float
    recall: float
    counting_f1: float
    bleu: float
    meteor: float

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


METRIC_NAMES = tuple(TextScores.__dataclass_fields__)


def score_normalized(ref: NormalizedText, hyp: NormalizedText) -> TextScores:
    p, r, f = word_prf(ref, hyp)
    return TextScores(
        wer=word_error_rate(ref, hyp),
        edit_distance=char_edit_distance(ref, hyp),
        f1=f,
        precision=p,
        recall=r,
        counting_f1=counting_f1(ref, hyp),
        bleu=bleu(ref, hyp),
        meteor=meteor(ref, hyp),
    )


def score_pair(ref_raw: str, hyp_raw: str, keep_case: bool = False) -> TextScores:
    return score_normalized(normalize(ref_raw, keep_case), normalize(hyp_raw, keep_case))


def mean_scores(scores: Sequence[TextScores]) -> TextScores:
    if not scores:
        return TextScores(*([0.0] * len(METRIC_NAMES)))
    return TextScores(
        *(math.fsum(getattr(s, name) for s in scores) / len(scores) for name in METRIC_NAMES)
    )
