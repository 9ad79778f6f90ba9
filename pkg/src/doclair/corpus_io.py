"""On-disk formats: JSONL page records, COCO detection import, report files."""

from __future__ import annotations

import csv
import io
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Mapping, Optional, Sequence

from .format import (
    Block,
    BBox,
    InvalidPrompt,
    PageDims,
    PromptSpec,
    SemanticClass,
    parse_page,
)

__all__ = [
    "PageRecord",
    "RecordError",
    "LineParseError",
    "DuplicateKey",
    "UnknownCategory",
    "MissingImageDims",
    "read_records",
    "write_records",
    "import_coco_detections",
    "export_coco_detections",
    "write_report",
]


class RecordError(ValueError):
    pass


class LineParseError(RecordError):
    def __init__(self, line_no: int, detail: str):
        super().__init__(f"line {line_no}: {detail}")
        self.line_no = line_no
        self.detail = detail


class DuplicateKey(LineParseError):
    def __init__(self, line_no: int, doc_id: str, page_index: int):
        super().__init__(line_no, f"duplicate page ({doc_id!r}, {page_index})")
        self.doc_id = doc_id
        self.page_index = page_index


class UnknownCategory(RecordError):
    pass


class MissingImageDims(RecordError):
    pass


@dataclass
class PageRecord:
    """One page of one document, either as a raw model string or as blocks."""

    doc_id: str
    page_index: int
    width: int
    height: int
    raw: Optional[str] = None
    prompt: Optional[PromptSpec] = None
    blocks: Optional[List[Block]] = None

    def __post_init__(self):
        if not isinstance(self.doc_id, str) or not self.doc_id:
            raise ValueError("doc_id must be a non-empty string")
        for name in ("page_index", "width", "height"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool):
                raise ValueError(f"{name} must be an integer")
        if self.page_index < 0:
            raise ValueError("page_index must be nonnegative")
        if self.width < 1 or self.height < 1:
            raise ValueError("width and height must be positive")
        if (self.raw is None) == (self.blocks is None):
            raise ValueError("a record carries exactly one of 'raw' or 'blocks'")
        if self.raw is not None and self.prompt is None:
            raise ValueError("a raw record needs a prompt tag")

    @property
    def key(self) -> tuple:
        return (self.doc_id, self.page_index)

    @property
    def dims(self) -> PageDims:
        return PageDims(self.width, self.height)

    def resolved_blocks(self) -> List[Block]:
        """Blocks of the page; raw payloads are parsed (valid prefix only)."""
        if self.blocks is not None:
            return list(self.blocks)
        return parse_page(self.raw, self.prompt, self.dims).blocks

    def text(self) -> str:
        if self.raw is not None and not self.prompt.boxes:
            return self.raw
        return "\n".join(b.text for b in self.resolved_blocks() if b.text)

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {
            "doc_id": self.doc_id,
            "page_index": self.page_index,
            "width": self.width,
            "height": self.height,
        }
        if self.raw is not None:
            out["prompt"] = self.prompt.name
            out["raw"] = self.raw
        else:
            out["blocks"] = [block_to_dict(b) for b in self.blocks]
        return out

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "PageRecord":
        if not isinstance(data, Mapping):
            raise ValueError("record must be a JSON object")
        missing = [k for k in ("doc_id", "page_index", "width", "height") if k not in data]
        if missing:
            raise ValueError(f"missing fields: {', '.join(missing)}")
        raw = data.get("raw")
        blocks = data.get("blocks")
        prompt = None
        if raw is not None:
            if not isinstance(raw, str):
                raise ValueError("'raw' must be a string")
            prompt = PromptSpec.from_name(str(data.get("prompt", "")))
        if blocks is not None:
            if not isinstance(blocks, list):
                raise ValueError("'blocks' must be a list")
            blocks = [block_from_dict(b) for b in blocks]
        return cls(
            doc_id=data["doc_id"],
            page_index=data["page_index"],
            width=data["width"],
            height=data["height"],
            raw=raw,
            prompt=prompt,
            blocks=blocks,
        )


def block_to_dict(block: Block) -> Dict[str, Any]:
    out: Dict[str, Any] = {}
    if block.bbox is not None:
        out["bbox"] = block.bbox.as_list()
    if block.cls is not None:
        out["class"] = str(block.cls)
    if block.text is not None:
        out["text"] = block.text
    if block.score is not None:
        out["score"] = block.score
    return out


def block_from_dict(data: Mapping[str, Any]) -> Block:
    if not isinstance(data, Mapping):
        raise ValueError("block must be a JSON object")
    bbox = data.get("bbox")
    if bbox is not None:
        if len(bbox) != 4 or not all(isinstance(v, int) and not isinstance(v, bool) for v in bbox):
            raise ValueError(f"bbox must be four integers, got {bbox!r}")
        bbox = BBox(*bbox)
    label = data.get("class")
    if label is not None:
        try:
            label = SemanticClass(label)
        except ValueError:
            label = str(label)
    text = data.get("text")
    if text is not None and not isinstance(text, str):
        raise ValueError("block text must be a string")
    score = data.get("score")
    if score is not None:
        score = float(score)
        if not 0.0 <= score <= 1.0:
            raise ValueError(f"score must lie in [0, 1], got {score}")
    return Block(bbox=bbox, text=text, cls=label, score=score)


def read_records(path, errors: Optional[List[RecordError]] = None) -> Iterator[PageRecord]:
    """Stream records from a JSONL file in file order.

    Bad lines raise ``LineParseError`` (or ``DuplicateKey``), unless an
    ``errors`` list is given, in which case they are collected there and
    reading continues.
    """
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                try:
                    record = PageRecord.from_dict(json.loads(line))
                except (ValueError, TypeError, InvalidPrompt) as exc:
                    raise LineParseError(line_no, str(exc)) from None
                if record.key in seen:
                    raise DuplicateKey(line_no, record.doc_id, record.page_index)
            except LineParseError as exc:
                if errors is None:
                    raise
                errors.append(exc)
                continue
            seen.add(record.key)
            yield record


def dumps_record(record: PageRecord) -> str:
    return json.dumps(record.to_dict(), ensure_ascii=False)


def write_records(path, records: Iterable[PageRecord]) -> int:
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for record in records:
            fh.write(dumps_record(record) + "\n")
            count += 1
    return count


_CATEGORY_ALIASES = {
    "secheader": SemanticClass.SECTION_HEADER,
    "sectionheading": SemanticClass.SECTION_HEADER,
    "listitem": SemanticClass.LIST_ITEM,
    "figure": SemanticClass.PICTURE,
}


def _category_key(name: str) -> str:
    return re.sub(r"[\s_\-]+", "", name).lower()


def category_map(aliases: Optional[Mapping[str, str]] = None) -> Dict[str, SemanticClass]:
    mapping = {_category_key(c.value): c for c in SemanticClass}
    mapping.update(_CATEGORY_ALIASES)
    for alias, target in (aliases or {}).items():
        mapping[_category_key(alias)] = SemanticClass(target)
    return mapping


def map_category(name: str, mapping: Optional[Mapping[str, SemanticClass]] = None) -> SemanticClass:
    mapping = mapping if mapping is not None else category_map()
    try:
        return mapping[_category_key(name)]
    except KeyError:
        raise UnknownCategory(f"category {name!r} has no semantic class") from None


def round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


def xywh_to_corners(box: Sequence[float]) -> BBox:
    x, y, w, h = box
    return BBox(round_half_up(x), round_half_up(y), round_half_up(x + w), round_half_up(y + h))


def import_coco_detections(path_or_data, aliases: Optional[Mapping[str, str]] = None) -> Iterator[PageRecord]:
    """Convert a COCO-style detection file into block records.

    The input is a JSON object with ``images`` (id, width, height and
    optionally ``doc_id``/``page_index`` or ``file_name``), ``categories``
    (id, name) and the boxes under ``annotations`` or ``detections``; a bare
    list of detections is accepted when the index is passed separately as a
    dict with those keys.
    """
    if isinstance(path_or_data, (str, Path)):
        with open(path_or_data, encoding="utf-8") as fh:
            data = json.load(fh)
    else:
        data = path_or_data
    mapping = category_map(aliases)
    categories = {c["id"]: map_category(c["name"], mapping) for c in data.get("categories", [])}
    dets = data.get("detections", data.get("annotations", []))
    by_image: Dict[Any, List[Block]] = {img["id"]: [] for img in data.get("images", [])}
    for det in dets:
        image_id = det["image_id"]
        if image_id not in by_image:
            raise MissingImageDims(f"detection refers to unknown image {image_id!r}")
        if det["category_id"] not in categories:
            raise UnknownCategory(f"unknown category id {det['category_id']!r}")
        score = det.get("score")
        by_image[image_id].append(
            Block(
                bbox=xywh_to_corners(det["bbox"]),
                cls=categories[det["category_id"]],
                score=None if score is None else float(score),
            )
        )
    for img in data.get("images", []):
        if "width" not in img or "height" not in img:
            raise MissingImageDims(f"image {img.get('id')!r} lacks width/height")
        doc_id = str(img.get("doc_id") or img.get("file_name") or img["id"])
        yield PageRecord(
            doc_id=doc_id,
            page_index=int(img.get("page_index", 0)),
            width=int(img["width"]),
            height=int(img["height"]),
            blocks=by_image[img["id"]],
        )


def export_coco_detections(records: Iterable[PageRecord]) -> Dict[str, Any]:
    """Inverse of :func:`import_coco_detections` (corner boxes back to xywh)."""
    classes = list(SemanticClass)
    images, dets = [], []
    for image_id, record in enumerate(records, start=1):
        images.append(
            {
                "id": image_id,
                "doc_id": record.doc_id,
                "page_index": record.page_index,
                "width": record.width,
                "height": record.height,
            }
        )
        for block in record.resolved_blocks():
            if block.bbox is None or block.semantic_class is None:
                continue
            b = block.bbox
            det = {
                "image_id": image_id,
                "category_id": classes.index(block.cls) + 1,
                "bbox": [b.x1, b.y1, b.x2 - b.x1, b.y2 - b.y1],
            }
            if block.score is not None:
                det["score"] = block.score
            dets.append(det)
    return {
        "images": images,
        "categories": [{"id": k + 1, "name": c.value} for k, c in enumerate(classes)],
        "detections": dets,
    }


# ---------------------------------------------------------------- reports


@dataclass
class EvalReport:
    """Everything an evaluation run writes out.

    ``text`` and ``layout`` are plain dicts/lists produced by the evaluators;
    ``layout_matrices`` and ``pr_curves`` feed the CSV files.
    """

    command: str
    config: Dict[str, Any]
    version: str
    text: Optional[Dict[str, Any]] = None
    layout: Optional[Dict[str, Any]] = None
    audit: Dict[str, int] = field(default_factory=dict)
    per_doc_scores: List[Dict[str, Any]] = field(default_factory=list)
    threshold_matrices: List[tuple] = field(default_factory=list)  # (threshold, ConfusionMatrix)
    pooled_matrix: Any = None
    pr_curves: Dict[str, Any] = field(default_factory=dict)  # name -> PRCurve

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {
            "tool": {"name": "doclair", "version": self.version},
            "command": self.command,
            "config": self.config,
            "audit": dict(sorted(self.audit.items())),
        }
        if self.text is not None:
            out["text"] = self.text
        if self.layout is not None:
            out["layout"] = self.layout
        return out


def _csv_text(rows: Iterable[Sequence[Any]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _fmt(value: Any) -> str:
    if isinstance(value, float):
        return repr(value)
    return "" if value is None else str(value)


def threshold_tag(threshold: float) -> str:
    return f"{threshold:.2f}".replace(".", "p")


def write_report(report: EvalReport, out_dir) -> List[Path]:
    """Write report.json plus the CSV side files; returns the paths written."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        written = []

        def emit(name: str, content: str) -> None:
            path = out / name
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(content)
            written.append(path)

        emit("report.json", json.dumps(report.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n")
        if report.per_doc_scores:
            columns = list(report.per_doc_scores[0].keys())
            emit(
                "scores_per_doc.csv",
                _csv_text([columns] + [[row[c] for c in columns] for row in report.per_doc_scores]),
            )
        if report.pooled_matrix is not None:
            emit("confusion_matrix_pooled.csv", report.pooled_matrix.to_csv())
            for thr, cm in report.threshold_matrices:
                emit(f"confusion_matrix_iou{threshold_tag(thr)}.csv", cm.to_csv())
        if report.pr_curves:
            names = list(report.pr_curves)
            bins = report.pr_curves[names[0]].recall_bins
            rows = [["recall"] + names]
            for k, r in enumerate(bins.tolist()):
                rows.append([r] + [float(report.pr_curves[n].precision_at[k]) for n in names])
            emit("pr_curves.csv", _csv_text(rows))
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    return written


class IoFailure(OSError):
    pass
