"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data-level failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from collections import Counter, defaultdict
from pathlib import Path
from typing import List, Optional

from . import __version__
from .corpus_io import (
    PageRecord,
    RecordError,
    read_records,
    write_records,
    write_report,
)
from .evaluate import NoOverlap, default_threads, evaluate_layout, evaluate_text
from .format import MIP, EmptyInput, InvalidPrompt, Page, PageDims, PromptSpec, parse_page
from .layout_metrics import DEFAULT_THRESHOLDS, MissingScore
from .page_join import DEFAULT_SKIP_HEADINGS, JoinConfig, join_document
from .reading_order import canonicalize
from .sanitize import SanitizeConfig, sanitize_blocks, sanitize_page

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _read_all(path, strict_errors: Optional[list] = None) -> List[PageRecord]:
    errors: list = []
    records = list(read_records(path, errors=errors))
    for err in errors:
        _log(f"{path}: {err}")
    if strict_errors is not None:
        strict_errors.extend(errors)
    return records


def _prompt_arg(value: str) -> PromptSpec:
    try:
        return PromptSpec.from_name(value)
    except InvalidPrompt as exc:
        raise UsageError(str(exc)) from None


def cmd_parse(args) -> int:
    prompt = _prompt_arg(args.prompt) if args.prompt else None
    errors: list = []
    records = _read_all(args.input, errors)
    out, summary = [], []
    failed = len(errors)
    for rec in records:
        if rec.raw is None:
            out.append(rec)
            continue
        p = prompt or rec.prompt
        dims = PageDims(args.width or rec.width, args.height or rec.height)
        try:
            report = parse_page(rec.raw, p, dims)
        except EmptyInput as exc:
            failed += 1
            summary.append({"doc_id": rec.doc_id, "page_index": rec.page_index, "error": "EmptyInput", "detail": str(exc)})
            continue
        for span in report.rejected:
            failed += 1
            summary.append(
                {
                    "doc_id": rec.doc_id,
                    "page_index": rec.page_index,
                    "error": span.reason,
                    "start": span.start,
                    "end": span.end,
                }
            )
        out.append(
            PageRecord(rec.doc_id, rec.page_index, dims.width, dims.height, blocks=report.blocks)
        )
    write_records(args.output, out)
    for err in errors:
        summary.append({"error": type(err).__name__, "detail": str(err)})
    for line in summary:
        print(json.dumps(line, ensure_ascii=False))
    print(json.dumps({"records": len(out), "failures": failed}))
    return EXIT_DATA if args.strict and failed else EXIT_OK


def _sanitize_config(args) -> SanitizeConfig:
    try:
        return SanitizeConfig(
            repetition_min_unit_chars=args.min_unit,
            repetition_min_repeats=args.min_repeats,
            enable_repetition_filter=not args.no_repetition_filter,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def sanitize_record(rec: PageRecord, config: SanitizeConfig):
    if rec.raw is not None:
        if not rec.prompt.boxes:
            return rec, []
        page, audit = sanitize_page(parse_page(rec.raw, rec.prompt, rec.dims), rec.dims, config)
    else:
        page, audit = sanitize_blocks(rec.blocks, rec.dims, config)
    return PageRecord(rec.doc_id, rec.page_index, rec.width, rec.height, blocks=list(page.blocks)), audit


def cmd_sanitize(args) -> int:
    config = _sanitize_config(args)
    errors: list = []
    records = _read_all(args.input, errors)
    audit_path = Path(args.audit) if args.audit else Path(str(args.output) + ".audit.jsonl")
    counts: Counter = Counter()
    out = []
    with open(audit_path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            cleaned, audit = sanitize_record(rec, config)
            out.append(cleaned)
            for entry in audit:
                counts[entry.reason.value] += 1
                line = {"doc_id": rec.doc_id, "page_index": rec.page_index, **entry.to_dict()}
                fh.write(json.dumps(line, ensure_ascii=False) + "\n")
    write_records(args.output, out)
    print(json.dumps({"records": len(out), "line_errors": len(errors), "audit": dict(sorted(counts.items()))}))
    return EXIT_DATA if errors else EXIT_OK


def _threads(args) -> int:
    if args.threads:
        return args.threads
    try:
        return default_threads()
    except ValueError as exc:
        raise UsageError(f"DOCLAIR_THREADS: {exc}") from None


def cmd_eval_text(args) -> int:
    errors: list = []
    pred = _read_all(args.pred, errors)
    gt = _read_all(args.gt, errors)
    try:
        report = evaluate_text(pred, gt, micro=args.micro, keep_case=args.keep_case, threads=_threads(args))
    except NoOverlap as exc:
        _log(str(exc))
        return EXIT_DATA
    write_report(report, args.out)
    print(json.dumps(report.text["corpus"]))
    return EXIT_OK


def _thresholds(value: str) -> List[float]:
    try:
        out = [float(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"bad threshold list {value!r}") from None
    if not out or any(not 0 < t < 1 for t in out):
        raise UsageError("thresholds must lie in (0, 1)")
    return out


def cmd_eval_layout(args) -> int:
    thresholds = _thresholds(args.thresholds)
    if args.recall_bins not in (101, 1001):
        raise UsageError("--recall-bins must be 101 or 1001")
    pred = _read_all(args.pred)
    gt = _read_all(args.gt)
    try:
        report = evaluate_layout(
            pred,
            gt,
            thresholds=thresholds,
            ap=args.ap,
            recall_bins_count=args.recall_bins,
            max_dets=args.max_dets,
            threads=_threads(args),
        )
    except MissingScore as exc:
        _log(f"MissingScore: {exc}")
        return EXIT_DATA
    write_report(report, args.out)
    avg = report.layout["averaged"]
    print(json.dumps({"mP": avg["mean_precision"], "mR": avg["mean_recall"], "mF1": avg["mean_f1"]}))
    return EXIT_OK


def _join_config(args) -> JoinConfig:
    headings = DEFAULT_SKIP_HEADINGS
    if args.skip_headings_file:
        lines = Path(args.skip_headings_file).read_text(encoding="utf-8").splitlines()
        headings = frozenset(line.strip() for line in lines if line.strip())
    drop = frozenset() if args.keep_headers else JoinConfig().drop_classes
    return JoinConfig(skip_headings=headings, drop_classes=drop)


def _safe_name(doc_id: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in doc_id) or "_"


def cmd_join(args) -> int:
    config = _join_config(args)
    sconf = SanitizeConfig()
    docs = defaultdict(list)
    for rec in _read_all(args.input):
        docs[rec.doc_id].append(rec)
    out_text = Path(args.out_text)
    out_text.mkdir(parents=True, exist_ok=True)
    listing = []
    for doc_id in sorted(docs):
        recs = sorted(docs[doc_id], key=lambda r: r.page_index)
        indices = [r.page_index for r in recs]
        if indices != list(range(indices[0], indices[0] + len(indices))):
            _log(f"warning: {doc_id}: page_index gap in {indices}")
        pages = []
        for rec in recs:
            cleaned, _ = sanitize_record(rec, sconf)
            pages.append(canonicalize(Page(cleaned.dims, tuple(cleaned.resolved_blocks()))))
        doc = join_document(pages, config)
        (out_text / f"{_safe_name(doc_id)}.txt").write_text(doc.to_text(), encoding="utf-8", newline="\n")
        listing.append({"doc_id": doc_id, "pages": indices, "items": [it.to_dict() for it in doc.items]})
        print(f"{doc_id}\t{doc.token_count()}")
    if args.out_blocks:
        with open(args.out_blocks, "w", encoding="utf-8", newline="\n") as fh:
            for entry in listing:
                fh.write(json.dumps(entry, ensure_ascii=False) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="doclair", description="Post-processing and evaluation tools for structured document OCR output.")
    parser.add_argument("--version", action="version", version=f"doclair {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("parse", help="parse raw model output records into block records")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--prompt", help=f"override the records' prompt tag, e.g. {MIP.name}")
    p.add_argument("--width", type=int, help="override page width")
    p.add_argument("--height", type=int, help="override page height")
    p.add_argument("--strict", action="store_true", help="exit 2 if any record failed to parse")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("sanitize", help="drop invalid boxes and trailing repetition loops")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--audit", help="audit JSONL path (default: OUTPUT.audit.jsonl)")
    p.add_argument("--min-unit", type=int, default=SanitizeConfig.repetition_min_unit_chars)
    p.add_argument("--min-repeats", type=int, default=SanitizeConfig.repetition_min_repeats)
    p.add_argument("--no-repetition-filter", action="store_true")
    p.set_defaults(func=cmd_sanitize)

    p = sub.add_parser("eval-text", help="text accuracy metrics per page and for the corpus")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--micro", action="store_true", help="score the concatenated corpus instead of averaging pages")
    p.add_argument("--keep-case", action="store_true")
    p.add_argument("--out", required=True, help="report directory")
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_eval_text)

    p = sub.add_parser("eval-layout", help="cross-class confusion matrices, mP/mR and optional AP")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--thresholds", default=",".join(f"{t:.2f}" for t in DEFAULT_THRESHOLDS))
    p.add_argument("--ap", action="store_true", help="also compute per-class COCO-style AP (needs scores)")
    p.add_argument("--recall-bins", type=int, default=101)
    p.add_argument("--max-dets", type=int, default=100)
    p.add_argument("--out", required=True, help="report directory")
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_eval_layout)

    p = sub.add_parser("join", help="join pages into clean per-document text")
    p.add_argument("--input", required=True)
    p.add_argument("--out-text", required=True, help="directory for DOC_ID.txt files")
    p.add_argument("--out-blocks", help="JSONL listing of the joined items")
    p.add_argument("--skip-headings-file", help="one heading per line, replaces the default list")
    p.add_argument("--keep-headers", action="store_true", help="keep page headers and footers")
    p.set_defaults(func=cmd_join)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "threads", None) is not None and args.threads < 1:
        parser.error("--threads must be positive")
    try:
        return args.func(args)
    except UsageError as exc:
        _log(f"doclair {args.command}: error: {exc}")
        return EXIT_USAGE
    except FileNotFoundError as exc:
        _log(f"doclair {args.command}: error: {exc}")
        return EXIT_USAGE
    except (RecordError, ValueError) as exc:
        _log(f"doclair {args.command}: {type(exc).__name__}: {exc}")
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
