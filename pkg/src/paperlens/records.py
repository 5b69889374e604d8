"""Parse model batch outputs into structured example records and persist them.

Model outputs arrive as labeled bullet items (Title / Example-or-Finding /
Quote / Context, with filename and page number where present), but the
formatting varies between runs: bold markup, reordered fields, label
synonyms, missing lines. The parser is total: unrecognizable stretches
produce warnings, never exceptions, and no field value is ever invented;
everything comes from the input text after markup stripping.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any

if TYPE_CHECKING:
    from .verify import VerificationResult

logger = logging.getLogger(__name__)

DATASET_FORMAT = "paperlens-records/1"

QUALITY_LABELS = ("high", "borderline", "low")


class DatasetError(Exception):
    """Raised for malformed dataset files."""


@dataclass
class ExampleRecord:
    """One parsed annotation: where it came from and what the model reported.

    ``quality_label`` is only ever set by explicit human input; the parser
    and the pipeline never assign one.
    """

    source_doc_id: str = ""
    title: str = ""
    authors: str | None = None
    finding: str = ""
    quote: str | None = None
    commentary: str = ""
    page: int | None = None
    batch_index: int = 0
    verification: "VerificationResult | None" = None
    quality_label: str | None = None


@dataclass
class Dataset:
    """An ordered collection of example records plus provenance."""

    records: list[ExampleRecord] = field(default_factory=list)
    source_manifest_hash: str = ""
    filter_pass_count: int = 0


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

# Label synonyms observed across runs: Example == Finding, Context == Commentary.
_LABEL_FIELDS = {
    "title": "title",
    "example": "finding",
    "finding": "finding",
    "quote": "quote",
    "context": "commentary",
    "commentary": "commentary",
    "file": "file",
    "filename": "file",
    "source": "file",
    "author": "authors",
    "authors": "authors",
    "page": "page",
}

_LABEL_LINE = re.compile(
    r"^\s*(?:[-*•+]\s+)?(?P<label>[A-Za-z]+)\s*:\s*(?P<value>.*)$"
)
_BULLET_RE = re.compile(r"^\s*(?:[-*•+]\s+)")
_FILE_HEADER = re.compile(r"^\s*(?:=+\s*FILE:\s*)?(?P<name>[\w\-. ]+\.pdf)\s*[:=]*\s*$", re.IGNORECASE)
_BATCH_HEADER = re.compile(r"batch[_\s]*\d+[_\s]*(?:output|filtered)\.txt", re.IGNORECASE)
_NO_EXAMPLES = re.compile(
    r"\bno\s+(?:relevant|such|new)?\s*(?:examples|instances|findings|cases)\b", re.IGNORECASE
)
_PAGE_SUFFIX = re.compile(r"\s*\(\s*(?:pp?|page)\.?\s*(\d+)\s*\)\s*\.?\s*$", re.IGNORECASE)
_QUOTE_PAIRS = {'"': '"', "“": "”", "'": "'", "‘": "’"}

# Content fields: an item must carry at least one of these to become a record.
_CONTENT_FIELDS = ("finding", "quote", "commentary")


def _strip_markup(line: str) -> str:
    """Drop bold/italic markers so labels match regardless of styling."""
    return line.replace("**", "").replace("__", "")


def _strip_outer_quotes(text: str) -> str:
    if len(text) >= 2 and text[0] in _QUOTE_PAIRS and text.endswith(_QUOTE_PAIRS[text[0]]):
        return text[1:-1]
    return text


def _clean_doc_id(value: str) -> str:
    value = value.strip().strip("`'\"()")
    if value.lower().endswith(".pdf"):
        value = value[: -len(".pdf")]
    return value


def _item_to_record(
    item: dict[str, str],
    batch_index: int,
    ordinal: int,
    warnings: list[str],
) -> ExampleRecord | None:
    quote: str | None = None
    page: int | None = None

    raw_quote = item.get("quote", "").strip()
    if raw_quote:
        m = _PAGE_SUFFIX.search(raw_quote)
        if m:
            page = int(m.group(1))
            raw_quote = raw_quote[: m.start()].rstrip()
        quote = _strip_outer_quotes(raw_quote).strip()
        if not quote:
            quote = None

    if "page" in item and page is None:
        digits = re.search(r"\d+", item["page"])
        if digits:
            page = int(digits.group())

    title = item.get("title", "").strip()
    doc_id = _clean_doc_id(item.get("file", ""))
    if not doc_id:
        embedded = re.search(r"([\w\-.]+?)\.pdf\b", title, re.IGNORECASE)
        if embedded:
            doc_id = embedded.group(1)

    authors = item.get("authors", "").strip() or None
    finding = item.get("finding", "").strip()
    commentary = item.get("commentary", "").strip()

    if not (finding or quote or commentary):
        warnings.append(
            f"batch {batch_index} item {ordinal}: no finding, quote, or commentary; dropped"
        )
        return None
    if quote is None:
        warnings.append(f"batch {batch_index} item {ordinal}: no quote line")

    return ExampleRecord(
        source_doc_id=doc_id,
        title=title,
        authors=authors,
        finding=finding,
        quote=quote,
        commentary=commentary,
        page=page,
        batch_index=batch_index,
    )


def parse_batch_output(text: str, batch_index: int = 0) -> tuple[list[ExampleRecord], list[str]]:
    """Parse one batch output into records plus parse warnings.

    Total over all inputs: malformed stretches are reported as warnings and
    skipped. An output stating that no relevant examples were found parses
    to an empty list.
    """
    records: list[ExampleRecord] = []
    warnings: list[str] = []

    current: dict[str, str] = {}
    current_label: str | None = None
    file_context = ""
    stray: list[tuple[int, str]] = []
    ordinal = 0
    blank_since_field = False

    def flush_stray() -> None:
        nonlocal stray
        if stray:
            text_block = " ".join(line for _, line in stray)
            if not _NO_EXAMPLES.search(text_block):
                warnings.append(
                    f"batch {batch_index}: unrecognized text near line {stray[0][0]}: "
                    f"{text_block[:80]!r}"
                )
            stray = []

    def flush_item() -> None:
        nonlocal current, current_label, ordinal
        if current:
            if "file" not in current and file_context:
                current["file"] = file_context
            ordinal += 1
            record = _item_to_record(current, batch_index, ordinal, warnings)
            if record is not None:
                records.append(record)
        current = {}
        current_label = None

    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = _strip_markup(raw_line)
        stripped = line.strip()

        if not stripped:
            current_label = None
            blank_since_field = True
            continue

        if _BATCH_HEADER.search(stripped) and len(stripped) < 120:
            flush_item()
            flush_stray()
            continue

        file_header = _FILE_HEADER.match(stripped)
        if file_header:
            flush_item()
            flush_stray()
            file_context = _clean_doc_id(file_header.group("name"))
            continue

        label_match = _LABEL_LINE.match(line)
        if label_match and label_match.group("label").lower() in _LABEL_FIELDS:
            flush_stray()
            fld = _LABEL_FIELDS[label_match.group("label").lower()]
            value = label_match.group("value").strip()
            # A repeated label always opens a new item; Title or File after a
            # blank line does too. Within a contiguous stretch, fields may
            # arrive in any order and still belong to one item.
            starts_new = (fld in current) or (
                fld in ("title", "file")
                and blank_since_field
                and any(f in current for f in _CONTENT_FIELDS)
            )
            if starts_new:
                flush_item()
            blank_since_field = False
            if fld == "file":
                file_context = _clean_doc_id(value)
                current["file"] = file_context
                current_label = None
            else:
                current[fld] = value
                current_label = fld
            continue

        # Continuation of the current field, or an unrecognizable stretch.
        if current_label is not None and not _BULLET_RE.match(raw_line):
            current[current_label] = current[current_label] + "\n" + stripped
        elif stripped.startswith("#") or set(stripped) <= set("-=*_"):
            continue  # headings and rules carry no content
        else:
            current_label = None
            stray.append((lineno, stripped))

    flush_item()
    flush_stray()
    return records, warnings


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------


def render_record(record: ExampleRecord) -> str:
    """Emit the canonical labeled-bullet form of a record.

    ``parse_batch_output(render_record(r))`` reproduces r's parsed fields;
    empty-string fields are treated as absent and get no line.
    """
    lines: list[str] = []
    if record.source_doc_id:
        lines.append(f"- **File:** {record.source_doc_id}")
    if record.title:
        lines.append(f"- **Title:** {record.title}")
    if record.authors:
        lines.append(f"- **Authors:** {record.authors}")
    if record.finding:
        lines.append(f"- **Finding:** {record.finding}")
    if record.quote is not None:
        line = f'- **Quote:** "{record.quote}"'
        if record.page is not None:
            line += f" (p. {record.page})."
        lines.append(line)
    elif record.page is not None:
        lines.append(f"- **Page:** {record.page}")
    if record.commentary:
        lines.append(f"- **Context:** {record.commentary}")
    return "\n".join(lines)


def export_document(ds: Dataset) -> str:
    """Render a whole dataset as one human-readable document.

    Records are grouped under their source batch file, mirroring the raw
    output layout.
    """
    out: list[str] = []
    last_batch: int | None = None
    for record in ds.records:
        if record.batch_index != last_batch:
            if out:
                out.append("")
            out.append(f"## batch_{record.batch_index}_output.txt")
            out.append("")
            last_batch = record.batch_index
        out.append(render_record(record))
        out.append("")
    return "\n".join(out).rstrip() + "\n" if out else ""


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def _record_to_json(record: ExampleRecord) -> dict[str, Any]:
    verification = None
    if record.verification is not None:
        v = record.verification
        verification = {
            "matched": v.matched,
            "similarity": v.similarity,
            "threshold_used": v.threshold_used,
            "span_start": v.span_start,
            "span_end": v.span_end,
        }
    return {
        "source_doc_id": record.source_doc_id,
        "title": record.title,
        "authors": record.authors,
        "finding": record.finding,
        "quote": record.quote,
        "commentary": record.commentary,
        "page": record.page,
        "batch_index": record.batch_index,
        "verification": verification,
        "quality_label": record.quality_label,
    }


def _record_from_json(raw: dict[str, Any]) -> ExampleRecord:
    from .verify import VerificationResult

    verification = None
    if raw.get("verification") is not None:
        v = raw["verification"]
        verification = VerificationResult(
            matched=bool(v["matched"]),
            similarity=float(v["similarity"]),
            threshold_used=float(v["threshold_used"]),
            span_start=v.get("span_start"),
            span_end=v.get("span_end"),
        )
    label = raw.get("quality_label")
    if label is not None and label not in QUALITY_LABELS:
        raise ValueError(f"invalid quality_label {label!r}")
    return ExampleRecord(
        source_doc_id=raw.get("source_doc_id", ""),
        title=raw.get("title", ""),
        authors=raw.get("authors"),
        finding=raw.get("finding", ""),
        quote=raw.get("quote"),
        commentary=raw.get("commentary", ""),
        page=raw.get("page"),
        batch_index=int(raw.get("batch_index", 0)),
        verification=verification,
        quality_label=label,
    )


def save_dataset(ds: Dataset, path: str | Path) -> None:
    """Write a dataset as line-delimited records (atomic temp-then-rename)."""
    path = Path(path)
    lines = [
        json.dumps(
            {
                "format": DATASET_FORMAT,
                "manifest_hash": ds.source_manifest_hash,
                "filter_pass_count": ds.filter_pass_count,
                "count": len(ds.records),
            },
            sort_keys=True,
        )
    ]
    for record in ds.records:
        lines.append(json.dumps(_record_to_json(record), ensure_ascii=False, sort_keys=True))
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text("\n".join(lines) + "\n", encoding="utf-8")
    tmp.replace(path)


def load_dataset(path: str | Path, expect_manifest_hash: str | None = None) -> Dataset:
    """Load a dataset written by save_dataset.

    Malformed lines raise with their line number. A manifest digest passed
    in ``expect_manifest_hash`` that differs from the stored one logs a
    warning (the corpus changed since the dataset was built) but loads.
    """
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DatasetError(f"cannot read dataset {path}: {exc}") from exc
    if not lines:
        raise DatasetError(f"{path}: empty dataset file")

    try:
        header = json.loads(lines[0])
        if header.get("format") != DATASET_FORMAT:
            raise ValueError(f"unrecognized format {header.get('format')!r}")
    except (json.JSONDecodeError, ValueError) as exc:
        raise DatasetError(f"{path}:1: malformed dataset header: {exc}") from exc

    records = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            records.append(_record_from_json(json.loads(line)))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise DatasetError(f"{path}:{lineno}: malformed record line: {exc}") from exc

    expected = header.get("count")
    if expected is not None and expected != len(records):
        raise DatasetError(
            f"{path}: truncated dataset: header says {expected} records, found {len(records)}"
        )

    stored_hash = header.get("manifest_hash", "")
    if expect_manifest_hash and stored_hash and stored_hash != expect_manifest_hash:
        logger.warning(
            "%s: dataset was built against a different manifest (digest mismatch)", path
        )

    return Dataset(
        records=records,
        source_manifest_hash=stored_hash,
        filter_pass_count=int(header.get("filter_pass_count", 0)),
    )


def dedupe(ds: Dataset) -> Dataset:
    """Drop repeated reports of the same example, keeping the first.

    Two records are duplicates when source_doc_id, quote, finding, and
    commentary all coincide; records differing only in commentary are two
    distinct readings and are both kept. Stable and idempotent.
    """
    seen: set[tuple[str, str | None, str, str]] = set()
    kept: list[ExampleRecord] = []
    for record in ds.records:
        key = (record.source_doc_id, record.quote, record.finding, record.commentary)
        if key in seen:
            continue
        seen.add(key)
        kept.append(record)
    return Dataset(
        records=kept,
        source_manifest_hash=ds.source_manifest_hash,
        filter_pass_count=ds.filter_pass_count,
    )
