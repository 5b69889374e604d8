"""Corpus ingestion, manifests, reproducible sampling, and text access.

PDF text extraction is delegated: the pipeline consumes pre-extracted
``.txt`` sidecars next to each PDF (same basename). An optional external
command can be configured to produce missing sidecars at ingest time.
Manifests are immutable values with documents in canonical (doc_id-sorted)
order; all operations here are pure given the filesystem snapshot.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
import re
import shlex
import subprocess
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .verify import normalize

logger = logging.getLogger(__name__)

MANIFEST_FORMAT = "paperlens-manifest/1"


class CorpusError(Exception):
    """Raised for unreadable inputs and violated sampling preconditions."""


@dataclass(frozen=True)
class DocumentRef:
    """Identity, location, and metadata of one corpus paper."""

    doc_id: str
    path: str
    text_path: str
    title: str = ""
    authors: tuple[str, ...] = ()
    category_tag: str | None = None
    char_count: int = 0


@dataclass(frozen=True)
class CorpusManifest:
    """An ordered, duplicate-free collection of document references."""

    documents: tuple[DocumentRef, ...]
    sample_seed: int | None = None
    parent_size: int = 0

    def __post_init__(self) -> None:
        ids = [ref.doc_id for ref in self.documents]
        if ids != sorted(ids):
            raise CorpusError("manifest documents must be sorted by doc_id")
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise CorpusError(f"duplicate doc_ids in manifest: {dupes}")

    @classmethod
    def build(
        cls,
        documents: list[DocumentRef] | tuple[DocumentRef, ...],
        sample_seed: int | None = None,
        parent_size: int | None = None,
    ) -> "CorpusManifest":
        """Construct a manifest, sorting documents into canonical order."""
        docs = tuple(sorted(documents, key=lambda r: r.doc_id))
        size = len(docs) if parent_size is None else parent_size
        return cls(documents=docs, sample_seed=sample_seed, parent_size=size)

    def __len__(self) -> int:
        return len(self.documents)


@dataclass(frozen=True)
class SkipReport:
    """One document that could not be ingested, and why."""

    doc_id: str
    path: str
    reason: str


@dataclass(frozen=True)
class IngestResult:
    """Manifest plus the documents that had to be skipped."""

    manifest: CorpusManifest
    skipped: tuple[SkipReport, ...] = ()


def _load_metadata(path: str | Path) -> dict[str, dict]:
    """Load a doc_id-keyed metadata file (one JSON object per line)."""
    entries: dict[str, dict] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                entry = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: malformed metadata line: {exc}") from exc
            if not isinstance(entry, dict) or "doc_id" not in entry:
                raise CorpusError(f"{path}:{lineno}: metadata entry missing doc_id")
            entries[str(entry["doc_id"])] = entry
    return entries


def _run_extractor(extract_cmd: str, pdf: Path, txt: Path) -> bool:
    """Run the configured extraction command for one document."""
    cmd = [part.format(pdf=str(pdf), txt=str(txt)) for part in shlex.split(extract_cmd)]
    try:
        proc = subprocess.run(cmd, capture_output=True, timeout=300)
    except (OSError, subprocess.TimeoutExpired) as exc:
        logger.warning("extractor failed for %s: %s", pdf.name, exc)
        return False
    if proc.returncode != 0:
        logger.warning("extractor exited %d for %s", proc.returncode, pdf.name)
        return False
    return txt.exists()


def ingest(
    source_dir: str | Path,
    metadata_file: str | Path | None = None,
    extract_cmd: str | None = None,
    max_workers: int | None = None,
) -> IngestResult:
    """Build a manifest from a directory of PDFs with extracted-text sidecars.

    Each ``x.pdf`` needs a readable ``x.txt`` sidecar, a ``text_path`` entry
    in the metadata file, or (when ``extract_cmd`` is set) a successful run
    of the external extractor. Documents without resolvable text appear in
    the skip report; they are never silently dropped. The metadata file may
    also supply title, authors, and category_tag per doc_id.
    """
    src = Path(source_dir)
    if not src.is_dir():
        raise CorpusError(f"source directory not readable: {src}")

    metadata = _load_metadata(metadata_file) if metadata_file else {}

    pdfs = sorted(
        (p for p in src.iterdir() if p.is_file() and p.suffix.lower() == ".pdf"),
        key=lambda p: p.stem,
    )

    pending: list[tuple[Path, Path, dict]] = []
    skipped: list[SkipReport] = []
    for pdf in pdfs:
        entry = metadata.get(pdf.stem, {})
        sidecar = pdf.with_suffix(".txt")
        text_path: Path | None = None
        if sidecar.exists():
            text_path = sidecar
        elif entry.get("text_path") and Path(entry["text_path"]).exists():
            text_path = Path(entry["text_path"])
        elif extract_cmd and _run_extractor(extract_cmd, pdf, sidecar):
            text_path = sidecar
        if text_path is None:
            skipped.append(SkipReport(pdf.stem, str(pdf), "no extracted text found"))
            continue
        pending.append((pdf, text_path, entry))

    def make_ref(item: tuple[Path, Path, dict]) -> DocumentRef | SkipReport:
        pdf, text_path, entry = item
        try:
            raw = text_path.read_text(encoding="utf-8", errors="replace")
        except OSError as exc:
            return SkipReport(pdf.stem, str(pdf), f"unreadable text file: {exc}")
        tag = entry.get("category_tag") or _embedded_pdf_tag(pdf) or _filename_tag(pdf.stem)
        return DocumentRef(
            doc_id=pdf.stem,
            path=str(pdf),
            text_path=str(text_path),
            title=entry.get("title", ""),
            authors=tuple(entry.get("authors", ())),
            category_tag=tag,
            char_count=len(normalize(raw)),
        )

    refs: list[DocumentRef] = []
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        for result in pool.map(make_ref, pending):
            if isinstance(result, SkipReport):
                skipped.append(result)
            else:
                refs.append(result)

    for skip in skipped:
        logger.warning("skipped %s: %s", skip.doc_id, skip.reason)

    return IngestResult(manifest=CorpusManifest.build(refs), skipped=tuple(skipped))


def sample(manifest: CorpusManifest, n: int, seed: int) -> CorpusManifest:
    """Draw n documents without replacement, deterministically for a seed.

    Runs a seeded Fisher-Yates prefix shuffle over the canonical order, so
    the same (manifest, n, seed) always yields the identical sample. The
    result records the seed and the size of the population sampled from.
    """
    if n <= 0:
        raise CorpusError(f"sample size must be positive, got {n}")
    docs = list(manifest.documents)
    if n > len(docs):
        raise CorpusError(f"sample size {n} exceeds corpus size {len(docs)}")

    rng = random.Random(seed)
    for i in range(n):
        j = rng.randrange(i, len(docs))
        docs[i], docs[j] = docs[j], docs[i]

    return CorpusManifest.build(docs[:n], sample_seed=seed, parent_size=len(manifest.documents))


def load_text(ref: DocumentRef) -> str:
    """Load a document's extracted text with matching normalization applied.

    Uses the same normalization rules as quote verification so that quotes
    checked against this text see identical bytes.
    """
    path = Path(ref.text_path)
    try:
        raw = path.read_text(encoding="utf-8", errors="replace")
    except OSError as exc:
        raise CorpusError(f"missing or unreadable text for document {ref.doc_id!r}: {exc}") from exc
    return normalize(raw)


# Category tags as they appear in metadata, PDF info dictionaries, and
# arXiv-style filenames.
_TAG_RE = re.compile(r"\b((?:math|cs|stat|nlin|econ|eess|q-bio|q-fin|physics)\.[A-Za-z]{2})\b")


def _canonical_tag(tag: str) -> str:
    archive, _, subject = tag.partition(".")
    return f"{archive.lower()}.{subject.upper()}"


def _embedded_pdf_tag(pdf_path: str | Path) -> str | None:
    """Scan a PDF's raw bytes for a category tag in its info dictionary.

    Looks at /Subject and /Keywords values plus arXiv stamp text. Covers
    the common uncompressed-info case only; compressed metadata streams
    resolve to None and fall through to the filename heuristic.
    """
    path = Path(pdf_path)
    try:
        data = path.read_bytes()
    except OSError:
        return None
    # Info dictionaries sit near the head or the trailer; avoid scanning
    # the whole body of large files.
    if len(data) > 2_000_000:
        data = data[:1_000_000] + data[-1_000_000:]
    text = data.decode("latin-1", errors="replace")
    for m in re.finditer(r"/(?:Subject|Keywords)\s*\(([^)]{0,400})\)", text):
        tag = _TAG_RE.search(m.group(1))
        if tag:
            return _canonical_tag(tag.group(1))
    stamp = re.search(r"arXiv:[^\s\]]{1,40}\s*\[([A-Za-z\-]+\.[A-Za-z]{2})\]", text)
    if stamp:
        return _canonical_tag(stamp.group(1))
    return None


def _filename_tag(stem: str) -> str | None:
    """Pull a category tag out of a filename stem like ``math0003117-math.CO``."""
    matches = _TAG_RE.findall(stem)
    if matches:
        return _canonical_tag(matches[-1])
    return None


def resolve_category(ref: DocumentRef, metadata_file: str | Path | None = None) -> str | None:
    """Resolve a document's category tag.

    Precedence: metadata file entry, then embedded PDF metadata, then the
    filename heuristic. Returns None (the unknown sentinel) when no source
    resolves; unknown is a value, not an error.
    """
    if metadata_file:
        entry = _load_metadata(metadata_file).get(ref.doc_id, {})
        if entry.get("category_tag"):
            return str(entry["category_tag"])
    tag = _embedded_pdf_tag(ref.path)
    if tag:
        return tag
    return _filename_tag(ref.doc_id)


# ---------------------------------------------------------------------------
# Manifest serialization
# ---------------------------------------------------------------------------


def manifest_to_jsonl(manifest: CorpusManifest) -> str:
    """Serialize a manifest to its canonical line-delimited form."""
    lines = [
        json.dumps(
            {
                "format": MANIFEST_FORMAT,
                "sample_seed": manifest.sample_seed,
                "parent_size": manifest.parent_size,
            },
            sort_keys=True,
        )
    ]
    for ref in manifest.documents:
        lines.append(
            json.dumps(
                {
                    "doc_id": ref.doc_id,
                    "path": ref.path,
                    "text_path": ref.text_path,
                    "title": ref.title,
                    "authors": list(ref.authors),
                    "category_tag": ref.category_tag,
                    "char_count": ref.char_count,
                },
                ensure_ascii=False,
                sort_keys=True,
            )
        )
    return "\n".join(lines) + "\n"


def save_manifest(manifest: CorpusManifest, path: str | Path) -> None:
    """Write a manifest atomically (temp file, then rename)."""
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(manifest_to_jsonl(manifest), encoding="utf-8")
    tmp.replace(path)


def load_manifest(path: str | Path) -> CorpusManifest:
    """Load a manifest written by save_manifest."""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise CorpusError(f"cannot read manifest {path}: {exc}") from exc
    if not lines:
        raise CorpusError(f"{path}: empty manifest file")

    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise CorpusError(f"{path}:1: malformed manifest header: {exc}") from exc
    if header.get("format") != MANIFEST_FORMAT:
        raise CorpusError(f"{path}: unrecognized manifest format {header.get('format')!r}")

    refs = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
            refs.append(
                DocumentRef(
                    doc_id=raw["doc_id"],
                    path=raw["path"],
                    text_path=raw["text_path"],
                    title=raw.get("title", ""),
                    authors=tuple(raw.get("authors", ())),
                    category_tag=raw.get("category_tag"),
                    char_count=int(raw.get("char_count", 0)),
                )
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise CorpusError(f"{path}:{lineno}: malformed manifest line: {exc}") from exc

    return CorpusManifest(
        documents=tuple(refs),
        sample_seed=header.get("sample_seed"),
        parent_size=int(header.get("parent_size", len(refs))),
    )


def manifest_digest(manifest: CorpusManifest) -> str:
    """Stable digest of a manifest's canonical serialization."""
    return hashlib.sha256(manifest_to_jsonl(manifest).encode("utf-8")).hexdigest()
