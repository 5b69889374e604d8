"""Plan document batches and execute annotation, filter, and query runs.

Runs are resumable: every completed batch is recorded in a checkpoint file
written atomically (temp-then-rename), so a crash between jobs never leaves
a checkpoint referencing a missing output file. Failed batches are recorded
and do not halt the remaining jobs; long runs must survive transient faults.
"""

from __future__ import annotations

import enum
import json
import logging
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import provider
from .corpus import CorpusManifest, DocumentRef, load_text, manifest_digest
from .prompts import PromptBundle, build_filter_prompt, build_query_prompt
from .records import parse_batch_output

logger = logging.getLogger(__name__)

CHECKPOINT_FILE = "checkpoint.json"
FILTER_STATE_FILE = "filter_state.json"
QUERY_LOG_SUFFIX = ".query_log.jsonl"

# Models are told to cite filenames, so each document in a batch payload is
# introduced by a header naming it.
_DOC_HEADER = "=== FILE: {doc_id} ({title}) ==="


class RunnerError(Exception):
    """Raised for planning and execution preconditions."""


class CheckpointMismatch(RunnerError):
    """The checkpoint on disk belongs to a different manifest."""


class JobStatus(enum.Enum):
    PENDING = "pending"
    DONE = "done"
    FAILED = "failed"


@dataclass
class BatchJob:
    """One resumable unit of annotation work."""

    index: int
    doc_ids: tuple[str, ...]
    output_path: str
    status: JobStatus = JobStatus.PENDING
    error: str = ""


@dataclass(frozen=True)
class RunnerConfig:
    """Batching and output settings for a run."""

    batch_size: int = 25
    output_dir: str = "runs"
    resume: bool = False
    skip_oversize: bool = False

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class Checkpoint:
    """Which planned batches have completed, bound to a manifest digest."""

    manifest_hash: str
    completed: set[int] = field(default_factory=set)

    def save(self, path: str | Path) -> None:
        path = Path(path)
        body = json.dumps(
            {"manifest_hash": self.manifest_hash, "completed": sorted(self.completed)},
            sort_keys=True,
        )
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_text(body + "\n", encoding="utf-8")
        tmp.replace(path)

    @classmethod
    def load(cls, path: str | Path) -> "Checkpoint":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(
            manifest_hash=raw.get("manifest_hash", ""),
            completed=set(int(i) for i in raw.get("completed", [])),
        )


@dataclass
class RunSummary:
    """Outcome of one annotation run."""

    total: int
    completed: int
    failed: int
    skipped: int
    provider_calls: int
    failures: list[tuple[int, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.failed == 0


def _doc_tokens(ref: DocumentRef) -> int:
    header = _DOC_HEADER.format(doc_id=ref.doc_id, title=ref.title)
    return provider.estimate_tokens("x" * ref.char_count) + provider.estimate_tokens(header)


def plan_batches(
    manifest: CorpusManifest,
    cfg: RunnerConfig,
    provider_cfg: provider.ProviderConfig | None = None,
    prompt_tokens: int = 0,
) -> list[BatchJob]:
    """Partition the manifest into consecutive batches of at most batch_size.

    Batches are disjoint and cover the manifest in canonical order. When a
    provider config is given, any batch whose token estimate would overflow
    the context window is split further, never dropped; a single document
    that alone exceeds the window is an error unless ``skip_oversize`` is
    set, in which case it is excluded with a warning.
    """
    if len(manifest) == 0:
        raise RunnerError("cannot plan batches over an empty manifest")

    budget: int | None = None
    if provider_cfg is not None:
        budget = provider_cfg.context_window_tokens - provider_cfg.max_output_tokens - prompt_tokens

    out_dir = Path(cfg.output_dir)
    jobs: list[BatchJob] = []
    batch: list[str] = []
    batch_tokens = 0

    def close_batch() -> None:
        nonlocal batch, batch_tokens
        if batch:
            index = len(jobs)
            jobs.append(
                BatchJob(
                    index=index,
                    doc_ids=tuple(batch),
                    output_path=str(out_dir / f"batch_{index}_output.txt"),
                )
            )
            batch = []
            batch_tokens = 0

    for ref in manifest.documents:
        tokens = _doc_tokens(ref) if budget is not None else 0
        if budget is not None and tokens > budget:
            if cfg.skip_oversize:
                logger.warning(
                    "document %s alone exceeds the context window (~%d tokens); skipped",
                    ref.doc_id,
                    tokens,
                )
                continue
            raise RunnerError(
                f"document {ref.doc_id!r} alone exceeds the context window "
                f"(~{tokens} tokens against a budget of {budget}); "
                "re-run with --skip-oversize to exclude it"
            )
        if len(batch) >= cfg.batch_size or (budget is not None and batch and batch_tokens + tokens > budget):
            close_batch()
        batch.append(ref.doc_id)
        batch_tokens += tokens
    close_batch()
    return jobs


def _batch_payload(job: BatchJob, refs: dict[str, DocumentRef]) -> str:
    parts = []
    for doc_id in job.doc_ids:
        ref = refs[doc_id]
        parts.append(_DOC_HEADER.format(doc_id=doc_id, title=ref.title))
        parts.append(load_text(ref))
    return "\n\n".join(parts)


def run_annotation(
    jobs: list[BatchJob],
    bundle: PromptBundle,
    manifest: CorpusManifest,
    client: provider.ChatClient,
    cfg: RunnerConfig,
) -> RunSummary:
    """Execute pending annotation jobs, checkpointing after each.

    With ``resume`` set, jobs already recorded in the checkpoint are skipped
    without provider calls; the checkpoint must belong to the same manifest.
    Failed jobs are recorded and the run continues. Jobs execute concurrently
    up to the provider's in-flight limit; checkpoint updates are serialized.
    """
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ck_path = out_dir / CHECKPOINT_FILE
    digest = manifest_digest(manifest)

    if ck_path.exists():
        checkpoint = Checkpoint.load(ck_path)
        if cfg.resume:
            if checkpoint.manifest_hash != digest:
                raise CheckpointMismatch(
                    f"checkpoint in {out_dir} belongs to a different manifest; "
                    "re-plan or clear the output directory"
                )
        else:
            checkpoint = Checkpoint(manifest_hash=digest)
    else:
        checkpoint = Checkpoint(manifest_hash=digest)
    checkpoint.save(ck_path)

    planned = {job.index for job in jobs}
    if not checkpoint.completed <= planned:
        stale = sorted(checkpoint.completed - planned)
        raise CheckpointMismatch(f"checkpoint references unplanned batches: {stale}")

    refs = {ref.doc_id: ref for ref in manifest.documents}
    for job in jobs:
        missing = [d for d in job.doc_ids if d not in refs]
        if missing:
            raise RunnerError(f"batch {job.index} references unknown documents: {missing}")

    calls_before = client.calls
    ck_lock = threading.Lock()
    skipped = 0

    def execute(job: BatchJob) -> BatchJob:
        payload = _batch_payload(job, refs)
        response = client.complete(bundle.with_payload_refs(job.doc_ids), payload)
        out_path = Path(job.output_path)
        tmp = out_path.with_suffix(out_path.suffix + ".tmp")
        tmp.write_text(response.text, encoding="utf-8")
        tmp.replace(out_path)
        with ck_lock:
            checkpoint.completed.add(job.index)
            checkpoint.save(ck_path)
        return job

    runnable = []
    for job in jobs:
        if cfg.resume and job.index in checkpoint.completed:
            job.status = JobStatus.DONE
            skipped += 1
        else:
            runnable.append(job)

    def guarded(job: BatchJob) -> BatchJob:
        try:
            execute(job)
            job.status = JobStatus.DONE
        except (provider.ProviderError, RunnerError, OSError, KeyError) as exc:
            job.status = JobStatus.FAILED
            job.error = str(exc)
            logger.error("batch %d failed: %s", job.index, exc)
        return job

    workers = max(1, min(client.config.max_inflight, len(runnable) or 1))
    if runnable:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(guarded, runnable))

    failures = [(job.index, job.error) for job in jobs if job.status is JobStatus.FAILED]
    return RunSummary(
        total=len(jobs),
        completed=sum(1 for j in jobs if j.status is JobStatus.DONE),
        failed=len(failures),
        skipped=skipped,
        provider_calls=client.calls - calls_before,
        failures=failures,
    )


# ---------------------------------------------------------------------------
# Filter pass
# ---------------------------------------------------------------------------


@dataclass
class RetentionStats:
    """How many records survived the filter, per batch and overall."""

    per_batch: dict[int, tuple[int, int]] = field(default_factory=dict)  # index -> (kept, total)
    skipped: list[str] = field(default_factory=list)
    failures: list[tuple[int, str]] = field(default_factory=list)
    pass_number: int = 1

    @property
    def records_in(self) -> int:
        return sum(total for _, total in self.per_batch.values())

    @property
    def records_kept(self) -> int:
        return sum(kept for kept, _ in self.per_batch.values())

    @property
    def overall_retention(self) -> float:
        total = self.records_in
        return self.records_kept / total if total else 0.0

    @property
    def quota_warning(self) -> bool:
        """True when less than half of the input examples were excluded."""
        return self.records_in > 0 and self.overall_retention > 0.5


_BATCH_FILE_RE = re.compile(r"batch_(\d+)_(output|filtered)\.txt$")


def _batch_files(directory: Path, suffix: str) -> list[tuple[int, Path]]:
    found = []
    for path in directory.glob(f"batch_*_{suffix}.txt"):
        m = _BATCH_FILE_RE.search(path.name)
        if m:
            found.append((int(m.group(1)), path))
    return sorted(found)


def run_filter(
    output_dir: str | Path,
    client: provider.ChatClient,
    templates_dir: str | Path | None = None,
) -> RetentionStats:
    """Apply the strict filter prompt to each batch output file.

    Writes ``batch_{n}_filtered.txt`` next to each ``batch_{n}_output.txt``
    and reports retention (kept / input records, counted by the parser). A
    warning is flagged when the overall exclusion rate falls short of the
    50% quota. Every invocation increments the recorded pass count; from the
    second pass on, the previously filtered files are the input.
    """
    directory = Path(output_dir)
    state_path = directory / FILTER_STATE_FILE
    passes = 0
    if state_path.exists():
        passes = int(json.loads(state_path.read_text(encoding="utf-8")).get("passes", 0))

    source_suffix = "filtered" if passes >= 1 else "output"
    inputs = _batch_files(directory, source_suffix)
    if not inputs and source_suffix == "filtered":
        inputs = _batch_files(directory, "output")
    if not inputs:
        raise RunnerError(f"no batch output files found in {directory}")

    stats = RetentionStats(pass_number=passes + 1)
    for index, path in inputs:
        text = path.read_text(encoding="utf-8")
        if not text.strip():
            logger.info("skipping empty batch file %s", path.name)
            stats.skipped.append(path.name)
            continue
        bundle = build_filter_prompt(text, templates_dir=templates_dir)
        bundle = bundle.with_payload_refs((path.name,))
        try:
            response = client.complete(bundle)
        except provider.ProviderError as exc:
            stats.failures.append((index, str(exc)))
            logger.error("filter pass failed for %s: %s", path.name, exc)
            continue

        out_path = directory / f"batch_{index}_filtered.txt"
        tmp = out_path.with_suffix(out_path.suffix + ".tmp")
        tmp.write_text(response.text, encoding="utf-8")
        tmp.replace(out_path)

        total = len(parse_batch_output(text, index)[0])
        kept = len(parse_batch_output(response.text, index)[0])
        stats.per_batch[index] = (kept, total)

    tmp = state_path.with_suffix(state_path.suffix + ".tmp")
    tmp.write_text(json.dumps({"passes": passes + 1}) + "\n", encoding="utf-8")
    tmp.replace(state_path)

    if stats.quota_warning:
        logger.warning(
            "filter retained %.0f%% of examples; the exclusion quota "
            "(at least 50%%) was not met",
            stats.overall_retention * 100,
        )
    return stats


# ---------------------------------------------------------------------------
# Dataset queries
# ---------------------------------------------------------------------------


def run_query(
    dataset_path: str | Path,
    question: str,
    client: provider.ChatClient,
    log_path: str | Path | None = None,
    templates_dir: str | Path | None = None,
) -> str:
    """Ask a follow-up question over a dataset file; returns the answer.

    The dataset must fit the provider window alongside the framing prompt;
    otherwise a ContextOverflow explains how much is needed and suggests
    sharding. Every query appends a transcript entry to the query log.
    """
    dataset_path = Path(dataset_path)
    bundle = build_query_prompt(dataset_path, question, templates_dir=templates_dir)
    dataset_text = dataset_path.read_text(encoding="utf-8")

    try:
        response = client.complete(bundle, dataset_text)
    except provider.ContextOverflow as exc:
        raise provider.ContextOverflow(
            exc.required,
            exc.available,
            hint="split the dataset into shards and query each shard separately",
        ) from exc

    log = Path(log_path) if log_path else dataset_path.with_name(dataset_path.name + QUERY_LOG_SUFFIX)
    entry = {
        "ts": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "question": question,
        "answer": response.text,
    }
    with open(log, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(entry, ensure_ascii=False) + "\n")
    return response.text
