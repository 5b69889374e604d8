"""Command-line entry point wiring the pipeline end to end.

Subcommands follow the workflow order: ingest -> sample -> annotate ->
filter -> parse -> verify -> stats -> query. Logs go to stderr; data goes
to files only. Exit codes: 0 success, 1 user error, 2 partial batch
failure. All randomness (sampling) requires an explicit seed.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import analytics, corpus, prompts, provider, records, runner, verify
from .config import ConfigError, GlobalConfig, apply_overrides, load_config

logger = logging.getLogger("paperlens")


class CliError(Exception):
    """A user error that should exit with code 1."""


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad usage by default; user errors are exit 1 here.
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        raise CliError(message)


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("configuration")
    group.add_argument("--config", help="path to a JSON config file")
    group.add_argument("--dialect", choices=["openai", "gemini", "stub"], help="provider dialect")
    group.add_argument("--base-url", dest="base_url", help="provider base URL")
    group.add_argument("--model", dest="model_name", help="model name")
    group.add_argument("--api-key-env", dest="api_key_env", help="env var holding the API key")
    group.add_argument("--context-window", dest="context_window_tokens", type=int,
                       help="provider context window in tokens")
    group.add_argument("--max-output-tokens", dest="max_output_tokens", type=int,
                       help="maximum output tokens per call")
    group.add_argument("--max-retries", dest="max_retries", type=int,
                       help="retry attempts for transient failures")
    group.add_argument("--backoff-base-ms", dest="backoff_base_ms", type=int,
                       help="base backoff delay in milliseconds")
    group.add_argument("--max-inflight", dest="max_inflight", type=int,
                       help="maximum concurrent provider calls")
    group.add_argument("--temperature", dest="temperature", type=float,
                       help="sampling temperature")
    group.add_argument("--timeout-s", dest="timeout_s", type=float,
                       help="per-request transport timeout in seconds")
    group.add_argument("--fixtures-dir", dest="fixtures_dir",
                       help="stub dialect: directory of canned responses")
    group.add_argument("--batch-size", dest="batch_size", type=int,
                       help="documents per annotation batch")
    group.add_argument("--prompts-dir", dest="prompts_dir",
                       help="directory of prompt template sections")


def _config_from_args(args: argparse.Namespace) -> GlobalConfig:
    cfg = load_config(getattr(args, "config", None))
    names = (
        "dialect", "base_url", "model_name", "api_key_env", "context_window_tokens",
        "max_output_tokens", "max_retries", "backoff_base_ms", "max_inflight",
        "temperature", "timeout_s", "fixtures_dir", "batch_size", "prompts_dir",
    )
    overrides = {n: getattr(args, n, None) for n in names}
    return apply_overrides(cfg, **overrides)


def _parse_tiers(spec: str) -> analytics.TierFractions:
    parts = spec.split(",")
    if len(parts) != 3:
        raise CliError(f"--tiers expects three comma-separated fractions, got {spec!r}")
    try:
        high, borderline, low = (float(p) for p in parts)
    except ValueError as exc:
        raise CliError(f"--tiers: {exc}") from exc
    try:
        return analytics.TierFractions(high=high, borderline=borderline, low=low)
    except analytics.AnalyticsError as exc:
        raise CliError(str(exc)) from exc


def build_parser() -> _Parser:
    parser = _Parser(prog="paperlens", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("ingest", parents=[], help="build a manifest from a directory of papers")
    p.add_argument("--source", required=True, help="directory of PDFs with .txt sidecars")
    p.add_argument("--metadata", help="doc_id-keyed metadata file (JSON lines)")
    p.add_argument("--extract-cmd", dest="extract_cmd",
                   help="external command producing missing sidecars; use {pdf} and {txt}")
    p.add_argument("--out", required=True, help="manifest file to write")

    p = sub.add_parser("sample", help="draw a reproducible random sample from a manifest")
    p.add_argument("--manifest", required=True, help="input manifest file")
    p.add_argument("--n", required=True, type=int, help="sample size")
    p.add_argument("--seed", required=True, type=int, help="sampling seed (required; no implicit entropy)")
    p.add_argument("--out", required=True, help="manifest file to write")

    p = sub.add_parser("annotate", help="run the annotation prompt over document batches")
    _add_config_flags(p)
    p.add_argument("--manifest", required=True, help="manifest of documents to annotate")
    p.add_argument("--out", required=True, help="output directory for batch files")
    p.add_argument("--resume", action="store_true", help="skip batches recorded in the checkpoint")
    p.add_argument("--context-asset", dest="context_asset",
                   help="file with the context excerpt appended to the prompt")
    p.add_argument("--context-description", dest="context_description",
                   help="how the prompt should describe the context excerpt")
    p.add_argument("--skip-oversize", dest="skip_oversize", action="store_true",
                   help="skip documents that alone exceed the context window")
    p.add_argument("--dry-run", dest="dry_run", action="store_true",
                   help="print the batch plan and token estimates; no provider calls")
    p.add_argument("--audit", action="store_true",
                   help="log redacted request/response bodies to an audit file")

    p = sub.add_parser("filter", help="apply the strict quality filter to batch outputs")
    _add_config_flags(p)
    p.add_argument("--dir", required=True, help="directory containing batch_*_output.txt")
    p.add_argument("--dry-run", dest="dry_run", action="store_true",
                   help="list input files and token estimates; no provider calls")
    p.add_argument("--audit", action="store_true",
                   help="log redacted request/response bodies to an audit file")

    p = sub.add_parser("parse", help="parse batch outputs into a structured dataset")
    p.add_argument("--dir", required=True, help="directory containing batch files")
    p.add_argument("--out", required=True, help="dataset file to write")
    p.add_argument("--manifest", help="manifest to record a digest of")
    p.add_argument("--filtered", action="store_true",
                   help="parse batch_*_filtered.txt instead of raw outputs")

    p = sub.add_parser("verify", help="check record quotes against their source documents")
    p.add_argument("--dataset", required=True, help="dataset file to verify")
    p.add_argument("--manifest", required=True, help="manifest resolving source documents")
    p.add_argument("--threshold", type=float, default=None,
                   help="similarity threshold (default 0.85)")
    p.add_argument("--out", help="write the annotated dataset here")
    p.add_argument("--report", help="write the verification summary as JSON here")
    _add_config_flags(p)

    p = sub.add_parser("stats", help="compute distributions, richness, and prevalence")
    p.add_argument("--manifest", required=True, help="corpus manifest")
    p.add_argument("--dataset", required=True, help="dataset file")
    p.add_argument("--out", required=True, help="directory for report.txt and richness.csv")
    p.add_argument("--tiers", help="quality tier fractions high,borderline,low (default 0.2,0.6,0.2)")
    p.add_argument("--taxonomy", help="JSON file overriding the tag-to-area table")

    p = sub.add_parser("query", help="ask a follow-up question over a dataset")
    _add_config_flags(p)
    p.add_argument("--dataset", required=True, help="dataset file to attach")
    p.add_argument("--question", required=True, help="the follow-up question")
    p.add_argument("--log", help="transcript file (default: alongside the dataset)")
    p.add_argument("--audit", action="store_true",
                   help="log redacted request/response bodies to an audit file")

    p = sub.add_parser("export", help="render a dataset as a human-readable document")
    p.add_argument("--dataset", required=True, help="dataset file to render")
    p.add_argument("--out", required=True, help="document file to write")

    p = sub.add_parser("prompts", help="inspect assembled prompt templates")
    p.add_argument("action", choices=["show"], help="what to do")
    p.add_argument("--kind", required=True, choices=["annotation", "filter", "query"],
                   help="which prompt to show")
    p.add_argument("--prompts-dir", dest="prompts_dir",
                   help="directory of prompt template sections")

    return parser


# ---------------------------------------------------------------------------
# Subcommand implementations
# ---------------------------------------------------------------------------


def _cmd_ingest(args: argparse.Namespace) -> int:
    result = corpus.ingest(args.source, args.metadata, extract_cmd=args.extract_cmd)
    corpus.save_manifest(result.manifest, args.out)
    for skip in result.skipped:
        print(f"skipped {skip.doc_id}: {skip.reason}", file=sys.stderr)
    print(
        f"ingested {len(result.manifest)} documents "
        f"({len(result.skipped)} skipped) -> {args.out}",
        file=sys.stderr,
    )
    return 0


def _cmd_sample(args: argparse.Namespace) -> int:
    manifest = corpus.load_manifest(args.manifest)
    sampled = corpus.sample(manifest, args.n, args.seed)
    corpus.save_manifest(sampled, args.out)
    print(
        f"sampled {len(sampled)} of {sampled.parent_size} documents "
        f"(seed {args.seed}) -> {args.out}",
        file=sys.stderr,
    )
    return 0


def _make_client(cfg: GlobalConfig, args: argparse.Namespace, out_dir: Path | None) -> provider.ChatClient:
    audit_path = None
    if getattr(args, "audit", False):
        base = out_dir if out_dir is not None else Path(".")
        base.mkdir(parents=True, exist_ok=True)
        audit_path = base / "audit.jsonl"
    return provider.make_client(cfg.provider, audit_path=audit_path)


def _cmd_annotate(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    manifest = corpus.load_manifest(args.manifest)
    run_cfg = runner.RunnerConfig(
        batch_size=cfg.runner.batch_size,
        output_dir=args.out,
        resume=args.resume,
        skip_oversize=args.skip_oversize,
    )

    asset = None
    if args.context_asset:
        asset = prompts.ContextAsset.from_file(args.context_asset, args.context_description)
    bundle = prompts.build_annotation_prompt(asset=asset, templates_dir=cfg.prompts_dir)

    jobs = runner.plan_batches(manifest, run_cfg, cfg.provider, bundle.estimated_tokens)

    if args.dry_run:
        print(f"plan: {len(jobs)} batches over {len(manifest)} documents")
        print(f"prompt estimate: {bundle.estimated_tokens} tokens")
        refs = {r.doc_id: r for r in manifest.documents}
        for job in jobs:
            doc_tokens = sum(provider.estimate_tokens("x" * refs[d].char_count) for d in job.doc_ids)
            print(
                f"  batch {job.index}: {len(job.doc_ids)} docs, ~{doc_tokens} doc tokens "
                f"-> {job.output_path}"
            )
        return 0

    client = _make_client(cfg, args, Path(args.out))
    summary = runner.run_annotation(jobs, bundle, manifest, client, run_cfg)
    print(
        f"annotation run: {summary.completed}/{summary.total} batches done, "
        f"{summary.skipped} resumed, {summary.failed} failed, "
        f"{summary.provider_calls} provider calls",
        file=sys.stderr,
    )
    for index, error in summary.failures:
        print(f"  batch {index} failed: {error}", file=sys.stderr)
    return 0 if summary.ok else 2


def _cmd_filter(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    directory = Path(args.dir)

    if args.dry_run:
        files = sorted(directory.glob("batch_*_output.txt"))
        if not files:
            raise CliError(f"no batch output files found in {directory}")
        print(f"plan: filter {len(files)} batch files")
        for path in files:
            text = path.read_text(encoding="utf-8")
            print(f"  {path.name}: ~{provider.estimate_tokens(text)} payload tokens")
        return 0

    client = _make_client(cfg, args, directory)
    stats = runner.run_filter(directory, client, templates_dir=cfg.prompts_dir)
    print(
        f"filter pass {stats.pass_number}: kept {stats.records_kept}/{stats.records_in} records "
        f"(retention {stats.overall_retention:.2f})",
        file=sys.stderr,
    )
    if stats.quota_warning:
        print(
            "warning: exclusion quota unmet; less than half of the examples were excluded",
            file=sys.stderr,
        )
    for index, error in stats.failures:
        print(f"  batch {index} failed: {error}", file=sys.stderr)
    return 0 if not stats.failures else 2


def _cmd_parse(args: argparse.Namespace) -> int:
    directory = Path(args.dir)
    suffix = "filtered" if args.filtered else "output"
    files = sorted(
        (p for p in directory.glob(f"batch_*_{suffix}.txt")),
        key=lambda p: int(p.stem.split("_")[1]),
    )
    if not files:
        raise CliError(f"no batch_*_{suffix}.txt files found in {directory}")

    all_records = []
    warning_count = 0
    for path in files:
        index = int(path.stem.split("_")[1])
        parsed, warnings = records.parse_batch_output(path.read_text(encoding="utf-8"), index)
        all_records.extend(parsed)
        warning_count += len(warnings)
        for w in warnings:
            print(f"warning: {w}", file=sys.stderr)

    manifest_hash = ""
    if args.manifest:
        manifest_hash = corpus.manifest_digest(corpus.load_manifest(args.manifest))

    passes = 0
    state_path = directory / runner.FILTER_STATE_FILE
    if args.filtered and state_path.exists():
        passes = int(json.loads(state_path.read_text(encoding="utf-8")).get("passes", 0))

    ds = records.Dataset(
        records=all_records,
        source_manifest_hash=manifest_hash,
        filter_pass_count=passes,
    )
    records.save_dataset(ds, args.out)
    print(
        f"parsed {len(all_records)} records from {len(files)} files "
        f"({warning_count} warnings) -> {args.out}",
        file=sys.stderr,
    )
    return 0


def _cmd_verify(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    threshold = args.threshold if args.threshold is not None else cfg.threshold
    manifest = corpus.load_manifest(args.manifest)
    ds = records.load_dataset(args.dataset, corpus.manifest_digest(manifest))

    annotated, summary = verify.verify_dataset(ds, manifest, threshold)

    print(f"{'result':<12}{'count':>8}")
    for name, count in summary.counts.items():
        print(f"{name:<12}{count:>8}")
    if summary.review_records:
        print(f"\nnear-misses for human review (similarity within {verify.REVIEW_BAND} of threshold):")
        for record in summary.review_records:
            sim = record.verification.similarity if record.verification else 0.0
            print(f"  {record.source_doc_id}: similarity {sim:.3f}")
    if summary.unverified_records:
        print("\nunverified records:")
        for record in summary.unverified_records:
            sim = record.verification.similarity if record.verification else 0.0
            quote = (record.quote or "")[:60]
            print(f"  batch {record.batch_index} {record.source_doc_id}: {sim:.3f} {quote!r}")

    if args.out:
        records.save_dataset(annotated, args.out)
        print(f"annotated dataset -> {args.out}", file=sys.stderr)
    if args.report:
        report = {
            "threshold": threshold,
            "counts": summary.counts,
            "skipped_doc_ids": summary.skipped_doc_ids,
            "unverified": [
                {
                    "source_doc_id": r.source_doc_id,
                    "batch_index": r.batch_index,
                    "similarity": r.verification.similarity if r.verification else 0.0,
                }
                for r in summary.unverified_records
            ],
        }
        Path(args.report).write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
        print(f"verification report -> {args.report}", file=sys.stderr)
    return 0


def _cmd_stats(args: argparse.Namespace) -> int:
    manifest = corpus.load_manifest(args.manifest)
    ds = records.load_dataset(args.dataset, corpus.manifest_digest(manifest))
    tiers = _parse_tiers(args.tiers) if args.tiers else analytics.TierFractions()

    table = None
    if args.taxonomy:
        from .taxonomy import load_table

        table = load_table(args.taxonomy)

    corpus_table = analytics.corpus_distribution(manifest, table)
    dataset_table = analytics.dataset_distribution(ds, manifest, table)
    contributors = dataset_table.total
    prevalence = analytics.prevalence_estimate(contributors, corpus_table.total, tiers)

    report_path, csv_path = analytics.emit_report(
        corpus_table, dataset_table, prevalence, args.out
    )
    print(f"report -> {report_path}\ncsv -> {csv_path}", file=sys.stderr)
    return 0


def _cmd_query(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    client = _make_client(cfg, args, Path(args.dataset).parent)
    answer = runner.run_query(
        args.dataset, args.question, client, log_path=args.log, templates_dir=cfg.prompts_dir
    )
    print(answer)
    return 0


def _cmd_export(args: argparse.Namespace) -> int:
    ds = records.load_dataset(args.dataset)
    Path(args.out).write_text(records.export_document(ds), encoding="utf-8")
    print(f"exported {len(ds.records)} records -> {args.out}", file=sys.stderr)
    return 0


def _cmd_prompts(args: argparse.Namespace) -> int:
    kind = prompts.PromptKind(args.kind)
    if kind is prompts.PromptKind.ANNOTATION:
        bundle = prompts.build_annotation_prompt(templates_dir=args.prompts_dir)
    elif kind is prompts.PromptKind.FILTER:
        bundle = prompts.build_filter_prompt("[batch output goes here]", templates_dir=args.prompts_dir)
    else:
        sections = prompts.load_sections(kind, templates_dir=args.prompts_dir)
        print(sections["framing"])
        return 0
    print(bundle.render())
    return 0


_COMMANDS = {
    "ingest": _cmd_ingest,
    "sample": _cmd_sample,
    "annotate": _cmd_annotate,
    "filter": _cmd_filter,
    "parse": _cmd_parse,
    "verify": _cmd_verify,
    "stats": _cmd_stats,
    "query": _cmd_query,
    "export": _cmd_export,
    "prompts": _cmd_prompts,
}


def dispatch(argv: list[str] | None = None) -> int:
    """Parse arguments and run one subcommand; returns the exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_help(sys.stderr)
        return 1
    return _COMMANDS[args.command](args)


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return dispatch(argv)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (
        ConfigError,
        corpus.CorpusError,
        records.DatasetError,
        prompts.PromptError,
        runner.RunnerError,
        analytics.AnalyticsError,
        provider.ProviderError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
