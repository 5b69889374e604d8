"""Prompt assembly tests: defaults, overrides, context assets, golden files."""

from pathlib import Path

import pytest

from paperlens.prompts import (
    ContextAsset,
    PromptError,
    PromptKind,
    build_annotation_prompt,
    build_filter_prompt,
    build_query_prompt,
    load_sections,
)

GOLDEN = Path(__file__).parent / "golden"


# --- annotation --------------------------------------------------------------


def test_default_contains_key_instruction_sentences():
    text = build_annotation_prompt().render()
    assert "Do not hallucinate content, confuse sources or make up quotes." in text
    assert "Give the filename, title, author and page number" in text
    assert "You are a skilled and insightful research assistant" in text


def test_default_annotation_is_byte_stable():
    expected = (GOLDEN / "annotation_default.txt").read_text(encoding="utf-8")
    assert build_annotation_prompt().render() == expected
    assert build_annotation_prompt().render() == expected  # second assembly identical


def test_empty_asset_adds_nothing(tmp_path):
    asset_file = tmp_path / "excerpt.txt"
    asset_file.write_text("", encoding="utf-8")
    asset = ContextAsset.from_file(asset_file)
    with_empty = build_annotation_prompt(asset=asset)
    without = build_annotation_prompt()
    assert with_empty.context_excerpt == ""
    assert with_empty.estimated_tokens == without.estimated_tokens
    assert with_empty.render() == without.render()


def test_asset_appended_after_instructions(tmp_path):
    asset_file = tmp_path / "excerpt.txt"
    asset_file.write_text("Historical overview of the target concept.", encoding="utf-8")
    asset = ContextAsset.from_file(asset_file, description="a survey excerpt")
    bundle = build_annotation_prompt(asset=asset)
    text = bundle.render()
    assert text.endswith("Historical overview of the target concept.")
    assert "The remainder of the prompt is a survey excerpt." in text
    assert bundle.estimated_tokens > build_annotation_prompt().estimated_tokens
    assert asset.char_count == len("Historical overview of the target concept.")


def test_missing_asset_file_is_error(tmp_path):
    with pytest.raises(PromptError, match="not found"):
        ContextAsset.from_file(tmp_path / "nope.txt")


def test_override_replaces_only_named_section():
    default = build_annotation_prompt()
    overridden = build_annotation_prompt(overrides={"persona": "You are a terse classifier."})
    assert overridden.persona == "You are a terse classifier."
    assert overridden.instructions == default.instructions  # untouched sections identical
    assert default.persona != overridden.persona


def test_unknown_override_section_rejected():
    with pytest.raises(PromptError, match="unknown template section"):
        build_annotation_prompt(overrides={"footer": "x"})


def test_templates_dir_override(tmp_path):
    for name in ("persona", "phenomena", "proof_types", "instructions"):
        d = tmp_path / "annotation"
        d.mkdir(exist_ok=True)
        (d / f"{name}.txt").write_text(f"[{name} replaced]", encoding="utf-8")
    bundle = build_annotation_prompt(templates_dir=tmp_path)
    assert bundle.persona == "[persona replaced]"
    assert "[phenomena replaced]" in bundle.instructions


def test_templates_dir_missing_section(tmp_path):
    (tmp_path / "annotation").mkdir()
    with pytest.raises(PromptError, match="section missing"):
        build_annotation_prompt(templates_dir=tmp_path)


# --- filter ------------------------------------------------------------------


def test_filter_contains_quota_and_calibration():
    bundle = build_filter_prompt("some batch text")
    text = bundle.render()
    assert "You MUST exclude at least 50-60% of the original examples" in text
    assert "Be ruthless in your exclusions." in text
    assert "KEEP:" in text and "DISCARD:" in text
    assert 'new "batch_n_output.txt" file' in text


def test_filter_body_byte_stable():
    expected = (GOLDEN / "filter_body.txt").read_text(encoding="utf-8")
    assert load_sections(PromptKind.FILTER)["body"] == expected


def test_filter_payload_preserved_byte_for_byte():
    payload = "Exact é bytes\n\twith tabs and “quotes”"
    bundle = build_filter_prompt(payload)
    assert bundle.payload_text == payload
    assert bundle.render().endswith(payload)


def test_filter_kind_and_empty_input():
    assert build_filter_prompt("x").kind is PromptKind.FILTER
    with pytest.raises(PromptError, match="non-empty"):
        build_filter_prompt("")


def test_estimated_tokens_monotone_in_payload():
    small = build_filter_prompt("x")
    large = build_filter_prompt("x" * 5000)
    assert large.estimated_tokens > small.estimated_tokens


# --- query -------------------------------------------------------------------


def test_query_framing_then_question(tmp_path):
    ds = tmp_path / "data.records.jsonl"
    ds.write_text("{}", encoding="utf-8")
    bundle = build_query_prompt(ds, "find tradeoff cases")
    text = bundle.render()
    framing = (GOLDEN / "query_framing.txt").read_text(encoding="utf-8")
    assert text.startswith(framing)
    assert text.endswith("find tradeoff cases")
    assert bundle.kind is PromptKind.QUERY
    assert bundle.payload_refs == ("data.records.jsonl",)


def test_query_empty_question_is_error(tmp_path):
    ds = tmp_path / "data.records.jsonl"
    ds.write_text("{}", encoding="utf-8")
    with pytest.raises(PromptError, match="non-empty"):
        build_query_prompt(ds, "   ")


def test_query_missing_dataset_is_error(tmp_path):
    with pytest.raises(PromptError, match="not found"):
        build_query_prompt(tmp_path / "none.jsonl", "a question")


def test_query_pure(tmp_path):
    ds = tmp_path / "data.records.jsonl"
    ds.write_text("{}", encoding="utf-8")
    a = build_query_prompt(ds, "same question")
    b = build_query_prompt(ds, "same question")
    assert a == b


# --- bundle invariants -------------------------------------------------------


def test_estimated_tokens_positive_when_text_present():
    for bundle in (
        build_annotation_prompt(),
        build_filter_prompt("payload"),
    ):
        assert bundle.estimated_tokens > 0
