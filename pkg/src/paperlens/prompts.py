"""Assembly of the three prompt kinds from plain-text template sections.

Templates live as named section files (``annotation/persona.txt`` etc.)
so prompt provenance stays auditable; overrides replace whole sections,
never interpolate into them. The packaged defaults target mathematical
explanation in research papers; point ``templates_dir`` at your own
directory with the same layout to annotate a different concept.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Mapping

from .provider import estimate_tokens


class PromptError(Exception):
    """Raised for missing template sections or invalid prompt inputs."""


class PromptKind(enum.Enum):
    ANNOTATION = "annotation"
    FILTER = "filter"
    QUERY = "query"


#: Section files expected per prompt kind, relative to the templates root.
SECTION_FILES: dict[PromptKind, tuple[str, ...]] = {
    PromptKind.ANNOTATION: ("persona", "phenomena", "proof_types", "instructions"),
    PromptKind.FILTER: ("body",),
    PromptKind.QUERY: ("framing",),
}

_DEFAULT_ASSET_DESCRIPTION = (
    "an excerpt from Mancosu et al.'s survey article, 'Mathematical Explanation'"
)

_CONTEXT_INTRO = (
    "The remainder of the prompt is {description}. It provides further context "
    "on the target concept(s) of explanation. Don't discuss this article or the "
    "examples it contains in your analysis of the texts. "
    "BEGINNING OF CONTEXT EXCERPT:"
)


@dataclass(frozen=True)
class ContextAsset:
    """A user-supplied context document appended to the annotation prompt.

    The survey excerpt used for concept context is not shipped with the
    tool; supply your own file here.
    """

    path: str
    description: str = _DEFAULT_ASSET_DESCRIPTION
    char_count: int = 0

    @classmethod
    def from_file(cls, path: str | Path, description: str | None = None) -> "ContextAsset":
        p = Path(path)
        if not p.is_file():
            raise PromptError(f"context asset file not found: {p}")
        text = p.read_text(encoding="utf-8")
        return cls(
            path=str(p),
            description=description or _DEFAULT_ASSET_DESCRIPTION,
            char_count=len(text),
        )

    def read(self) -> str:
        p = Path(self.path)
        if not p.is_file():
            raise PromptError(f"context asset file not found: {p}")
        return p.read_text(encoding="utf-8")


@dataclass(frozen=True)
class PromptBundle:
    """A fully assembled prompt ready to send."""

    kind: PromptKind
    persona: str = ""
    instructions: str = ""
    context_excerpt: str | None = None
    context_intro: str = ""
    payload_text: str = ""
    payload_refs: tuple[str, ...] = ()
    estimated_tokens: int = 0

    def render(self) -> str:
        """Assemble the final prompt text in send order."""
        parts = [p for p in (self.persona, self.instructions) if p]
        if self.context_excerpt:
            parts.append(self.context_intro + "\n\n" + self.context_excerpt)
        if self.payload_text:
            parts.append(self.payload_text)
        return "\n\n".join(parts)

    def with_payload_refs(self, refs: tuple[str, ...] | list[str]) -> "PromptBundle":
        return replace(self, payload_refs=tuple(refs))


def _finalize(bundle: PromptBundle) -> PromptBundle:
    return replace(bundle, estimated_tokens=estimate_tokens(bundle.render()))


def _read_section(kind: PromptKind, name: str, templates_dir: str | Path | None) -> str:
    if templates_dir is not None:
        path = Path(templates_dir) / kind.value / f"{name}.txt"
        if not path.is_file():
            raise PromptError(f"template section missing: {path}")
        return path.read_text(encoding="utf-8").strip()
    ref = resources.files("paperlens") / "templates" / kind.value / f"{name}.txt"
    try:
        return ref.read_text(encoding="utf-8").strip()
    except FileNotFoundError as exc:
        raise PromptError(f"packaged template section missing: {kind.value}/{name}") from exc


def load_sections(
    kind: PromptKind,
    templates_dir: str | Path | None = None,
    overrides: Mapping[str, str] | None = None,
) -> dict[str, str]:
    """Load a prompt kind's sections, applying whole-section overrides."""
    overrides = dict(overrides or {})
    unknown = set(overrides) - set(SECTION_FILES[kind])
    if unknown:
        raise PromptError(
            f"unknown template section(s) for {kind.value}: {sorted(unknown)}; "
            f"valid sections: {list(SECTION_FILES[kind])}"
        )
    sections = {}
    for name in SECTION_FILES[kind]:
        if name in overrides:
            sections[name] = overrides[name].strip()
        else:
            sections[name] = _read_section(kind, name, templates_dir)
    return sections


def build_annotation_prompt(
    asset: ContextAsset | None = None,
    overrides: Mapping[str, str] | None = None,
    templates_dir: str | Path | None = None,
) -> PromptBundle:
    """Assemble the annotation prompt, optionally with a context excerpt."""
    sections = load_sections(PromptKind.ANNOTATION, templates_dir, overrides)
    instructions = "\n\n".join(
        sections[name] for name in ("phenomena", "proof_types", "instructions")
    )
    excerpt: str | None = None
    intro = ""
    if asset is not None:
        excerpt = asset.read()
        if excerpt:
            intro = _CONTEXT_INTRO.format(description=asset.description)
    return _finalize(
        PromptBundle(
            kind=PromptKind.ANNOTATION,
            persona=sections["persona"],
            instructions=instructions,
            context_excerpt=excerpt,
            context_intro=intro,
        )
    )


def build_filter_prompt(
    batch_output_text: str,
    overrides: Mapping[str, str] | None = None,
    templates_dir: str | Path | None = None,
) -> PromptBundle:
    """Assemble the strict quality-filter prompt around one batch output."""
    if not batch_output_text:
        raise PromptError("filter prompt needs non-empty batch output text")
    sections = load_sections(PromptKind.FILTER, templates_dir, overrides)
    return _finalize(
        PromptBundle(
            kind=PromptKind.FILTER,
            instructions=sections["body"],
            payload_text=batch_output_text,
        )
    )


def build_query_prompt(
    dataset_path: str | Path,
    question: str,
    overrides: Mapping[str, str] | None = None,
    templates_dir: str | Path | None = None,
) -> PromptBundle:
    """Assemble a follow-up query over a previously produced dataset.

    The dataset text itself is supplied as the payload at completion time;
    the bundle frames it as prior analysis output and appends the question.
    """
    if not question or not question.strip():
        raise PromptError("query question must be non-empty")
    path = Path(dataset_path)
    if not path.is_file():
        raise PromptError(f"dataset file not found: {path}")
    sections = load_sections(PromptKind.QUERY, templates_dir, overrides)
    return _finalize(
        PromptBundle(
            kind=PromptKind.QUERY,
            instructions=sections["framing"] + "\n\n" + question.strip(),
            payload_refs=(path.name,),
        )
    )
