"""Rule-based scan of radiology report text for ARDS imaging evidence.

Matching is case-insensitive on whitespace-normalized text, with word
boundaries on both ends of every term. Negation applies to opacity terms
only: an opacity match is discarded when a negation token ends within
`negation_window` characters before the match starts. ARDS terms and
bilaterality terms are never negated.

A report is a positive imaging finding when it mentions an ARDS term, or
an affirmed opacity term together with a bilaterality term.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .cohort import RadiologyReport

DEFAULT_OPACITY_TERMS: tuple[str, ...] = (
    "opacity",
    "opacities",
    "infiltrate",
    "consolidation",
    "ground glass",
)
DEFAULT_BILATERAL_TERMS: tuple[str, ...] = ("bilateral", "bilaterally", "both lungs")
DEFAULT_ARDS_TERMS: tuple[str, ...] = ("ards", "acute respiratory distress")
DEFAULT_NEGATION_TERMS: tuple[str, ...] = ("no",)
DEFAULT_NEGATION_WINDOW = 40


@dataclass(frozen=True)
class Lexicon:
    """Term lists driving the report scan. All matching is rule data, not code."""

    opacity_terms: tuple[str, ...] = DEFAULT_OPACITY_TERMS
    bilateral_terms: tuple[str, ...] = DEFAULT_BILATERAL_TERMS
    ards_terms: tuple[str, ...] = DEFAULT_ARDS_TERMS
    negation_terms: tuple[str, ...] = DEFAULT_NEGATION_TERMS
    negation_window: int = DEFAULT_NEGATION_WINDOW

    def __post_init__(self):
        for name in ("opacity_terms", "bilateral_terms", "ards_terms"):
            terms = getattr(self, name)
            if not terms or any(not t.strip() for t in terms):
                raise ValueError(f"lexicon {name} must be non-empty strings")
        if self.negation_window < 0:
            raise ValueError("negation_window must be >= 0")

    @classmethod
    def default(cls) -> "Lexicon":
        return cls()

    @classmethod
    def from_dict(cls, data: dict) -> "Lexicon":
        kwargs = {}
        for key in ("opacity_terms", "bilateral_terms", "ards_terms", "negation_terms"):
            if key in data:
                kwargs[key] = tuple(str(t) for t in data[key])
        if "negation_window" in data:
            kwargs["negation_window"] = int(data["negation_window"])
        return cls(**kwargs)

    @classmethod
    def from_path(cls, path) -> "Lexicon":
        with open(path, "r", encoding="utf-8") as handle:
            return cls.from_dict(json.load(handle))

    def to_dict(self) -> dict:
        return {
            "opacity_terms": list(self.opacity_terms),
            "bilateral_terms": list(self.bilateral_terms),
            "ards_terms": list(self.ards_terms),
            "negation_terms": list(self.negation_terms),
            "negation_window": self.negation_window,
        }


@dataclass(frozen=True)
class ImagingFinding:
    """Scan result for one report (time in minutes from admission)."""

    time: int
    opacity: bool
    bilateral: bool
    ards_term: bool

    @property
    def positive(self) -> bool:
        return self.ards_term or (self.opacity and self.bilateral)


def normalize_text(text: str) -> str:
    """Lowercase and collapse every whitespace run to a single space."""
    return re.sub(r"\s+", " ", text.lower()).strip()


def _spans(text: str, terms: Sequence[str]) -> list[tuple[int, int]]:
    spans: list[tuple[int, int]] = []
    for term in terms:
        pattern = r"\b" + re.escape(normalize_text(term)) + r"\b"
        spans.extend(m.span() for m in re.finditer(pattern, text))
    return spans


def scan_text(text: str, lexicon: Lexicon | None = None) -> tuple[bool, bool, bool]:
    """Return (opacity_affirmed, bilateral, ards_term) for raw report text.

    Negation distance runs from the end of the negation token to the start
    of the opacity match; a gap of at most `negation_window` characters
    negates the match.
    """
    lex = lexicon or Lexicon.default()
    norm = normalize_text(text)

    negation_ends = [end for _, end in _spans(norm, lex.negation_terms)]
    opacity = False
    for start, _ in _spans(norm, lex.opacity_terms):
        negated = any(0 <= start - end <= lex.negation_window for end in negation_ends)
        if not negated:
            opacity = True
            break

    bilateral = bool(_spans(norm, lex.bilateral_terms))
    ards_term = bool(_spans(norm, lex.ards_terms))
    return opacity, bilateral, ards_term


def scan_report(report: RadiologyReport, lexicon: Lexicon | None = None) -> ImagingFinding:
    opacity, bilateral, ards_term = scan_text(report.text, lexicon)
    return ImagingFinding(
        time=report.time, opacity=opacity, bilateral=bilateral, ards_term=ards_term
    )


def scan_reports(
    reports: Iterable[RadiologyReport], lexicon: Lexicon | None = None
) -> list[ImagingFinding]:
    """Scan every report, returned in time order."""
    findings = [scan_report(r, lexicon) for r in reports]
    findings.sort(key=lambda f: f.time)
    return findings


def first_positive_finding(
    reports: Iterable[RadiologyReport], lexicon: Lexicon | None = None
) -> ImagingFinding | None:
    for finding in scan_reports(reports, lexicon):
        if finding.positive:
            return finding
    return None
