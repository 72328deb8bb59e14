"""Matching teacher and student token spans through their character end offsets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .tokenization import TokenizedText


class AlignmentError(ValueError):
    pass


@dataclass(frozen=True)
class Span:
    start: int
    end: int  # inclusive

    def __post_init__(self):
        if not 0 <= self.start <= self.end:
            raise AlignmentError(f"invalid span ({self.start}, {self.end})")

    def __len__(self):
        return self.end - self.start + 1

    def indices(self) -> range:
        return range(self.start, self.end + 1)


@dataclass(frozen=True)
class SpanAlignment:
    pairs: tuple[tuple[Span, Span], ...]

    def __len__(self):
        return len(self.pairs)

    @property
    def teacher_spans(self) -> list[Span]:
        return [t for t, _ in self.pairs]

    @property
    def student_spans(self) -> list[Span]:
        return [s for _, s in self.pairs]


@dataclass(frozen=True)
class CoverageReport:
    teacher_coverage: float
    student_coverage: float
    n_spans: int
    max_span_len: int


def _check_offsets(offsets, side: str) -> np.ndarray:
    arr = np.asarray(offsets, dtype=np.int64)
    if arr.ndim != 1:
        raise AlignmentError(f"{side} offsets must be 1-D")
    if np.any(arr < 0):
        raise AlignmentError(f"{side} offsets contain negative values")
    content = arr[arr != 0]
    if np.any(np.diff(content) <= 0):
        raise AlignmentError(f"{side} non-special offsets are not strictly increasing: {content.tolist()}")
    return arr


def align_spans(offsets_t, offsets_s, first_t: int, first_s: int) -> SpanAlignment:
    """Walk both offset streams; every shared end offset closes one span pair.

    Spans run from the token after the previous match (or the first content
    token) up to and including the matching token.
    """
    ot = _check_offsets(offsets_t, "teacher")
    os_ = _check_offsets(offsets_s, "student")
    raw = _kernels.walk_offsets(ot, os_, int(first_t), int(first_s))
    return SpanAlignment(tuple((Span(ts, te), Span(ss, se)) for ts, te, ss, se in raw))


def lcs_oracle(offsets_t, offsets_s) -> list[int]:
    """Dynamic-programming LCS of two special-free offset sequences."""
    ot = _check_offsets(offsets_t, "teacher")
    os_ = _check_offsets(offsets_s, "student")
    if np.any(ot == 0) or np.any(os_ == 0):
        raise AlignmentError("lcs_oracle expects special tokens removed")
    return _kernels.lcs_offsets(ot, os_)


def boundary_offsets(alignment: SpanAlignment, offsets_t) -> list[int]:
    ot = np.asarray(offsets_t)
    return [int(ot[t.end]) for t, _ in alignment.pairs]


def align_tokenized(tok_t: TokenizedText, tok_s: TokenizedText) -> SpanAlignment:
    return align_spans(tok_t.end_offsets, tok_s.end_offsets, tok_t.first_content, tok_s.first_content)


def _covered(spans, tt: TokenizedText, side: str) -> tuple[int, int]:
    """(characters covered, last content offset) for one side."""
    offsets = tt.end_offsets
    special = tt.special_mask
    prev_end = -1
    chars = 0
    for sp in spans:
        if sp.end >= len(offsets):
            raise AlignmentError(f"{side} span {sp} exceeds sequence length {len(offsets)}")
        if sp.start <= prev_end:
            raise AlignmentError(f"overlapping {side} spans at token {sp.start}")
        if special[sp.start : sp.end + 1].any():
            raise AlignmentError(f"{side} span {sp} contains a special token")
        before = offsets[:sp.start][~special[:sp.start]]
        lo = int(before[-1]) if before.size else 0
        chars += int(offsets[sp.end]) - lo
        prev_end = sp.end
    content = offsets[~special]
    return chars, int(content[-1]) if content.size else 0


def validate_alignment(alignment: SpanAlignment, tok_t: TokenizedText, tok_s: TokenizedText) -> CoverageReport:
    ct, total_t = _covered(alignment.teacher_spans, tok_t, "teacher")
    cs, total_s = _covered(alignment.student_spans, tok_s, "student")
    for t, s in alignment.pairs:
        if tok_t.end_offsets[t.end] != tok_s.end_offsets[s.end]:
            raise AlignmentError(f"pair {t}/{s} ends at different characters")
    cov_t = ct / total_t if total_t else 0.0
    cov_s = cs / total_s if total_s else 0.0
    if total_t and total_t == total_s and (cov_t != 1.0 or cov_s != 1.0):
        raise AlignmentError(f"incomplete coverage {cov_t:.4f}/{cov_s:.4f} with coinciding final offsets")
    longest = max((max(len(t), len(s)) for t, s in alignment.pairs), default=0)
    return CoverageReport(cov_t, cov_s, len(alignment), longest)


def span_char_range(span: Span, tt: TokenizedText) -> tuple[int, int]:
    """Half-open character range [c0, c1) covered by a span."""
    offsets = tt.end_offsets
    before = offsets[:span.start][~tt.special_mask[:span.start]]
    return (int(before[-1]) if before.size else 0), int(offsets[span.end])
