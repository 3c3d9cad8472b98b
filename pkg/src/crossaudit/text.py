"""Text analytics for name/inscription values.

Tagging and lemmatization happen outside this package; this module
consumes an optional surface-to-lemma lexicon and pre-tagged token files,
and compares part-of-speech frequency vectors by L1 distance. PoS tags are
opaque strings, so any tag set works.
"""

from __future__ import annotations

import csv
import io
import re
import unicodedata
from collections import Counter
from dataclasses import dataclass
from typing import IO, Iterable, Mapping, Sequence

from .errors import DomainError
from .ingest import Reject

__all__ = [
    "OSM_VALUE_MAX_LEN",
    "DEFAULT_LENGTH_SPLIT",
    "TaggedToken",
    "PosDistribution",
    "LengthStats",
    "PosFileResult",
    "tokenize",
    "length_classes",
    "lemma_frequencies",
    "pos_distance",
    "pos_distribution_from_file",
    "parse_lemma_lexicon",
]

# OSM caps tag values at 255 characters; anything longer was stitched
# together from workaround tags and is analyzed separately.
OSM_VALUE_MAX_LEN = 255

# Heuristic split between acronym-style and prose-style values.
DEFAULT_LENGTH_SPLIT = 20

# Word tokens are maximal runs of letters/digits, allowing apostrophes
# inside a word; every other non-space character stands alone.
_TOKEN_RE = re.compile(r"[^\W_]+(?:['’][^\W_]+)*|[^\s]")
_HAS_WORD_RE = re.compile(r"[^\W_]")


@dataclass(frozen=True)
class TaggedToken:
    surface: str
    lemma: str
    pos: str

    def __post_init__(self) -> None:
        if not self.surface:
            raise ValueError("surface must be non-empty")


@dataclass(frozen=True)
class PosDistribution:
    """Normalized frequency of PoS tags in one labeled corpus or key."""

    label: str
    freq: dict[str, float]

    def __post_init__(self) -> None:
        total = sum(self.freq.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"frequencies sum to {total}, not 1")

    @classmethod
    def from_counts(cls, label: str, counts: Mapping[str, int]) -> "PosDistribution":
        total = sum(counts.values())
        if total <= 0:
            raise DomainError(f"no tagged tokens for {label!r}")
        return cls(label=label, freq={tag: c / total for tag, c in counts.items()})


@dataclass(frozen=True)
class LengthStats:
    n: int
    histogram: tuple[tuple[int, float], ...]  # (char length, share), ascending
    short_share: float
    long_share: float
    overlong_count: int


@dataclass(frozen=True)
class PosFileResult:
    distribution: PosDistribution
    tokens: tuple[TaggedToken, ...]
    rejects: tuple[Reject, ...]


def tokenize(text: str) -> list[str]:
    """Split into word tokens and single-character punctuation tokens."""
    return _TOKEN_RE.findall(text)


def length_classes(
    values: Sequence[str], split_at: int = DEFAULT_LENGTH_SPLIT
) -> LengthStats:
    """Histogram of value lengths with a short/long split.

    Lengths count Unicode scalar values. Values beyond the OSM field limit
    are flagged via overlong_count but still appear in the histogram.
    """
    if split_at < 1:
        raise ValueError("split_at must be >= 1")
    lengths = [len(v) for v in values]
    n = len(lengths)
    if n == 0:
        return LengthStats(n=0, histogram=(), short_share=0.0, long_share=0.0, overlong_count=0)
    counter = Counter(lengths)
    histogram = tuple((length, counter[length] / n) for length in sorted(counter))
    short = sum(1 for length in lengths if length <= split_at)
    return LengthStats(
        n=n,
        histogram=histogram,
        short_share=short / n,
        long_share=(n - short) / n,
        overlong_count=sum(1 for length in lengths if length > OSM_VALUE_MAX_LEN),
    )


def _lemma_of(token: str, lexicon: Mapping[str, str] | None) -> str:
    if lexicon:
        normalized = unicodedata.normalize("NFC", token).lower()
        hit = lexicon.get(normalized)
        if hit is not None:
            return hit
    return token


def lemma_frequencies(
    values: Iterable[str], lexicon: Mapping[str, str] | None = None
) -> list[tuple[str, int]]:
    """Ranked lemma counts over all word tokens of the values.

    Punctuation-only tokens drop out. The lexicon is keyed by NFC-lowercased
    surfaces; unknown surfaces keep their original casing. Ranking is by
    descending count, ties by lexicographic lemma.
    """
    counts: Counter[str] = Counter()
    for value in values:
        for token in tokenize(value):
            if not _HAS_WORD_RE.search(token):
                continue
            counts[_lemma_of(token, lexicon)] += 1
    return sorted(counts.items(), key=lambda item: (-item[1], item[0]))


def pos_distance(p: PosDistribution, q: PosDistribution) -> float:
    """L1 distance between two PoS frequency vectors (range 0..2)."""
    for dist in (p, q):
        total = sum(dist.freq.values())
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"{dist.label!r} is not normalized (sum {total})")
    # sorted union keeps the summation order, and therefore the float
    # result, independent of the process hash seed
    tags = sorted(set(p.freq) | set(q.freq))
    return sum(abs(p.freq.get(t, 0.0) - q.freq.get(t, 0.0)) for t in tags)


def pos_distribution_from_file(
    data: bytes | str | IO[str], label: str
) -> PosFileResult:
    """Normalized PoS frequencies from a token<TAB>lemma<TAB>pos file.

    Lines starting with # and blank lines are ignored; malformed lines go
    to the reject list. A file without a single valid token is a domain
    error.
    """
    if isinstance(data, bytes):
        text = data.decode("utf-8")
    elif isinstance(data, str):
        text = data
    else:
        text = data.read()

    counts: Counter[str] = Counter()
    tokens: list[TaggedToken] = []
    rejects: list[Reject] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 3 or not all(f.strip() for f in fields):
            rejects.append(Reject(f"line {lineno}", "expected token<TAB>lemma<TAB>pos"))
            continue
        surface, lemma, pos = (f.strip() for f in fields)
        tokens.append(TaggedToken(surface=surface, lemma=lemma, pos=pos))
        counts[pos] += 1
    if not counts:
        raise DomainError(f"no tagged tokens in {label!r}")
    return PosFileResult(
        distribution=PosDistribution.from_counts(label, counts),
        tokens=tuple(tokens),
        rejects=tuple(rejects),
    )


def parse_lemma_lexicon(data: bytes | str) -> dict[str, str]:
    """Surface-to-lemma map from a `surface;lemma` CSV (lowercase surfaces)."""
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    lexicon: dict[str, str] = {}
    reader = csv.reader(io.StringIO(text), delimiter=";")
    for row in reader:
        if not row or all(not cell.strip() for cell in row):
            continue
        if [cell.strip().lower() for cell in row[:2]] == ["surface", "lemma"]:
            continue
        if len(row) < 2 or not row[0].strip() or not row[1].strip():
            continue
        surface = unicodedata.normalize("NFC", row[0].strip()).lower()
        lexicon[surface] = unicodedata.normalize("NFC", row[1].strip())
    return lexicon
