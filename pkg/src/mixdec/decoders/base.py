"""Shared vocabulary and sample types for all decoder families."""

from __future__ import annotations

from dataclasses import dataclass

PAD = 0
BOS = 1
EOS = 2

#: default length caps; truncation beyond these is flagged, never an error
MAX_CONTEXT_LEN = 16
MAX_RESPONSE_LEN = 16


@dataclass(frozen=True)
class Vocab:
    """Token id space with reserved ids PAD=0, BOS=1, EOS=2."""

    size: int

    PAD = PAD
    BOS = BOS
    EOS = EOS

    def __post_init__(self) -> None:
        if self.size < 4:
            raise ValueError(f"vocab needs size >= 4, got {self.size}")

    @property
    def usable(self) -> range:
        """Ids available for corpus content (everything past the reserved ids)."""
        return range(3, self.size)


@dataclass(frozen=True)
class Sample:
    """One (context, response) pair; the response always ends with EOS."""

    context: tuple[int, ...]
    response: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.response) == 0:
            raise ValueError("response must be non-empty")
        if self.response[-1] != EOS:
            raise ValueError("response must end with EOS")
        if len(self.context) == 0:
            raise ValueError("context must be non-empty")


def validate_sample(
    sample: Sample,
    vocab: Vocab,
    max_context_len: int = MAX_CONTEXT_LEN,
    max_response_len: int = MAX_RESPONSE_LEN,
) -> None:
    """Check id range and length caps; raises ValueError on violation."""
    for name, seq, cap in (
        ("context", sample.context, max_context_len),
        ("response", sample.response, max_response_len),
    ):
        if len(seq) > cap:
            raise ValueError(f"{name} length {len(seq)} exceeds cap {cap}")
        for tok in seq:
            if not 0 <= tok < vocab.size:
                raise ValueError(f"{name} token {tok} outside vocab of size {vocab.size}")
