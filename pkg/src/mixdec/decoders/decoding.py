"""Greedy and beam decoding for both decoder families.

PAD and BOS can never be emitted; candidate tokens are EOS plus the usable
vocabulary.  Decoding always runs in eval mode (no dropout).  A sequence
that hits the length cap without producing EOS is returned with
``truncated=True`` rather than raising.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import BOS, EOS, PAD
from .neural import NeuralBank, _log_softmax
from .tabular import TabularBank

TokenSeq = tuple[int, ...]


@dataclass(frozen=True)
class DecodeResult:
    tokens: TokenSeq
    truncated: bool
    score: float  # total log-probability of the emitted tokens


def greedy_decode(bank, k: int, context: TokenSeq) -> DecodeResult:
    """Argmax token per step until EOS or the length cap; deterministic."""
    if isinstance(bank, TabularBank):
        cid = bank.context_id(context)
        row = bank.tables[k, cid]
        tid = int(np.argmax(row))
        score = float(np.log(row[tid])) if row[tid] > 0 else float("-inf")
        return DecodeResult(tokens=bank.templates[tid], truncated=False, score=score)
    return beam_decode(bank, k, context, 1)[0]


def beam_decode(bank, k: int, context: TokenSeq, beam_width: int) -> list[DecodeResult]:
    """Standard length-capped beam search over a single decoder.

    Returns up to ``beam_width`` results sorted by log-probability
    (descending; ties broken by token sequence so the order is
    deterministic).  ``beam_width=1`` reduces to greedy decoding.
    """
    if beam_width < 1:
        raise ValueError(f"beam width must be >= 1, got {beam_width}")
    if isinstance(bank, TabularBank):
        return _beam_tabular(bank, k, context, beam_width)
    return _beam_neural(bank, k, context, beam_width)


def _beam_tabular(
    bank: TabularBank, k: int, context: TokenSeq, beam_width: int
) -> list[DecodeResult]:
    cid = bank.context_id(context)
    row = bank.tables[k, cid]
    with np.errstate(divide="ignore"):
        scores = np.log(row)
    live = [t for t in range(len(row)) if row[t] > 0.0]
    live.sort(key=lambda t: (-scores[t], bank.templates[t]))
    return [
        DecodeResult(tokens=bank.templates[t], truncated=False, score=float(scores[t]))
        for t in live[:beam_width]
    ]


def _beam_neural(
    bank: NeuralBank, k: int, context: TokenSeq, beam_width: int
) -> list[DecodeResult]:
    # candidates: everything except the unreachable reserved ids
    blocked = np.zeros(bank.vocab.size)
    blocked[[PAD, BOS]] = -np.inf

    alive: list[tuple[float, TokenSeq, np.ndarray]] = [
        (0.0, (), bank.init_state(k, context))
    ]
    finished: list[DecodeResult] = []
    for _ in range(bank.max_response_len):
        candidates: list[tuple[float, TokenSeq, np.ndarray, int]] = []
        for score, toks, state in alive:
            lsm = _log_softmax(bank.state_logits(state)) + blocked
            for tok in range(bank.vocab.size):
                if np.isfinite(lsm[tok]):
                    candidates.append((score + lsm[tok], toks, state, tok))
        candidates.sort(key=lambda c: (-c[0], c[1] + (c[3],)))
        alive = []
        for score, toks, state, tok in candidates[:beam_width]:
            seq = toks + (tok,)
            if tok == EOS:
                finished.append(DecodeResult(tokens=seq, truncated=False, score=score))
            else:
                alive.append((score, seq, bank.step_state(k, state, tok)))
        if not alive:
            break
    finished.extend(
        DecodeResult(tokens=toks, truncated=True, score=score)
        for score, toks, _ in alive
    )
    finished.sort(key=lambda r: (-r.score, r.tokens))
    return finished[:beam_width]
