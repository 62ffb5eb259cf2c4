"""Tabular decoder family: categorical template tables with closed-form M-step.

Each decoder k holds, per known context id, a categorical distribution over
a fixed finite set of response templates.  Exactly solvable, so EM behavior
(e.g. marginal-likelihood monotonicity) can be checked without gradient
noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .base import Sample, Vocab

FloatArray = NDArray[np.float64]

TokenSeq = tuple[int, ...]


@dataclass
class TabularBank:
    """K categorical decoders over (context id, template id) cells.

    ``tables`` has shape (K, C, T); every (k, c) row sums to 1.  Unknown
    contexts are domain errors; a response outside the template set simply
    has probability 0 (log-prob -inf), which only matters when alpha == 0.
    """

    vocab: Vocab
    n_decoders: int
    alpha: float
    contexts: list[TokenSeq]
    templates: list[TokenSeq]
    tables: FloatArray
    _context_index: dict[TokenSeq, int] = field(init=False, repr=False)
    _template_index: dict[TokenSeq, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        k, c, t = self.tables.shape
        if (k, c, t) != (self.n_decoders, len(self.contexts), len(self.templates)):
            raise ValueError(
                f"tables shape {self.tables.shape} inconsistent with "
                f"K={self.n_decoders}, C={len(self.contexts)}, T={len(self.templates)}"
            )
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        self._context_index = {c_: i for i, c_ in enumerate(self.contexts)}
        self._template_index = {t_: i for i, t_ in enumerate(self.templates)}

    @property
    def family(self) -> str:
        return "tabular"

    def context_id(self, context: TokenSeq) -> int:
        try:
            return self._context_index[tuple(context)]
        except KeyError:
            raise ValueError(f"unknown context {tuple(context)}") from None

    def template_id(self, response: TokenSeq) -> int | None:
        return self._template_index.get(tuple(response))

    def log_prob(self, k: int, context: TokenSeq, response: TokenSeq) -> float:
        if not 0 <= k < self.n_decoders:
            raise ValueError(f"decoder index {k} out of range")
        cid = self.context_id(context)
        tid = self.template_id(response)
        if tid is None:
            return float("-inf")
        p = self.tables[k, cid, tid]
        if p <= 0.0:
            return float("-inf")
        return float(np.log(p))


def init_tabular_bank(
    vocab: Vocab,
    n_decoders: int,
    contexts: list[TokenSeq],
    templates: list[TokenSeq],
    alpha: float = 0.1,
) -> TabularBank:
    """Bank with uniform tables (every template equally likely everywhere)."""
    c, t = len(contexts), len(templates)
    if c == 0 or t == 0:
        raise ValueError("need at least one context and one template")
    tables = np.full((n_decoders, c, t), 1.0 / t)
    return TabularBank(
        vocab=vocab,
        n_decoders=n_decoders,
        alpha=alpha,
        contexts=[tuple(x) for x in contexts],
        templates=[tuple(x) for x in templates],
        tables=tables,
    )


def tabular_bank_from_data(
    vocab: Vocab,
    n_decoders: int,
    samples: list[Sample],
    alpha: float = 0.1,
) -> TabularBank:
    """Derive the context/template inventory from data (first-seen order)."""
    contexts: dict[TokenSeq, None] = {}
    templates: dict[TokenSeq, None] = {}
    for s in samples:
        contexts.setdefault(tuple(s.context), None)
        templates.setdefault(tuple(s.response), None)
    return init_tabular_bank(
        vocab, n_decoders, list(contexts), list(templates), alpha=alpha
    )


def tabular_mstep(bank: TabularBank, counts: FloatArray) -> None:
    """Closed-form M-step: table[k,c,t] = (count + alpha) / (sum + alpha*T).

    ``counts`` holds the weighted response counts accumulated by the E-step,
    shape (K, C, T), all entries >= 0.  With alpha == 0 a (k, c) row that
    received no mass has no maximizer; its previous distribution is kept.
    """
    counts = np.asarray(counts, dtype=np.float64)
    if counts.shape != bank.tables.shape:
        raise ValueError(
            f"counts shape {counts.shape} != tables shape {bank.tables.shape}"
        )
    if (counts < 0).any():
        raise ValueError("counts must be non-negative")
    t = counts.shape[2]
    denom = counts.sum(axis=2, keepdims=True) + bank.alpha * t
    with np.errstate(invalid="ignore"):
        new = (counts + bank.alpha) / denom
    empty = denom[:, :, 0] == 0.0  # only possible when alpha == 0
    if empty.any():
        new[empty] = bank.tables[empty]
    bank.tables = new
