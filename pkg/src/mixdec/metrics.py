"""Evaluation suite for multi-response generation.

BLEU here is the n <= 2 variant: geometric mean of modified unigram/bigram
precisions with multi-reference clipping and a brevity penalty against the
closest reference length. Any zero precision component is smoothed add-1
(numerator and denominator), so scores are never exactly zero for non-empty
hypotheses; an empty hypothesis scores 0 outright.

Precision/recall over a response set: precision averages, over hypotheses,
each hypothesis's best score against any single reference; recall swaps the
roles. Corpus precision and recall are means over contexts, and F is the
harmonic mean of the corpus-level pair.

Dist-n and Pairwise-BLEU are computed per context and averaged; a
corpus-level pooled Dist-n is available behind a switch.
"""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass

import numpy as np

TokenSeq = tuple[int, ...]

EOS_DEFAULT = 2


@dataclass(frozen=True)
class ResponseSet:
    """Hypotheses and references for one dialogue context."""

    hypotheses: tuple[TokenSeq, ...]
    references: tuple[TokenSeq, ...]

    def __post_init__(self):
        if not self.hypotheses:
            raise ValueError("hypotheses must be non-empty")
        if not self.references:
            raise ValueError("references must be non-empty")


def strip_eos(seq, eos: int = EOS_DEFAULT) -> TokenSeq:
    """Drop one trailing end-of-sequence token if present."""
    seq = tuple(seq)
    return seq[:-1] if seq and seq[-1] == eos else seq


def _ngram_counts(seq, n: int) -> Counter:
    return Counter(tuple(seq[i:i + n]) for i in range(len(seq) - n + 1))


def sentence_bleu(hyp, refs, max_n: int = 2) -> float:
    if max_n not in (1, 2):
        raise ValueError(f"max_n must be 1 or 2, got {max_n}")
    hyp = tuple(hyp)
    refs = [tuple(r) for r in refs]
    if not refs:
        raise ValueError("need at least one reference")
    if len(hyp) == 0:
        return 0.0
    log_p = 0.0
    for n in range(1, max_n + 1):
        counts = _ngram_counts(hyp, n)
        total = max(len(hyp) - n + 1, 0)
        clipped = 0
        if counts:
            best = Counter()
            for r in refs:
                rc = _ngram_counts(r, n)
                for g, c in rc.items():
                    if c > best[g]:
                        best[g] = c
            clipped = sum(min(c, best[g]) for g, c in counts.items())
        if clipped == 0:  # smoothed component (covers total == 0 too)
            log_p += np.log(1.0 / (total + 1.0))
        else:
            log_p += np.log(clipped / total)
    c = len(hyp)
    r_star = min((len(r) for r in refs), key=lambda L: (abs(L - c), L))
    bp = 1.0 if c >= r_star else float(np.exp(1.0 - r_star / c))
    return bp * float(np.exp(log_p / max_n))


def bleu_prf(sets, max_n: int = 2) -> tuple[float, float, float]:
    """(precision, recall, F) over a list of ResponseSets.

    Per context, precision is mean over hypotheses of the best single-ref
    score, recall is the mirror image; both are averaged over contexts and F
    is taken of the averages.
    """
    if not sets:
        raise ValueError("need at least one response set")
    p_vals, r_vals = [], []
    for rs in sets:
        p_vals.append(np.mean([
            max(sentence_bleu(h, [r], max_n) for r in rs.references)
            for h in rs.hypotheses
        ]))
        r_vals.append(np.mean([
            max(sentence_bleu(r, [h], max_n) for h in rs.hypotheses)
            for r in rs.references
        ]))
    p, r = float(np.mean(p_vals)), float(np.mean(r_vals))
    f = 0.0 if p + r == 0.0 else 2.0 * p * r / (p + r)
    return p, r, f


def dist_n(hyps, n: int) -> float:
    """Unique n-grams over total n-grams across one context's hypotheses."""
    if n not in (1, 2):
        raise ValueError(f"n must be 1 or 2, got {n}")
    seen: set = set()
    total = 0
    for h in hyps:
        h = tuple(h)
        for i in range(len(h) - n + 1):
            seen.add(h[i:i + n])
            total += 1
    return len(seen) / total if total else 0.0


def corpus_dist_n(sets, n: int, level: str = "context") -> float:
    """Mean of per-context dist_n by default; level="corpus" pools all
    hypotheses into one bag first."""
    if level == "context":
        return float(np.mean([dist_n(rs.hypotheses, n) for rs in sets]))
    if level == "corpus":
        pooled = [h for rs in sets for h in rs.hypotheses]
        return dist_n(pooled, n)
    raise ValueError(f"level must be context or corpus, got {level!r}")


def pairwise_bleu(hyps) -> float | None:
    """Mean over ordered pairs i != j of sentence_bleu(H_i, {H_j}); None when
    fewer than two hypotheses make the quantity undefined."""
    hyps = [tuple(h) for h in hyps]
    if len(hyps) < 2:
        return None
    scores = [
        sentence_bleu(hyps[i], [hyps[j]], 2)
        for i in range(len(hyps))
        for j in range(len(hyps))
        if i != j
    ]
    return float(np.mean(scores))


def corpus_pairwise_bleu(sets) -> float | None:
    vals = [pairwise_bleu(rs.hypotheses) for rs in sets]
    if any(v is None for v in vals):
        return None
    return float(np.mean(vals))


def assignment_stats(log) -> list[tuple[float, float]]:
    """Per-decoder (mean, std) of the assigned fraction across iterations."""
    if not log.records:
        raise ValueError("log has no iterations")
    counts = log.counts_matrix()
    frac = counts / counts.sum(axis=1, keepdims=True)
    return [
        (float(m), float(s))
        for m, s in zip(frac.mean(axis=0), frac.std(axis=0))
    ]


def mode_coverage(hyps, planted_modes, threshold: float = 0.6) -> float:
    """Fraction of planted mode templates matched by some hypothesis at
    sentence BLEU-2 >= threshold."""
    if not 0.0 < threshold <= 1.0:
        raise ValueError("threshold must lie in (0, 1]")
    if not planted_modes:
        raise ValueError("need at least one planted mode")
    hit = sum(
        1 for m in planted_modes
        if any(sentence_bleu(h, [m], 2) >= threshold for h in hyps)
    )
    return hit / len(planted_modes)


# ---- reports -------------------------------------------------------------------


@dataclass
class MetricsReport:
    """Corpus-level metric bundle; raw values in [0, 1], scaled x100 on file
    output. pairwise_bleu is None when any context has a single hypothesis."""

    bleu1_p: float
    bleu1_r: float
    bleu1_f: float
    bleu2_p: float
    bleu2_r: float
    bleu2_f: float
    dist1: float
    dist2: float
    pairwise_bleu: float | None
    assignment: list[tuple[float, float]] | None = None


def compute_metrics(sets, log=None) -> MetricsReport:
    p1, r1, f1 = bleu_prf(sets, 1)
    p2, r2, f2 = bleu_prf(sets, 2)
    return MetricsReport(
        bleu1_p=p1, bleu1_r=r1, bleu1_f=f1,
        bleu2_p=p2, bleu2_r=r2, bleu2_f=f2,
        dist1=corpus_dist_n(sets, 1),
        dist2=corpus_dist_n(sets, 2),
        pairwise_bleu=corpus_pairwise_bleu(sets),
        assignment=None if log is None else assignment_stats(log),
    )


_SCALED_FIELDS = (
    "bleu1_f", "bleu1_p", "bleu1_r", "bleu2_f", "bleu2_p", "bleu2_r",
    "dist1", "dist2", "pairwise_bleu",
)


def write_report_kv(path: str, report: MetricsReport) -> None:
    """Flat key-value lines, x100; absent pairwise key is simply omitted."""
    with open(path, "w", encoding="utf-8") as fh:
        for name in _SCALED_FIELDS:
            value = getattr(report, name)
            if value is None:
                continue
            fh.write(f"{name} {100.0 * value:.4f}\n")
        if report.assignment is not None:
            means = " ".join(f"{m:.6f}" for m, _ in report.assignment)
            stds = " ".join(f"{s:.6f}" for _, s in report.assignment)
            fh.write(f"assignment_mean {means}\n")
            fh.write(f"assignment_std {stds}\n")


def read_report_kv(path: str) -> dict:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            name, *vals = line.split()
            out[name] = [float(v) for v in vals] if len(vals) > 1 else float(vals[0])
    return out


def write_report_csv(path: str, rows: dict[str, MetricsReport]) -> None:
    """One line per model, columns matching the usual results-table layout."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", *_SCALED_FIELDS])
        for label, report in rows.items():
            cells = [label]
            for name in _SCALED_FIELDS:
                value = getattr(report, name)
                cells.append("" if value is None else f"{100.0 * value:.4f}")
            writer.writerow(cells)
