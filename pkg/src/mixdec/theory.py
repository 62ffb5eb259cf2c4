"""Concentration bound for equal-assignment posteriors, checked empirically.

The claim under test: for a dataset D of i.i.d. samples and any estimate Q
of the mode posterior, for every mode z,

    | mean_D Q(z|c,r) - 1/K |  <=  eps + mean_D | Q(z|c,r) - p(z|c,r) |

holds with probability at least 1 - delta over the draw of D, where p is
the exact posterior, eps = sqrt(log(2K/delta) / (2|D|)) comes from a
Hoeffding bound plus union bound over the K modes, and the second term is a
plug-in estimate of the expected posterior gap computed on D itself.

The synthetic generative model makes p available in closed form, so trials
can resample whole datasets and measure how often the inequality holds.
Uniform mode weights are assumed by the 1/K centering; with skewed weights
the inequality is still computed but is not expected to concentrate.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .decoders.base import EOS, Sample
from .synthdata import CorpusSpec, LabeledCorpus, LabeledSample, gen_corpus

FloatArray = np.ndarray


def hoeffding_eps(n_decoders: int, dataset_size: int, delta: float) -> float:
    """sqrt(log(2K/delta) / (2|D|))."""
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if dataset_size < 1:
        raise ValueError("dataset_size must be >= 1")
    if n_decoders < 1:
        raise ValueError("n_decoders must be >= 1")
    return float(np.sqrt(np.log(2.0 * n_decoders / delta) / (2.0 * dataset_size)))


def empirical_deviation(q_values, n_decoders: int | None = None) -> FloatArray:
    """Per-mode |mean_D Q(z|.) - 1/K|."""
    q = np.asarray(q_values, dtype=float)
    if q.ndim != 2:
        raise ValueError(f"q_values must be 2-d, got shape {q.shape}")
    k = q.shape[1]
    if n_decoders is not None and n_decoders != k:
        raise ValueError(f"q_values has {k} columns, expected {n_decoders}")
    return np.abs(q.mean(axis=0) - 1.0 / k)


def posterior_gap(q_values, true_posteriors) -> FloatArray:
    """Per-mode mean_D |Q(z|.) - p(z|.)|, the plug-in gap estimate."""
    q = np.asarray(q_values, dtype=float)
    p = np.asarray(true_posteriors, dtype=float)
    if q.shape != p.shape:
        raise ValueError(f"shape mismatch: Q {q.shape} vs p {p.shape}")
    return np.abs(q - p).mean(axis=0)


@dataclass
class BoundReport:
    delta: float
    hoeffding_eps: float
    empirical_dev: FloatArray
    posterior_gap: FloatArray
    holds: np.ndarray

    @property
    def all_hold(self) -> bool:
        return bool(np.all(self.holds))


def make_report(q_values, true_posteriors, dataset_size, delta) -> BoundReport:
    q = np.asarray(q_values, dtype=float)
    eps = hoeffding_eps(q.shape[1], dataset_size, delta)
    dev = empirical_deviation(q)
    gap = posterior_gap(q, true_posteriors)
    return BoundReport(
        delta=delta, hoeffding_eps=eps, empirical_dev=dev, posterior_gap=gap,
        holds=dev <= eps + gap,
    )


def _sample_posterior_rows(
    corpus: LabeledCorpus, rng, n: int, materialize: bool = False
):
    """Draw n fresh samples from the corpus's generative model and return
    their exact posterior rows, grouped by (context, mode) for speed.

    Returns (p_rows, samples); samples is None unless materialize is set.
    """
    spec = corpus.spec
    m, v = spec.modes_per_context, spec.vocab_size
    rho, usable = spec.noise_rate, v - 3
    log_a = np.log(1.0 - rho + rho / usable)
    log_b = np.log(rho / usable) if rho > 0.0 else -np.inf
    weights = spec.weights

    cids = rng.integers(0, spec.n_contexts, size=n)
    modes = np.searchsorted(np.cumsum(weights), rng.random(n), side="right")
    p_rows = np.empty((n, m))
    samples: list | None = [None] * n if materialize else None

    for cid in range(spec.n_contexts):
        tpl_bodies = [np.asarray(t[:-1], dtype=np.int64)
                      for t in corpus.templates[cid]]
        for mode in range(m):
            idx = np.where((cids == cid) & (modes == mode))[0]
            if idx.size == 0:
                continue
            body = tpl_bodies[mode]
            length = body.shape[0]
            out = np.tile(body, (idx.size, 1))
            if rho > 0.0:
                flips = rng.random((idx.size, length)) < rho
                n_flips = int(flips.sum())
                if n_flips:
                    out[flips] = rng.integers(3, v, size=n_flips)
            loglik = np.full((idx.size, m), -np.inf)
            for other_mode, other in enumerate(tpl_bodies):
                if other.shape[0] != length:
                    continue
                matches = (out == other[None, :]).sum(axis=1)
                if np.isinf(log_b):
                    loglik[:, other_mode] = np.where(matches == length, 0.0, -np.inf)
                else:
                    loglik[:, other_mode] = (
                        matches * log_a + (length - matches) * log_b
                    )
            with np.errstate(divide="ignore"):
                score = loglik + np.log(weights)[None, :]
            score -= score.max(axis=1, keepdims=True)
            q = np.exp(score)
            p_rows[idx] = q / q.sum(axis=1, keepdims=True)
            if materialize:
                ctx = corpus.contexts[cid]
                for row, i in enumerate(idx):
                    resp = tuple(int(t) for t in out[row]) + (EOS,)
                    samples[i] = LabeledSample(Sample(ctx, resp), mode)
    return p_rows, samples


def bound_trials(
    corpus_spec: CorpusSpec,
    q_fn=None,
    delta: float = 0.05,
    n_trials: int = 100,
    seed: int = 0,
    needs_samples: bool = False,
) -> list[BoundReport]:
    """Resample `n_trials` datasets of the spec's training size and evaluate
    the inequality on each.

    q_fn maps (corpus, p_rows, samples) to an (n, K) posterior-estimate
    matrix; None uses the exact posterior (gap term identically zero).
    `samples` is None unless needs_samples is set, since materializing token
    sequences is the slow part. Contexts and templates are generated once
    and held fixed; only samples resample.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    # skip the big split draws; trials sample their own datasets
    corpus = gen_corpus(
        dataclasses.replace(corpus_spec, n_train=0, n_valid=0, n_test=0)
    )
    n = corpus_spec.n_train
    reports = []
    for trial in range(n_trials):
        rng = np.random.default_rng((seed, trial))
        p_rows, samples = _sample_posterior_rows(
            corpus, rng, n, materialize=q_fn is not None and needs_samples
        )
        q_rows = (
            p_rows if q_fn is None else np.asarray(q_fn(corpus, p_rows, samples))
        )
        reports.append(make_report(q_rows, p_rows, n, delta))
    return reports


def verify_theorem(
    corpus_spec: CorpusSpec,
    q_fn=None,
    delta: float = 0.05,
    n_trials: int = 100,
    seed: int = 0,
) -> float:
    """Fraction of resampled datasets on which the bound holds for every mode."""
    reports = bound_trials(corpus_spec, q_fn, delta, n_trials, seed)
    return sum(r.all_hold for r in reports) / len(reports)


def report_block(report: BoundReport) -> str:
    """Key-value text block for one trial."""
    fmt = lambda arr: " ".join(f"{x:.6f}" for x in np.asarray(arr, dtype=float))
    return "\n".join([
        f"delta {report.delta}",
        f"hoeffding_eps {report.hoeffding_eps:.6f}",
        f"empirical_dev {fmt(report.empirical_dev)}",
        f"posterior_gap {fmt(report.posterior_gap)}",
        f"holds {' '.join(str(int(h)) for h in report.holds)}",
        f"all_hold {int(report.all_hold)}",
    ])


def trials_summary(reports: list[BoundReport]) -> str:
    held = sum(r.all_hold for r in reports)
    return (
        f"bound held in {held}/{len(reports)} trials "
        f"(fraction {held / len(reports):.4f}, delta {reports[0].delta})"
    )
