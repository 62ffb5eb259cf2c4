"""Synthetic one-to-many dialogue corpora with planted response modes.

Each context gets M distinct response templates. A sample picks a context
uniformly, a mode by `mode_weights`, then copies that mode's template and
substitutes each body token independently with probability `noise_rate`
(replacement drawn uniformly over the usable vocab, original included, so
the per-token match probability is 1 - rho + rho/U). The final EOS is never
noised. Because the generative model is this simple, the exact Bayes
posterior over modes is a closed-form product, which downstream bound
checks rely on.
"""

from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .decoders.base import EOS, MAX_RESPONSE_LEN, Sample, Vocab

logger = logging.getLogger(__name__)

TokenSeq = tuple[int, ...]


@dataclass(frozen=True)
class CorpusSpec:
    """Full recipe for a corpus; generation is a pure function of this."""

    vocab_size: int = 50
    n_contexts: int = 20
    modes_per_context: int = 4
    context_len: tuple[int, int] = (3, 6)
    template_len: tuple[int, int] = (6, 10)
    noise_rate: float = 0.05
    mode_weights: tuple[float, ...] | None = None  # None means uniform
    n_train: int = 20_000
    n_valid: int = 2_000
    n_test: int = 2_000
    seed: int = 0

    def __post_init__(self):
        if self.modes_per_context < 1:
            raise ValueError("modes_per_context must be >= 1")
        if not 0.0 <= self.noise_rate <= 0.3:
            raise ValueError(f"noise_rate must be in [0, 0.3], got {self.noise_rate}")
        lo, hi = self.template_len
        if not 1 <= lo <= hi:
            raise ValueError(f"bad template_len range {self.template_len}")
        if hi + 1 > MAX_RESPONSE_LEN:
            raise ValueError(f"template_len {hi} + EOS exceeds cap {MAX_RESPONSE_LEN}")
        clo, chi = self.context_len
        if not 1 <= clo <= chi:
            raise ValueError(f"bad context_len range {self.context_len}")
        if self.mode_weights is not None:
            w = np.asarray(self.mode_weights, dtype=float)
            if w.shape != (self.modes_per_context,):
                raise ValueError("mode_weights length must equal modes_per_context")
            if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
                raise ValueError("mode_weights must be a distribution")
        for name in ("n_train", "n_valid", "n_test"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.vocab_size < 4:
            raise ValueError("vocab_size must leave at least one usable token")

    @property
    def weights(self) -> np.ndarray:
        m = self.modes_per_context
        if self.mode_weights is None:
            return np.full(m, 1.0 / m)
        return np.asarray(self.mode_weights, dtype=float)


@dataclass(frozen=True)
class LabeledSample:
    sample: Sample
    mode: int


@dataclass
class LabeledCorpus:
    spec: CorpusSpec
    vocab: Vocab
    contexts: list[TokenSeq]
    templates: list[list[TokenSeq]]  # templates[context_id][mode]
    train: list[LabeledSample]
    valid: list[LabeledSample]
    test: list[LabeledSample]

    def context_id(self, context: TokenSeq) -> int:
        try:
            return self._context_index[tuple(context)]
        except AttributeError:
            self._context_index = {c: i for i, c in enumerate(self.contexts)}
            return self.context_id(context)
        except KeyError:
            raise ValueError(f"unknown context {context!r}") from None


def _distinct_seqs(rng, count, length_range, vocab_size, taken=()):
    """Draw `count` distinct token tuples over the usable vocab."""
    lo, hi = length_range
    seen = set(taken)
    out = []
    while len(out) < count:
        n = int(rng.integers(lo, hi + 1))
        seq = tuple(int(t) for t in rng.integers(3, vocab_size, size=n))
        if seq not in seen:
            seen.add(seq)
            out.append(seq)
    return out


def _draw_split(rng, spec: CorpusSpec, contexts, templates, n: int):
    out = []
    for _ in range(n):
        cid = int(rng.integers(0, spec.n_contexts))
        mode = int(rng.choice(spec.modes_per_context, p=spec.weights))
        body = np.array(templates[cid][mode][:-1], dtype=np.int64)
        flips = rng.random(body.shape[0]) < spec.noise_rate
        if flips.any():
            body[flips] = rng.integers(3, spec.vocab_size, size=int(flips.sum()))
        response = tuple(int(t) for t in body) + (EOS,)
        out.append(LabeledSample(Sample(contexts[cid], response), mode))
    return out


def gen_corpus(spec: CorpusSpec) -> LabeledCorpus:
    """Generate train/valid/test splits; deterministic in spec.seed.

    Valid and test are cleaned of exact (context, response) overlap with
    earlier splits, so their sizes can come out below the requested counts.
    """
    rng = np.random.default_rng(spec.seed)
    vocab = Vocab(spec.vocab_size)
    contexts = _distinct_seqs(rng, spec.n_contexts, spec.context_len, spec.vocab_size)
    templates = []
    for _ in range(spec.n_contexts):
        bodies = _distinct_seqs(
            rng, spec.modes_per_context, spec.template_len, spec.vocab_size
        )
        templates.append([b + (EOS,) for b in bodies])
    corpus = LabeledCorpus(
        spec=spec,
        vocab=vocab,
        contexts=contexts,
        templates=templates,
        train=_draw_split(rng, spec, contexts, templates, spec.n_train),
        valid=_draw_split(rng, spec, contexts, templates, spec.n_valid),
        test=_draw_split(rng, spec, contexts, templates, spec.n_test),
    )
    return dedup_splits(corpus)


def dedup_splits(corpus: LabeledCorpus) -> LabeledCorpus:
    """Drop valid samples whose exact (context, response) pair occurs in
    train, and test samples occurring in train or valid."""
    train_pairs = {(s.sample.context, s.sample.response) for s in corpus.train}
    valid = [
        s for s in corpus.valid
        if (s.sample.context, s.sample.response) not in train_pairs
    ]
    earlier = train_pairs | {(s.sample.context, s.sample.response) for s in valid}
    test = [
        s for s in corpus.test
        if (s.sample.context, s.sample.response) not in earlier
    ]
    removed_valid = len(corpus.valid) - len(valid)
    removed_test = len(corpus.test) - len(test)
    if removed_valid or removed_test:
        logger.info(
            "dedup removed %d valid and %d test samples", removed_valid, removed_test
        )
    return LabeledCorpus(
        spec=corpus.spec,
        vocab=corpus.vocab,
        contexts=corpus.contexts,
        templates=corpus.templates,
        train=list(corpus.train),
        valid=valid,
        test=test,
    )


def true_posterior(
    corpus: LabeledCorpus, context: TokenSeq, response: TokenSeq
) -> np.ndarray:
    """Exact Bayes posterior over modes for a (context, response) pair.

    Works in log space; a response assigning zero probability to every mode
    (wrong length for all templates, or out-of-vocab tokens) is a domain
    error rather than a silent uniform fallback.
    """
    cid = corpus.context_id(context)
    spec = corpus.spec
    rho = spec.noise_rate
    n_usable = spec.vocab_size - 3
    log_match = np.log(1.0 - rho + rho / n_usable)
    log_miss = np.log(rho / n_usable) if rho > 0.0 else -np.inf

    resp = tuple(response)
    log_lik = np.full(spec.modes_per_context, -np.inf)
    for m, tpl in enumerate(corpus.templates[cid]):
        if len(tpl) != len(resp) or resp[-1] != EOS:
            continue
        total = 0.0
        for got, want in zip(resp[:-1], tpl[:-1]):
            if got == want:
                total += log_match
            elif 3 <= got < spec.vocab_size:
                total += log_miss
            else:
                total = -np.inf
            if total == -np.inf:
                break
        log_lik[m] = total

    with np.errstate(divide="ignore"):
        log_post = log_lik + np.log(spec.weights)
    peak = log_post.max()
    if peak == -np.inf:
        raise ValueError("response has zero probability under every mode")
    post = np.exp(log_post - peak)
    return post / post.sum()


# ---- corpus files -------------------------------------------------------------
#
# One TSV per split at <stem>.<split>.tsv. Line format:
#   context_tokens TAB response_tokens TAB mode_label
# with space-separated integer ids. The first line is a header carrying the
# spec as JSON, so a loader can regenerate contexts and templates exactly.

_HEADER_PREFIX = "# spec="
SPLITS = ("train", "valid", "test")


def spec_to_json(spec: CorpusSpec) -> str:
    return json.dumps(dataclasses.asdict(spec), sort_keys=True)


def spec_from_json(text: str) -> CorpusSpec:
    raw = json.loads(text)
    for key in ("context_len", "template_len"):
        raw[key] = tuple(raw[key])
    if raw.get("mode_weights") is not None:
        raw["mode_weights"] = tuple(raw["mode_weights"])
    return CorpusSpec(**raw)


def _split_path(stem: str, split: str) -> str:
    return f"{stem}.{split}.tsv"


def save_corpus(stem: str, corpus: LabeledCorpus) -> list[str]:
    """Write the three split files; returns their paths."""
    header = _HEADER_PREFIX + spec_to_json(corpus.spec)
    paths = []
    for split in SPLITS:
        path = _split_path(stem, split)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(header + "\n")
            for item in getattr(corpus, split):
                ctx = " ".join(map(str, item.sample.context))
                resp = " ".join(map(str, item.sample.response))
                fh.write(f"{ctx}\t{resp}\t{item.mode}\n")
        paths.append(path)
    return paths


def load_corpus(stem: str) -> LabeledCorpus:
    """Rebuild a corpus from split files.

    Contexts and templates are regenerated from the header spec (generation
    is pure), then the stored samples replace the generated splits.
    """
    specs = {}
    samples: dict[str, list[LabeledSample]] = {}
    for split in SPLITS:
        path = _split_path(stem, split)
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().rstrip("\n")
            if not header.startswith(_HEADER_PREFIX):
                raise ValueError(f"{path}: missing spec header")
            specs[split] = header[len(_HEADER_PREFIX):]
            rows = []
            for lineno, line in enumerate(fh, start=2):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 3:
                    raise ValueError(f"{path}:{lineno}: expected 3 tab fields")
                ctx = tuple(int(t) for t in parts[0].split())
                resp = tuple(int(t) for t in parts[1].split())
                rows.append(LabeledSample(Sample(ctx, resp), int(parts[2])))
            samples[split] = rows
    if len(set(specs.values())) != 1:
        raise ValueError("split files carry different specs")
    spec = spec_from_json(specs["train"])
    skeleton = gen_corpus(spec)
    return LabeledCorpus(
        spec=spec,
        vocab=skeleton.vocab,
        contexts=skeleton.contexts,
        templates=skeleton.templates,
        train=samples["train"],
        valid=samples["valid"],
        test=samples["test"],
    )
