"""EM training of decoder mixtures with five assignment rules.

The E-step scores every sample under every decoder, turns the scores into a
posterior, then picks M-step weights one of five ways:

  SoftEM           weights are the posterior rows
  HardEM           argmax per row, no quota
  EqHardEM         balanced assignment, exactly N/K samples per decoder
  EqRandomFixed    quota-exact assignment frozen per sample before training
  EqRandomDynamic  fresh quota-exact random assignment every iteration

The M-step takes one weighted gradient step per (sample, decoder) pair for
neural banks, or a closed-form count update for tabular banks. Dropout is
disabled while scoring the E-step unless explicitly re-enabled, and M-step
dropout masks are shared across decoders for a given (iteration, sample) so
identically initialized decoders receive identical updates.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .assignment import balanced_assign
from .decoders import (
    NeuralBank,
    TabularBank,
    grad_step,
    greedy_decode,
    log_prob,
    tabular_mstep,
)

FloatArray = np.ndarray
IntArray = np.ndarray

VARIANTS = ("SoftEM", "HardEM", "EqHardEM", "EqRandomFixed", "EqRandomDynamic")
PRIORS = ("Uniform", "Learned")
COST_SOURCES = ("Posterior", "LogLikelihood")

LOG_FIELDS = (
    "iter", "variant", "mll", "counts", "t_estep_ms", "t_hungarian_ms", "t_mstep_ms",
)
TIMING_FIELDS = ("t_estep_ms", "t_hungarian_ms", "t_mstep_ms")


@dataclass(frozen=True)
class TrainConfig:
    variant: str = "EqHardEM"
    n_decoders: int = 10
    estep_batch: int = 640
    per_decoder: int | None = None  # derived as estep_batch // n_decoders
    lr: float = 0.05
    epochs: int = 1
    seed: int = 0
    prior: str = "Uniform"
    estep_dropout: bool = False
    cost_source: str = "Posterior"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.prior not in PRIORS:
            raise ValueError(f"prior must be one of {PRIORS}, got {self.prior!r}")
        if self.cost_source not in COST_SOURCES:
            raise ValueError(
                f"cost_source must be one of {COST_SOURCES}, got {self.cost_source!r}"
            )
        if self.n_decoders < 1:
            raise ValueError("n_decoders must be >= 1")
        if self.estep_batch % self.n_decoders != 0:
            raise ValueError(
                f"estep_batch {self.estep_batch} not divisible by K={self.n_decoders}"
            )
        expected = self.estep_batch // self.n_decoders
        if self.per_decoder is None:
            object.__setattr__(self, "per_decoder", expected)
        elif self.per_decoder != expected:
            raise ValueError(
                f"per_decoder {self.per_decoder} != estep_batch/K = {expected}"
            )
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.epochs < 0:  # zero epochs = no-op run, a valid degenerate
            raise ValueError("epochs must be >= 0")


# ---- priors -------------------------------------------------------------------


class UniformPrior:
    """P(z=k | c) = 1/K for every context."""

    def __init__(self, n_decoders: int):
        self.n_decoders = n_decoders

    def prior(self, context) -> FloatArray:
        return np.full(self.n_decoders, 1.0 / self.n_decoders)

    def update(self, contexts, weights: FloatArray) -> None:
        pass


class LearnedPrior:
    """Context-conditioned categorical over decoders, fit by accumulating the
    E-step's decoder choices (soft rows or one-hot picks) per context."""

    def __init__(self, n_decoders: int, smoothing: float = 1.0):
        if smoothing <= 0:
            raise ValueError("smoothing must be positive to keep priors valid")
        self.n_decoders = n_decoders
        self.smoothing = smoothing
        self._counts: dict[tuple[int, ...], FloatArray] = {}

    def prior(self, context) -> FloatArray:
        counts = self._counts.get(tuple(context))
        if counts is None:
            return np.full(self.n_decoders, 1.0 / self.n_decoders)
        total = counts.sum() + self.smoothing * self.n_decoders
        return (counts + self.smoothing) / total

    def update(self, contexts, weights: FloatArray) -> None:
        w = np.asarray(weights, dtype=float)
        for ctx, row in zip(contexts, w):
            key = tuple(ctx)
            if key not in self._counts:
                self._counts[key] = np.zeros(self.n_decoders)
            self._counts[key] += row


def make_prior(name: str, n_decoders: int):
    if name == "Uniform":
        return UniformPrior(n_decoders)
    if name == "Learned":
        return LearnedPrior(n_decoders)
    raise ValueError(f"prior must be one of {PRIORS}, got {name!r}")


# ---- E-step -------------------------------------------------------------------


def posterior(loglik: FloatArray, prior, contexts) -> FloatArray:
    """Q[n,k] proportional to prior_k(c_n) * exp(loglik[n,k]), row-normalized.

    Computed in log space with row-max subtraction. Rows of -inf across the
    board (a sample impossible under every decoder) are rejected.
    """
    ll = np.asarray(loglik, dtype=float)
    if ll.ndim != 2:
        raise ValueError(f"loglik must be 2-d, got shape {ll.shape}")
    if np.isnan(ll).any():
        raise ValueError("loglik contains NaN")
    with np.errstate(divide="ignore"):
        log_prior = np.log(np.stack([prior.prior(c) for c in contexts]))
    score = ll + log_prior
    peak = score.max(axis=1, keepdims=True)
    if not np.all(np.isfinite(peak)):
        raise ValueError("a sample has zero likelihood under every decoder")
    q = np.exp(score - peak)
    return q / q.sum(axis=1, keepdims=True)


def estep_soft(q: FloatArray) -> FloatArray:
    """M-step weights are the posterior rows themselves."""
    return np.array(q, dtype=float)


def estep_hard(q: FloatArray) -> IntArray:
    """Winner-take-all: argmax per row, ties to the lowest index. No quota."""
    return np.argmax(np.asarray(q), axis=1)


def estep_eqhard(scores: FloatArray) -> IntArray:
    """Quota-exact assignment minimizing total cost -scores.

    `scores` is the posterior matrix by default, or raw log-likelihoods when
    cost_source says so; either way higher is better, so the assignment
    problem minimizes the negated matrix. The decoder count is the column
    count.
    """
    return balanced_assign(-np.asarray(scores, dtype=float))


def fixed_decoder(sample_id: int, seed: int, n_decoders: int) -> int:
    """Pre-training decoder choice for one sample; pure in (sample_id, seed)."""
    rng = np.random.default_rng((seed, int(sample_id)))
    return int(rng.integers(n_decoders))


def estep_eqrandom(
    n_samples: int,
    n_decoders: int,
    mode: str,
    seed: int,
    sample_ids=None,
    counter: int = 0,
) -> IntArray:
    """Random quota-exact assignment.

    Fixed mode looks up each sample's frozen decoder (see fixed_decoder) and
    demands the batch happens to satisfy the quota; the train loop arranges
    that by stratified batching. Dynamic mode deals a fresh seeded shuffle,
    distinguished by `counter`, typically the global iteration index.
    """
    if n_samples % n_decoders != 0:
        raise ValueError(f"quota violated: {n_samples} not divisible by {n_decoders}")
    per = n_samples // n_decoders
    if mode == "Fixed":
        if sample_ids is None:
            raise ValueError("Fixed mode needs sample_ids")
        if len(sample_ids) != n_samples:
            raise ValueError("sample_ids length mismatch")
        out = np.array(
            [fixed_decoder(sid, seed, n_decoders) for sid in sample_ids],
            dtype=np.int64,
        )
        if np.any(np.bincount(out, minlength=n_decoders) != per):
            raise ValueError("quota violated: batch is not stratified by sample id")
        return out
    if mode == "Dynamic":
        rng = np.random.default_rng((seed, int(counter)))
        out = np.empty(n_samples, dtype=np.int64)
        out[rng.permutation(n_samples)] = np.arange(n_samples) // per
        return out
    raise ValueError(f"mode must be Fixed or Dynamic, got {mode!r}")


def one_hot_weights(assignment: IntArray, n_decoders: int) -> FloatArray:
    a = np.asarray(assignment)
    w = np.zeros((a.shape[0], n_decoders))
    w[np.arange(a.shape[0]), a] = 1.0
    return w


# ---- scoring and M-step ---------------------------------------------------------


def loglik_matrix(bank, samples, dropout_seeds=None) -> FloatArray:
    """N x K matrix of log P(response | context, decoder k).

    dropout_seeds, when given, is one seed per sample, shared across decoders
    so every decoder sees the same masks for the same sample.
    """
    n, k = len(samples), bank.n_decoders
    out = np.empty((n, k))
    for i, s in enumerate(samples):
        seed = None if dropout_seeds is None else dropout_seeds[i]
        for j in range(k):
            out[i, j] = log_prob(bank, j, s.context, s.response, dropout_seed=seed)
    return out


def marginal_log_likelihood(loglik: FloatArray) -> float:
    """Sum over samples of log mean_k P(r|c,k): the uniform-mixture objective,
    logged for every variant so curves are comparable."""
    ll = np.asarray(loglik, dtype=float)
    peak = ll.max(axis=1, keepdims=True)
    mix = peak[:, 0] + np.log(np.mean(np.exp(ll - peak), axis=1))
    return float(mix.sum())


def mstep(
    bank,
    samples,
    weights: FloatArray,
    lr: float,
    *,
    update_shared: bool = False,
    dropout_seeds=None,
) -> None:
    """One pass of weighted updates; zero-weight pairs are skipped entirely.

    `weights` is N x K (soft) or a length-N assignment vector (hard). Neural
    banks take one grad_step per surviving pair; tabular banks accumulate
    weighted template counts and renormalize in closed form.
    """
    w = np.asarray(weights)
    if w.ndim == 1:
        w = one_hot_weights(w, bank.n_decoders)
    if w.shape != (len(samples), bank.n_decoders):
        raise ValueError(f"weights shape {w.shape} does not match batch")
    if isinstance(bank, TabularBank):
        counts = np.zeros_like(bank.tables)
        for i, s in enumerate(samples):
            cid = bank.context_id(s.context)
            tid = bank.template_id(s.response)
            if tid is None:
                raise ValueError(f"response {s.response!r} is not a known template")
            counts[:, cid, tid] += w[i]
        tabular_mstep(bank, counts)
        return
    for i, s in enumerate(samples):
        seed = None if dropout_seeds is None else dropout_seeds[i]
        for k in range(bank.n_decoders):
            if w[i, k] == 0.0:
                continue
            grad_step(
                bank, k, s.context, s.response, weight=float(w[i, k]), lr=lr,
                update_shared=update_shared, dropout_seed=seed,
            )


# ---- train loop -----------------------------------------------------------------


@dataclass
class TrainLog:
    records: list[dict] = field(default_factory=list)

    def counts_matrix(self) -> FloatArray:
        return np.array([r["counts"] for r in self.records], dtype=float)

    def mll_curve(self) -> FloatArray:
        return np.array([r["mll"] for r in self.records], dtype=float)


def save_train_log(path: str, log: TrainLog) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in log.records:
            fh.write(json.dumps({k: rec[k] for k in LOG_FIELDS}) + "\n")


def load_train_log(path: str) -> TrainLog:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return TrainLog(records)


def logs_equivalent(a: TrainLog, b: TrainLog) -> bool:
    """Equality on everything except wall-clock fields."""
    if len(a.records) != len(b.records):
        return False
    keep = [f for f in LOG_FIELDS if f not in TIMING_FIELDS]
    return all(
        [ra[f] for f in keep] == [rb[f] for f in keep]
        for ra, rb in zip(a.records, b.records)
    )


def _batch_indices(config: TrainConfig, n_total: int, rng) -> list[np.ndarray]:
    """Mega-batches for one epoch: slices of a seeded shuffle, stratified by
    the frozen decoder map for EqRandomFixed, partial tail dropped."""
    n, k, per = config.estep_batch, config.n_decoders, config.per_decoder
    if config.variant != "EqRandomFixed":
        order = rng.permutation(n_total)
        n_batches = n_total // n
        return [order[j * n:(j + 1) * n] for j in range(n_batches)]
    groups = [[] for _ in range(k)]
    for i in range(n_total):
        groups[fixed_decoder(i, config.seed, k)].append(i)
    pools = [rng.permutation(np.array(g, dtype=np.int64)) for g in groups]
    n_batches = min(len(p) // per for p in pools)
    return [
        np.concatenate([p[j * per:(j + 1) * per] for p in pools])
        for j in range(n_batches)
    ]


def _estep_weights(config, q, loglik, batch_ids, iteration):
    """Dispatch on variant; returns (weights-or-assignment, hungarian_ms)."""
    if config.variant == "SoftEM":
        return estep_soft(q), 0.0
    if config.variant == "HardEM":
        return estep_hard(q), 0.0
    if config.variant == "EqHardEM":
        scores = q if config.cost_source == "Posterior" else loglik
        t0 = time.perf_counter()
        assignment = estep_eqhard(scores)
        return assignment, (time.perf_counter() - t0) * 1e3
    mode = "Fixed" if config.variant == "EqRandomFixed" else "Dynamic"
    assignment = estep_eqrandom(
        len(batch_ids), config.n_decoders, mode, config.seed,
        sample_ids=batch_ids, counter=iteration,
    )
    return assignment, 0.0


def train(config: TrainConfig, samples, bank, prior_model=None):
    """Run EM for config.epochs passes over `samples`; returns (bank, log).

    The bank is updated in place. Shared parameters stay frozen; only the
    per-decoder pieces move (adapters for neural banks, tables for tabular),
    matching the two-stage recipe where a shared decoder is pretrained first.
    """
    if bank.n_decoders != config.n_decoders:
        raise ValueError(
            f"bank has {bank.n_decoders} decoders, config says {config.n_decoders}"
        )
    if len(samples) < config.estep_batch:
        raise ValueError(
            f"dataset of {len(samples)} is smaller than one mega-batch "
            f"of {config.estep_batch}"
        )
    if prior_model is None:
        prior_model = make_prior(config.prior, config.n_decoders)
    rng = np.random.default_rng(config.seed)
    neural = isinstance(bank, NeuralBank)
    log = TrainLog()
    iteration = 0
    for epoch in range(config.epochs):
        for batch_ids in _batch_indices(config, len(samples), rng):
            batch = [samples[i] for i in batch_ids]
            contexts = [s.context for s in batch]
            t0 = time.perf_counter()
            estep_seeds = (
                [(config.seed, 1, iteration, int(i)) for i in batch_ids]
                if (neural and config.estep_dropout) else None
            )
            loglik = loglik_matrix(bank, batch, dropout_seeds=estep_seeds)
            q = posterior(loglik, prior_model, contexts)
            weights, t_hung = _estep_weights(config, q, loglik, batch_ids, iteration)
            t_estep = (time.perf_counter() - t0) * 1e3

            if np.ndim(weights) == 1:
                counts = np.bincount(weights, minlength=config.n_decoders)
                counts_out = [int(c) for c in counts]
            else:
                counts_out = [float(c) for c in weights.sum(axis=0)]

            t1 = time.perf_counter()
            mstep_seeds = (
                [(config.seed, 0, iteration, int(i)) for i in batch_ids]
                if neural else None
            )
            mstep(bank, batch, weights, config.lr, dropout_seeds=mstep_seeds)
            prior_model.update(contexts, np.asarray(
                weights if np.ndim(weights) == 2
                else one_hot_weights(weights, config.n_decoders)
            ))
            t_mstep = (time.perf_counter() - t1) * 1e3

            log.records.append({
                "iter": iteration,
                "variant": config.variant,
                "mll": marginal_log_likelihood(loglik),
                "counts": counts_out,
                "t_estep_ms": t_estep,
                "t_hungarian_ms": t_hung,
                "t_mstep_ms": t_mstep,
            })
            iteration += 1
    return bank, log


def stage1_train(
    bank: NeuralBank, samples, *, epochs: int = 1, lr: float = 0.05, seed: int = 0
) -> float:
    """Pretrain the shared decoder body by plain maximum likelihood.

    Every sample is scored through decoder 0 with adapters left untouched, so
    with tied (identity) adapters this is exactly single-decoder training.
    Returns the mean training log-likelihood of the final epoch.
    """
    rng = np.random.default_rng(seed)
    total = 0.0
    for epoch in range(epochs):
        order = rng.permutation(len(samples))
        total = 0.0
        for step, i in enumerate(order):
            s = samples[int(i)]
            total += grad_step(
                bank, 0, s.context, s.response, weight=1.0, lr=lr,
                update_shared=True, update_adapter=False,
                dropout_seed=(seed, 2, epoch, int(i)),
            )
    return total / max(len(samples), 1)


def infer(bank, contexts) -> list[list]:
    """Greedy decode every decoder for every context; inner order is the
    decoder index."""
    return [
        [greedy_decode(bank, k, ctx) for k in range(bank.n_decoders)]
        for ctx in contexts
    ]
