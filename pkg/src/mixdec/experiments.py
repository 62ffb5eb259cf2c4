"""Experiment driver: corpus generation, two-stage training, evaluation,
comparison sweeps, and timing summaries, all file-based.

Each command is a function of an ExperimentConfig (plus whatever files an
earlier command left behind), so the command-line layer stays a thin
argument parser. Artifacts land in config.output_dir under fixed names:

    corpus.{train,valid,test}.tsv   data splits            (gen)
    corpus.spec.json                generation recipe      (gen)
    stage1.npz                      shared-body checkpoint (train, neural)
    bank.npz                        decoder-bank checkpoint(train)
    train_log.jsonl                 per-iteration records  (train)
    eval.kv / eval.csv              metric reports         (eval)
    assignment.dat                  per-decoder load plot  (eval, with log)
    sweep.csv                       one row per setting    (sweep)
    timing.kv                       wall-time shares       (timing)

Configs are JSON objects with sections mirroring the dataclasses below.
Unknown keys anywhere are hard errors; missing keys fall back to defaults.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .decoders import (
    beam_decode,
    init_neural_bank,
    load_bank,
    reset_adapters,
    save_bank,
    tabular_bank_from_data,
)
from .em_trainer import (
    TrainConfig,
    TrainLog,
    infer,
    load_train_log,
    save_train_log,
    stage1_train,
    train,
)
from .metrics import (
    _SCALED_FIELDS,
    MetricsReport,
    ResponseSet,
    compute_metrics,
    mode_coverage,
    strip_eos,
    write_report_kv,
)
from .synthdata import CorpusSpec, gen_corpus, load_corpus, save_corpus, spec_to_json


class ConfigError(ValueError):
    """Bad config file: unknown key, wrong type, or invalid value."""


class CompatibilityError(RuntimeError):
    """Checkpoint and corpus disagree on something structural."""


# ---- config ---------------------------------------------------------------------

FAMILIES = ("neural", "tabular")


@dataclass(frozen=True)
class ModelConfig:
    family: str = "neural"
    d: int = 32
    d_inner: int = 8
    dropout: float = 0.1
    adapter_init: str = "random"  # adapter redraw before the EM stage
    alpha: float = 0.1  # tabular-family smoothing
    stage1_epochs: int = 1
    stage1_lr: float = 0.05

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}, got {self.family!r}")
        if self.adapter_init not in ("tied", "random"):
            raise ValueError(f"unknown adapter_init {self.adapter_init!r}")
        if self.d < 1 or self.d_inner < 1:
            raise ValueError("d and d_inner must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout rate must lie in [0, 1)")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.stage1_epochs < 0:
            raise ValueError("stage1_epochs must be >= 0")
        if self.stage1_lr <= 0:
            raise ValueError("stage1_lr must be positive")


@dataclass(frozen=True)
class EvalConfig:
    max_n: int = 2
    dist_orders: tuple[int, ...] = (1, 2)
    pairwise: bool = True
    mode_coverage_tau: float = 0.6

    def __post_init__(self):
        # report files are schema-stable, so the knobs that would change the
        # column layout are pinned to the layout's values
        if self.max_n != 2:
            raise ValueError("max_n must be 2 (fixed report layout)")
        if tuple(self.dist_orders) != (1, 2):
            raise ValueError("dist_orders must be (1, 2) (fixed report layout)")
        if not 0.0 < self.mode_coverage_tau <= 1.0:
            raise ValueError("mode_coverage_tau must lie in (0, 1]")


SWEEP_AXES = ("variant", "n_decoders")


@dataclass(frozen=True)
class SweepConfig:
    axis: str
    values: tuple = ()

    def __post_init__(self):
        if self.axis not in SWEEP_AXES:
            raise ValueError(f"axis must be one of {SWEEP_AXES}, got {self.axis!r}")
        if not self.values:
            raise ValueError("sweep values must be non-empty")
        if self.axis == "n_decoders" and any(
            not isinstance(v, int) or v < 1 for v in self.values
        ):
            raise ValueError("n_decoders sweep values must be positive ints")


@dataclass(frozen=True)
class ExperimentConfig:
    corpus: CorpusSpec = field(default_factory=CorpusSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    sweep: SweepConfig | None = None
    output_dir: str = "runs"
    report_formats: tuple[str, ...] = ("kv", "csv")

    def __post_init__(self):
        if not self.report_formats:
            raise ValueError("report_formats must be non-empty")
        for fmt in self.report_formats:
            if fmt not in ("kv", "csv"):
                raise ValueError(f"unknown report format {fmt!r}")


_SECTIONS = {
    "corpus": CorpusSpec,
    "train": TrainConfig,
    "model": ModelConfig,
    "eval": EvalConfig,
    "sweep": SweepConfig,
}


def _tuplify(value):
    if isinstance(value, list):
        return tuple(_tuplify(v) for v in value)
    return value


def _build_section(cls, data, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"section {where!r} must be an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} in section {where!r}")
    kwargs = {k: _tuplify(v) for k, v in data.items()}
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"section {where!r}: {exc}") from None


def config_from_dict(
    raw: dict, *, seed: int | None = None, out: str | None = None
) -> ExperimentConfig:
    """Build a config from a parsed JSON object; seed/out override the file."""
    if not isinstance(raw, dict):
        raise ConfigError("config top level must be an object")
    known = set(_SECTIONS) | {"output_dir", "report_formats"}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown top-level key(s) {unknown}")
    sections = {}
    for name, cls in _SECTIONS.items():
        if name not in raw or raw[name] is None:
            continue
        sections[name] = _build_section(cls, raw[name], name)
    corpus = sections.get("corpus", CorpusSpec())
    train_cfg = sections.get("train", TrainConfig())
    if seed is not None:
        corpus = dataclasses.replace(corpus, seed=seed)
        train_cfg = dataclasses.replace(train_cfg, seed=seed)
    try:
        return ExperimentConfig(
            corpus=corpus,
            train=train_cfg,
            model=sections.get("model", ModelConfig()),
            eval=sections.get("eval", EvalConfig()),
            sweep=sections.get("sweep"),
            output_dir=out if out is not None else raw.get("output_dir", "runs"),
            report_formats=_tuplify(raw.get("report_formats", ("kv", "csv"))),
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None


def load_config(
    path: str, *, seed: int | None = None, out: str | None = None
) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return config_from_dict(raw, seed=seed, out=out)


# ---- artifact paths -------------------------------------------------------------


def corpus_stem(config: ExperimentConfig) -> str:
    return os.path.join(config.output_dir, "corpus")


def _path(config: ExperimentConfig, name: str) -> str:
    return os.path.join(config.output_dir, name)


# ---- commands -------------------------------------------------------------------


def cmd_gen(config: ExperimentConfig) -> list[str]:
    """Generate the corpus files plus a spec sidecar; pure in the seed."""
    os.makedirs(config.output_dir, exist_ok=True)
    corpus = gen_corpus(config.corpus)
    paths = save_corpus(corpus_stem(config), corpus)
    sidecar = _path(config, "corpus.spec.json")
    with open(sidecar, "w", encoding="utf-8") as fh:
        fh.write(spec_to_json(config.corpus) + "\n")
    return paths + [sidecar]


def _init_bank(config: ExperimentConfig, corpus):
    m, t = config.model, config.train
    samples = [ls.sample for ls in corpus.train]
    if m.family == "tabular":
        return tabular_bank_from_data(corpus.vocab, t.n_decoders, samples, m.alpha)
    return init_neural_bank(
        corpus.vocab,
        t.n_decoders,
        d=m.d,
        d_inner=m.d_inner,
        dropout=m.dropout,
        seed=t.seed,
        adapter_init="tied",
    )


def cmd_train(config: ExperimentConfig) -> dict[str, str | None]:
    """Train and write bank.npz + train_log.jsonl; returns artifact paths.

    Neural family runs two stages: shared-body maximum likelihood through
    decoder 0, then EM over the adapters with the body frozen. Tabular banks
    go straight to EM. The checkpoint is written once at EM initialization
    and again on success, so a numeric abort mid-EM leaves the initialization
    checkpoint in place rather than a partial state.
    """
    corpus = load_corpus(corpus_stem(config))
    os.makedirs(config.output_dir, exist_ok=True)
    samples = [ls.sample for ls in corpus.train]
    m = config.model
    bank = _init_bank(config, corpus)
    stage1_path = None
    if m.family == "neural":
        stage1_train(
            bank,
            samples,
            epochs=m.stage1_epochs,
            lr=m.stage1_lr,
            seed=config.train.seed,
        )
        stage1_path = _path(config, "stage1.npz")
        save_bank(stage1_path, bank)
        reset_adapters(bank, m.adapter_init, config.train.seed)
    bank_path = _path(config, "bank.npz")
    log_path = _path(config, "train_log.jsonl")
    save_bank(bank_path, bank)
    bank, log = train(config.train, samples, bank)
    save_bank(bank_path, bank)
    save_train_log(log_path, log)
    return {"checkpoint": bank_path, "log": log_path, "stage1": stage1_path}


def evaluate_bank(
    bank, corpus, eval_cfg: EvalConfig, log: TrainLog | None = None
) -> tuple[MetricsReport, float]:
    """Greedy-decode every decoder on every context and score against the
    planted templates. Returns (report, mean per-context mode coverage)."""
    if bank.vocab.size != corpus.vocab.size:
        raise CompatibilityError(
            f"checkpoint vocab size {bank.vocab.size} != corpus "
            f"vocab size {corpus.vocab.size}"
        )
    decoded = infer(bank, corpus.contexts)
    sets, coverages = [], []
    for cid in range(len(corpus.contexts)):
        hyps = tuple(strip_eos(r.tokens) for r in decoded[cid])
        refs = tuple(strip_eos(t) for t in corpus.templates[cid])
        sets.append(ResponseSet(hypotheses=hyps, references=refs))
        coverages.append(mode_coverage(hyps, refs, eval_cfg.mode_coverage_tau))
    report = compute_metrics(sets, log=log)
    if not eval_cfg.pairwise:
        report.pairwise_bleu = None
    return report, float(np.mean(coverages))


EVAL_CSV_HEADER = ["model", *_SCALED_FIELDS, "mode_coverage"]


def _report_cells(report: MetricsReport, coverage: float | None) -> list[str]:
    cells = []
    for name in _SCALED_FIELDS:
        value = getattr(report, name)
        cells.append("" if value is None else f"{100.0 * value:.4f}")
    cells.append("" if coverage is None else f"{100.0 * coverage:.4f}")
    return cells


def _write_eval_files(config, label, report, coverage) -> list[str]:
    written = []
    if "kv" in config.report_formats:
        kv_path = _path(config, "eval.kv")
        write_report_kv(kv_path, report)
        with open(kv_path, "a", encoding="utf-8") as fh:
            fh.write(f"mode_coverage {100.0 * coverage:.4f}\n")
        written.append(kv_path)
    if "csv" in config.report_formats:
        csv_path = _path(config, "eval.csv")
        with open(csv_path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(EVAL_CSV_HEADER)
            writer.writerow([label, *_report_cells(report, coverage)])
        written.append(csv_path)
    if report.assignment is not None:
        dat_path = _path(config, "assignment.dat")
        with open(dat_path, "w", encoding="utf-8") as fh:
            for k, (mean, _) in enumerate(report.assignment):
                fh.write(f"{k} {mean:.6f}\n")
        written.append(dat_path)
    return written


def cmd_eval(config: ExperimentConfig) -> tuple[MetricsReport, float]:
    """Evaluate bank.npz on the generated corpus and write report files."""
    corpus = load_corpus(corpus_stem(config))
    bank = load_bank(_path(config, "bank.npz"))
    log_path = _path(config, "train_log.jsonl")
    log = load_train_log(log_path) if os.path.exists(log_path) else None
    if log is not None and not log.records:
        log = None
    report, coverage = evaluate_bank(bank, corpus, config.eval, log=log)
    _write_eval_files(config, config.train.variant, report, coverage)
    return report, coverage


def _subrun_config(config: ExperimentConfig, label: str, train_cfg) -> ExperimentConfig:
    return dataclasses.replace(
        config,
        train=train_cfg,
        sweep=None,
        output_dir=os.path.join(config.output_dir, label),
    )


def _beam_baseline_row(
    config: ExperimentConfig, corpus, n_hyps: int
) -> tuple[MetricsReport, float]:
    """Single-decoder bank, same training budget, beam search of width K
    standing in for the K decoders."""
    m = config.model
    samples = [ls.sample for ls in corpus.train]
    if m.family == "neural":
        bank = init_neural_bank(
            corpus.vocab, 1, d=m.d, d_inner=m.d_inner, dropout=m.dropout,
            seed=config.train.seed, adapter_init="tied",
        )
        stage1_train(
            bank, samples, epochs=m.stage1_epochs, lr=m.stage1_lr,
            seed=config.train.seed,
        )
    else:
        bank = tabular_bank_from_data(corpus.vocab, 1, samples, m.alpha)
        cfg = dataclasses.replace(
            config.train, variant="SoftEM", n_decoders=1,
            estep_batch=len(samples), per_decoder=None, epochs=1,
        )
        bank, _ = train(cfg, samples, bank)
    sets, coverages = [], []
    for cid, ctx in enumerate(corpus.contexts):
        results = beam_decode(bank, 0, ctx, beam_width=n_hyps)
        hyps = tuple(strip_eos(r.tokens) for r in results)
        refs = tuple(strip_eos(t) for t in corpus.templates[cid])
        sets.append(ResponseSet(hypotheses=hyps, references=refs))
        coverages.append(mode_coverage(hyps, refs, config.eval.mode_coverage_tau))
    return compute_metrics(sets), float(np.mean(coverages))


def _sweep_rows(config: ExperimentConfig):
    """Yield (label, runner) pairs; runner() -> (report, coverage)."""
    sweep = config.sweep

    def full_run(label, **train_changes):
        # config construction happens inside the runner so a bad value is
        # recorded as that row's failure instead of killing the sweep
        def run():
            train_cfg = dataclasses.replace(config.train, **train_changes)
            sub = _subrun_config(config, label, train_cfg)
            cmd_gen(sub)
            cmd_train(sub)
            return cmd_eval(sub)

        return run

    for value in sweep.values:
        if sweep.axis == "variant":
            yield str(value), full_run(f"variant={value}", variant=str(value))
        else:
            k = int(value)
            per = config.train.per_decoder
            yield f"K={k}", full_run(
                f"K={k}", n_decoders=k, estep_batch=k * per, per_decoder=None
            )

            def run_beam(k=k):
                corpus = gen_corpus(config.corpus)
                return _beam_baseline_row(config, corpus, k)

            yield f"beam={k}", run_beam


def cmd_sweep(config: ExperimentConfig) -> str:
    """Run every setting on the shared corpus and seed; one table row each.

    A failed row records its error in the status column and the sweep moves
    on. For the decoder-count axis each setting is paired with a beam-search
    row: one decoder, beam width K, same budget.
    """
    if config.sweep is None:
        raise ConfigError("sweep command needs a sweep section in the config")
    os.makedirs(config.output_dir, exist_ok=True)
    rows = []
    for label, run in _sweep_rows(config):
        try:
            report, coverage = run()
            rows.append((label, report, coverage, "ok"))
        except Exception as exc:  # record per-row failure, keep sweeping
            rows.append((label, None, None, f"{type(exc).__name__}: {exc}"))
    table_path = _path(config, "sweep.csv")
    with open(table_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([*EVAL_CSV_HEADER, "status"])
        for label, report, coverage, status in rows:
            if report is None:
                cells = [""] * (len(EVAL_CSV_HEADER) - 1)
            else:
                cells = _report_cells(report, coverage)
            writer.writerow([label, *cells, status])
    return table_path


def timing_shares(log: TrainLog) -> dict[str, float] | None:
    """Aggregate wall-times into percentage shares.

    E-step and M-step are shares of their sum; the assignment solve is a
    sub-share of the E-step it runs inside. None when every timing is zero.
    """
    te = sum(r["t_estep_ms"] for r in log.records)
    tm = sum(r["t_mstep_ms"] for r in log.records)
    th = sum(r["t_hungarian_ms"] for r in log.records)
    total = te + tm
    if total == 0:
        return None
    shares = {
        "estep_pct": 100.0 * te / total,
        "mstep_pct": 100.0 * tm / total,
    }
    if te > 0:
        shares["hungarian_pct_of_estep"] = 100.0 * th / te
    return shares


def cmd_timing(config: ExperimentConfig) -> dict[str, float] | None:
    """Summarize train_log.jsonl wall-times into timing.kv."""
    log = load_train_log(_path(config, "train_log.jsonl"))
    shares = timing_shares(log)
    with open(_path(config, "timing.kv"), "w", encoding="utf-8") as fh:
        if shares is not None:
            for name, value in shares.items():
                fh.write(f"{name} {value:.4f}\n")
    return shares
