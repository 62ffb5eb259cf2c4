"""BLEU family, distinct-ngram, pairwise similarity, assignment summaries."""

import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mixdec.em_trainer import TrainLog
from mixdec.metrics import (
    MetricsReport,
    ResponseSet,
    assignment_stats,
    bleu_prf,
    compute_metrics,
    corpus_dist_n,
    corpus_pairwise_bleu,
    dist_n,
    mode_coverage,
    pairwise_bleu,
    read_report_kv,
    sentence_bleu,
    strip_eos,
    write_report_csv,
    write_report_kv,
)

# Token-id shorthands: tests use small ints as words.
A, B, C, D, E = 10, 11, 12, 13, 14


def ref_bleu(hyp, refs, max_n):
    """Independent re-implementation with explicit dict counting."""
    hyp = list(hyp)
    if not hyp:
        return 0.0
    prod = 1.0
    for n in range(1, max_n + 1):
        grams = [tuple(hyp[i:i + n]) for i in range(len(hyp) - n + 1)]
        matched = 0
        for g in set(grams):
            best = 0
            for r in refs:
                r = list(r)
                cnt = sum(
                    1 for i in range(len(r) - n + 1) if tuple(r[i:i + n]) == g
                )
                best = max(best, cnt)
            matched += min(grams.count(g), best)
        total = len(grams)
        if matched == 0:
            prod *= 1.0 / (total + 1.0)
        else:
            prod *= matched / total
    c = len(hyp)
    r_star = min((len(r) for r in refs), key=lambda L: (abs(L - c), L))
    bp = 1.0 if c >= r_star else math.exp(1.0 - r_star / c)
    return bp * prod ** (1.0 / max_n)


def test_perfect_match_scores_one():
    assert sentence_bleu((A, B, C), [(A, B, C)], 2) == pytest.approx(1.0)


def test_hand_counted_example():
    # p1 = 2/3, p2 = 1/2, no brevity penalty
    got = sentence_bleu((A, B, C), [(A, B, D)], 2)
    assert got == pytest.approx(math.sqrt(1 / 3), abs=1e-12)


def test_disjoint_hypothesis_hits_smoothing_floor():
    got = sentence_bleu((A, B), [(C, D)], 1)
    assert got == pytest.approx(1 / 3, abs=1e-12)  # 1/(len+1)


def test_empty_hypothesis_scores_zero():
    assert sentence_bleu((), [(A,)], 2) == 0.0


def test_brevity_penalty_uses_closest_reference():
    # c=2 against refs of length 2 and 9: closest is 2, no penalty
    assert sentence_bleu((A, B), [(A, B), (A,) * 9], 2) == pytest.approx(1.0)
    # single long ref: penalized by exp(1 - 4/2)
    got = sentence_bleu((A, B), [(A, B, C, D)], 1)
    assert got == pytest.approx(math.exp(-1.0), abs=1e-12)


def test_multi_reference_clipping():
    # unigram A appears twice in hyp but at most once per ref
    got = sentence_bleu((A, A), [(A, B), (A, C)], 1)
    assert got == pytest.approx(0.5, abs=1e-12)


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 2))
def test_sentence_bleu_matches_independent_oracle(seed, max_n):
    rng = np.random.default_rng(seed)
    hyp = tuple(rng.integers(10, 14, size=rng.integers(1, 7)))
    refs = [
        tuple(rng.integers(10, 14, size=rng.integers(1, 7)))
        for _ in range(rng.integers(1, 4))
    ]
    got = sentence_bleu(hyp, refs, max_n)
    assert got == pytest.approx(ref_bleu(hyp, refs, max_n), abs=1e-12)
    assert 0.0 <= got <= 1.0


def test_strip_eos():
    assert strip_eos((A, B, 2)) == (A, B)
    assert strip_eos((A, B)) == (A, B)
    assert strip_eos(()) == ()


# ---- precision / recall / F -------------------------------------------------------


def test_prf_identical_sets():
    rs = ResponseSet(((A, B), (C, D)), ((A, B), (C, D)))
    assert bleu_prf([rs], 2) == pytest.approx((1.0, 1.0, 1.0))


def test_prf_recall_saturates_with_one_good_hypothesis():
    rs = ResponseSet(hypotheses=((A, B, C), (D,) * 8), references=((A, B, C),))
    p, r, f = bleu_prf([rs], 2)
    assert r == pytest.approx(1.0)
    assert 0.5 < p < 0.6  # half perfect, half smoothing floor
    assert f == pytest.approx(2 * p * r / (p + r), abs=1e-12)


def test_prf_matches_double_loop_oracle():
    rng = np.random.default_rng(7)
    sets = []
    for _ in range(2):
        hyps = tuple(
            tuple(rng.integers(10, 15, size=rng.integers(1, 6))) for _ in range(3)
        )
        refs = tuple(
            tuple(rng.integers(10, 15, size=rng.integers(1, 6))) for _ in range(2)
        )
        sets.append(ResponseSet(hyps, refs))
    p, r, f = bleu_prf(sets, 2)
    p_ctx, r_ctx = [], []
    for rs in sets:
        p_ctx.append(np.mean([
            max(ref_bleu(h, [ref], 2) for ref in rs.references)
            for h in rs.hypotheses
        ]))
        r_ctx.append(np.mean([
            max(ref_bleu(ref, [h], 2) for h in rs.hypotheses)
            for ref in rs.references
        ]))
    assert p == pytest.approx(np.mean(p_ctx), abs=1e-12)
    assert r == pytest.approx(np.mean(r_ctx), abs=1e-12)
    assert f == pytest.approx(2 * p * r / (p + r), abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000))
def test_prf_swap_symmetry(seed):
    rng = np.random.default_rng(seed)
    def some_seqs(k):
        return tuple(
            tuple(rng.integers(10, 14, size=rng.integers(1, 5))) for _ in range(k)
        )
    sets = [ResponseSet(some_seqs(3), some_seqs(2)) for _ in range(2)]
    swapped = [ResponseSet(rs.references, rs.hypotheses) for rs in sets]
    p, r, f = bleu_prf(sets, 2)
    p2, r2, f2 = bleu_prf(swapped, 2)
    assert (p, r) == pytest.approx((r2, p2), abs=1e-12)
    assert f == pytest.approx(f2, abs=1e-12)


# ---- dist-n -----------------------------------------------------------------------


def test_dist1_hand_example():
    assert dist_n([(A, B), (A, C)], 1) == pytest.approx(0.75)


def test_dist1_identical_singletons():
    assert dist_n([(A,)] * 4, 1) == pytest.approx(0.25)


def test_dist_no_ngrams_is_zero():
    assert dist_n([(A,)], 2) == 0.0
    assert dist_n([], 1) == 0.0


def test_dist_unique_iff_one():
    assert dist_n([(A, B), (C, D)], 1) == 1.0
    assert dist_n([(A, B), (B, A)], 2) == 1.0


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 2))
def test_dist_matches_set_oracle(seed, n):
    rng = np.random.default_rng(seed)
    hyps = [
        tuple(rng.integers(10, 13, size=rng.integers(1, 6))) for _ in range(4)
    ]
    grams = [h[i:i + n] for h in hyps for i in range(len(h) - n + 1)]
    want = len(set(grams)) / len(grams) if grams else 0.0
    got = dist_n(hyps, n)
    assert got == want
    assert got <= 1.0


def test_corpus_dist_levels():
    sets = [
        ResponseSet(((A, B), (A, C)), ((A,),)),
        ResponseSet(((A, B), (A, B)), ((A,),)),
    ]
    per_context = np.mean([0.75, 0.5])
    assert corpus_dist_n(sets, 1) == pytest.approx(per_context)
    # pooled: tokens A,B,A,C,A,B,A,B -> 3 unique / 8
    assert corpus_dist_n(sets, 1, level="corpus") == pytest.approx(3 / 8)


# ---- pairwise ---------------------------------------------------------------------


def test_pairwise_identical_is_one():
    assert pairwise_bleu([(A, B, C)] * 3) == pytest.approx(1.0)


def test_pairwise_undefined_for_singleton():
    assert pairwise_bleu([(A, B)]) is None
    sets = [ResponseSet(((A, B),), ((A,),))]
    assert corpus_pairwise_bleu(sets) is None


def test_pairwise_matches_six_explicit_scores():
    hyps = [(A, B, C), (A, B), (C, D, E)]
    want = np.mean([
        ref_bleu(hyps[i], [hyps[j]], 2)
        for i in range(3) for j in range(3) if i != j
    ])
    assert pairwise_bleu(hyps) == pytest.approx(want, abs=1e-12)


def test_pairwise_permutation_invariant():
    hyps = [(A, B, C), (A, B), (C, D, E), (B, C)]
    assert pairwise_bleu(hyps) == pytest.approx(
        pairwise_bleu(list(reversed(hyps))), abs=1e-12
    )


# ---- assignment stats --------------------------------------------------------------


def fake_log(rows):
    return TrainLog([
        {"iter": i, "variant": "x", "mll": 0.0, "counts": list(c),
         "t_estep_ms": 0.0, "t_hungarian_ms": 0.0, "t_mstep_ms": 0.0}
        for i, c in enumerate(rows)
    ])


def test_assignment_stats_quota_log():
    stats = assignment_stats(fake_log([[8, 8], [8, 8], [8, 8]]))
    assert stats == [(0.5, 0.0), (0.5, 0.0)]


def test_assignment_stats_alternating_collapse():
    stats = assignment_stats(fake_log([[16, 0], [0, 16]]))
    for mean, std in stats:
        assert mean == pytest.approx(0.5)
        assert std == pytest.approx(0.5)


def test_assignment_stats_requires_iterations():
    with pytest.raises(ValueError, match="no iterations"):
        assignment_stats(TrainLog([]))


# ---- mode coverage ------------------------------------------------------------------


# token-disjoint templates so cross-mode BLEU sits at the smoothing floor
MODES = [(10, 11, 10, 11), (12, 13, 12, 13), (14, 15, 14, 15), (16, 17, 16, 17)]


def test_mode_coverage_full_and_zero():
    assert mode_coverage(list(MODES), MODES) == 1.0
    assert mode_coverage([(99, 98)], MODES) == 0.0


def test_mode_coverage_three_of_four():
    assert mode_coverage(list(MODES[:3]) + [(99, 98)], MODES) == 0.75


def test_mode_coverage_threshold_validation():
    with pytest.raises(ValueError, match="threshold"):
        mode_coverage([(A,)], MODES, threshold=0.0)


# ---- report and writers --------------------------------------------------------------


def sample_sets():
    return [
        ResponseSet(((A, B, C), (A, B), (D, E)), ((A, B, C), (D, E))),
        ResponseSet(((B, C), (B, C)), ((B, C),)),
    ]


def test_compute_metrics_ranges_and_f_invariant():
    rep = compute_metrics(sample_sets())
    for name in ("bleu1_p", "bleu1_r", "bleu1_f", "bleu2_p", "bleu2_r",
                 "bleu2_f", "dist1", "dist2", "pairwise_bleu"):
        value = getattr(rep, name)
        assert 0.0 <= value <= 1.0
    assert rep.bleu1_f == pytest.approx(
        2 * rep.bleu1_p * rep.bleu1_r / (rep.bleu1_p + rep.bleu1_r), abs=1e-12
    )
    assert rep.assignment is None


def test_kv_report_round_trip(tmp_path):
    rep = compute_metrics(sample_sets(), log=fake_log([[2, 2], [2, 2]]))
    path = str(tmp_path / "report.txt")
    write_report_kv(path, rep)
    back = read_report_kv(path)
    assert back["bleu2_f"] == pytest.approx(100 * rep.bleu2_f, abs=1e-3)
    assert back["dist1"] == pytest.approx(100 * rep.dist1, abs=1e-3)
    assert back["assignment_mean"] == pytest.approx([0.5, 0.5])


def test_kv_report_omits_absent_pairwise(tmp_path):
    sets = [ResponseSet(((A, B),), ((A, B),))]
    rep = compute_metrics(sets)
    assert rep.pairwise_bleu is None
    path = str(tmp_path / "report.txt")
    write_report_kv(path, rep)
    assert "pairwise" not in open(path).read()


def test_csv_report_layout(tmp_path):
    rep = compute_metrics(sample_sets())
    single = compute_metrics([ResponseSet(((A, B),), ((A, B),))])
    path = str(tmp_path / "table.csv")
    write_report_csv(path, {"full": rep, "single": single})
    lines = open(path).read().splitlines()
    assert lines[0] == (
        "model,bleu1_f,bleu1_p,bleu1_r,bleu2_f,bleu2_p,bleu2_r,"
        "dist1,dist2,pairwise_bleu"
    )
    assert lines[1].startswith("full,") and len(lines[1].split(",")) == 10
    assert lines[2].endswith(",")  # pairwise cell empty for single-hypothesis runs
