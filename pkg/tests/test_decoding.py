"""Greedy and beam search over both decoder families."""

import itertools

import numpy as np
import pytest

from mixdec.decoders import (
    EOS,
    Vocab,
    beam_decode,
    greedy_decode,
    init_neural_bank,
    init_tabular_bank,
    log_prob,
)


def tabular_bank():
    vocab = Vocab(8)
    templates = [(6, EOS), (7, EOS), (6, 7, EOS)]
    bank = init_tabular_bank(vocab, 1, [(3,)], templates, alpha=0.0)
    bank.tables[0, 0] = [0.5, 0.3, 0.2]
    return bank


def test_tabular_greedy_picks_mode():
    res = greedy_decode(tabular_bank(), 0, (3,))
    assert res.tokens == (6, EOS)
    assert res.score == pytest.approx(np.log(0.5))
    assert not res.truncated


def test_tabular_beam_orders_templates():
    results = beam_decode(tabular_bank(), 0, (3,), beam_width=3)
    assert [r.tokens for r in results] == [(6, EOS), (7, EOS), (6, 7, EOS)]
    assert [r.score for r in results] == pytest.approx(
        [np.log(0.5), np.log(0.3), np.log(0.2)]
    )


def test_tabular_beam_skips_zero_prob():
    bank = tabular_bank()
    bank.tables[0, 0] = [1.0, 0.0, 0.0]
    assert len(beam_decode(bank, 0, (3,), beam_width=3)) == 1


def test_beam_width_must_be_positive():
    with pytest.raises(ValueError, match="width"):
        beam_decode(tabular_bank(), 0, (3,), beam_width=0)


def test_neural_greedy_deterministic():
    bank = init_neural_bank(Vocab(7), 2, d=6, d_inner=2, seed=3, adapter_init="random")
    first = greedy_decode(bank, 0, (3, 4))
    for _ in range(100):
        assert greedy_decode(bank, 0, (3, 4)) == first


def test_neural_beam_width_one_equals_greedy():
    bank = init_neural_bank(Vocab(7), 2, d=6, d_inner=2, seed=5, adapter_init="random")
    for k in range(2):
        assert beam_decode(bank, k, (3,), beam_width=1)[0] == greedy_decode(bank, k, (3,))


def test_neural_greedy_never_emits_reserved_tokens():
    for seed in range(5):
        bank = init_neural_bank(Vocab(9), 1, d=4, d_inner=2, seed=seed,
                                adapter_init="random")
        res = greedy_decode(bank, 0, (4,))
        body = res.tokens[:-1] if res.tokens and res.tokens[-1] == EOS else res.tokens
        assert all(t >= 3 for t in body)


def test_neural_truncation_flag():
    bank = init_neural_bank(Vocab(7), 1, d=4, d_inner=2, seed=0,
                            adapter_init="random", max_response_len=2)
    # w_out rigged so EOS is never competitive
    bank.w_out[EOS] = -50.0
    bank.b_out[EOS] = -50.0
    res = greedy_decode(bank, 0, (3,))
    assert res.truncated
    assert len(res.tokens) == 2 and EOS not in res.tokens


def exhaustive_best(bank, k, context, width, max_len):
    """Enumerate every token string up to max_len; the oracle for beam search.

    Only valid when the beam is wide enough that nothing scoreable is pruned,
    so keep the vocab tiny and the beam at least V_usable wide.
    """
    usable = list(bank.vocab.usable)
    scored = []
    for length in range(1, max_len + 1):
        for body in itertools.product(usable, repeat=length - 1):
            seq = body + (EOS,)
            scored.append((seq, log_prob(bank, k, context, seq)))
    scored.sort(key=lambda t: (-t[1], t[0]))
    return scored[:width]


def test_neural_beam_matches_exhaustive_enumeration():
    # V=5 leaves two usable tokens; beam width 4 >= per-step fanout(3) keeps
    # every completed candidate reachable up to length 3
    bank = init_neural_bank(Vocab(5), 1, d=4, d_inner=2, seed=2,
                            adapter_init="random", max_response_len=3)
    results = beam_decode(bank, 0, (3,), beam_width=4)
    finished = [r for r in results if not r.truncated]
    oracle = exhaustive_best(bank, 0, (3,), width=len(finished), max_len=3)
    for res, (seq, score) in zip(finished, oracle):
        assert res.tokens == seq
        assert res.score == pytest.approx(score, abs=1e-9)


def test_beam_scores_are_sorted():
    bank = init_neural_bank(Vocab(8), 1, d=6, d_inner=2, seed=9,
                            adapter_init="random")
    results = beam_decode(bank, 0, (4, 5), beam_width=4)
    scores = [r.score for r in results]
    assert scores == sorted(scores, reverse=True)


def test_beam_scores_match_log_prob():
    bank = init_neural_bank(Vocab(8), 2, d=6, d_inner=2, seed=13,
                            adapter_init="random")
    for res in beam_decode(bank, 1, (3,), beam_width=3):
        if not res.truncated:
            assert res.score == pytest.approx(
                log_prob(bank, 1, (3,), res.tokens), abs=1e-9
            )
