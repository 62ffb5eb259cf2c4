"""Corpus generation, exact posteriors, split cleaning, file round-trip."""

import numpy as np
import pytest

from mixdec.decoders import EOS, Sample, Vocab
from mixdec.synthdata import (
    CorpusSpec,
    LabeledCorpus,
    LabeledSample,
    dedup_splits,
    gen_corpus,
    load_corpus,
    save_corpus,
    spec_from_json,
    spec_to_json,
    true_posterior,
)


def tiny_spec(**kw):
    base = dict(
        vocab_size=12, n_contexts=3, modes_per_context=2, template_len=(3, 5),
        noise_rate=0.1, n_train=200, n_valid=50, n_test=50, seed=7,
    )
    base.update(kw)
    return CorpusSpec(**base)


def test_spec_validation():
    with pytest.raises(ValueError, match="noise_rate"):
        tiny_spec(noise_rate=0.4)
    with pytest.raises(ValueError, match="modes_per_context"):
        tiny_spec(modes_per_context=0)
    with pytest.raises(ValueError, match="distribution"):
        tiny_spec(mode_weights=(0.9, 0.2))
    with pytest.raises(ValueError, match="length"):
        tiny_spec(mode_weights=(1.0,))
    with pytest.raises(ValueError, match="cap"):
        tiny_spec(template_len=(3, 40))


def test_noiseless_single_mode_is_verbatim():
    corpus = gen_corpus(tiny_spec(noise_rate=0.0, modes_per_context=1))
    for item in corpus.train:
        cid = corpus.context_id(item.sample.context)
        assert item.sample.response == corpus.templates[cid][0]
        assert item.mode == 0


def test_mode_frequencies_concentrate():
    # 10^4 noiseless samples over one context, uniform over 4 modes
    spec = tiny_spec(
        n_contexts=1, modes_per_context=4, noise_rate=0.0,
        n_train=10_000, n_valid=0, n_test=0,
    )
    corpus = gen_corpus(spec)
    counts = np.bincount([s.mode for s in corpus.train], minlength=4)
    freqs = counts / len(corpus.train)
    sigma = np.sqrt(0.25 * 0.75 / 10_000)
    assert np.all(np.abs(freqs - 0.25) <= 3 * sigma)


def test_generation_is_pure():
    a, b = gen_corpus(tiny_spec()), gen_corpus(tiny_spec())
    assert a.contexts == b.contexts
    assert a.templates == b.templates
    assert a.train == b.train and a.valid == b.valid and a.test == b.test


def test_templates_distinct_within_context():
    corpus = gen_corpus(tiny_spec(modes_per_context=4, template_len=(2, 3)))
    for tpls in corpus.templates:
        assert len(set(tpls)) == len(tpls)


def test_all_responses_end_with_eos_and_stay_in_vocab():
    corpus = gen_corpus(tiny_spec())
    for split in (corpus.train, corpus.valid, corpus.test):
        for item in split:
            assert item.sample.response[-1] == EOS
            assert all(3 <= t < 12 for t in item.sample.response[:-1])
            assert 0 <= item.mode < 2


def test_posterior_one_hot_without_noise():
    corpus = gen_corpus(tiny_spec(noise_rate=0.0, modes_per_context=3))
    for item in corpus.train[:50]:
        post = true_posterior(corpus, item.sample.context, item.sample.response)
        expect = np.zeros(3)
        expect[item.mode] = 1.0
        assert np.array_equal(post, expect)


def hand_corpus(noise_rate, templates, weights=None):
    m = len(templates)
    spec = CorpusSpec(
        vocab_size=12, n_contexts=1, modes_per_context=m, noise_rate=noise_rate,
        template_len=(1, 10), mode_weights=weights, n_train=0, n_valid=0, n_test=0,
    )
    return LabeledCorpus(
        spec=spec, vocab=Vocab(12), contexts=[(3,)], templates=[list(templates)],
        train=[], valid=[], test=[],
    )


def test_posterior_symmetric_for_equidistant_response():
    corpus = hand_corpus(0.1, [(4, 5, EOS), (4, 6, EOS)])
    post = true_posterior(corpus, (3,), (4, 7, EOS))
    assert post.tolist() == pytest.approx([0.5, 0.5], abs=1e-12)


def test_posterior_matches_direct_enumeration():
    corpus = gen_corpus(tiny_spec(modes_per_context=3, noise_rate=0.15))
    rho, u = 0.15, 12 - 3
    for item in corpus.train[:100]:
        cid = corpus.context_id(item.sample.context)
        resp = item.sample.response
        liks = []
        for tpl in corpus.templates[cid]:
            if len(tpl) != len(resp):
                liks.append(0.0)
                continue
            p = 1.0
            for got, want in zip(resp[:-1], tpl[:-1]):
                p *= (1 - rho + rho / u) if got == want else rho / u
            liks.append(p)
        liks = np.array(liks) / 3.0
        post = true_posterior(corpus, item.sample.context, resp)
        assert np.allclose(post, liks / liks.sum(), atol=1e-12)
        assert post.sum() == pytest.approx(1.0, abs=1e-12)


def test_posterior_respects_mode_weights():
    corpus = hand_corpus(0.1, [(4, EOS), (5, EOS)], weights=(0.8, 0.2))
    post = true_posterior(corpus, (3,), (6, EOS))  # equidistant from both
    assert post.tolist() == pytest.approx([0.8, 0.2], abs=1e-12)


def test_posterior_unknown_context():
    corpus = gen_corpus(tiny_spec())
    with pytest.raises(ValueError, match="unknown context"):
        true_posterior(corpus, (9, 9, 9, 9, 9, 9, 9), (4, EOS))


def test_posterior_impossible_response():
    corpus = hand_corpus(0.0, [(4, 5, EOS)])
    with pytest.raises(ValueError, match="zero probability"):
        true_posterior(corpus, (3,), (4, 4, 4, 4, EOS))


def labeled(ctx, resp, mode=0):
    return LabeledSample(Sample(ctx, resp), mode)


def test_dedup_disjoint_is_noop():
    corpus = hand_corpus(0.1, [(4, EOS), (5, EOS)])
    corpus.train = [labeled((3,), (4, EOS))]
    corpus.valid = [labeled((3,), (5, EOS))]
    corpus.test = [labeled((3,), (6, EOS))]
    out = dedup_splits(corpus)
    assert (out.train, out.valid, out.test) == (corpus.train, corpus.valid, corpus.test)


def test_dedup_drops_fully_duplicated_test():
    corpus = hand_corpus(0.1, [(4, EOS), (5, EOS)])
    corpus.train = [labeled((3,), (4, EOS)), labeled((3,), (5, EOS))]
    corpus.test = [labeled((3,), (4, EOS)), labeled((3,), (5, EOS))]
    out = dedup_splits(corpus)
    assert out.test == [] and len(out.train) == 2


def test_dedup_single_planted_duplicate():
    corpus = hand_corpus(0.1, [(4, EOS), (5, EOS)])
    corpus.train = [labeled((3,), (4, EOS))]
    corpus.valid = [labeled((3,), (4, EOS)), labeled((3,), (5, EOS))]
    out = dedup_splits(corpus)
    assert len(corpus.valid) - len(out.valid) == 1
    assert out.valid == [labeled((3,), (5, EOS))]


def test_generated_corpus_has_disjoint_splits():
    corpus = gen_corpus(tiny_spec(template_len=(2, 3), n_train=500))
    train = {(s.sample.context, s.sample.response) for s in corpus.train}
    valid = {(s.sample.context, s.sample.response) for s in corpus.valid}
    test = {(s.sample.context, s.sample.response) for s in corpus.test}
    assert not (train & valid) and not (train & test) and not (valid & test)


def test_spec_json_round_trip():
    spec = tiny_spec(mode_weights=(0.25, 0.75))
    assert spec_from_json(spec_to_json(spec)) == spec


def test_corpus_file_round_trip(tmp_path):
    corpus = gen_corpus(tiny_spec())
    stem = str(tmp_path / "corpus")
    paths = save_corpus(stem, corpus)
    assert len(paths) == 3
    loaded = load_corpus(stem)
    assert loaded.spec == corpus.spec
    assert loaded.contexts == corpus.contexts
    assert loaded.templates == corpus.templates
    assert loaded.train == corpus.train
    assert loaded.valid == corpus.valid
    assert loaded.test == corpus.test


def test_load_rejects_mismatched_headers(tmp_path):
    corpus = gen_corpus(tiny_spec())
    stem = str(tmp_path / "corpus")
    save_corpus(stem, corpus)
    other = spec_to_json(tiny_spec(seed=99))
    path = f"{stem}.test.tsv"
    lines = open(path).read().splitlines()
    lines[0] = "# spec=" + other
    open(path, "w").write("\n".join(lines) + "\n")
    with pytest.raises(ValueError, match="different specs"):
        load_corpus(stem)
