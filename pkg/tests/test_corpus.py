"""Synthetic corpus: determinism, split rules, and the planted-signal
invariants the acoustic-condition model relies on."""

import numpy as np
import numpy.testing as npt
import pytest

from voxadapt.corpus import CorpusSpec, gen_corpus, gen_speaker, gen_utterance

SMALL = CorpusSpec(n_speakers=4, n_adapt_speakers=1, utterances_per_speaker=12,
                   phoneme_vocab=10, min_phonemes=3, max_phonemes=6, mel_dim=8,
                   noise_amp=0.02, holdout_utterances=3, adaptation_k=6,
                   seed=99)


def test_gen_speaker_deterministic_and_in_range():
    a = gen_speaker(SMALL, 1)
    b = gen_speaker(SMALL, 1)
    npt.assert_array_equal(a.envelope, b.envelope)
    assert a.base_pitch == b.base_pitch and a.rate == b.rate
    assert (a.envelope >= 0.2).all() and (a.envelope <= 1.0).all()
    assert 0.7 <= a.rate <= 1.3
    with pytest.raises(ValueError):
        gen_speaker(SMALL, SMALL.n_speakers)


def test_sixteen_speakers_have_distinct_envelopes():
    spec = CorpusSpec(n_speakers=16, n_adapt_speakers=2,
                      utterances_per_speaker=25, adaptation_k=20,
                      holdout_utterances=5, mel_dim=20, seed=3)
    envs = [gen_speaker(spec, j).envelope for j in range(16)]
    for i in range(16):
        for j in range(i + 1, 16):
            assert np.linalg.norm(envs[i] - envs[j]) > 1e-3


def test_gen_utterance_noiseless_frames_constant_within_phoneme():
    spec = CorpusSpec(n_speakers=3, n_adapt_speakers=1,
                      utterances_per_speaker=10, phoneme_vocab=8,
                      min_phonemes=4, max_phonemes=6, mel_dim=6,
                      noise_amp=0.0, holdout_utterances=2, adaptation_k=5,
                      seed=7)
    utt = gen_utterance(spec, gen_speaker(spec, 0), 0)
    offset = 0
    for i, d in enumerate(utt.durations):
        span = utt.mel[offset:offset + d]
        npt.assert_array_equal(span, np.tile(span[0], (d, 1)))
        offset += d
    # frame-to-phoneme averaging reproduces the per-phoneme values exactly
    seg = np.repeat(np.arange(len(utt.durations)), utt.durations)
    for i in range(len(utt.durations)):
        npt.assert_allclose(utt.mel[seg == i].mean(axis=0),
                            utt.mel[seg == i][0], rtol=1e-6)


def test_gen_utterance_bit_identical_regeneration():
    profile = gen_speaker(SMALL, 2)
    a = gen_utterance(SMALL, profile, 5)
    b = gen_utterance(SMALL, profile, 5)
    npt.assert_array_equal(a.mel, b.mel)
    npt.assert_array_equal(a.phonemes, b.phonemes)
    npt.assert_array_equal(a.durations, b.durations)
    assert a.gain == b.gain and a.tilt == b.tilt


def test_utterance_invariants():
    corpus = gen_corpus(SMALL)
    for sid, utts in corpus.utterances.items():
        for utt in utts:
            assert utt.durations.min() >= 1
            assert utt.mel.shape == (utt.durations.sum(), SMALL.mel_dim)
            assert np.isfinite(utt.mel).all()
            # stored energy equals per-span mean |mel|
            seg = np.repeat(np.arange(len(utt.durations)), utt.durations)
            for i in range(len(utt.durations)):
                ref = np.abs(utt.mel[seg == i].astype(np.float64)).mean()
                assert abs(ref - utt.energy[i]) <= 1e-6


def test_gen_corpus_split_rules():
    corpus = gen_corpus(SMALL)
    assert corpus.adapt_speaker_ids == [3]
    assert corpus.source_speaker_ids == [0, 1, 2]
    pool_speakers = {utt.speaker for utt in corpus.pretrain_pool()}
    assert 3 not in pool_speakers

    adaptation = corpus.adaptation_utterances(3, 6)
    holdout = corpus.holdout_utterances(3)
    assert len(adaptation) == 6 and len(holdout) == 3
    assert {u.index for u in adaptation}.isdisjoint({u.index for u in holdout})
    with pytest.raises(ValueError):
        corpus.adaptation_utterances(0, 2)
    with pytest.raises(ValueError):
        corpus.adaptation_utterances(3, 100)


def test_default_adaptation_k_is_twenty():
    assert CorpusSpec().adaptation_k == 20


def test_adaptation_speakers_sit_outside_source_condition_range():
    from voxadapt.corpus import (ADAPT_GAIN_RANGE, ADAPT_TILT_RANGE,
                                 GAIN_RANGE, TILT_RANGE)

    corpus = gen_corpus(SMALL)
    for sid in corpus.source_speaker_ids:
        p = corpus.speakers[sid]
        assert GAIN_RANGE[0] <= p.gain <= GAIN_RANGE[1]
        assert TILT_RANGE[0] <= p.tilt <= TILT_RANGE[1]
    for sid in corpus.adapt_speaker_ids:
        p = corpus.speakers[sid]
        assert ADAPT_GAIN_RANGE[0] <= p.gain <= ADAPT_GAIN_RANGE[1]
        assert ADAPT_TILT_RANGE[0] <= abs(p.tilt) <= ADAPT_TILT_RANGE[1]


def test_spec_validation_errors():
    with pytest.raises(ValueError):
        CorpusSpec(n_speakers=2).validate()
    with pytest.raises(ValueError):
        CorpusSpec(utterances_per_speaker=10, adaptation_k=20,
                   holdout_utterances=5).validate()


def test_corpus_is_pure_function_of_spec():
    a = gen_corpus(SMALL)
    b = gen_corpus(SMALL)
    for sid in range(SMALL.n_speakers):
        for ua, ub in zip(a.utterances[sid], b.utterances[sid]):
            npt.assert_array_equal(ua.mel, ub.mel)
            npt.assert_array_equal(ua.pitch, ub.pitch)


def _r_squared(features, target):
    x = np.column_stack([features, np.ones(len(target))])
    coef, *_ = np.linalg.lstsq(x, target, rcond=None)
    residual = target - x @ coef
    return 1.0 - residual.var() / target.var()


def test_linear_probe_recovers_gain_and_tilt_on_noiseless_data():
    spec = CorpusSpec(n_speakers=3, n_adapt_speakers=1,
                      utterances_per_speaker=80, phoneme_vocab=12,
                      min_phonemes=8, max_phonemes=14, mel_dim=16,
                      noise_amp=0.0, holdout_utterances=5, adaptation_k=20,
                      seed=11)
    corpus = gen_corpus(spec)
    utts = corpus.utterances[0]
    feats = np.stack([u.mel.mean(axis=0) for u in utts])
    gains = np.array([u.gain for u in utts])
    tilts = np.array([u.tilt for u in utts])
    assert _r_squared(feats, gains) > 0.9
    assert _r_squared(feats, tilts) > 0.9
