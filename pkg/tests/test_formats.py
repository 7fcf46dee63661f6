"""Bit-exact round trips and clean failure on corrupted files."""

import numpy as np
import numpy.testing as npt
import pytest

from voxadapt import formats
from voxadapt import model as M
from voxadapt.corpus import CorpusSpec, gen_corpus
from voxadapt.pipeline import DeployedSpeakerParams, export_speaker

CFG = M.ModelConfig(hidden=6, encoder_layers=1, decoder_layers=2, heads=2,
                    ffn_filter=8, ffn_kernel=3, mel_dim=5, phoneme_vocab=9,
                    n_speakers=4)


def test_record_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    items = [
        ("a.w", rng.normal(size=(3, 4)).astype(np.float32)),
        ("b", rng.normal(size=7).astype(np.float32)),
        ("", np.float32(rng.normal(size=(2, 2, 2)))),
    ]
    path = tmp_path / "r.bin"
    formats.write_records(path, items)
    loaded = formats.read_records(path)
    assert [n for n, _ in loaded] == [n for n, _ in items]
    for (_, a), (_, b) in zip(items, loaded):
        npt.assert_array_equal(a, b)
        assert b.dtype == np.float32


def test_checkpoint_round_trip_bit_exact(tmp_path):
    ps = M.init_model_params(CFG, 42, dtype=np.float32)
    path = tmp_path / "model.ckpt"
    formats.save_checkpoint(path, ps, {"seed": "42", "phase1_steps": "10"})
    loaded, meta = formats.load_checkpoint(path)
    assert meta == {"seed": "42", "phase1_steps": "10"}
    assert loaded.config == CFG
    assert loaded.names() == ps.names()
    for name, p in ps.items():
        assert loaded[name].data.tobytes() == p.data.tobytes()

    # canonical byte layout: saving the loaded set reproduces the file
    path2 = tmp_path / "model2.ckpt"
    formats.save_checkpoint(path2, loaded, meta)
    assert path.read_bytes() == path2.read_bytes()


def test_checkpoint_rejects_corruption(tmp_path):
    ps = M.init_model_params(CFG, 1, dtype=np.float32)
    path = tmp_path / "model.ckpt"
    formats.save_checkpoint(path, ps)
    blob = bytearray(path.read_bytes())

    bad_magic = tmp_path / "bad_magic.ckpt"
    bad_magic.write_bytes(b"XXXX" + bytes(blob[4:]))
    with pytest.raises(formats.FormatError):
        formats.load_checkpoint(bad_magic)

    bad_version = tmp_path / "bad_version.ckpt"
    bad_version.write_bytes(bytes(blob[:4]) + b"\xff\x00" + bytes(blob[6:]))
    with pytest.raises(formats.FormatError):
        formats.load_checkpoint(bad_version)

    truncated = tmp_path / "trunc.ckpt"
    truncated.write_bytes(bytes(blob[:len(blob) // 2]))
    with pytest.raises(formats.FormatError):
        formats.load_checkpoint(truncated)


def test_checkpoint_requires_float32():
    ps64 = M.init_model_params(CFG, 1, dtype=np.float64)
    with pytest.raises(formats.FormatError):
        formats.save_checkpoint("/tmp/never-written.ckpt", ps64)


def test_blob_round_trip_and_size(tmp_path):
    ps = M.init_model_params(CFG, 7, dtype=np.float32)
    deployed = export_speaker(ps, CFG, 2)
    path = tmp_path / "spk.adsp"
    formats.save_speaker_blob(path, deployed)
    h, c = CFG.hidden, CFG.cln_sites
    assert path.stat().st_size == formats.blob_file_size(h, c)
    assert path.stat().st_size == 12 + 4 * (2 * h * c + h)

    loaded = formats.load_speaker_blob(path)
    assert loaded.scalar_count == deployed.scalar_count
    npt.assert_array_equal(loaded.embedding, deployed.embedding)
    for a, b in zip(loaded.gammas, deployed.gammas):
        npt.assert_array_equal(a, b)
    for a, b in zip(loaded.betas, deployed.betas):
        npt.assert_array_equal(a, b)

    path2 = tmp_path / "spk2.adsp"
    formats.save_speaker_blob(path2, loaded)
    assert path.read_bytes() == path2.read_bytes()


def test_blob_paper_preset_size():
    assert formats.blob_file_size(256, 9) == 19_468


def test_blob_rejects_corruption(tmp_path):
    rng = np.random.default_rng(5)
    deployed = DeployedSpeakerParams(
        gammas=[rng.normal(size=4).astype(np.float32) for _ in range(3)],
        betas=[rng.normal(size=4).astype(np.float32) for _ in range(3)],
        embedding=rng.normal(size=4).astype(np.float32),
    )
    path = tmp_path / "x.adsp"
    formats.save_speaker_blob(path, deployed)
    blob = bytearray(path.read_bytes())

    bad = tmp_path / "bad.adsp"
    bad.write_bytes(b"NOPE" + bytes(blob[4:]))
    with pytest.raises(formats.FormatError):
        formats.load_speaker_blob(bad)

    short = tmp_path / "short.adsp"
    short.write_bytes(bytes(blob[:-4]))
    with pytest.raises(formats.FormatError):
        formats.load_speaker_blob(short)


def test_mel_round_trip(tmp_path):
    mel = np.random.default_rng(1).normal(size=(13, 5)).astype(np.float32)
    path = tmp_path / "out.mel"
    formats.save_mel(path, mel)
    npt.assert_array_equal(formats.load_mel(path), mel)


def test_corpus_round_trip(tmp_path):
    spec = CorpusSpec(n_speakers=3, n_adapt_speakers=1,
                      utterances_per_speaker=8, phoneme_vocab=9,
                      min_phonemes=3, max_phonemes=5, mel_dim=6,
                      noise_amp=0.02, holdout_utterances=2, adaptation_k=4,
                      seed=77)
    corpus = gen_corpus(spec)
    root = tmp_path / "corpus"
    formats.save_corpus(root, corpus)
    assert (root / "manifest.txt").exists()

    loaded = formats.load_corpus(root)
    assert loaded.spec == spec
    assert loaded.adapt_speaker_ids == corpus.adapt_speaker_ids
    for sid in range(spec.n_speakers):
        for a, b in zip(corpus.utterances[sid], loaded.utterances[sid]):
            npt.assert_array_equal(a.mel, b.mel)
            npt.assert_array_equal(a.phonemes, b.phonemes)
            npt.assert_array_equal(a.durations, b.durations)
            npt.assert_allclose(a.pitch, b.pitch, rtol=1e-6)
            npt.assert_allclose(a.energy, b.energy, rtol=1e-5)
