"""End-to-end command-line pipeline on a miniature config, plus config
parsing and the error contract."""

import numpy as np
import pytest

from voxadapt import formats
from voxadapt.cli import main
from voxadapt.config import ConfigError, RunConfig, load_config, parse_config_text

MINI_CFG = """
hidden=16
encoder_layers=1
decoder_layers=1
heads=2
ffn_filter=24
ffn_kernel=3
mel_dim=10
n_speakers=4
n_adapt_speakers=1
utterances_per_speaker=12
phoneme_vocab=12
min_phonemes=3
max_phonemes=6
noise_amp=0.02
holdout_utterances=3
pretrain_phase1_steps=20
pretrain_phase2_steps=10
finetune_steps=8
adaptation_k=5
batch_size=4
seed=9
"""


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "mini.cfg"
    cfg.write_text(MINI_CFG)
    return root, cfg


def run(*argv):
    return main([str(a) for a in argv])


def test_config_presets_and_rejection():
    paper = load_config("paper")
    assert paper.hidden == 256 and paper.decoder_layers == 4
    assert paper.pretrain_phase1_steps == 60_000
    assert paper.pretrain_phase2_steps == 40_000
    assert paper.finetune_steps == 2_000 and paper.adaptation_k == 20
    toy = load_config("toy")
    assert toy == RunConfig()  # toy preset documents exactly the defaults

    with pytest.raises(ConfigError):
        parse_config_text("no_such_key=1")
    with pytest.raises(ConfigError):
        parse_config_text("hidden=abc")
    with pytest.raises(ConfigError):
        load_config("/nonexistent/path.cfg")


def test_full_cli_pipeline(workspace, capsys):
    root, cfg = workspace
    corpus_dir = root / "corpus"
    ckpt = root / "pre.ckpt"
    adapted = root / "adapted.ckpt"
    blob = root / "spk.adsp"
    mel_out = root / "out.mel"
    report = root / "report.txt"

    assert run("gen-corpus", "--config", cfg, "--out", corpus_dir) == 0
    assert (corpus_dir / "manifest.txt").exists()

    # determinism: regenerating produces byte-identical records
    again = root / "corpus2"
    assert run("gen-corpus", "--config", cfg, "--out", again, "--quiet") == 0
    sample = "spk000_utt000.rec"
    assert (corpus_dir / sample).read_bytes() == (again / sample).read_bytes()
    assert (corpus_dir / "manifest.txt").read_text() == \
        (again / "manifest.txt").read_text()

    assert run("pretrain", "--config", cfg, "--corpus", corpus_dir,
               "--out", ckpt, "--quiet") == 0
    assert ckpt.exists() and (root / "pre.ckpt.log").exists()
    log_lines = (root / "pre.ckpt.log").read_text().splitlines()
    assert log_lines[0].startswith("step\t")
    assert len(log_lines) == 1 + 30

    ckpt2 = root / "pre2.ckpt"
    assert run("pretrain", "--config", cfg, "--corpus", corpus_dir,
               "--out", ckpt2, "--quiet") == 0
    assert ckpt.read_bytes() == ckpt2.read_bytes()

    assert run("finetune", "--config", cfg, "--checkpoint", ckpt,
               "--corpus", corpus_dir, "--out", adapted, "--quiet") == 0
    _, meta = formats.load_checkpoint(adapted)
    assert meta["adapted_speaker"] == "3"

    assert run("export-speaker", "--checkpoint", adapted, "--speaker", 3,
               "--out", blob, "--quiet") == 0
    h, sites = 16, 3
    assert blob.stat().st_size == 12 + 4 * (2 * h * sites + h)

    phonemes = root / "phonemes.txt"
    phonemes.write_text("1 4 2 7 0 3")
    reference = corpus_dir / "spk003_utt000.rec"
    assert run("infer", "--checkpoint", adapted, "--blob", blob,
               "--phonemes", phonemes, "--reference", reference,
               "--out", mel_out, "--quiet") == 0
    mel = formats.load_mel(mel_out)
    assert mel.ndim == 2 and mel.shape[1] == 10 and np.isfinite(mel).all()

    mel_out2 = root / "out2.mel"
    assert run("infer", "--checkpoint", adapted, "--blob", blob,
               "--phonemes", phonemes, "--reference", reference,
               "--out", mel_out2, "--quiet") == 0
    assert mel_out.read_bytes() == mel_out2.read_bytes()

    assert run("eval", "--checkpoint", adapted, "--blob", blob,
               "--corpus", corpus_dir, "--report", report, "--quiet") == 0
    lines = report.read_text().splitlines()
    assert lines[0].split("\t")[:2] == ["speaker", "K"]
    assert lines[1].split("\t")[0] == "3"

    capsys.readouterr()
    assert run("inspect", "--checkpoint", ckpt) == 0
    out = capsys.readouterr().out
    assert "finetuned\t1552" in out       # 2*16*16*3 + 16, from the walk
    assert "deployed\t112" in out         # 2*16*3 + 16
    assert "closed-form check ok" in out

    assert run("inspect", "--blob", blob) == 0
    out = capsys.readouterr().out
    assert "scalars=112" in out and "formula ok" in out

    vectors = root / "vectors.txt"
    assert run("dump-utterance-vectors", "--checkpoint", ckpt,
               "--corpus", corpus_dir, "--out", vectors, "--quiet") == 0
    rows = vectors.read_text().splitlines()
    assert len(rows) == 4 * 12
    first = rows[0].split()
    assert first[0] == "0" and len(first) == 1 + 16


def test_cli_error_contract(workspace, capsys, tmp_path):
    root, cfg = workspace
    bad_cfg = tmp_path / "bad.cfg"
    bad_cfg.write_text("definitely_not_a_key=1\n")
    assert run("gen-corpus", "--config", bad_cfg, "--out", tmp_path / "x") == 1
    err = capsys.readouterr().err
    assert err.startswith("error: ") and "\n" == err[-1]

    garbage = tmp_path / "garbage.ckpt"
    garbage.write_bytes(b"not a checkpoint")
    assert run("inspect", "--checkpoint", garbage) == 1
    err = capsys.readouterr().err
    assert err.startswith("error: FormatError:")

    assert run("inspect") == 2
