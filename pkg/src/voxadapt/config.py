"""Run configuration: one flat key=value file drives the whole pipeline.

Unknown keys are rejected; every key has a documented default (see
presets/toy.cfg for the full annotated list). Bundled presets are
addressable by bare name, e.g. --config paper.
"""

import dataclasses
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .corpus import CorpusSpec
from .model import ModelConfig


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # model
    hidden: int = 32
    encoder_layers: int = 2
    decoder_layers: int = 2
    heads: int = 2
    ffn_filter: int = 64
    ffn_kernel: int = 9
    mel_dim: int = 80
    dropout: float = 0.1
    cln_bias: bool = False
    use_cln: bool = True
    use_utterance_cond: bool = True
    use_phoneme_cond: bool = True
    # corpus
    n_speakers: int = 18
    n_adapt_speakers: int = 2
    utterances_per_speaker: int = 30
    phoneme_vocab: int = 40
    min_phonemes: int = 6
    max_phonemes: int = 14
    noise_amp: float = 0.02
    holdout_utterances: int = 5
    # schedule
    pretrain_phase1_steps: int = 1200
    pretrain_phase2_steps: int = 800
    finetune_steps: int = 200
    adaptation_k: int = 20
    batch_size: int = 8
    # optimizer
    learning_rate: float = 2e-3
    finetune_lr: float = 5e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.98
    adam_eps: float = 1e-9
    # reproducibility
    seed: int = 1234

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            hidden=self.hidden, encoder_layers=self.encoder_layers,
            decoder_layers=self.decoder_layers, heads=self.heads,
            ffn_filter=self.ffn_filter, ffn_kernel=self.ffn_kernel,
            mel_dim=self.mel_dim, phoneme_vocab=self.phoneme_vocab,
            n_speakers=self.n_speakers, dropout=self.dropout,
            cln_bias=self.cln_bias, use_cln=self.use_cln,
            use_utterance_cond=self.use_utterance_cond,
            use_phoneme_cond=self.use_phoneme_cond,
        ).validate()

    def corpus_spec(self) -> CorpusSpec:
        return CorpusSpec(
            n_speakers=self.n_speakers,
            n_adapt_speakers=self.n_adapt_speakers,
            utterances_per_speaker=self.utterances_per_speaker,
            phoneme_vocab=self.phoneme_vocab,
            min_phonemes=self.min_phonemes, max_phonemes=self.max_phonemes,
            mel_dim=self.mel_dim, noise_amp=self.noise_amp,
            holdout_utterances=self.holdout_utterances,
            adaptation_k=self.adaptation_k, seed=self.seed,
        ).validate()


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _parse_value(key: str, raw: str):
    kind = _FIELDS[key].type
    kind = {"bool": bool, "int": int, "float": float}.get(kind, kind)
    raw = raw.strip()
    if kind is bool:
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"bad boolean for {key}: {raw!r}")
    try:
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    raise ConfigError(f"unsupported config field type for {key}")


def parse_config_text(text: str, base: RunConfig | None = None) -> RunConfig:
    values = dataclasses.asdict(base) if base else {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected key=value, got {stripped!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in _FIELDS:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        values[key] = _parse_value(key, raw)
    return RunConfig(**values)


def format_config(rc: RunConfig) -> str:
    lines = [f"{f.name}={_format_value(getattr(rc, f.name))}"
             for f in dataclasses.fields(RunConfig)]
    return "\n".join(lines) + "\n"


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)


def preset_path(name: str) -> Path:
    path = resources.files("voxadapt") / "presets" / f"{name}.cfg"
    with resources.as_file(path) as concrete:
        return Path(concrete)


def load_config(ref: str | Path | None) -> RunConfig:
    """Load a config file; bare preset names resolve to bundled presets."""
    if ref is None:
        return RunConfig()
    path = Path(ref)
    if not path.exists() and path.name == str(ref):
        candidate = preset_path(str(ref))
        if candidate.exists():
            path = candidate
    if not path.exists():
        raise ConfigError(f"config not found: {ref}")
    return parse_config_text(path.read_text())
