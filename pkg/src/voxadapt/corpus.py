"""Deterministic synthetic multi-speaker corpus.

Every utterance is a pure function of (master seed, speaker index,
utterance index). The construction plants measurable signal at all
three granularities the model conditions on:

* speaker level: a spectral envelope, speaking rate, base pitch, and a
  per-phoneme accent table;
* utterance level: a gain and a spectral tilt drawn around the
  speaker's characteristic values;
* phoneme level: a pitch ripple across mel bins plus an accent-driven
  coloration with per-occurrence jitter, readable from the target mel
  but only partially predictable from text.

Frames within one phoneme span are identical before noise, so
frame-to-phoneme averaging is lossless on noiseless data.
"""

from dataclasses import dataclass, field

import numpy as np

from .rng import stream

GAIN_RANGE = (0.75, 1.25)        # source-speaker characteristic gain
TILT_RANGE = (-0.25, 0.25)       # source-speaker characteristic spectral tilt
ADAPT_GAIN_RANGE = (1.30, 1.55)  # adaptation speakers record "hotter" ...
ADAPT_TILT_RANGE = (0.30, 0.45)  # ... and more tilted than any source speaker
GAIN_JITTER = 0.08               # relative per-utterance gain spread
TILT_JITTER = 0.10               # absolute per-utterance tilt spread
PITCH_RANGE = (2.0, 6.0)
PITCH_JITTER = 0.5
ACCENT_STRENGTH = 0.25           # phoneme-level coloration amplitude
ACCENT_JITTER = 0.4              # per-occurrence share of the coloration


@dataclass(frozen=True)
class CorpusSpec:
    n_speakers: int = 18
    n_adapt_speakers: int = 2
    utterances_per_speaker: int = 30
    phoneme_vocab: int = 40
    min_phonemes: int = 6
    max_phonemes: int = 14
    mel_dim: int = 80
    noise_amp: float = 0.02
    holdout_utterances: int = 5
    adaptation_k: int = 20
    seed: int = 1234

    def validate(self) -> "CorpusSpec":
        for name in ("n_speakers", "n_adapt_speakers", "utterances_per_speaker",
                     "phoneme_vocab", "min_phonemes", "max_phonemes", "mel_dim",
                     "holdout_utterances", "adaptation_k"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.n_speakers < 3:
            raise ValueError("corpus needs at least 3 speakers")
        if self.n_adapt_speakers >= self.n_speakers:
            raise ValueError("adaptation speakers must leave pretrain speakers")
        if self.min_phonemes > self.max_phonemes:
            raise ValueError("min_phonemes > max_phonemes")
        if self.noise_amp < 0:
            raise ValueError("noise_amp must be >= 0")
        if self.utterances_per_speaker < self.adaptation_k + self.holdout_utterances:
            raise ValueError(
                "utterances_per_speaker must cover adaptation_k + holdout"
            )
        return self


@dataclass
class SpeakerProfile:
    index: int
    envelope: np.ndarray       # [mel_dim] in [0.2, 1.0]
    base_pitch: float
    rate: float                # speaking-rate factor in [0.7, 1.3]
    gain: float                # characteristic utterance gain
    tilt: float                # characteristic spectral tilt
    accent: np.ndarray         # [vocab] per-phoneme coloration signs


@dataclass
class SyntheticUtterance:
    speaker: int
    index: int
    phonemes: np.ndarray       # int [L]
    durations: np.ndarray      # int [L], >= 1
    pitch: np.ndarray          # float [L]
    energy: np.ndarray         # float [L]
    mel: np.ndarray            # float32 [T, mel_dim]
    gain: float
    tilt: float

    @property
    def n_frames(self) -> int:
        return int(self.mel.shape[0])


def gen_speaker(spec: CorpusSpec, index: int) -> SpeakerProfile:
    """Adaptation speakers (the last n_adapt_speakers indices) carry
    gain/tilt outside the source-speaker range, mirroring the domain
    shift between pretraining data and custom-voice recordings."""
    if not 0 <= index < spec.n_speakers:
        raise ValueError(f"speaker index {index} out of range")
    g = stream(spec.seed, f"corpus/speaker{index}")
    envelope = g.uniform(0.2, 1.0, size=spec.mel_dim)
    base_pitch = float(g.uniform(*PITCH_RANGE))
    rate = float(g.uniform(0.7, 1.3))
    if index >= spec.n_speakers - spec.n_adapt_speakers:
        gain = float(g.uniform(*ADAPT_GAIN_RANGE))
        tilt = float(g.choice([-1.0, 1.0]) * g.uniform(*ADAPT_TILT_RANGE))
    else:
        gain = float(g.uniform(*GAIN_RANGE))
        tilt = float(g.uniform(*TILT_RANGE))
    return SpeakerProfile(
        index=index,
        envelope=envelope,
        base_pitch=base_pitch,
        rate=rate,
        gain=gain,
        tilt=tilt,
        accent=g.uniform(-1.0, 1.0, size=spec.phoneme_vocab),
    )


def _prototypes(spec: CorpusSpec) -> np.ndarray:
    g = stream(spec.seed, "corpus/prototypes")
    return g.uniform(0.25, 1.0, size=(spec.phoneme_vocab, spec.mel_dim))


def _tilt_profile(mel_dim: int) -> np.ndarray:
    if mel_dim == 1:
        return np.zeros(1)
    return 2.0 * np.arange(mel_dim) / (mel_dim - 1) - 1.0


def _color_profile(mel_dim: int) -> np.ndarray:
    return np.sin(2.0 * np.pi * 3.0 * np.arange(mel_dim) / mel_dim)


def gen_utterance(spec: CorpusSpec, profile: SpeakerProfile, utt_index: int,
                  prototypes: np.ndarray | None = None) -> SyntheticUtterance:
    if prototypes is None:
        prototypes = _prototypes(spec)
    g = stream(spec.seed, f"corpus/speaker{profile.index}/utt{utt_index}")

    length = int(g.integers(spec.min_phonemes, spec.max_phonemes + 1))
    phonemes = g.integers(0, spec.phoneme_vocab, size=length)
    base = g.integers(1, 9, size=length)
    durations = np.maximum(np.round(base * profile.rate), 1).astype(np.int64)

    gain = profile.gain * (1.0 + GAIN_JITTER * g.uniform(-1.0, 1.0))
    tilt = profile.tilt + TILT_JITTER * g.uniform(-1.0, 1.0)
    pitch = profile.base_pitch + PITCH_JITTER * g.uniform(-1.0, 1.0, size=length)
    color = (1.0 - ACCENT_JITTER) * profile.accent[phonemes] \
        + ACCENT_JITTER * g.uniform(-1.0, 1.0, size=length)

    bins = np.arange(spec.mel_dim) / spec.mel_dim
    per_phoneme = (
        profile.envelope[None, :]
        * prototypes[phonemes]
        * gain
        * (1.0 + tilt * _tilt_profile(spec.mel_dim)[None, :])
        * (1.0 + 0.2 * np.sin(pitch[:, None] * bins[None, :]))
        * (1.0 + ACCENT_STRENGTH * color[:, None] * _color_profile(spec.mel_dim)[None, :])
    )
    mel = np.repeat(per_phoneme, durations, axis=0)
    if spec.noise_amp > 0:
        mel = mel + g.normal(0.0, spec.noise_amp, size=mel.shape)
    mel = mel.astype(np.float32)

    seg = np.repeat(np.arange(length), durations)
    sums = np.zeros((length,), dtype=np.float64)
    np.add.at(sums, seg, np.abs(mel.astype(np.float64)).mean(axis=1))
    energy = sums / durations

    return SyntheticUtterance(
        speaker=profile.index, index=utt_index, phonemes=phonemes,
        durations=durations, pitch=pitch, energy=energy, mel=mel,
        gain=float(gain), tilt=float(tilt),
    )


@dataclass
class SynthCorpus:
    spec: CorpusSpec
    speakers: list[SpeakerProfile]
    utterances: dict[int, list[SyntheticUtterance]] = field(repr=False)

    @property
    def adapt_speaker_ids(self) -> list[int]:
        return list(range(self.spec.n_speakers - self.spec.n_adapt_speakers,
                          self.spec.n_speakers))

    @property
    def source_speaker_ids(self) -> list[int]:
        return list(range(self.spec.n_speakers - self.spec.n_adapt_speakers))

    def train_utterances(self, speaker: int) -> list[SyntheticUtterance]:
        cut = self.spec.utterances_per_speaker - self.spec.holdout_utterances
        return self.utterances[speaker][:cut]

    def holdout_utterances(self, speaker: int) -> list[SyntheticUtterance]:
        cut = self.spec.utterances_per_speaker - self.spec.holdout_utterances
        return self.utterances[speaker][cut:]

    def adaptation_utterances(self, speaker: int, k: int) -> list[SyntheticUtterance]:
        if speaker not in self.adapt_speaker_ids:
            raise ValueError(f"speaker {speaker} is not an adaptation speaker")
        if k < 1:
            raise ValueError("adaptation needs k >= 1 utterances")
        pool = self.train_utterances(speaker)
        if k > len(pool):
            raise ValueError(f"k={k} exceeds adaptation pool {len(pool)}")
        return pool[:k]

    def pretrain_pool(self) -> list[SyntheticUtterance]:
        pool = []
        for sid in self.source_speaker_ids:
            pool.extend(self.train_utterances(sid))
        return pool


def gen_corpus(spec: CorpusSpec) -> SynthCorpus:
    spec.validate()
    prototypes = _prototypes(spec)
    speakers = [gen_speaker(spec, j) for j in range(spec.n_speakers)]
    utterances = {
        profile.index: [
            gen_utterance(spec, profile, u, prototypes)
            for u in range(spec.utterances_per_speaker)
        ]
        for profile in speakers
    }
    return SynthCorpus(spec=spec, speakers=speakers, utterances=utterances)
