"""Bit-exact binary file formats.

Everything is little-endian. Tensor records share one encoding across
checkpoints, corpus utterance records and mel files:

    u32 name_len | name bytes | u32 rank | u32 dims[rank] | f32 data

Checkpoint (.ckpt):  "ADCK" | u16 version | u32 config_len | config text
                     | u32 count | records (names sorted)
Speaker blob (.adsp): "ADSP" | u16 version | u16 h | u16 C | u16 reserved
                     | per site gamma then beta (h f32 each) | embedding
                     (file size is exactly 12 + 4*(2*h*C + h) bytes)
Mel file (.mel):      u32 count=1 | one unnamed [T, mel_dim] record
"""

import dataclasses
import struct
from pathlib import Path

import numpy as np

from .corpus import CorpusSpec, SynthCorpus, SyntheticUtterance, gen_speaker
from .model import ModelConfig, ParamSet
from .pipeline import DeployedSpeakerParams

CHECKPOINT_MAGIC = b"ADCK"
BLOB_MAGIC = b"ADSP"
FORMAT_VERSION = 1


class FormatError(ValueError):
    pass


# ---------------------------------------------------------------------------
# tensor records


def _encode_record(name: str, arr: np.ndarray) -> bytes:
    data = np.ascontiguousarray(arr, dtype="<f4")
    name_b = name.encode()
    head = struct.pack("<I", len(name_b)) + name_b
    head += struct.pack("<I", data.ndim)
    head += struct.pack(f"<{data.ndim}I", *data.shape)
    return head + data.tobytes()


class _Reader:
    def __init__(self, blob: bytes, offset: int = 0):
        self.blob = blob
        self.pos = offset

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise FormatError("truncated file")
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def _decode_record(r: _Reader) -> tuple[str, np.ndarray]:
    name = r.take(r.u32()).decode()
    rank = r.u32()
    if rank > 8:
        raise FormatError(f"implausible tensor rank {rank}")
    dims = struct.unpack(f"<{rank}I", r.take(4 * rank))
    count = int(np.prod(dims)) if rank else 1
    data = np.frombuffer(r.take(4 * count), dtype="<f4").reshape(dims)
    return name, data.copy()


def write_records(path, items) -> None:
    chunks = [struct.pack("<I", len(items))]
    chunks.extend(_encode_record(name, arr) for name, arr in items)
    Path(path).write_bytes(b"".join(chunks))


def read_records(path) -> list[tuple[str, np.ndarray]]:
    r = _Reader(Path(path).read_bytes())
    count = r.u32()
    out = [_decode_record(r) for _ in range(count)]
    if r.pos != len(r.blob):
        raise FormatError("trailing bytes after records")
    return out


# ---------------------------------------------------------------------------
# checkpoints


def _config_block(cfg: ModelConfig, metadata: dict) -> str:
    lines = []
    for field in dataclasses.fields(ModelConfig):
        value = getattr(cfg, field.name)
        if isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{field.name}={value}")
    for key in sorted(metadata):
        lines.append(f"meta.{key}={metadata[key]}")
    return "\n".join(lines) + "\n"


def _parse_config_block(text: str) -> tuple[ModelConfig, dict]:
    values, metadata = {}, {}
    kinds = {f.name: f.type for f in dataclasses.fields(ModelConfig)}
    for line in text.splitlines():
        if not line.strip():
            continue
        key, _, raw = line.partition("=")
        if key.startswith("meta."):
            metadata[key[5:]] = raw
            continue
        if key not in kinds:
            raise FormatError(f"unknown checkpoint config key {key!r}")
        kind = {"bool": bool, "int": int, "float": float}.get(kinds[key], kinds[key])
        if kind is bool:
            values[key] = raw == "true"
        else:
            values[key] = kind(raw)
    return ModelConfig(**values), metadata


def save_checkpoint(path, ps: ParamSet, metadata: dict | None = None) -> None:
    if ps.dtype != np.float32:
        raise FormatError("checkpoints store float32 parameters only")
    config = _config_block(ps.config, metadata or {}).encode()
    chunks = [CHECKPOINT_MAGIC, struct.pack("<H", FORMAT_VERSION),
              struct.pack("<I", len(config)), config]
    items = ps.items()
    chunks.append(struct.pack("<I", len(items)))
    chunks.extend(_encode_record(name, p.data) for name, p in items)
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path) -> tuple[ParamSet, dict]:
    r = _Reader(Path(path).read_bytes())
    if r.take(4) != CHECKPOINT_MAGIC:
        raise FormatError("not a checkpoint file (bad magic)")
    version = r.u16()
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    cfg, metadata = _parse_config_block(r.take(r.u32()).decode())
    ps = ParamSet(cfg, np.float32)
    for _ in range(r.u32()):
        name, data = _decode_record(r)
        ps.new(name, data)
    if r.pos != len(r.blob):
        raise FormatError("trailing bytes after checkpoint")
    return ps, metadata


# ---------------------------------------------------------------------------
# speaker blobs


def save_speaker_blob(path, deployed: DeployedSpeakerParams) -> None:
    h = int(deployed.embedding.size)
    sites = len(deployed.gammas)
    if sites != len(deployed.betas):
        raise FormatError("gamma/beta site count mismatch")
    if any(g.size != h for g in deployed.gammas) or any(
            b.size != h for b in deployed.betas):
        raise FormatError("site vector width mismatch")
    if h > 0xFFFF or sites > 0xFFFF:
        raise FormatError("dimensions exceed format limits")
    chunks = [BLOB_MAGIC,
              struct.pack("<HHHH", FORMAT_VERSION, h, sites, 0)]
    for gamma, beta in zip(deployed.gammas, deployed.betas):
        chunks.append(np.ascontiguousarray(gamma, dtype="<f4").tobytes())
        chunks.append(np.ascontiguousarray(beta, dtype="<f4").tobytes())
    chunks.append(np.ascontiguousarray(deployed.embedding, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_speaker_blob(path) -> DeployedSpeakerParams:
    blob = Path(path).read_bytes()
    r = _Reader(blob)
    if r.take(4) != BLOB_MAGIC:
        raise FormatError("not a speaker blob (bad magic)")
    version, h, sites, reserved = struct.unpack("<HHHH", r.take(8))
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported blob version {version}")
    if reserved != 0:
        raise FormatError("nonzero reserved field")
    expected = 12 + 4 * (2 * h * sites + h)
    if len(blob) != expected:
        raise FormatError(
            f"blob size {len(blob)} != expected {expected} for h={h}, C={sites}"
        )
    gammas, betas = [], []
    for _ in range(sites):
        gammas.append(np.frombuffer(r.take(4 * h), dtype="<f4").copy())
        betas.append(np.frombuffer(r.take(4 * h), dtype="<f4").copy())
    embedding = np.frombuffer(r.take(4 * h), dtype="<f4").copy()
    return DeployedSpeakerParams(gammas=gammas, betas=betas, embedding=embedding)


def blob_file_size(h: int, sites: int) -> int:
    return 12 + 4 * (2 * h * sites + h)


# ---------------------------------------------------------------------------
# mel files


def save_mel(path, mel: np.ndarray) -> None:
    if mel.ndim != 2:
        raise FormatError("mel files hold one [T, mel_dim] matrix")
    write_records(path, [("", mel)])


def load_mel(path) -> np.ndarray:
    records = read_records(path)
    if len(records) != 1 or records[0][0] != "":
        raise FormatError("mel file must hold a single unnamed record")
    return records[0][1]


# ---------------------------------------------------------------------------
# corpus directories


def _utterance_filename(speaker: int, index: int) -> str:
    return f"spk{speaker:03d}_utt{index:03d}.rec"


def save_corpus(dirpath, corpus: SynthCorpus) -> None:
    root = Path(dirpath)
    root.mkdir(parents=True, exist_ok=True)
    spec_lines = [
        f"{f.name}={getattr(corpus.spec, f.name)}"
        for f in dataclasses.fields(CorpusSpec)
    ]
    (root / "corpus.cfg").write_text("\n".join(spec_lines) + "\n")

    manifest = []
    for speaker in range(corpus.spec.n_speakers):
        for utt in corpus.utterances[speaker]:
            write_records(root / _utterance_filename(speaker, utt.index), [
                ("phonemes", utt.phonemes.astype(np.float32)),
                ("durations", utt.durations.astype(np.float32)),
                ("pitch", utt.pitch.astype(np.float32)),
                ("energy", utt.energy.astype(np.float32)),
                ("mel", utt.mel),
            ])
            manifest.append(
                f"{speaker} {utt.index} {len(utt.phonemes)} {utt.n_frames}"
            )
    (root / "manifest.txt").write_text("\n".join(manifest) + "\n")


def _load_spec(root: Path) -> CorpusSpec:
    values = {}
    kinds = {f.name: f.type for f in dataclasses.fields(CorpusSpec)}
    for line in (root / "corpus.cfg").read_text().splitlines():
        if not line.strip():
            continue
        key, _, raw = line.partition("=")
        if key not in kinds:
            raise FormatError(f"unknown corpus spec key {key!r}")
        kind = {"int": int, "float": float}.get(kinds[key], kinds[key])
        values[key] = kind(raw)
    return CorpusSpec(**values)


def load_corpus(dirpath) -> SynthCorpus:
    root = Path(dirpath)
    if not (root / "corpus.cfg").exists():
        raise FormatError(f"no corpus at {root}")
    spec = _load_spec(root)
    utterances: dict[int, list[SyntheticUtterance]] = {
        s: [] for s in range(spec.n_speakers)
    }
    for line in (root / "manifest.txt").read_text().splitlines():
        if not line.strip():
            continue
        speaker, index, n_ph, n_frames = (int(v) for v in line.split())
        fields = dict(read_records(root / _utterance_filename(speaker, index)))
        utt = SyntheticUtterance(
            speaker=speaker, index=index,
            phonemes=np.round(fields["phonemes"]).astype(np.int64),
            durations=np.round(fields["durations"]).astype(np.int64),
            pitch=fields["pitch"].astype(np.float64),
            energy=fields["energy"].astype(np.float64),
            mel=fields["mel"], gain=0.0, tilt=0.0,
        )
        if len(utt.phonemes) != n_ph or utt.n_frames != n_frames:
            raise FormatError(f"manifest mismatch for speaker {speaker} "
                              f"utterance {index}")
        utterances[speaker].append(utt)
    for speaker, utts in utterances.items():
        utts.sort(key=lambda u: u.index)
        if len(utts) != spec.utterances_per_speaker:
            raise FormatError(f"speaker {speaker} has {len(utts)} utterances, "
                              f"expected {spec.utterances_per_speaker}")
    speakers = [gen_speaker(spec, j) for j in range(spec.n_speakers)]
    return SynthCorpus(spec=spec, speakers=speakers, utterances=utterances)
