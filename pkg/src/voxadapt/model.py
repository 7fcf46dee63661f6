"""FastSpeech-style backbone with conditional layer norm in the decoder.

Encoder blocks use plain layer norm; every decoder normalization site
(two per layer plus one final) is conditional: its scale and bias are
linear functions of the speaker embedding, and exactly those 2*h*h
matrices per site plus one embedding row form the per-speaker
adaptation set. Pitch and energy enter as learned-vector additions,
duration drives the length regulator.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from . import acoustic
from . import functional as F
from .rng import stream
from .tensor import Parameter, Tensor, gather_rows

EMB_SCALE = 0.1  # initial speaker-embedding magnitude; W_gamma init targets gamma ~= 1


@dataclass
class ModelConfig:
    hidden: int = 32
    encoder_layers: int = 2
    decoder_layers: int = 2
    heads: int = 2
    ffn_filter: int = 64
    ffn_kernel: int = 9
    mel_dim: int = 80
    phoneme_vocab: int = 40
    n_speakers: int = 18
    dropout: float = 0.1
    cln_bias: bool = False
    use_cln: bool = True
    use_utterance_cond: bool = True
    use_phoneme_cond: bool = True

    @property
    def cln_sites(self) -> int:
        return 2 * self.decoder_layers + 1

    def validate(self):
        if self.hidden % self.heads != 0:
            raise ValueError("hidden size must be divisible by head count")
        if self.ffn_kernel % 2 == 0:
            raise ValueError("ffn kernel size must be odd")
        for field in ("hidden", "encoder_layers", "decoder_layers", "heads",
                      "ffn_filter", "ffn_kernel", "mel_dim", "phoneme_vocab",
                      "n_speakers"):
            if getattr(self, field) < 1:
                raise ValueError(f"{field} must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        return self

    @classmethod
    def paper_preset(cls, **overrides) -> "ModelConfig":
        cfg = cls(hidden=256, encoder_layers=4, decoder_layers=4, heads=2,
                  ffn_filter=1024, ffn_kernel=9, mel_dim=80)
        return replace(cfg, **overrides).validate()


class ParamSet:
    """Named parameter table plus cached positional encodings."""

    def __init__(self, config: ModelConfig, dtype=np.float32):
        self.config = config
        self.dtype = np.dtype(dtype)
        self._params: dict[str, Parameter] = {}
        self._pe = np.zeros((0, config.hidden), dtype=self.dtype)

    def new(self, name: str, value) -> Parameter:
        if name in self._params:
            raise ValueError(f"duplicate parameter name: {name}")
        p = Parameter(name, np.asarray(value, dtype=self.dtype))
        self._params[name] = p
        return p

    def __getitem__(self, name: str) -> Parameter:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def names(self) -> list[str]:
        return sorted(self._params)

    def items(self):
        return [(n, self._params[n]) for n in self.names()]

    def params(self) -> list[Parameter]:
        return [self._params[n] for n in self.names()]

    def copy(self) -> "ParamSet":
        out = ParamSet(self.config, self.dtype)
        for name, p in self.items():
            clone = out.new(name, p.data.copy())
            clone.trainable = p.trainable
        return out

    def set_trainable(self, predicate):
        # frozen parameters also stop requiring grad, which prunes their
        # subgraphs from the tape (finetune backward skips the encoder)
        for name, p in self._params.items():
            p.trainable = bool(predicate(name))
            p.requires_grad = p.trainable

    def pe(self, length: int) -> np.ndarray:
        if length > self._pe.shape[0]:
            self._pe = _build_pe(max(length, 2 * self._pe.shape[0]),
                                 self.config.hidden, self.dtype)
        return self._pe[:length]


def _build_pe(length, h, dtype):
    pos = np.arange(length, dtype=np.float64)[:, None]
    idx = np.arange(h)[None, :]
    angle = pos / np.power(10000.0, (2.0 * (idx // 2)) / h)
    return np.where(idx % 2 == 0, np.sin(angle), np.cos(angle)).astype(dtype)


class _Init:
    """Per-name deterministic initializers (independent of creation order)."""

    def __init__(self, seed: int, dtype):
        self.seed = seed
        self.dtype = np.dtype(dtype)

    def _u(self, name, shape, scale):
        g = stream(self.seed, f"init/{name}")
        return (g.uniform(-1.0, 1.0, size=shape) * scale).astype(self.dtype)

    def matrix(self, ps, name, n_in, n_out, scale=None):
        ps.new(name, self._u(name, (n_in, n_out), scale or 1.0 / math.sqrt(n_in)))

    def linear(self, ps, prefix, n_in, n_out):
        self.matrix(ps, f"{prefix}.w", n_in, n_out)
        ps.new(f"{prefix}.b", np.zeros(n_out))

    def conv(self, ps, prefix, c_out, c_in, k):
        scale = 1.0 / math.sqrt(c_in * k)
        ps.new(f"{prefix}.w", self._u(f"{prefix}.w", (c_out, c_in, k), scale))
        ps.new(f"{prefix}.b", np.zeros(c_out))

    def ln(self, ps, prefix, h):
        ps.new(f"{prefix}.gamma", np.ones(h))
        ps.new(f"{prefix}.beta", np.zeros(h))

    def vector(self, ps, name, n, scale):
        ps.new(name, self._u(name, (n,), scale))


def _register_attention(ps, init, prefix, h):
    for proj in ("wq", "wk", "wv", "wo"):
        init.matrix(ps, f"{prefix}.{proj}", h, h)
    for bias in ("bq", "bk", "bv", "bo"):
        ps.new(f"{prefix}.{bias}", np.zeros(h))


def _register_ffn(ps, init, prefix, cfg):
    init.conv(ps, f"{prefix}.conv1", cfg.ffn_filter, cfg.hidden, cfg.ffn_kernel)
    init.conv(ps, f"{prefix}.conv2", cfg.hidden, cfg.ffn_filter, 1)


def _register_cln(ps, init, prefix, cfg):
    h = cfg.hidden
    scale = 1.0 / (h * EMB_SCALE)
    w_gamma = scale * (1.0 + 0.1 * init._u(f"{prefix}.w_gamma", (h, h), 1.0))
    ps.new(f"{prefix}.w_gamma", w_gamma)
    init.matrix(ps, f"{prefix}.w_beta", h, h, scale=0.01 * scale)
    if cfg.cln_bias:
        ps.new(f"{prefix}.b_gamma", np.ones(h))
        ps.new(f"{prefix}.b_beta", np.zeros(h))


def _register_predictor(ps, init, prefix, cfg):
    h = cfg.hidden
    init.conv(ps, f"{prefix}.conv1", h, h, 3)
    init.ln(ps, f"{prefix}.ln1", h)
    init.conv(ps, f"{prefix}.conv2", h, h, 3)
    init.ln(ps, f"{prefix}.ln2", h)
    init.linear(ps, f"{prefix}.out", h, 1)


def cln_site_prefixes(cfg: ModelConfig) -> list[str]:
    sites = []
    for i in range(cfg.decoder_layers):
        sites.append(f"decoder.layer{i}.cln_attn")
        sites.append(f"decoder.layer{i}.cln_ffn")
    sites.append("decoder.final_cln")
    return sites


def init_model_params(cfg: ModelConfig, seed: int, dtype=np.float32) -> ParamSet:
    cfg.validate()
    ps = ParamSet(cfg, dtype)
    init = _Init(seed, dtype)
    h = cfg.hidden

    init.matrix(ps, "embed.phoneme.table", cfg.phoneme_vocab, h,
                scale=1.0 / math.sqrt(h))
    table = EMB_SCALE * (
        1.0 + 0.1 * init._u("speaker.table", (cfg.n_speakers, h), 1.0)
    )
    ps.new("speaker.table", table)

    for i in range(cfg.encoder_layers):
        prefix = f"encoder.layer{i}"
        _register_attention(ps, init, f"{prefix}.attn", h)
        init.ln(ps, f"{prefix}.ln_attn", h)
        _register_ffn(ps, init, f"{prefix}.ffn", cfg)
        init.ln(ps, f"{prefix}.ln_ffn", h)

    for i in range(cfg.decoder_layers):
        prefix = f"decoder.layer{i}"
        _register_attention(ps, init, f"{prefix}.attn", h)
        _register_ffn(ps, init, f"{prefix}.ffn", cfg)
        if cfg.use_cln:
            _register_cln(ps, init, f"{prefix}.cln_attn", cfg)
            _register_cln(ps, init, f"{prefix}.cln_ffn", cfg)
        else:
            init.ln(ps, f"{prefix}.ln_attn", h)
            init.ln(ps, f"{prefix}.ln_ffn", h)
    if cfg.use_cln:
        _register_cln(ps, init, "decoder.final_cln", cfg)
    else:
        init.ln(ps, "decoder.final_ln", h)

    init.linear(ps, "mel_proj", h, cfg.mel_dim)

    for name in ("duration", "pitch", "energy"):
        _register_predictor(ps, init, f"var.{name}", cfg)
    init.vector(ps, "var.embed.pitch_vec", h, 1.0 / math.sqrt(h))
    init.vector(ps, "var.embed.energy_vec", h, 1.0 / math.sqrt(h))

    acoustic.register_params(ps, cfg, init)
    return ps


# ---------------------------------------------------------------------------
# forward passes


def _attention_block(ps, prefix, x, cfg, training, rng):
    out = F.multi_head_attention(
        x,
        wq=ps[f"{prefix}.wq"], bq=ps[f"{prefix}.bq"],
        wk=ps[f"{prefix}.wk"], bk=ps[f"{prefix}.bk"],
        wv=ps[f"{prefix}.wv"], bv=ps[f"{prefix}.bv"],
        wo=ps[f"{prefix}.wo"], bo=ps[f"{prefix}.bo"],
        n_heads=cfg.heads,
    )
    return F.dropout(out, cfg.dropout, rng, training)


def _ffn_block(ps, prefix, x, cfg, training, rng):
    y = F.conv1d(x, ps[f"{prefix}.conv1.w"], ps[f"{prefix}.conv1.b"])
    y = F.relu(y)
    y = F.conv1d(y, ps[f"{prefix}.conv2.w"], ps[f"{prefix}.conv2.b"])
    return F.dropout(y, cfg.dropout, rng, training)


def encode_phonemes(ps, cfg, phoneme_ids, training=False, rng=None) -> Tensor:
    ids = np.asarray(phoneme_ids, dtype=np.int64)
    if ids.ndim != 1 or ids.size == 0:
        raise ValueError("encode_phonemes expects a non-empty id sequence")
    if ids.min() < 0 or ids.max() >= cfg.phoneme_vocab:
        raise ValueError("phoneme id out of range")
    x = gather_rows(ps["embed.phoneme.table"], ids)
    x = x + Tensor(ps.pe(ids.size))
    x = F.dropout(x, cfg.dropout, rng, training)
    for i in range(cfg.encoder_layers):
        prefix = f"encoder.layer{i}"
        a = _attention_block(ps, f"{prefix}.attn", x, cfg, training, rng)
        x = F.layer_norm(x + a, ps[f"{prefix}.ln_attn.gamma"],
                         ps[f"{prefix}.ln_attn.beta"])
        f = _ffn_block(ps, f"{prefix}.ffn", x, cfg, training, rng)
        x = F.layer_norm(x + f, ps[f"{prefix}.ln_ffn.gamma"],
                         ps[f"{prefix}.ln_ffn.beta"])
    return x


def _predictor_head(ps, prefix, x, cfg, training, rng):
    y = F.conv1d(x, ps[f"{prefix}.conv1.w"], ps[f"{prefix}.conv1.b"])
    y = F.relu(y)
    y = F.layer_norm(y, ps[f"{prefix}.ln1.gamma"], ps[f"{prefix}.ln1.beta"])
    y = F.dropout(y, cfg.dropout, rng, training)
    y = F.conv1d(y, ps[f"{prefix}.conv2.w"], ps[f"{prefix}.conv2.b"])
    y = F.relu(y)
    y = F.layer_norm(y, ps[f"{prefix}.ln2.gamma"], ps[f"{prefix}.ln2.beta"])
    y = F.dropout(y, cfg.dropout, rng, training)
    y = F.linear(y, ps[f"{prefix}.out.w"], ps[f"{prefix}.out.b"])
    return y.reshape(x.data.shape[0])


def predict_variances(ps, cfg, hiddens, training=False, rng=None):
    """Per-phoneme (log-duration, pitch, energy) heads over [L, h] hiddens."""
    if hiddens.data.ndim != 2 or hiddens.data.shape[0] == 0:
        raise ValueError("predict_variances expects a non-empty [L, h] matrix")
    return tuple(
        _predictor_head(ps, f"var.{name}", hiddens, cfg, training, rng)
        for name in ("duration", "pitch", "energy")
    )


def embed_variances(ps, hiddens, pitch, energy) -> Tensor:
    length = hiddens.data.shape[0]
    p = pitch if isinstance(pitch, Tensor) else Tensor(
        np.asarray(pitch, dtype=hiddens.dtype))
    e = energy if isinstance(energy, Tensor) else Tensor(
        np.asarray(energy, dtype=hiddens.dtype))
    if p.data.shape != (length,) or e.data.shape != (length,):
        raise ValueError("pitch/energy must be length-L sequences")
    return (hiddens
            + p.reshape(length, 1) * ps["var.embed.pitch_vec"]
            + e.reshape(length, 1) * ps["var.embed.energy_vec"])


def durations_from_log(log_durations) -> np.ndarray:
    """round-half-up(exp(x) - 1), clamped to >= 0 frames."""
    y = np.exp(np.asarray(log_durations, dtype=np.float64)) - 1.0
    return np.maximum(np.floor(y + 0.5), 0).astype(np.int64)


def speaker_embedding(ps, speaker_id: int) -> Tensor:
    table = ps["speaker.table"]
    if not 0 <= speaker_id < table.data.shape[0]:
        raise ValueError(f"unknown speaker id: {speaker_id}")
    return gather_rows(table, [speaker_id]).reshape(table.data.shape[1])


def cln_site_vectors(ps, cfg, emb: Tensor):
    """Per-site (gamma, beta) vectors computed from a speaker embedding.

    Deployment exports exactly these tensors' values, so matrices-mode
    decoding and deployed-mode decoding share one computation path.
    """
    pairs = []
    for prefix in cln_site_prefixes(cfg):
        b_gamma = ps[f"{prefix}.b_gamma"] if cfg.cln_bias else None
        b_beta = ps[f"{prefix}.b_beta"] if cfg.cln_bias else None
        gamma = F.linear(emb, ps[f"{prefix}.w_gamma"], b_gamma)
        beta = F.linear(emb, ps[f"{prefix}.w_beta"], b_beta)
        pairs.append((gamma, beta))
    return pairs


def decode_mel(ps, cfg, frames, speaker_emb=None, deployed=None,
               training=False, rng=None) -> Tensor:
    """Frames [T, h] -> mel [T, mel_dim] under one of two speaker modes:
    a speaker embedding driving the CLN matrices, or precomputed
    per-site gamma/beta vectors from a deployment export."""
    if cfg.use_cln:
        if (speaker_emb is None) == (deployed is None):
            raise ValueError("supply exactly one of speaker_emb or deployed")
        if deployed is not None:
            gammas, betas = deployed.gammas, deployed.betas
            if len(gammas) != cfg.cln_sites or len(betas) != cfg.cln_sites:
                raise ValueError(
                    f"deployed vector count {len(gammas)} != sites {cfg.cln_sites}"
                )
            h = cfg.hidden
            if any(g.shape != (h,) for g in gammas) or any(
                    b.shape != (h,) for b in betas):
                raise ValueError("deployed vector width mismatch")
            site_gb = [(Tensor(np.asarray(g, dtype=ps.dtype)),
                        Tensor(np.asarray(b, dtype=ps.dtype)))
                       for g, b in zip(gammas, betas)]
        else:
            site_gb = cln_site_vectors(ps, cfg, speaker_emb)
    else:
        site_gb = [
            (ps[f"decoder.layer{i}.{kind}.gamma"], ps[f"decoder.layer{i}.{kind}.beta"])
            for i in range(cfg.decoder_layers)
            for kind in ("ln_attn", "ln_ffn")
        ] + [(ps["decoder.final_ln.gamma"], ps["decoder.final_ln.beta"])]

    x = frames + Tensor(ps.pe(frames.data.shape[0]))
    x = F.dropout(x, cfg.dropout, rng, training)
    site = 0
    for i in range(cfg.decoder_layers):
        prefix = f"decoder.layer{i}"
        a = _attention_block(ps, f"{prefix}.attn", x, cfg, training, rng)
        x = F.layer_norm(x + a, *site_gb[site])
        site += 1
        f = _ffn_block(ps, f"{prefix}.ffn", x, cfg, training, rng)
        x = F.layer_norm(x + f, *site_gb[site])
        site += 1
    x = F.layer_norm(x, *site_gb[site])
    return F.linear(x, ps["mel_proj.w"], ps["mel_proj.b"])


# ---------------------------------------------------------------------------
# parameter accounting


def is_cln_matrix(name: str) -> bool:
    tail = name.rsplit(".", 1)[-1]
    return (".cln_" in name or ".final_cln." in name) and tail in (
        "w_gamma", "w_beta", "b_gamma", "b_beta",
    )


def finetuned_param_names(ps) -> list[str]:
    """CLN weights; the speaker table is handled at row granularity."""
    return [name for name, _ in ps.items() if is_cln_matrix(name)]


def count_params(ps, cfg, scope: str) -> int:
    """Exact count by walking the parameter tables (never the closed form)."""
    if scope == "total":
        return sum(p.data.size for p in ps.params())
    if scope == "finetuned":
        n = sum(ps[name].data.size for name in finetuned_param_names(ps))
        return n + ps["speaker.table"].data.shape[1]
    if scope == "deployed":
        n = ps["speaker.table"].data.shape[1]
        if cfg.use_cln:
            for prefix in cln_site_prefixes(cfg):
                n += ps[f"{prefix}.w_gamma"].data.shape[1]
                n += ps[f"{prefix}.w_beta"].data.shape[1]
        return n
    raise ValueError(f"unknown scope: {scope!r}")
