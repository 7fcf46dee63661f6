"""Utterance- and phoneme-level acoustic condition modeling.

Three small conv networks: an utterance encoder (reference mel -> one
global vector), a phoneme encoder (phoneme-averaged target mel -> one
4-dim vector per phoneme, training route) and a phoneme predictor
(conditioned text hiddens -> the same 4-dim vectors, inference route).
The 4-dim vectors are bridged back to the hidden width by a learned
projection before being added to the hidden sequence.
"""

import numpy as np

from . import functional as F
from .kernels import PAD_EDGE
from .tensor import Tensor

COND_DIM = 4          # phoneme-level bottleneck width
UTT_KERNEL = 5
UTT_STRIDE = 3
PHONEME_KERNEL = 3


def register_params(ps, cfg, init):
    h, mel = cfg.hidden, cfg.mel_dim
    if cfg.use_utterance_cond:
        init.conv(ps, "acoustic.utterance.conv1", h, mel, UTT_KERNEL)
        init.ln(ps, "acoustic.utterance.ln1", h)
        init.conv(ps, "acoustic.utterance.conv2", h, h, UTT_KERNEL)
        init.ln(ps, "acoustic.utterance.ln2", h)
    if cfg.use_phoneme_cond:
        for prefix, c_in in (
            ("acoustic.phoneme_enc", mel),
            ("acoustic.phoneme_pred", h),
        ):
            init.conv(ps, f"{prefix}.conv1", h, c_in, PHONEME_KERNEL)
            init.ln(ps, f"{prefix}.ln1", h)
            init.conv(ps, f"{prefix}.conv2", h, h, PHONEME_KERNEL)
            init.ln(ps, f"{prefix}.ln2", h)
            init.linear(ps, f"{prefix}.out", h, COND_DIM)
        init.matrix(ps, "acoustic.project", COND_DIM, h, 1.0 / np.sqrt(COND_DIM))


def _conv_block(ps, prefix, x, pad_mode, stride=1):
    x = F.conv1d(x, ps[f"{prefix}.w"], ps[f"{prefix}.b"], stride=stride,
                 pad_mode=pad_mode)
    return x


def utterance_encode(ps, mel: Tensor) -> Tensor:
    """Reference mel [T, mel_dim] -> one h-vector of global conditions.

    Edge-replicate padding keeps the encoder invariant to duplicating a
    time-constant input, which zero padding would break at the borders.
    """
    if mel.data.ndim != 2 or mel.data.shape[0] == 0:
        raise ValueError("utterance_encode expects a non-empty [T, mel] matrix")
    x = _conv_block(ps, "acoustic.utterance.conv1", mel, PAD_EDGE, UTT_STRIDE)
    x = F.relu(x)
    x = F.layer_norm(x, ps["acoustic.utterance.ln1.gamma"],
                     ps["acoustic.utterance.ln1.beta"])
    x = _conv_block(ps, "acoustic.utterance.conv2", x, PAD_EDGE, UTT_STRIDE)
    x = F.relu(x)
    x = F.layer_norm(x, ps["acoustic.utterance.ln2.gamma"],
                     ps["acoustic.utterance.ln2.beta"])
    return F.mean_pool_time(x)


def _phoneme_net(ps, prefix, x: Tensor) -> Tensor:
    if x.data.ndim != 2 or x.data.shape[0] == 0:
        raise ValueError("phoneme-level net expects a non-empty [L, d] matrix")
    x = _conv_block(ps, f"{prefix}.conv1", x, "zero")
    x = F.relu(x)
    x = F.layer_norm(x, ps[f"{prefix}.ln1.gamma"], ps[f"{prefix}.ln1.beta"])
    x = _conv_block(ps, f"{prefix}.conv2", x, "zero")
    x = F.relu(x)
    x = F.layer_norm(x, ps[f"{prefix}.ln2.gamma"], ps[f"{prefix}.ln2.beta"])
    return F.linear(x, ps[f"{prefix}.out.w"], ps[f"{prefix}.out.b"])


def phoneme_encode(ps, phoneme_mel: Tensor) -> Tensor:
    """Phoneme-averaged mel [L, mel_dim] -> [L, 4] condition sequence."""
    return _phoneme_net(ps, "acoustic.phoneme_enc", phoneme_mel)


def phoneme_predict(ps, phoneme_hiddens: Tensor) -> Tensor:
    """Conditioned hiddens [L, h] -> predicted [L, 4] condition sequence."""
    return _phoneme_net(ps, "acoustic.phoneme_pred", phoneme_hiddens)


def combine_conditions(hiddens, utterance_vec, phoneme_seq, speaker_emb, projection):
    """hiddens + broadcast(utterance) + broadcast(speaker) + phoneme @ projection."""
    length, h = hiddens.data.shape
    out = hiddens
    if speaker_emb is not None:
        if speaker_emb.data.shape != (h,):
            raise ValueError("speaker embedding width mismatch")
        out = out + speaker_emb
    if utterance_vec is not None:
        if utterance_vec.data.shape != (h,):
            raise ValueError("utterance vector width mismatch")
        out = out + utterance_vec
    if phoneme_seq is not None:
        if phoneme_seq.data.shape[0] != length:
            raise ValueError("phoneme condition length mismatch")
        out = out + F.matmul(phoneme_seq, projection)
    return out
