"""Pretrain, finetune, deploy and infer.

Stage trainability:
  phase 1   everything except the phoneme-level acoustic predictor;
  phase 2   everything (the predictor learns from MSE against the
            detached phoneme-encoder output, and its input hiddens are
            detached too, so that loss moves predictor weights only);
  finetune  exactly the conditional-layer-norm weights plus the target
            speaker's embedding row (just the row when CLN is ablated).

Deployment precomputes each site's gamma/beta from the speaker
embedding through the same code path the decoder uses, so deployed-mode
inference is bit-identical to matrices-mode inference.
"""

from dataclasses import dataclass

import numpy as np

from . import acoustic
from . import functional as F
from . import model as M
from .rng import stream
from .tensor import Tensor, no_grad


class PipelineError(RuntimeError):
    pass


@dataclass
class DeployedSpeakerParams:
    """Per-speaker inference artifact: C (gamma, beta) pairs plus the
    speaker embedding; exactly 2*h*C + h scalars."""

    gammas: list[np.ndarray]
    betas: list[np.ndarray]
    embedding: np.ndarray
    speaker_id: int | None = None

    @property
    def scalar_count(self) -> int:
        total = self.embedding.size
        total += sum(g.size for g in self.gammas)
        total += sum(b.size for b in self.betas)
        return total


def export_speaker(ps, cfg, speaker_id: int) -> DeployedSpeakerParams:
    """Precompute gamma/beta for every CLN site from one embedding row."""
    if not cfg.use_cln:
        raise PipelineError("export requires a conditional-layer-norm model")
    emb = M.speaker_embedding(ps, speaker_id)
    with no_grad():
        pairs = M.cln_site_vectors(ps, cfg, emb)
    return DeployedSpeakerParams(
        gammas=[g.data.copy() for g, _ in pairs],
        betas=[b.data.copy() for _, b in pairs],
        embedding=emb.data.copy(),
        speaker_id=speaker_id,
    )


# ---------------------------------------------------------------------------
# losses

LOSS_NAMES = ("mel", "duration", "pitch", "energy", "predictor")


def _utterance_losses(ps, cfg, utt, mode, rng, training):
    mel_target = Tensor(utt.mel.astype(ps.dtype))
    hid = M.encode_phonemes(ps, cfg, utt.phonemes, training, rng)
    emb = M.speaker_embedding(ps, utt.speaker)

    utt_vec = None
    if cfg.use_utterance_cond:
        utt_vec = acoustic.utterance_encode(ps, mel_target)
    hid = acoustic.combine_conditions(hid, utt_vec, None, emb, None)

    losses = {}
    if cfg.use_phoneme_cond:
        q_true = acoustic.phoneme_encode(
            ps, F.phoneme_average(mel_target, utt.durations)
        )
        if mode in ("phase2", "finetune"):
            q_pred = acoustic.phoneme_predict(ps, hid.detach())
            losses["predictor"] = F.mse(q_pred, q_true.detach())
        hid = acoustic.combine_conditions(
            hid, None, q_true, None, ps["acoustic.project"]
        )

    log_dur, pitch, energy = M.predict_variances(ps, cfg, hid, training, rng)
    dur_target = np.log1p(utt.durations.astype(np.float64)).astype(ps.dtype)
    losses["duration"] = F.mse(log_dur, Tensor(dur_target))
    losses["pitch"] = F.mse(pitch, Tensor(utt.pitch.astype(ps.dtype)))
    losses["energy"] = F.mse(energy, Tensor(utt.energy.astype(ps.dtype)))

    hid = M.embed_variances(ps, hid, utt.pitch.astype(ps.dtype),
                            utt.energy.astype(ps.dtype))
    frames = F.length_regulate(hid, utt.durations)
    mel_out = M.decode_mel(
        ps, cfg, frames,
        speaker_emb=emb if cfg.use_cln else None,
        training=training, rng=rng,
    )
    losses["mel"] = F.mse(mel_out, mel_target)
    return losses


def compute_losses(ps, cfg, batch, mode, rng=None, training=True):
    """Named mean losses over a batch; mode in {phase1, phase2, finetune}."""
    if mode not in ("phase1", "phase2", "finetune"):
        raise ValueError(f"unknown loss mode: {mode!r}")
    if not batch:
        raise PipelineError("empty batch")
    sums: dict[str, Tensor] = {}
    for utt in batch:
        for name, value in _utterance_losses(
                ps, cfg, utt, mode, rng, training).items():
            sums[name] = value if name not in sums else sums[name] + value

    inv = 1.0 / len(batch)
    losses = {name: value * inv for name, value in sums.items()}
    total = None
    for name in LOSS_NAMES:
        if name not in losses:
            continue
        if not np.isfinite(losses[name].data):
            raise PipelineError(f"non-finite {name} loss")
        total = losses[name] if total is None else total + losses[name]
    losses["total"] = total
    return losses


# ---------------------------------------------------------------------------
# trainability masks


def apply_stage_mask(ps, cfg, stage: str, speaker_id: int | None = None):
    if stage == "phase1":
        ps.set_trainable(lambda n: not n.startswith("acoustic.phoneme_pred."))
    elif stage == "phase2":
        ps.set_trainable(lambda n: True)
    elif stage == "finetune":
        allowed = set(M.finetuned_param_names(ps))
        allowed.add("speaker.table")
        ps.set_trainable(lambda n: n in allowed)
    else:
        raise ValueError(f"unknown stage: {stage!r}")


# ---------------------------------------------------------------------------
# training loops


def _adam(ps, rc, lr):
    from .optim import Adam

    return Adam(ps.params(), lr=lr, beta1=rc.adam_beta1, beta2=rc.adam_beta2,
                eps=rc.adam_eps)


def _sample(rng, pool, batch_size):
    take = min(batch_size, len(pool))
    idx = rng.choice(len(pool), size=take, replace=False)
    return [pool[i] for i in idx]


def pretrain(corpus, rc, progress=None):
    """Two-phase pretraining on the source speakers; returns (params, log)."""
    cfg = rc.model_config()
    pool = corpus.pretrain_pool()
    if not pool:
        raise PipelineError("empty pretraining corpus")
    if rc.pretrain_phase1_steps < 0 or rc.pretrain_phase2_steps < 0:
        raise PipelineError("schedule must be non-negative")

    ps = M.init_model_params(cfg, rc.seed)
    opt = _adam(ps, rc, rc.learning_rate)
    data_rng = stream(rc.seed, "pretrain/data")
    drop_rng = stream(rc.seed, "pretrain/dropout")

    log_rows = []
    total = rc.pretrain_phase1_steps + rc.pretrain_phase2_steps
    for step in range(total):
        mode = "phase1" if step < rc.pretrain_phase1_steps else "phase2"
        if step == 0 or step == rc.pretrain_phase1_steps:
            apply_stage_mask(ps, cfg, mode)
        batch = _sample(data_rng, pool, rc.batch_size)
        losses = compute_losses(ps, cfg, batch, mode, drop_rng, training=True)
        losses["total"].backward()
        opt.step()
        log_rows.append((step, {k: float(v.data) for k, v in losses.items()}))
        if progress is not None:
            progress(step, total, log_rows[-1][1])
    ps.set_trainable(lambda n: True)
    return ps, log_rows


def init_adapted_embedding(ps, corpus, speaker_id: int):
    """New-speaker row: mean of the pretrained source-speaker embeddings."""
    table = ps["speaker.table"]
    source = corpus.source_speaker_ids
    table.data[speaker_id] = table.data[source].mean(axis=0)


def finetune(ps_pretrained, corpus, rc, speaker_id: int, k: int | None = None,
             steps: int | None = None, progress=None):
    """Adapt one speaker; only CLN weights and that speaker's row move."""
    cfg = rc.model_config()
    k = rc.adaptation_k if k is None else k
    steps = rc.finetune_steps if steps is None else steps
    utts = corpus.adaptation_utterances(speaker_id, k)

    ps = ps_pretrained.copy()
    init_adapted_embedding(ps, corpus, speaker_id)
    apply_stage_mask(ps, cfg, "finetune", speaker_id)
    opt = _adam(ps, rc, rc.finetune_lr)
    data_rng = stream(rc.seed, f"finetune/data/{speaker_id}")
    drop_rng = stream(rc.seed, f"finetune/dropout/{speaker_id}")

    log_rows = []
    for step in range(steps):
        batch = _sample(data_rng, utts, rc.batch_size)
        losses = compute_losses(ps, cfg, batch, "finetune", drop_rng,
                                training=True)
        losses["total"].backward()
        opt.step()
        log_rows.append((step, {n: float(v.data) for n, v in losses.items()}))
        if progress is not None:
            progress(step, steps, log_rows[-1][1])
    ps.set_trainable(lambda n: True)
    return ps, log_rows


def param_diff(before, after) -> dict[str, list[int]]:
    """Byte-level diff of two parameter tables.

    Returns {name: changed_row_indices} for 2-D parameters and
    {name: [-1]} for flat ones; identical tensors are omitted.
    """
    changed = {}
    names = set(before.names()) | set(after.names())
    for name in sorted(names):
        if name not in before or name not in after:
            changed[name] = [-1]
            continue
        a = before[name].data
        b = after[name].data
        if a.tobytes() == b.tobytes():
            continue
        if a.ndim == 2 and a.shape == b.shape:
            rows = [i for i in range(a.shape[0])
                    if a[i].tobytes() != b[i].tobytes()]
            changed[name] = rows
        else:
            changed[name] = [-1]
    return changed


# ---------------------------------------------------------------------------
# inference and evaluation


def infer(ps, cfg, phonemes, reference_mel=None, speaker_emb=None,
          deployed=None):
    """Free-running synthesis; returns (mel [T, mel_dim], durations [L])."""
    if cfg.use_utterance_cond and reference_mel is None:
        raise PipelineError("utterance conditioning needs a reference mel")
    if deployed is not None and speaker_emb is None:
        emb_vec = np.asarray(deployed.embedding, dtype=ps.dtype)
        emb = Tensor(emb_vec)
    elif speaker_emb is not None:
        emb = speaker_emb
    else:
        raise PipelineError("supply a speaker embedding or deployed params")

    with no_grad():
        hid = M.encode_phonemes(ps, cfg, phonemes)
        utt_vec = None
        if cfg.use_utterance_cond:
            utt_vec = acoustic.utterance_encode(
                ps, Tensor(np.asarray(reference_mel, dtype=ps.dtype))
            )
        hid = acoustic.combine_conditions(hid, utt_vec, None, emb, None)
        if cfg.use_phoneme_cond:
            q = acoustic.phoneme_predict(ps, hid)
            hid = acoustic.combine_conditions(
                hid, None, q, None, ps["acoustic.project"]
            )
        log_dur, pitch, energy = M.predict_variances(ps, cfg, hid)
        durations = M.durations_from_log(log_dur.data)
        if durations.sum() == 0:
            raise PipelineError("degenerate prediction: zero total duration")
        hid = M.embed_variances(ps, hid, pitch, energy)
        frames = F.length_regulate(hid, durations)
        mel = M.decode_mel(
            ps, cfg, frames,
            speaker_emb=emb if (cfg.use_cln and deployed is None) else None,
            deployed=deployed if cfg.use_cln else None,
        )
    return mel.data.copy(), durations


def teacher_forced_mel(ps, cfg, utt, speaker_emb=None):
    """Reconstruction with ground-truth variances and target-side conditions."""
    with no_grad():
        mel_target = Tensor(utt.mel.astype(ps.dtype))
        hid = M.encode_phonemes(ps, cfg, utt.phonemes)
        emb = speaker_emb if speaker_emb is not None \
            else M.speaker_embedding(ps, utt.speaker)
        utt_vec = None
        if cfg.use_utterance_cond:
            utt_vec = acoustic.utterance_encode(ps, mel_target)
        hid = acoustic.combine_conditions(hid, utt_vec, None, emb, None)
        if cfg.use_phoneme_cond:
            q = acoustic.phoneme_encode(
                ps, F.phoneme_average(mel_target, utt.durations)
            )
            hid = acoustic.combine_conditions(
                hid, None, q, None, ps["acoustic.project"]
            )
        hid = M.embed_variances(ps, hid, utt.pitch.astype(ps.dtype),
                                utt.energy.astype(ps.dtype))
        frames = F.length_regulate(hid, utt.durations)
        mel = M.decode_mel(ps, cfg, frames,
                           speaker_emb=emb if cfg.use_cln else None)
    return mel.data.copy()


def _segment_means(mel, durations):
    n = len(durations)
    seg = np.repeat(np.arange(n), durations)
    sums = np.zeros((n, mel.shape[1]), dtype=np.float64)
    np.add.at(sums, seg, mel.astype(np.float64))
    return sums / np.maximum(durations, 1)[:, None]


def aligned_frame_mse(pred_mel, pred_durations, target_mel, gt_durations) -> float:
    """Frame MSE after mapping the prediction onto the reference timeline.

    The predicted mel is averaged per predicted phoneme span and
    re-expanded with the ground-truth durations, so duration errors
    smear the comparison but never misalign it. Teacher-forced output
    goes through the same map (its spans already match), keeping the
    two MSE metrics directly comparable.
    """
    pooled = _segment_means(pred_mel, pred_durations)
    expanded = np.repeat(pooled, gt_durations, axis=0)
    diff = expanded - target_mel.astype(np.float64)
    return float((diff * diff).mean())


def evaluate(ps, cfg, testset, reference_mel=None, speaker_emb=None,
             deployed=None, free_running=True):
    """Teacher-forced MSE, free-running MSE and duration accuracy.

    free_running=False skips synthesis (an untrained duration predictor
    cannot produce a nonzero total duration)."""
    if not testset:
        raise PipelineError("empty testset")
    tf_mses, fr_mses, dur_accs = [], [], []
    for utt in testset:
        emb = speaker_emb
        if emb is None and deployed is None:
            emb = M.speaker_embedding(ps, utt.speaker)
        tf = teacher_forced_mel(ps, cfg, utt, speaker_emb=emb)
        tf_mses.append(aligned_frame_mse(tf, utt.durations, utt.mel,
                                         utt.durations))
        if not free_running:
            continue
        pred_mel, pred_dur = infer(
            ps, cfg, utt.phonemes,
            reference_mel=reference_mel if cfg.use_utterance_cond else None,
            speaker_emb=emb, deployed=deployed,
        )
        fr_mses.append(aligned_frame_mse(pred_mel, pred_dur, utt.mel,
                                         utt.durations))
        dur_accs.append(float((pred_dur == utt.durations).mean()))
    metrics = {
        "teacher_forced_mse": float(np.mean(tf_mses)),
        "n_utterances": len(testset),
    }
    if free_running:
        metrics["free_running_mse"] = float(np.mean(fr_mses))
        metrics["duration_accuracy"] = float(np.mean(dur_accs))
    return metrics


def pick_reference(utts, index: int | None = None):
    """Reference utterance: explicit index, else the lowest utterance id."""
    if not utts:
        raise PipelineError("no utterances to pick a reference from")
    if index is not None:
        for utt in utts:
            if utt.index == index:
                return utt
        raise PipelineError(f"reference utterance {index} not found")
    return min(utts, key=lambda u: u.index)
