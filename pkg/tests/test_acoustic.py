"""Acoustic condition modeling: frame-to-phoneme averaging, the two
encoders, the predictor, and the stop-gradient barrier."""

import numpy as np
import numpy.testing as npt
import pytest

from voxadapt import acoustic
from voxadapt import functional as F
from voxadapt import model as M
from voxadapt.gradcheck import grad_check_params
from voxadapt.optim import Adam
from voxadapt.tensor import Tensor

CFG = M.ModelConfig(hidden=8, encoder_layers=1, decoder_layers=1, heads=2,
                    ffn_filter=12, ffn_kernel=3, mel_dim=6, phoneme_vocab=7,
                    n_speakers=3, dropout=0.0)


def params(seed=0, dtype=np.float64):
    return M.init_model_params(CFG, seed, dtype=dtype)


# ---------------------------------------------------------------------------
# phoneme_average


def test_phoneme_average_examples():
    mel = Tensor(np.array([[1.0], [3.0], [5.0]]))
    npt.assert_array_equal(F.phoneme_average(mel, [2, 1]).data, [[2.0], [5.0]])

    mel = Tensor(np.array([[1.0], [2.0], [3.0]]))
    npt.assert_array_equal(F.phoneme_average(mel, [1, 1, 1]).data, mel.data)
    npt.assert_array_equal(F.phoneme_average(mel, [0, 3]).data, [[0.0], [2.0]])

    with pytest.raises(ValueError):
        F.phoneme_average(mel, [2, 2])


def test_phoneme_average_is_lossless_on_span_constant_input():
    rng = np.random.default_rng(4)
    durations = np.array([3, 1, 0, 4])
    per_phoneme = rng.normal(size=(4, 5))
    frames = np.repeat(per_phoneme, durations, axis=0)
    pooled = F.phoneme_average(Tensor(frames), durations).data
    npt.assert_allclose(pooled[durations > 0], per_phoneme[durations > 0],
                        rtol=1e-12)
    expanded = np.repeat(pooled, durations, axis=0)
    npt.assert_allclose(expanded, frames, rtol=1e-12)


# ---------------------------------------------------------------------------
# utterance encoder


def test_utterance_encode_shape_for_any_length():
    ps = params()
    rng = np.random.default_rng(0)
    for t in (1, 2, 7, 30):
        out = acoustic.utterance_encode(ps, Tensor(rng.normal(size=(t, CFG.mel_dim))))
        assert out.data.shape == (CFG.hidden,)
    with pytest.raises(ValueError):
        acoustic.utterance_encode(ps, Tensor(np.zeros((0, CFG.mel_dim))))


def test_utterance_encode_invariant_to_duplicating_constant_input():
    ps = params(1)
    frame = np.random.default_rng(1).uniform(0.2, 1.0, size=CFG.mel_dim)
    for t in (6, 9):
        short = acoustic.utterance_encode(
            ps, Tensor(np.tile(frame, (t, 1)))).data
        long = acoustic.utterance_encode(
            ps, Tensor(np.tile(frame, (2 * t, 1)))).data
        assert np.abs(short - long).max() <= 1e-5


def test_utterance_encode_gradients():
    ps = params(2)
    mel = Tensor(np.random.default_rng(3).normal(size=(7, CFG.mel_dim)))
    proj = Tensor(np.random.default_rng(4).normal(size=CFG.hidden))

    def loss_fn():
        return F.mean_all(acoustic.utterance_encode(ps, mel) * proj)

    checked = [ps["acoustic.utterance.conv1.w"], ps["acoustic.utterance.conv2.w"],
               ps["acoustic.utterance.ln1.gamma"]]
    assert grad_check_params(loss_fn, checked) <= 1e-4


# ---------------------------------------------------------------------------
# phoneme encoder / predictor


def test_phoneme_encode_shape_and_zero_head():
    ps = params(3)
    rng = np.random.default_rng(5)
    out = acoustic.phoneme_encode(ps, Tensor(rng.normal(size=(9, CFG.mel_dim))))
    assert out.data.shape == (9, acoustic.COND_DIM)

    ps["acoustic.phoneme_enc.out.w"].data[...] = 0.0
    ps["acoustic.phoneme_enc.out.b"].data[...] = 0.0
    out = acoustic.phoneme_encode(ps, Tensor(rng.normal(size=(4, CFG.mel_dim))))
    npt.assert_array_equal(out.data, np.zeros((4, acoustic.COND_DIM)))


def test_phoneme_encode_gradients():
    ps = params(4)
    mel = Tensor(np.random.default_rng(6).normal(size=(5, CFG.mel_dim)))
    proj = Tensor(np.random.default_rng(7).normal(size=(5, acoustic.COND_DIM)))

    def loss_fn():
        return F.mean_all(acoustic.phoneme_encode(ps, mel) * proj)

    checked = [ps["acoustic.phoneme_enc.conv1.w"], ps["acoustic.phoneme_enc.out.w"]]
    assert grad_check_params(loss_fn, checked) <= 1e-4


def test_phoneme_predict_shape_and_memorization():
    ps = params(5, dtype=np.float32)
    rng = np.random.default_rng(8)
    hiddens = Tensor(rng.normal(size=(6, CFG.hidden)).astype(np.float32))
    target = Tensor(rng.uniform(-0.5, 0.5, size=(6, acoustic.COND_DIM))
                    .astype(np.float32))
    assert acoustic.phoneme_predict(ps, hiddens).data.shape == (6, 4)

    pred_params = [p for n, p in ps.items()
                   if n.startswith("acoustic.phoneme_pred.")]
    opt = Adam(pred_params, lr=5e-3)
    for _ in range(500):
        loss = F.mse(acoustic.phoneme_predict(ps, hiddens), target)
        loss.backward()
        opt.step()
    final = F.mse(acoustic.phoneme_predict(ps, hiddens), target).item()
    assert final <= 1e-3


def test_predictor_loss_stops_at_phoneme_encoder():
    ps = params(6)
    rng = np.random.default_rng(9)
    mel = Tensor(rng.normal(size=(8, CFG.mel_dim)))
    durations = np.array([2, 3, 3])
    hiddens = Tensor(rng.normal(size=(3, CFG.hidden)))

    q_true = acoustic.phoneme_encode(ps, F.phoneme_average(mel, durations))
    q_pred = acoustic.phoneme_predict(ps, hiddens.detach())
    loss = F.mse(q_pred, q_true.detach())
    loss.backward()
    for name, p in ps.items():
        if name.startswith("acoustic.phoneme_enc."):
            npt.assert_array_equal(p.grad, np.zeros_like(p.grad))
    grads = sum(
        float(np.abs(p.grad).sum()) for n, p in ps.items()
        if n.startswith("acoustic.phoneme_pred.")
    )
    assert grads > 0


# ---------------------------------------------------------------------------
# combine_conditions


def test_combine_conditions_zero_is_identity_and_additive():
    ps = params(7)
    rng = np.random.default_rng(10)
    h = CFG.hidden
    hid = Tensor(rng.normal(size=(4, h)))
    zero_vec = Tensor(np.zeros(h))
    zero_phn = Tensor(np.zeros((4, acoustic.COND_DIM)))
    proj = ps["acoustic.project"]

    out = acoustic.combine_conditions(hid, zero_vec, zero_phn, zero_vec, proj)
    npt.assert_array_equal(out.data, hid.data)

    utt = Tensor(rng.normal(size=h))
    phn = Tensor(rng.normal(size=(4, acoustic.COND_DIM)))
    both = acoustic.combine_conditions(hid, utt, phn, zero_vec, proj)
    only_u = acoustic.combine_conditions(hid, utt, zero_phn, zero_vec, proj)
    only_p = acoustic.combine_conditions(hid, zero_vec, phn, zero_vec, proj)
    npt.assert_allclose(only_u.data + only_p.data - hid.data, both.data,
                        rtol=1e-12, atol=1e-12)


def test_combine_conditions_gradient_reaches_all_inputs():
    ps = params(8)
    rng = np.random.default_rng(11)
    h = CFG.hidden
    hid = Tensor(rng.normal(size=(4, h)), requires_grad=True)
    utt = Tensor(rng.normal(size=h), requires_grad=True)
    phn = Tensor(rng.normal(size=(4, acoustic.COND_DIM)), requires_grad=True)
    emb = Tensor(rng.normal(size=h), requires_grad=True)
    weight = Tensor(rng.normal(size=(4, h)))

    out = acoustic.combine_conditions(hid, utt, phn, emb, ps["acoustic.project"])
    F.mean_all(out * weight).backward()
    for leaf in (hid, utt, phn, emb):
        assert leaf.grad is not None and np.abs(leaf.grad).max() > 0
    assert np.abs(ps["acoustic.project"].grad).max() > 0


def test_training_and_inference_routes_share_shape_contract():
    ps = params(9)
    rng = np.random.default_rng(12)
    durations = np.array([1, 3, 2])
    mel = Tensor(rng.normal(size=(6, CFG.mel_dim)))
    hiddens = Tensor(rng.normal(size=(3, CFG.hidden)))
    train_route = acoustic.phoneme_encode(ps, F.phoneme_average(mel, durations))
    infer_route = acoustic.phoneme_predict(ps, hiddens)
    assert train_route.data.shape == infer_route.data.shape == (3, 4)
