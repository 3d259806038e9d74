import numpy as np
import pytest

from stockgat import autodiff as ad
from stockgat.autodiff import Tensor
from stockgat.encoders import GATES, BilinearFusion, SequenceEncoder
from stockgat.seeding import stream


def straight_line_encode(params, feats):
    """Independent plain-numpy LSTM + attention recurrence for one sample."""
    def sig(x):
        return 1.0 / (1.0 + np.exp(-x))

    T = feats.shape[0]
    d = params["Wh_i"].shape[0]
    h, c = np.zeros(d), np.zeros(d)
    states = []
    for t in range(T):
        x = feats[t]
        pre = {g: x @ params[f"Wx_{g}"].data + h @ params[f"Wh_{g}"].data
               + params[f"b_{g}"].data for g in GATES}
        i, f, o = sig(pre["i"]), sig(pre["f"]), sig(pre["o"])
        g = np.tanh(pre["g"])
        c = f * c + i * g
        h = o * np.tanh(c)
        states.append(h)
    H = np.stack(states)                       # T x d
    logits = H @ params["w_att"].data
    e = np.exp(logits - logits.max())
    beta = e / e.sum()
    return beta @ H, beta, H


@pytest.fixture
def tech_encoder():
    return SequenceEncoder(3, 8, stream(11, "enc"))


def test_single_day_window_returns_h1(tech_encoder):
    feats = np.array([[[1.01, 0.99, 1.0]]])       # N=1, T=1
    out = tech_encoder.encode(feats).data[0]
    _, beta, H = straight_line_encode(tech_encoder.params, feats[0])
    assert beta.tolist() == [1.0]
    assert np.allclose(out, H[0], atol=1e-12)


def test_attention_is_probability_vector_on_identical_days(tech_encoder):
    feats = np.tile(np.array([1.02, 1.01, 0.98]), (1, 5, 1))
    beta = tech_encoder.attention_weights(feats)
    assert (beta >= 0).all()
    assert abs(beta.sum() - 1.0) <= 1e-12


def test_three_day_window_matches_straight_line_oracle(tech_encoder):
    rng = np.random.default_rng(21)
    feats = rng.uniform(0.9, 1.1, size=(3, 3))
    got = tech_encoder.encode_one(feats).data
    want, _, _ = straight_line_encode(tech_encoder.params, feats)
    assert np.allclose(got, want, atol=1e-12)


def test_media_encoder_five_day_window_matches_oracle():
    enc = SequenceEncoder(2, 6, stream(5, "media"))
    rng = np.random.default_rng(9)
    feats = rng.uniform(0.5, 2.0, size=(5, 2))
    got = enc.encode_one(feats).data
    want, _, _ = straight_line_encode(enc.params, feats)
    assert np.allclose(got, want, atol=1e-12)


def test_media_encoder_total_on_floored_ratios():
    enc = SequenceEncoder(2, 6, stream(5, "media"))
    feats = np.zeros((1, 4, 2))
    out = enc.encode(feats).data
    assert np.isfinite(out).all()


def test_batched_encode_equals_per_sample(tech_encoder):
    rng = np.random.default_rng(2)
    feats = rng.uniform(0.9, 1.1, size=(4, 5, 3))
    batch = tech_encoder.encode(feats).data
    for n in range(4):
        single = tech_encoder.encode_one(feats[n]).data
        assert np.allclose(batch[n], single, atol=1e-12)


def test_encoding_lies_in_convex_hull_of_hidden_states(tech_encoder):
    rng = np.random.default_rng(4)
    feats = rng.uniform(0.9, 1.1, size=(5, 3))
    _, _, H = straight_line_encode(tech_encoder.params, feats)
    q = tech_encoder.encode_one(feats).data
    assert (q >= H.min(axis=0) - 1e-12).all()
    assert (q <= H.max(axis=0) + 1e-12).all()


def test_forget_gate_bias_initialized_to_one_region(tech_encoder):
    bias = tech_encoder.params["b_f"].data
    scale = 1.0 / np.sqrt(8)
    assert ((bias >= 1.0 - scale) & (bias <= 1.0 + scale)).all()


def test_encoder_rejects_nonfinite_input(tech_encoder):
    feats = np.ones((1, 3, 3))
    feats[0, 1, 1] = np.nan
    with pytest.raises(ad.ContractViolation):
        tech_encoder.encode(feats)


# -- bilinear fusion ---------------------------------------------------------

def test_fusion_zero_params_give_zero():
    fusion = BilinearFusion(3, 2, 4, stream(0, "f"))
    fusion.params["W"].data[:] = 0.0
    fusion.params["b"].data[:] = 0.0
    out = fusion.fuse(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 2))))
    assert np.array_equal(out.data, np.zeros((2, 4)))


def test_fusion_scalar_case():
    fusion = BilinearFusion(1, 1, 1, stream(0, "f"))
    fusion.params["W"].data[0, 0, 0] = 1.0
    fusion.params["b"].data[0] = 0.0
    out = fusion.fuse_one(Tensor([2.0]), Tensor([3.0]))
    assert out.data[0] == pytest.approx(np.tanh(6.0), abs=1e-15)


def test_fusion_matches_triple_loop_oracle():
    rng = np.random.default_rng(13)
    fusion = BilinearFusion(4, 3, 5, stream(13, "f"))
    q, c = rng.normal(size=4), rng.normal(size=3)
    got = fusion.fuse_one(Tensor(q), Tensor(c)).data
    W, b = fusion.params["W"].data, fusion.params["b"].data
    want = np.empty(5)
    for k in range(5):
        acc = b[k]
        for i in range(4):
            for j in range(3):
                acc += q[i] * W[i, k, j] * c[j]
        want[k] = np.tanh(acc)
    assert np.allclose(got, want, atol=1e-12)


def test_fusion_bilinearity_without_tanh():
    rng = np.random.default_rng(17)
    fusion = BilinearFusion(4, 3, 5, stream(17, "f"))
    fusion.params["b"].data[:] = 0.0
    q1, q2, c = (Tensor(rng.normal(size=(1, 4))), Tensor(rng.normal(size=(1, 4))),
                 Tensor(rng.normal(size=(1, 3))))
    alpha = 2.7
    scaled = fusion.fuse(Tensor(alpha * q1.data), c, apply_tanh=False).data
    assert np.allclose(scaled, alpha * fusion.fuse(q1, c, apply_tanh=False).data,
                       atol=1e-12)
    added = fusion.fuse(Tensor(q1.data + q2.data), c, apply_tanh=False).data
    assert np.allclose(added, fusion.fuse(q1, c, apply_tanh=False).data
                       + fusion.fuse(q2, c, apply_tanh=False).data, atol=1e-12)


def test_fusion_dimension_mismatch():
    fusion = BilinearFusion(4, 3, 5, stream(1, "f"))
    with pytest.raises(ad.ShapeError):
        fusion.fuse(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_end_to_end_gradients_through_encoders_and_fusion():
    tech = SequenceEncoder(3, 5, stream(31, "t"))
    media = SequenceEncoder(2, 4, stream(31, "m"))
    fusion = BilinearFusion(5, 4, 3, stream(31, "f"))
    rng = np.random.default_rng(31)
    price = rng.uniform(0.9, 1.1, size=(2, 4, 3))
    scores = rng.uniform(0.5, 2.0, size=(2, 4, 2))

    params = {}
    for prefix, holder in (("t", tech), ("m", media), ("f", fusion)):
        for k, t in holder.params.items():
            params[f"{prefix}.{k}"] = t

    def f():
        x = fusion.fuse(tech.encode(price), media.encode(scores))
        return ad.tsum(ad.mul(x, x))

    report = ad.grad_check(f, params, tolerance=1e-4)
    assert report.passed, report.summary()
