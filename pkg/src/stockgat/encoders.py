"""Temporal encoders and bilinear fusion.

Both the price and the social-score channel run the same machinery: an LSTM
over the lookback window followed by temporal attention (softmax over per-day
scores h_i . w_att) that aggregates the hidden states into one vector.  The
two channel vectors are blended by a bank of bilinear forms under tanh.

All encode/fuse entry points are batched over stocks (rows); the
single-sample variants wrap the batched path with N = 1.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

GATES = ("i", "f", "g", "o")


def _uniform(rng, shape, scale):
    return rng.uniform(-scale, scale, size=shape)


def init_lstm_params(input_dim: int, hidden_dim: int, rng) -> dict:
    """Per-gate weights, uniform(-1/sqrt(d), 1/sqrt(d)); forget bias starts at 1."""
    s = 1.0 / np.sqrt(hidden_dim)
    params = {}
    for gate in GATES:
        params[f"Wx_{gate}"] = Tensor(_uniform(rng, (input_dim, hidden_dim), s),
                                      requires_grad=True)
        params[f"Wh_{gate}"] = Tensor(_uniform(rng, (hidden_dim, hidden_dim), s),
                                      requires_grad=True)
        bias = _uniform(rng, (hidden_dim,), s)
        if gate == "f":
            bias = bias + 1.0
        params[f"b_{gate}"] = Tensor(bias, requires_grad=True)
    return params


class SequenceEncoder:
    """LSTM over a feature window plus attention-weighted aggregation."""

    def __init__(self, input_dim: int, hidden_dim: int, rng):
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.params = init_lstm_params(input_dim, hidden_dim, rng)
        self.params["w_att"] = Tensor(
            _uniform(rng, (hidden_dim,), 1.0 / np.sqrt(hidden_dim)),
            requires_grad=True)

    def _step(self, x_t: Tensor, h: Tensor, c: Tensor):
        p = self.params
        pre = {}
        for gate in GATES:
            pre[gate] = ad.add_rowvec(
                ad.add(ad.matmul(x_t, p[f"Wx_{gate}"]), ad.matmul(h, p[f"Wh_{gate}"])),
                p[f"b_{gate}"])
        i = ad.sigmoid(pre["i"])
        f = ad.sigmoid(pre["f"])
        g = ad.tanh(pre["g"])
        o = ad.sigmoid(pre["o"])
        c_new = ad.add(ad.mul(f, c), ad.mul(i, g))
        h_new = ad.mul(o, ad.tanh(c_new))
        return h_new, c_new

    def hidden_states(self, feats: np.ndarray):
        """LSTM hidden states h_1..h_T for a batch; feats is N x T x input_dim."""
        if feats.ndim != 3 or feats.shape[2] != self.input_dim:
            raise ad.ShapeError(f"encoder: expected N x T x {self.input_dim}, "
                                f"got {feats.shape}")
        if feats.shape[1] < 1:
            raise ad.ShapeError("encoder: empty window")
        if not np.all(np.isfinite(feats)):
            raise ad.ContractViolation("encoder: non-finite input features")
        n, T, _ = feats.shape
        h = Tensor(np.zeros((n, self.hidden_dim)))
        c = Tensor(np.zeros((n, self.hidden_dim)))
        states = []
        for t in range(T):
            h, c = self._step(Tensor(feats[:, t, :]), h, c)
            states.append(h)
        return states

    def encode(self, feats: np.ndarray) -> Tensor:
        """N x hidden_dim attention-aggregated encoding of an N x T x d window."""
        states = self.hidden_states(feats)
        logits = ad.stack_cols([ad.matvec(h, self.params["w_att"]) for h in states])
        beta = ad.softmax(logits)     # N x T, rows sum to 1
        out = ad.row_scale(states[0], ad.get_col(beta, 0))
        for t in range(1, len(states)):
            out = ad.add(out, ad.row_scale(states[t], ad.get_col(beta, t)))
        return out

    def encode_one(self, feats: np.ndarray) -> Tensor:
        """Single T x d window -> hidden_dim vector."""
        out = self.encode(np.asarray(feats)[None, :, :])
        return ad._result(out.data[0], [(out, lambda g: g[None, :])])

    def attention_weights(self, feats: np.ndarray) -> np.ndarray:
        """Attention row(s) for inspection; N x T, no grad."""
        states = self.hidden_states(feats)
        logits = ad.stack_cols([ad.matvec(h, self.params["w_att"]) for h in states])
        return ad.softmax(logits).data


class BilinearFusion:
    """x_k = tanh(q^T W[:, k, :] c + b_k): pairwise channel interactions."""

    def __init__(self, price_dim: int, media_dim: int, out_dim: int, rng):
        self.price_dim, self.media_dim, self.out_dim = price_dim, media_dim, out_dim
        s = 1.0 / np.sqrt(price_dim * media_dim)
        self.params = {
            "W": Tensor(_uniform(rng, (price_dim, out_dim, media_dim), s),
                        requires_grad=True),
            "b": Tensor(_uniform(rng, (out_dim,), s), requires_grad=True),
        }

    def fuse(self, q: Tensor, c: Tensor, apply_tanh: bool = True) -> Tensor:
        """Batched fusion: q is N x price_dim, c is N x media_dim -> N x out_dim.

        apply_tanh=False exposes the raw bilinear form for linearity tests.
        """
        pre = ad.add_rowvec(ad.bilinear(q, self.params["W"], c), self.params["b"])
        return ad.tanh(pre) if apply_tanh else pre

    def fuse_one(self, q: Tensor, c: Tensor, apply_tanh: bool = True) -> Tensor:
        """Single-vector fusion: price_dim and media_dim vectors -> out_dim."""
        q2 = ad._result(q.data[None, :], [(q, lambda g: g[0])])
        c2 = ad._result(c.data[None, :], [(c, lambda g: g[0])])
        out = self.fuse(q2, c2, apply_tanh=apply_tanh)
        return ad._result(out.data[0], [(out, lambda g: g[None, :])])
