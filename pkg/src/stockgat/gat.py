"""Single multi-head graph attention layer plus the sigmoid classifier head.

Per head: project node features, score every ordered pair with
LeakyReLU(a . [Wx_i ++ Wx_j]), softmax each row over the node's neighborhood
(self-loop included), aggregate neighbor projections, and pass the result
through ELU.  Head outputs are concatenated.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import ContractViolation, Tensor


class GraphAttention:
    def __init__(self, in_dim: int, head_dim: int, n_heads: int, rng,
                 leaky_slope: float = 0.2):
        if n_heads < 1:
            raise ValueError("need at least one attention head")
        self.in_dim, self.head_dim, self.n_heads = in_dim, head_dim, n_heads
        self.leaky_slope = leaky_slope
        s = 1.0 / np.sqrt(in_dim)
        self.params = {}
        for h in range(n_heads):
            self.params[f"W{h}"] = Tensor(
                rng.uniform(-s, s, size=(in_dim, head_dim)), requires_grad=True)
            self.params[f"a{h}"] = Tensor(
                rng.uniform(-s, s, size=(2 * head_dim,)), requires_grad=True)

    def forward(self, x: Tensor, adj: np.ndarray, return_attention: bool = False):
        """x is N x in_dim, adj a boolean N x N neighborhood mask.

        Returns N x (n_heads * head_dim); with return_attention also the
        per-head alpha matrices (plain arrays, zero off-neighborhood).
        """
        n = x.shape[0]
        adj = np.asarray(adj, dtype=bool)
        if adj.shape != (n, n):
            raise ad.ShapeError(f"gat: adjacency {adj.shape} does not match {n} nodes")
        if not adj.diagonal().all():
            raise ContractViolation("gat: every node must carry a self-loop")

        outs, alphas = [], []
        for h in range(self.n_heads):
            w, a = self.params[f"W{h}"], self.params[f"a{h}"]
            proj = ad.matmul(x, w)                        # N x head_dim
            a_src = ad._result(a.data[:self.head_dim],
                               [(a, lambda g: np.concatenate([g, np.zeros(self.head_dim)]))])
            a_dst = ad._result(a.data[self.head_dim:],
                               [(a, lambda g: np.concatenate([np.zeros(self.head_dim), g]))])
            # e[i, j] = LeakyReLU(a_src . proj_i + a_dst . proj_j)
            scores = ad.leaky_relu(
                ad.outer_sum(ad.matvec(proj, a_src), ad.matvec(proj, a_dst)),
                slope=self.leaky_slope)
            alpha = ad.softmax(scores, mask=adj)          # rows sum to 1 over N_i
            outs.append(ad.elu(ad.matmul(alpha, proj)))
            if return_attention:
                alphas.append(alpha.data.copy())
        z = ad.hstack(outs) if len(outs) > 1 else outs[0]
        return (z, alphas) if return_attention else z


class ClassifierHead:
    """p_i = sigmoid(w . z_i + b): positive-movement probability per stock."""

    def __init__(self, in_dim: int, rng):
        s = 1.0 / np.sqrt(in_dim)
        self.params = {
            "w": Tensor(rng.uniform(-s, s, size=(in_dim,)), requires_grad=True),
            "b": Tensor(rng.uniform(-s, s, size=()), requires_grad=True),
        }

    def probabilities(self, z: Tensor) -> Tensor:
        logits = ad.add(ad.matvec(z, self.params["w"]), self.params["b"])
        return ad.sigmoid(logits)


def dump_attention(path, date, symbols, alphas) -> None:
    """Sparse triplet dump of per-head attention for one trading day."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# attention {date.isoformat()}  head i j alpha\n")
        for h, alpha in enumerate(alphas):
            rows, cols = np.nonzero(alpha)
            for i, j in zip(rows, cols):
                fh.write(f"{h} {symbols[i]} {symbols[j]} {alpha[i, j]:.12g}\n")
