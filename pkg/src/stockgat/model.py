"""End-to-end movement classifier: encoders -> fusion -> GAT -> sigmoid head.

Checkpoint format (text, exact round trip via float hex):

    stockgat-checkpoint v1
    <config key>=<value>          one per line
    tensor <name> <dim> <dim> ...
    <space-separated float hex values, row-major>
    ...
    end
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .encoders import BilinearFusion, SequenceEncoder
from .gat import ClassifierHead, GraphAttention
from .seeding import stream

CHECKPOINT_MAGIC = "stockgat-checkpoint v1"


@dataclass
class ModelConfig:
    lookback: int = 5
    hidden_tech: int = 64
    hidden_media: int = 16
    fused_dim: int = 64
    heads: int = 4
    head_dim: int = 16
    leaky_slope: float = 0.2


class MovementModel:
    """Per-day forward pass over one stock cross-section and its graph."""

    def __init__(self, config: ModelConfig, seed: int):
        self.config = config
        self.seed = seed
        self.technical = SequenceEncoder(3, config.hidden_tech, stream(seed, "init-tech"))
        self.media = SequenceEncoder(2, config.hidden_media, stream(seed, "init-media"))
        self.fusion = BilinearFusion(config.hidden_tech, config.hidden_media,
                                     config.fused_dim, stream(seed, "init-fusion"))
        self.gat = GraphAttention(config.fused_dim, config.head_dim, config.heads,
                                  stream(seed, "init-gat"),
                                  leaky_slope=config.leaky_slope)
        self.head = ClassifierHead(config.heads * config.head_dim,
                                   stream(seed, "init-head"))

    def parameters(self) -> dict:
        out = {}
        for prefix, holder in (("tech", self.technical), ("media", self.media),
                               ("fusion", self.fusion), ("gat", self.gat),
                               ("head", self.head)):
            for name, t in holder.params.items():
                out[f"{prefix}.{name}"] = t
        return out

    def zero_grad(self) -> None:
        for t in self.parameters().values():
            t.zero_grad()

    def forward_day(self, price_feats: np.ndarray, media_feats: np.ndarray,
                    adj: np.ndarray, return_attention: bool = False):
        """N stocks of one trading day -> N positive-movement probabilities."""
        q = self.technical.encode(price_feats)
        c = self.media.encode(media_feats)
        x = self.fusion.fuse(q, c)
        if return_attention:
            z, alphas = self.gat.forward(x, adj, return_attention=True)
            return self.head.probabilities(z), alphas
        z = self.gat.forward(x, adj)
        return self.head.probabilities(z)

    def predict_day(self, price_feats, media_feats, adj) -> np.ndarray:
        return self.forward_day(price_feats, media_feats, adj).data

    # -- checkpoint IO ------------------------------------------------------

    def save(self, path) -> None:
        params = self.parameters()
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(CHECKPOINT_MAGIC + "\n")
            for f in dataclasses.fields(self.config):
                fh.write(f"{f.name}={getattr(self.config, f.name)!r}\n")
            fh.write(f"seed={self.seed!r}\n")
            for name in sorted(params):
                data = params[name].data
                dims = " ".join(str(d) for d in data.shape)
                fh.write(f"tensor {name} {dims}\n")
                fh.write(" ".join(v.hex() for v in data.ravel().tolist()) + "\n")
            fh.write("end\n")

    @classmethod
    def load(cls, path) -> "MovementModel":
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        if not lines or lines[0] != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a {CHECKPOINT_MAGIC!r} file")
        config_kwargs, seed = {}, 0
        field_types = {f.name: f.type for f in dataclasses.fields(ModelConfig)}
        i = 1
        while i < len(lines) and "=" in lines[i] and not lines[i].startswith("tensor "):
            key, value = lines[i].split("=", 1)
            if key == "seed":
                seed = int(value)
            elif key in field_types:
                caster = float if field_types[key] in ("float", float) else int
                config_kwargs[key] = caster(value)
            i += 1
        model = cls(ModelConfig(**config_kwargs), seed)
        params = model.parameters()
        while i < len(lines) and lines[i] != "end":
            header = lines[i].split()
            if header[0] != "tensor":
                raise ValueError(f"{path}: malformed checkpoint at line {i + 1}")
            name, dims = header[1], tuple(int(d) for d in header[2:])
            values = np.array([float.fromhex(v) for v in lines[i + 1].split()])
            if name not in params:
                raise ValueError(f"{path}: unknown tensor {name}")
            if params[name].shape != dims:
                raise ValueError(f"{path}: tensor {name} shape {dims} != {params[name].shape}")
            params[name].data = values.reshape(dims)
            i += 2
        return model
