"""Bundled deterministic toy models.

Both models are tiny, run on CPU in float64, and draw every learnable
weight from a seeded generator, so identical configs produce bit-identical
captures on every run. The text side has no learned weights at all: a
prompt embeds to a unit vector derived from a hash of its exact text.

The conv model exposes a ``features`` / ``embed`` split at each capture
layer; the exporter detaches the feature map and re-enters the graph
there, which is also what makes the finite-difference gradient check in
the tests a direct probe of the exported quantity.
"""

from __future__ import annotations

import hashlib
import math

import numpy as np
import torch
from torch import nn

from .errors import ConfigError

EMBED_DIM = 16
PATCH_SIZE = 8
DEFAULT_SEED = 1234

CONV_LAYERS = ("conv1", "conv2")
DEFAULT_CONV_LAYER = "conv2"


def text_embedding(prompt: str, dim: int = EMBED_DIM) -> np.ndarray:
    """Deterministic unit vector for a prompt string."""
    digest = hashlib.blake2b(prompt.encode("utf-8"), digest_size=8).digest()
    rng = np.random.Generator(np.random.PCG64(int.from_bytes(digest, "big")))
    vec = rng.standard_normal(dim)
    return vec / np.linalg.norm(vec)


def _seed_parameters(module: nn.Module, seed: int) -> None:
    rng = np.random.Generator(np.random.PCG64(seed))
    with torch.no_grad():
        for name, param in module.named_parameters():
            if "norm" in name:
                continue  # keep layer norms at their identity init
            values = rng.uniform(-0.5, 0.5, size=tuple(param.shape))
            param.copy_(torch.from_numpy(values))


def _positional_encoding(length: int, dim: int) -> torch.Tensor:
    position = np.arange(length)[:, None]
    step = np.exp(-math.log(10000.0) * np.arange(0, dim, 2) / dim)
    table = np.zeros((length, dim))
    table[:, 0::2] = np.sin(position * step)
    table[:, 1::2] = np.cos(position * step)
    return torch.from_numpy(table)


class ToyConv(nn.Module):
    """Two conv blocks and a linear head producing the image embedding."""

    def __init__(self, seed: int = DEFAULT_SEED):
        super().__init__()
        self.conv1 = nn.Conv2d(3, 8, kernel_size=3, padding=1)
        self.pool = nn.AvgPool2d(2)
        self.conv2 = nn.Conv2d(8, 6, kernel_size=3, padding=1)
        self.head = nn.Linear(6, EMBED_DIM)
        self.double()
        _seed_parameters(self, seed)

    @staticmethod
    def resolve_layer(layer: str | None) -> str:
        if layer is None:
            return DEFAULT_CONV_LAYER
        if layer not in CONV_LAYERS:
            raise ConfigError(
                f"unknown conv capture layer {layer!r}; expected one of {CONV_LAYERS}"
            )
        return layer

    def features(self, x: torch.Tensor, layer: str) -> torch.Tensor:
        """Forward up to and including the capture layer's activation."""
        a1 = torch.relu(self.conv1(x))
        if layer == "conv1":
            return a1
        return torch.relu(self.conv2(self.pool(a1)))

    def embed(self, feats: torch.Tensor, layer: str) -> torch.Tensor:
        """Forward from the capture layer's activation to the embedding."""
        h = feats
        if layer == "conv1":
            h = torch.relu(self.conv2(self.pool(h)))
        return self.head(h.mean(dim=(-2, -1)))


class ToyTransformer(nn.Module):
    """Patch embedding, two pre-norm attention blocks, CLS head.

    ``forward_with_capture`` returns the per-head post-softmax attention
    tensors with gradient retention enabled, one per block, shaped
    (heads, N, N) with the CLS token at index 0.
    """

    def __init__(self, seed: int = DEFAULT_SEED, depth: int = 2, heads: int = 2):
        super().__init__()
        self.heads = heads
        self.head_dim = EMBED_DIM // heads
        self.patch_embed = nn.Conv2d(3, EMBED_DIM, kernel_size=PATCH_SIZE, stride=PATCH_SIZE)
        self.cls_token = nn.Parameter(torch.zeros(1, EMBED_DIM))
        self.attn_norms = nn.ModuleList(nn.LayerNorm(EMBED_DIM) for _ in range(depth))
        self.qkv = nn.ModuleList(nn.Linear(EMBED_DIM, 3 * EMBED_DIM) for _ in range(depth))
        self.attn_proj = nn.ModuleList(nn.Linear(EMBED_DIM, EMBED_DIM) for _ in range(depth))
        self.mlp_norms = nn.ModuleList(nn.LayerNorm(EMBED_DIM) for _ in range(depth))
        self.mlp = nn.ModuleList(
            nn.Sequential(nn.Linear(EMBED_DIM, 32), nn.GELU(), nn.Linear(32, EMBED_DIM))
            for _ in range(depth)
        )
        self.final_norm = nn.LayerNorm(EMBED_DIM)
        self.head = nn.Linear(EMBED_DIM, EMBED_DIM)
        self.double()
        _seed_parameters(self, seed)

    def forward_with_capture(self, x: torch.Tensor) -> tuple[torch.Tensor, list[torch.Tensor]]:
        patches = self.patch_embed(x)  # (1, E, rows, cols)
        tokens = patches.flatten(2).transpose(1, 2)[0]  # (N-1, E), row-major patches
        tokens = torch.cat([self.cls_token, tokens], dim=0)
        tokens = tokens + _positional_encoding(tokens.shape[0], EMBED_DIM)

        captured: list[torch.Tensor] = []
        n = tokens.shape[0]
        for norm, qkv, proj, mlp_norm, mlp in zip(
            self.attn_norms, self.qkv, self.attn_proj, self.mlp_norms, self.mlp
        ):
            h = norm(tokens)
            q, k, v = qkv(h).reshape(n, 3, self.heads, self.head_dim).permute(1, 2, 0, 3)
            logits = (q @ k.transpose(-1, -2)) / math.sqrt(self.head_dim)
            attn = torch.softmax(logits, dim=-1)  # (heads, N, N)
            attn.retain_grad()
            captured.append(attn)
            merged = (attn @ v).transpose(0, 1).reshape(n, EMBED_DIM)
            tokens = tokens + proj(merged)
            tokens = tokens + mlp(mlp_norm(tokens))

        phi = self.head(self.final_norm(tokens)[0])
        return phi, captured
