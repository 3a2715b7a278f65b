"""Heatmap reconstruction from captured tensors.

Two reconstruction paths produce the same artifact, a normalized H'xW'
relevance map:

* conv captures: channel gradients are spatially averaged into per-channel
  weights, the weighted activation sum is rectified, bilinearly upsampled to
  the frame size, and normalized to [0, 1];
* transformer captures: per-layer attention matrices are masked by their
  gradients (rectified Hadamard product), accumulated through the layer stack
  by the relevance recursion, and the CLS-to-patch row is reshaped to the
  patch grid, upsampled, and normalized.

All arithmetic is carried out in float64 regardless of the float32 inputs:
downstream metrics threshold these maps, and rounding must not move values
across a threshold between runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GridMismatch, ShapeMismatch


@dataclass
class Heatmap:
    """Normalized relevance map for one frame/prompt pair.

    `values` is an H'xW' float64 array in [0, 1]; an all-zero map marks a
    capture that produced no usable evidence (zero gradients, or a constant
    raw map with nothing to normalize).
    """

    values: np.ndarray
    frame_id: str = ""
    prompt_index: int = 0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ShapeMismatch(f"heatmap must be 2-D, got shape {self.values.shape}")
        if self.values.size and (self.values.min() < 0.0 or self.values.max() > 1.0):
            raise ValueError("heatmap values must lie in [0, 1]")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape  # type: ignore[return-value]

    @property
    def is_degenerate(self) -> bool:
        """True when the map carries no evidence (identically zero)."""
        return not bool(self.values.any())


def normalize(raw: np.ndarray) -> np.ndarray:
    """Rescale a raw map to [0, 1] by its span.

    (x - min) / (max - min) elementwise; a constant map (including all-zero)
    has no span and maps to all zeros, which downstream code treats as an
    empty attention region.
    """
    raw = np.asarray(raw, dtype=np.float64)
    lo = float(raw.min())
    hi = float(raw.max())
    if hi == lo:
        return np.zeros_like(raw)
    return (raw - lo) / (hi - lo)


def upsample_bilinear(src: np.ndarray, target_size: tuple[int, int]) -> np.ndarray:
    """Bilinear resize with the half-pixel convention.

    Source coordinates for output cell (i, j) are
    ((i + 0.5) * h / H' - 0.5, (j + 0.5) * w / W' - 0.5), clamped to the
    source index range, then blended from the four neighboring cells.
    Accumulation is float64 so results are bit-reproducible.
    """
    src = np.asarray(src, dtype=np.float64)
    if src.ndim != 2 or src.shape[0] < 1 or src.shape[1] < 1:
        raise ShapeMismatch(f"upsample source must be a non-empty 2-D map, got {src.shape}")
    out_h, out_w = int(target_size[0]), int(target_size[1])
    if out_h < 1 or out_w < 1:
        raise ShapeMismatch(f"target size must be positive, got {target_size}")
    h, w = src.shape

    sy = np.clip((np.arange(out_h, dtype=np.float64) + 0.5) * h / out_h - 0.5, 0.0, h - 1.0)
    sx = np.clip((np.arange(out_w, dtype=np.float64) + 0.5) * w / out_w - 0.5, 0.0, w - 1.0)
    y0 = np.floor(sy).astype(np.intp)
    x0 = np.floor(sx).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (sy - y0)[:, None]
    wx = (sx - x0)[None, :]

    top = src[np.ix_(y0, x0)] * (1.0 - wx) + src[np.ix_(y0, x1)] * wx
    bottom = src[np.ix_(y1, x0)] * (1.0 - wx) + src[np.ix_(y1, x1)] * wx
    return top * (1.0 - wy) + bottom * wy


def channel_weighted_sum(activations: np.ndarray, gradients: np.ndarray) -> np.ndarray:
    """Pre-rectification conv map: sum_k alpha_k * A_k.

    alpha_k is the spatial mean of the gradient in channel k. Linear in the
    activation tensor for fixed gradients.
    """
    activations = np.asarray(activations, dtype=np.float64)
    gradients = np.asarray(gradients, dtype=np.float64)
    if activations.ndim != 3:
        raise ShapeMismatch(f"activations must be KxHxW, got shape {activations.shape}")
    if activations.shape != gradients.shape:
        raise ShapeMismatch(
            f"activations {activations.shape} and gradients {gradients.shape} differ"
        )
    alpha = gradients.mean(axis=(1, 2))
    return np.einsum("k,khw->hw", alpha, activations)


def gradcam_conv(
    activations: np.ndarray,
    gradients: np.ndarray,
    target_size: tuple[int, int],
    frame_id: str = "",
    prompt_index: int = 0,
) -> Heatmap:
    """Conv-capture heatmap: normalize(upsample(relu(sum_k alpha_k * A_k)))."""
    raw = np.maximum(channel_weighted_sum(activations, gradients), 0.0)
    values = normalize(upsample_bilinear(raw, target_size))
    return Heatmap(values=values, frame_id=frame_id, prompt_index=prompt_index)


def channel_weights(gradients: np.ndarray) -> np.ndarray:
    """Per-channel weights: spatial mean of each channel's gradient."""
    gradients = np.asarray(gradients, dtype=np.float64)
    if gradients.ndim != 3:
        raise ShapeMismatch(f"gradients must be KxHxW, got shape {gradients.shape}")
    return gradients.mean(axis=(1, 2))


def _check_square_stack(stack, gradients) -> int:
    if len(stack) != len(gradients):
        raise ShapeMismatch(
            f"attention stack has {len(stack)} layers but gradients have {len(gradients)}"
        )
    if not stack:
        raise ShapeMismatch("attention stack must contain at least one layer")
    n = None
    for layer, (attn, grad) in enumerate(zip(stack, gradients), start=1):
        attn = np.asarray(attn)
        grad = np.asarray(grad)
        if attn.ndim != 2 or attn.shape[0] != attn.shape[1]:
            raise ShapeMismatch(f"layer {layer}: attention must be square NxN, got {attn.shape}")
        if attn.shape != grad.shape:
            raise ShapeMismatch(
                f"layer {layer}: attention {attn.shape} and gradient {grad.shape} differ"
            )
        if n is None:
            n = attn.shape[0]
        elif attn.shape[0] != n:
            raise ShapeMismatch(f"layer {layer}: token count {attn.shape[0]} != {n}")
    if n < 2:
        raise ShapeMismatch(f"token count must be >= 2 (CLS plus patches), got {n}")
    return n


def rollout_relevance(attention_stack, attention_gradients) -> np.ndarray:
    """Accumulated relevance matrix from the gradient-masked attention stack.

    Per layer, T~ = relu(grad ⊙ attention). Starting from the identity at the
    last layer, R <- R + T~ R is applied walking back to the first layer; the
    returned matrix therefore equals the ordered product
    (I + T~_1)(I + T~_2)...(I + T~_L).
    """
    n = _check_square_stack(attention_stack, attention_gradients)
    relevance = np.eye(n, dtype=np.float64)
    for attn, grad in zip(reversed(attention_stack), reversed(attention_gradients)):
        attn = np.asarray(attn, dtype=np.float64)
        grad = np.asarray(grad, dtype=np.float64)
        masked = np.maximum(grad * attn, 0.0)
        relevance = relevance + masked @ relevance
    return relevance


def rollout_transformer(
    attention_stack,
    attention_gradients,
    grid: tuple[int, int],
    target_size: tuple[int, int],
    frame_id: str = "",
    prompt_index: int = 0,
) -> Heatmap:
    """Transformer-capture heatmap from the CLS row of the relevance matrix.

    Token 0 is CLS; patch tokens 1..N-1 are laid out row-major on `grid`
    (rows x cols must equal N-1).
    """
    relevance = rollout_relevance(attention_stack, attention_gradients)
    n = relevance.shape[0]
    rows, cols = int(grid[0]), int(grid[1])
    if rows < 1 or cols < 1 or rows * cols != n - 1:
        raise GridMismatch(f"grid {rows}x{cols} does not cover {n - 1} patch tokens")
    patch_scores = relevance[0, 1:].reshape(rows, cols)
    values = normalize(upsample_bilinear(patch_scores, target_size))
    return Heatmap(values=values, frame_id=frame_id, prompt_index=prompt_index)
