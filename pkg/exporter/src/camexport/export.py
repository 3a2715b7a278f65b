"""Capture passes over the toy models and bundle assembly.

Per frame: one forward pass produces the image embedding and a cosine
similarity per prompt, then one backward pass from the selected prompt's
score fills in the gradients. The selected prompt is the argmax for a
standard run and the assigned verb prompt for a re-prompt pass. Conv
captures detach the feature map and re-enter the graph there, so the
exported gradient is exactly d(score)/d(activation); transformer captures
keep the per-head post-softmax attention with gradient retention on and
export the mean over heads of both the attention and its gradient.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .bundle_writer import TensorNamer, tensor_ref, write_bundle
from .config import CaptureConfig, FrameSpec, load_prompt_pool, pool_task
from .errors import CaptureShapeError, ConfigError, ModelLoadFailure, WorklistParseError
from .models import PATCH_SIZE, ToyConv, ToyTransformer, text_embedding

VERB_TEMPLATE = "I am performing {}"


def load_model(config: CaptureConfig):
    if config.model != "toy":
        raise ModelLoadFailure(
            f"unknown model {config.model!r}; only the bundled 'toy' models load"
        )
    torch.set_num_threads(1)
    if config.capture_kind == "conv":
        return ToyConv(config.seed)
    return ToyTransformer(config.seed)


def _load_image(spec: FrameSpec) -> torch.Tensor:
    try:
        with Image.open(spec.image) as img:
            rgb = img.convert("RGB")
    except (FileNotFoundError, OSError) as exc:
        raise CaptureShapeError(
            f"frame {spec.frame_id!r}: cannot read image {spec.image}: {exc}"
        ) from exc
    values = np.asarray(rgb, dtype=np.float64) / 255.0
    return torch.from_numpy(values.transpose(2, 0, 1)).unsqueeze(0)


def _similarities(phi: torch.Tensor, text: torch.Tensor) -> torch.Tensor:
    phi = phi / torch.linalg.vector_norm(phi).clamp_min(1e-12)
    return text @ phi


def _argmax(scores: torch.Tensor) -> int:
    return int(np.argmax(scores.detach().numpy()))


def _capture_conv(model: ToyConv, layer: str, x: torch.Tensor, text: torch.Tensor, target: int | None):
    feats = model.features(x, layer).detach().requires_grad_(True)
    scores = _similarities(model.embed(feats, layer)[0], text)
    index = _argmax(scores) if target is None else target
    scores[index].backward()
    model.zero_grad(set_to_none=True)
    activations = feats.detach()[0].numpy()
    gradients = feats.grad[0].numpy()
    return scores.detach().numpy(), index, activations, gradients


def _capture_transformer(model: ToyTransformer, x: torch.Tensor, text: torch.Tensor, target: int | None):
    h, w = x.shape[-2], x.shape[-1]
    if h % PATCH_SIZE or w % PATCH_SIZE:
        raise CaptureShapeError(
            f"image size {h}x{w} is not divisible by the patch size {PATCH_SIZE}"
        )
    phi, captured = model.forward_with_capture(x)
    scores = _similarities(phi, text)
    index = _argmax(scores) if target is None else target
    scores[index].backward()
    model.zero_grad(set_to_none=True)
    stack = [attn.detach().mean(dim=0).numpy() for attn in captured]
    grads = [attn.grad.mean(dim=0).numpy() for attn in captured]
    grid = (h // PATCH_SIZE, w // PATCH_SIZE)
    return scores.detach().numpy(), index, stack, grads, grid


def _capture_frame(
    model,
    config: CaptureConfig,
    spec: FrameSpec,
    text: torch.Tensor,
    namer: TensorNamer,
    payloads: dict[str, bytes],
    target: int | None = None,
) -> tuple[dict, int]:
    x = _load_image(spec)
    frame: dict = {
        "frame_id": spec.frame_id,
        "image_size": [int(x.shape[-2]), int(x.shape[-1])],
        "capture_kind": config.capture_kind,
        "image_path": os.path.relpath(spec.image, config.out),
    }
    if spec.video_id is not None:
        frame["video_id"] = spec.video_id

    if config.capture_kind == "conv":
        layer = ToyConv.resolve_layer(config.layer)
        scores, index, activations, gradients = _capture_conv(model, layer, x, text, target)
        act_ref, act_bytes = tensor_ref(namer.name(f"{spec.frame_id}_act"), activations, spec.frame_id)
        grad_ref, grad_bytes = tensor_ref(namer.name(f"{spec.frame_id}_grad"), gradients, spec.frame_id)
        payloads[act_ref["name"]] = act_bytes
        payloads[grad_ref["name"]] = grad_bytes
        frame["conv_activations"] = act_ref
        frame["conv_gradients"] = grad_ref
    else:
        scores, index, stack, grads, grid = _capture_transformer(model, x, text, target)
        attn_refs, grad_refs = [], []
        for depth, (attn, grad) in enumerate(zip(stack, grads)):
            ref, data = tensor_ref(namer.name(f"{spec.frame_id}_attn_{depth}"), attn, spec.frame_id)
            payloads[ref["name"]] = data
            attn_refs.append(ref)
            ref, data = tensor_ref(namer.name(f"{spec.frame_id}_agrad_{depth}"), grad, spec.frame_id)
            payloads[ref["name"]] = data
            grad_refs.append(ref)
        frame["attention_stack"] = attn_refs
        frame["attention_gradients"] = grad_refs
        frame["patch_grid"] = list(grid)

    frame["similarity_scores"] = [float(s) for s in scores]
    if target is not None:
        frame["target_prompt_index"] = target
    return frame, index


def _base_meta(config: CaptureConfig) -> dict:
    meta = {"model": config.model, "seed": config.seed}
    if config.capture_kind == "transformer":
        meta["head_reduction"] = "mean"
    return meta


def _text_tensor(prompts: list[str]) -> torch.Tensor:
    return torch.from_numpy(np.stack([text_embedding(p) for p in prompts]))


def export_run(config: CaptureConfig) -> Path:
    """Score every prompt on every frame, capture at the argmax prompt."""
    if config.prompt_pool is None:
        raise ConfigError("config has no prompt_pool; use export_verb_pass for worklists")
    model = load_model(config)
    entries = load_prompt_pool(config.prompt_pool)
    task = pool_task(entries, config.task)
    text = _text_tensor([e.prompt for e in entries])

    namer = TensorNamer()
    payloads: dict[str, bytes] = {}
    frames = []
    for spec in config.frames:
        frame, _ = _capture_frame(model, config, spec, text, namer, payloads)
        frames.append(frame)

    manifest = {
        "task": task,
        "prompt_pool": [{"prompt": e.prompt, "label": e.label} for e in entries],
        "frames": frames,
        "meta": _base_meta(config),
    }
    if config.video_id is not None:
        manifest["video_id"] = config.video_id
    return write_bundle(config.out, manifest, payloads)


def _load_worklist(path: Path) -> list[dict]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise WorklistParseError(f"worklist file not found: {path}") from exc
    except (OSError, json.JSONDecodeError) as exc:
        raise WorklistParseError(f"cannot read worklist {path}: {exc}") from exc
    if not isinstance(doc, list):
        raise WorklistParseError(f"worklist {path} must be a JSON array")
    seen: set[str] = set()
    for i, entry in enumerate(doc):
        where = f"worklist entry [{i}]"
        if not isinstance(entry, dict):
            raise WorklistParseError(f"{where} must be an object")
        for key in ("frame_id", "verb_prompt"):
            if not isinstance(entry.get(key), str):
                raise WorklistParseError(f"{where} needs a string {key!r}")
        triplet = entry.get("predicted_triplet")
        if not isinstance(triplet, dict) or not isinstance(triplet.get("verb"), str):
            raise WorklistParseError(f"{where} needs a predicted_triplet with a verb")
        if entry["frame_id"] in seen:
            raise WorklistParseError(f"duplicate frame_id {entry['frame_id']!r} in worklist")
        seen.add(entry["frame_id"])
    return doc


def export_verb_pass(worklist_path: str | Path, config: CaptureConfig) -> Path:
    """Capture each worklist frame under its assigned verb prompt.

    Frames named in the worklist but absent from the config's frame list
    become error entries under manifest meta and the run continues.
    """
    entries = _load_worklist(worklist_path)
    model = load_model(config)

    prompt_index: dict[str, int] = {}
    pool: list[dict] = []
    for entry in entries:
        prompt = entry["verb_prompt"]
        if prompt not in prompt_index:
            prompt_index[prompt] = len(pool)
            pool.append({"prompt": prompt, "label": entry["predicted_triplet"]["verb"]})
    text = _text_tensor([p["prompt"] for p in pool]) if pool else torch.zeros((0, 1))

    by_id = {spec.frame_id: spec for spec in config.frames}
    namer = TensorNamer()
    payloads: dict[str, bytes] = {}
    frames = []
    errors = []
    for entry in entries:
        spec = by_id.get(entry["frame_id"])
        if spec is None:
            errors.append(
                {"frame_id": entry["frame_id"], "error": "frame not in config frame list"}
            )
            continue
        frame, _ = _capture_frame(
            model, config, spec, text, namer, payloads,
            target=prompt_index[entry["verb_prompt"]],
        )
        frames.append(frame)

    meta = _base_meta(config)
    meta["errors"] = errors
    manifest = {
        "task": "verb_reprompt",
        "prompt_pool": pool,
        "frames": frames,
        "meta": meta,
    }
    if config.video_id is not None:
        manifest["video_id"] = config.video_id
    return write_bundle(config.out, manifest, payloads)
