from __future__ import annotations

import json

import numpy as np
import pytest
from PIL import Image

from camexport.config import load_config
from camexport.errors import CaptureShapeError, ConfigError, ModelLoadFailure
from camexport.export import export_run
from conftest import run_cli, write_config, write_images, write_instrument_pool, write_triplet_pool


def conv_config(root, frames=None, **extra):
    frames = frames if frames is not None else write_images(root, ["f1", "f2"])
    write_instrument_pool(root)
    path = write_config(
        root,
        model="toy",
        capture_kind="conv",
        prompt_pool="pool.json",
        frames=frames,
        out="bundle",
        seed=11,
        **extra,
    )
    return load_config(path)


def read_manifest(bundle_dir):
    return json.loads((bundle_dir / "manifest.json").read_text(encoding="utf-8"))


class TestExportRun:
    def test_conv_bundle_contents(self, workspace):
        out = export_run(conv_config(workspace))
        manifest = read_manifest(out)
        assert manifest["task"] == "instrument"
        assert [f["frame_id"] for f in manifest["frames"]] == ["f1", "f2"]
        frame = manifest["frames"][0]
        assert frame["capture_kind"] == "conv"
        assert frame["conv_activations"]["shape"] == [6, 8, 8]
        assert frame["conv_gradients"]["shape"] == [6, 8, 8]
        assert len(frame["similarity_scores"]) == 2
        assert all(-1.0 <= s <= 1.0 for s in frame["similarity_scores"])

    def test_layer_selector_changes_capture_shape(self, workspace):
        config = conv_config(workspace, layer="conv1")
        manifest = read_manifest(export_run(config))
        assert manifest["frames"][0]["conv_activations"]["shape"] == [8, 16, 16]

    def test_transformer_bundle_contents(self, workspace):
        frames = write_images(workspace, ["f1"])
        write_triplet_pool(workspace, [("grasper", "retract", "gallbladder"), ("hook", "cut", "liver")])
        config = load_config(
            write_config(
                workspace,
                model="toy",
                capture_kind="transformer",
                prompt_pool="pool.json",
                frames=frames,
                out="bundle",
            )
        )
        manifest = read_manifest(export_run(config))
        assert manifest["task"] == "triplet"
        frame = manifest["frames"][0]
        assert frame["patch_grid"] == [2, 2]
        assert [t["shape"] for t in frame["attention_stack"]] == [[5, 5], [5, 5]]
        assert [t["shape"] for t in frame["attention_gradients"]] == [[5, 5], [5, 5]]
        assert manifest["meta"]["head_reduction"] == "mean"

    def test_payload_is_float32_little_endian(self, workspace):
        out = export_run(conv_config(workspace))
        manifest = read_manifest(out)
        ref = manifest["frames"][0]["conv_activations"]
        data = np.fromfile(out / f"{ref['name']}.bin", dtype="<f4")
        assert data.size == int(np.prod(ref["shape"]))
        assert np.isfinite(data).all()

    def test_byte_identical_re_export(self, workspace):
        config = conv_config(workspace)
        first = export_run(config)
        baseline = {p.name: p.read_bytes() for p in sorted(first.iterdir())}
        second = export_run(config)
        again = {p.name: p.read_bytes() for p in sorted(second.iterdir())}
        assert baseline == again

    def test_unknown_model_rejected(self, workspace):
        frames = write_images(workspace, ["f1"])
        write_instrument_pool(workspace)
        config = load_config(
            write_config(
                workspace,
                model="surgvlp",
                capture_kind="conv",
                prompt_pool="pool.json",
                frames=frames,
                out="bundle",
            )
        )
        with pytest.raises(ModelLoadFailure):
            export_run(config)

    def test_transformer_rejects_unaligned_image(self, workspace):
        frames = write_images(workspace, ["f1"], size=(10, 16))
        write_instrument_pool(workspace)
        config = load_config(
            write_config(
                workspace,
                model="toy",
                capture_kind="transformer",
                prompt_pool="pool.json",
                frames=frames,
                out="bundle",
            )
        )
        with pytest.raises(CaptureShapeError):
            export_run(config)

    def test_missing_image_rejected(self, workspace):
        write_instrument_pool(workspace)
        config = load_config(
            write_config(
                workspace,
                model="toy",
                capture_kind="conv",
                prompt_pool="pool.json",
                frames=[{"frame_id": "f1", "image": "absent.png"}],
                out="bundle",
            )
        )
        with pytest.raises(CaptureShapeError):
            export_run(config)

    def test_task_mismatch_rejected(self, workspace):
        with pytest.raises(ConfigError):
            export_run(conv_config(workspace, task="triplet"))

    def test_video_ids_recorded(self, workspace):
        frames = write_images(workspace, ["f1"])
        frames[0]["video_id"] = "vid02"
        config = conv_config(workspace, frames=frames, video_id="vid01")
        manifest = read_manifest(export_run(config))
        assert manifest["video_id"] == "vid01"
        assert manifest["frames"][0]["video_id"] == "vid02"


class TestConfigLoading:
    def test_missing_file(self, workspace):
        with pytest.raises(ConfigError):
            load_config(workspace / "absent.json")

    def test_duplicate_frame_ids(self, workspace):
        frames = write_images(workspace, ["f1"])
        write_instrument_pool(workspace)
        path = write_config(
            workspace,
            model="toy",
            capture_kind="conv",
            prompt_pool="pool.json",
            frames=frames + frames,
            out="bundle",
        )
        with pytest.raises(ConfigError):
            load_config(path)

    def test_needs_pool_or_worklist(self, workspace):
        path = write_config(
            workspace, model="toy", capture_kind="conv", frames=[], out="bundle"
        )
        with pytest.raises(ConfigError):
            load_config(path)

    def test_unknown_capture_kind(self, workspace):
        path = write_config(
            workspace,
            model="toy",
            capture_kind="pooling",
            prompt_pool="pool.json",
            frames=[],
            out="bundle",
        )
        with pytest.raises(ConfigError):
            load_config(path)

    def test_paths_resolve_against_config_dir(self, workspace):
        nested = workspace / "nested"
        nested.mkdir()
        write_images(nested, ["f1"])
        write_instrument_pool(nested)
        path = write_config(
            nested,
            model="toy",
            capture_kind="conv",
            prompt_pool="pool.json",
            frames=[{"frame_id": "f1", "image": "f1.png"}],
            out="bundle",
        )
        config = load_config(path)
        assert config.out == nested / "bundle"
        assert config.frames[0].image == nested / "f1.png"


class TestCli:
    def test_export_and_validate(self, workspace):
        conv_config(workspace)
        result = run_cli("camexport", "export", "--config", str(workspace / "config.json"))
        assert result.returncode == 0, result.stderr
        assert "wrote" in result.stdout
        check = run_cli("camground", "validate", str(workspace / "bundle"))
        assert check.returncode == 0, check.stderr
        assert check.stdout.startswith("ok: task=instrument frames=2")

    def test_bad_config_exits_one(self, workspace):
        result = run_cli("camexport", "export", "--config", str(workspace / "absent.json"))
        assert result.returncode == 1
        assert result.stderr.startswith("ConfigError:")

    def test_unknown_model_exits_one(self, workspace):
        frames = write_images(workspace, ["f1"])
        write_instrument_pool(workspace)
        write_config(
            workspace,
            model="other",
            capture_kind="conv",
            prompt_pool="pool.json",
            frames=frames,
            out="bundle",
        )
        result = run_cli("camexport", "export", "--config", str(workspace / "config.json"))
        assert result.returncode == 1
        assert result.stderr.startswith("ModelLoadFailure:")


class TestImagePath:
    def test_manifest_image_path_relative_to_bundle(self, workspace):
        out = export_run(conv_config(workspace))
        manifest = read_manifest(out)
        rel = manifest["frames"][0]["image_path"]
        assert (out / rel).resolve() == (workspace / "f1.png").resolve()
        with Image.open(out / rel) as img:
            assert img.size == (16, 16)
