from __future__ import annotations

import json
import math

import numpy as np
import pytest

from camground.bundle_io import (
    FrameCapture,
    RunBundle,
    TensorRecord,
    load_bundle,
    validate_bundle,
    write_bundle,
)
from camground.errors import (
    GridMismatch,
    MissingFile,
    NonFiniteValue,
    SchemaViolation,
    ShapeMismatch,
)
from camground.prompts import PromptPool

from helpers import conv_frame, instrument_pool, simple_bundle, transformer_frame, verb_pool


class TestTensorRecord:
    def test_shape_product_must_match_data_length(self):
        with pytest.raises(ShapeMismatch):
            TensorRecord("t", (2, 3), np.zeros(5, dtype=np.float32))

    def test_non_finite_rejected(self):
        with pytest.raises(NonFiniteValue):
            TensorRecord("t", (2,), np.array([1.0, math.nan], dtype=np.float32))
        with pytest.raises(NonFiniteValue):
            TensorRecord("t", (2,), np.array([1.0, math.inf], dtype=np.float32))

    def test_bad_name_rejected(self):
        with pytest.raises(SchemaViolation):
            TensorRecord("../escape", (1,), np.zeros(1, dtype=np.float32))

    def test_non_positive_shape_rejected(self):
        with pytest.raises(ShapeMismatch):
            TensorRecord("t", (0, 2), np.zeros(0, dtype=np.float32))

    def test_as_array_restores_shape(self):
        record = TensorRecord("t", (2, 2), np.arange(4, dtype=np.float32))
        assert record.as_array().shape == (2, 2)


class TestWriteBundle:
    def test_hex_layout_of_two_by_two_tensor(self, tmp_path):
        data = np.array([[1.0, 2.0], [3.0, 4.0]], dtype=np.float32)
        bundle = simple_bundle(
            frames=[
                conv_frame(
                    "f1",
                    (0.9, 0.1),
                    data.reshape(1, 2, 2),
                    np.ones((1, 2, 2), dtype=np.float32),
                    (2, 2),
                )
            ]
        )
        write_bundle(bundle, tmp_path / "b")
        payload = (tmp_path / "b" / "f1_act.bin").read_bytes()
        assert payload == bytes.fromhex(
            "0000803f" "00000040" "00004040" "00008040"
        )

    def test_empty_bundle_writes_manifest_only(self, tmp_path):
        bundle = RunBundle(task="instrument", prompt_pool=instrument_pool(), frames=[])
        write_bundle(bundle, tmp_path / "b")
        files = sorted(p.name for p in (tmp_path / "b").iterdir())
        assert files == ["manifest.json"]

    def test_deterministic_bytes(self, tmp_path):
        for name in ("one", "two"):
            write_bundle(simple_bundle(), tmp_path / name)
        a = tmp_path / "one"
        b = tmp_path / "two"
        assert (a / "manifest.json").read_bytes() == (b / "manifest.json").read_bytes()
        assert (a / "f1_act.bin").read_bytes() == (b / "f1_act.bin").read_bytes()


class TestRoundTrip:
    def test_conv_bundle(self, tmp_path):
        bundle = simple_bundle(video_id="vid01", annotation_file="ann.json")
        write_bundle(bundle, tmp_path / "b")
        assert load_bundle(tmp_path / "b") == bundle

    def test_three_layer_transformer_bundle(self, tmp_path):
        rng = np.random.default_rng(2)
        frame = transformer_frame(
            "f1",
            (0.3, 0.7),
            [rng.uniform(0, 1, (5, 5)) for _ in range(3)],
            [rng.uniform(-1, 1, (5, 5)) for _ in range(3)],
            (8, 8),
            patch_grid=(2, 2),
        )
        bundle = simple_bundle(frames=[frame])
        write_bundle(bundle, tmp_path / "b")
        assert load_bundle(tmp_path / "b") == bundle

    def test_verb_reprompt_bundle(self, tmp_path):
        frame = conv_frame(
            "f1",
            (0.4,),
            np.ones((1, 2, 2)),
            np.ones((1, 2, 2)),
            (2, 2),
            target_prompt_index=0,
        )
        bundle = RunBundle(task="verb_reprompt", prompt_pool=verb_pool(["cut"]), frames=[frame])
        write_bundle(bundle, tmp_path / "b")
        assert load_bundle(tmp_path / "b") == bundle

    def test_empty_bundle(self, tmp_path):
        bundle = RunBundle(task="triplet", prompt_pool=PromptPool(()), frames=[])
        write_bundle(bundle, tmp_path / "b")
        assert load_bundle(tmp_path / "b") == bundle

    def test_meta_preserved(self, tmp_path):
        bundle = simple_bundle(meta={"model": "toy", "seed": 7})
        write_bundle(bundle, tmp_path / "b")
        assert load_bundle(tmp_path / "b").meta == {"model": "toy", "seed": 7}


class TestLoadErrors:
    def write_valid(self, tmp_path):
        write_bundle(simple_bundle(), tmp_path / "b")
        return tmp_path / "b"

    def edit_manifest(self, bundle_dir, mutate):
        manifest = json.loads((bundle_dir / "manifest.json").read_text())
        mutate(manifest)
        (bundle_dir / "manifest.json").write_text(json.dumps(manifest))

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(MissingFile):
            load_bundle(tmp_path / "nowhere")

    def test_missing_tensor_file(self, tmp_path):
        bundle_dir = self.write_valid(tmp_path)
        (bundle_dir / "f1_act.bin").unlink()
        with pytest.raises(MissingFile) as err:
            load_bundle(bundle_dir)
        assert "f1_act" in str(err.value)

    def test_shape_product_mismatch(self, tmp_path):
        bundle_dir = self.write_valid(tmp_path)

        def mutate(doc):
            doc["frames"][0]["conv_activations"]["shape"] = [1, 3, 2]

        self.edit_manifest(bundle_dir, mutate)
        with pytest.raises(ShapeMismatch) as err:
            load_bundle(bundle_dir)
        assert "f1_act" in str(err.value)

    def test_nan_payload_rejected(self, tmp_path):
        bundle_dir = self.write_valid(tmp_path)
        bad = np.array([math.nan] * 4, dtype="<f4")
        (bundle_dir / "f1_act.bin").write_bytes(bad.tobytes())
        with pytest.raises(NonFiniteValue) as err:
            load_bundle(bundle_dir)
        assert "f1_act" in str(err.value)

    def test_truncated_payload_rejected(self, tmp_path):
        bundle_dir = self.write_valid(tmp_path)
        raw = (bundle_dir / "f1_act.bin").read_bytes()
        (bundle_dir / "f1_act.bin").write_bytes(raw[:-2])
        with pytest.raises(ShapeMismatch):
            load_bundle(bundle_dir)

    def test_unknown_task_rejected(self, tmp_path):
        bundle_dir = self.write_valid(tmp_path)
        self.edit_manifest(bundle_dir, lambda doc: doc.update(task="segment"))
        with pytest.raises(SchemaViolation):
            load_bundle(bundle_dir)

    def test_score_count_must_match_pool(self, tmp_path):
        bundle_dir = self.write_valid(tmp_path)

        def mutate(doc):
            doc["frames"][0]["similarity_scores"] = [0.9]

        self.edit_manifest(bundle_dir, mutate)
        with pytest.raises(SchemaViolation):
            load_bundle(bundle_dir)

    def test_invalid_json_rejected(self, tmp_path):
        bundle_dir = self.write_valid(tmp_path)
        (bundle_dir / "manifest.json").write_text("{broken")
        with pytest.raises(SchemaViolation):
            load_bundle(bundle_dir)


class TestValidateBundle:
    def test_attention_layers_with_differing_tokens_rejected(self):
        frame = transformer_frame(
            "f1",
            (0.1, 0.2),
            [np.zeros((3, 3)), np.zeros((4, 4))],
            [np.zeros((3, 3)), np.zeros((4, 4))],
            (4, 4),
        )
        with pytest.raises(SchemaViolation):
            validate_bundle(simple_bundle(frames=[frame]))

    def test_attention_gradient_shape_mismatch_rejected(self):
        frame = FrameCapture(
            frame_id="f1",
            image_size=(4, 4),
            capture_kind="transformer",
            similarity_scores=(0.1, 0.2),
            attention_stack=[TensorRecord("a0", (3, 3), np.zeros(9, dtype=np.float32))],
            attention_gradients=[TensorRecord("g0", (2, 2), np.zeros(4, dtype=np.float32))],
        )
        with pytest.raises(ShapeMismatch):
            validate_bundle(simple_bundle(frames=[frame]))

    def test_conv_pair_shape_mismatch_rejected(self):
        frame = FrameCapture(
            frame_id="f1",
            image_size=(2, 2),
            capture_kind="conv",
            similarity_scores=(0.1, 0.2),
            conv_activations=TensorRecord("a", (1, 2, 2), np.zeros(4, dtype=np.float32)),
            conv_gradients=TensorRecord("g", (2, 2, 2), np.zeros(8, dtype=np.float32)),
        )
        with pytest.raises(ShapeMismatch):
            validate_bundle(simple_bundle(frames=[frame]))

    def test_duplicate_frame_ids_rejected(self):
        frames = [
            conv_frame("f1", (0.9, 0.1), np.ones((1, 2, 2)), np.ones((1, 2, 2)), (2, 2)),
            conv_frame(
                "f1", (0.9, 0.1), np.ones((1, 2, 2)), np.ones((1, 2, 2)), (2, 2), prefix="other"
            ),
        ]
        with pytest.raises(SchemaViolation):
            validate_bundle(simple_bundle(frames=frames))

    def test_duplicate_tensor_names_rejected(self):
        frames = [
            conv_frame("f1", (0.9, 0.1), np.ones((1, 2, 2)), np.ones((1, 2, 2)), (2, 2)),
            conv_frame(
                "f2", (0.9, 0.1), np.ones((1, 2, 2)), np.ones((1, 2, 2)), (2, 2), prefix="f1"
            ),
        ]
        with pytest.raises(SchemaViolation):
            validate_bundle(simple_bundle(frames=frames))

    def test_duplicate_pool_labels_rejected(self):
        pool = instrument_pool(("grasper", "grasper2"))
        entries = list(pool.entries)
        entries[1] = type(entries[1])(prompt=entries[1].prompt, label="grasper")
        with pytest.raises(SchemaViolation):
            validate_bundle(simple_bundle(pool=PromptPool(tuple(entries))))

    def test_patch_grid_must_cover_tokens(self):
        frame = transformer_frame(
            "f1",
            (0.1, 0.2),
            [np.full((5, 5), 0.2)],
            [np.zeros((5, 5))],
            (4, 4),
            patch_grid=(3, 2),
        )
        with pytest.raises(GridMismatch):
            validate_bundle(simple_bundle(frames=[frame]))

    def test_verb_reprompt_needs_target_index(self):
        frame = conv_frame("f1", (0.4,), np.ones((1, 2, 2)), np.ones((1, 2, 2)), (2, 2))
        bundle = RunBundle(task="verb_reprompt", prompt_pool=verb_pool(["cut"]), frames=[frame])
        with pytest.raises(SchemaViolation):
            validate_bundle(bundle)

    def test_target_index_bounds_checked(self):
        frame = conv_frame(
            "f1",
            (0.4,),
            np.ones((1, 2, 2)),
            np.ones((1, 2, 2)),
            (2, 2),
            target_prompt_index=3,
        )
        bundle = RunBundle(task="verb_reprompt", prompt_pool=verb_pool(["cut"]), frames=[frame])
        with pytest.raises(SchemaViolation):
            validate_bundle(bundle)
