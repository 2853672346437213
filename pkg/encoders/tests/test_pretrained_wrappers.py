"""Pretrained-model stand-ins: dimensions, aggregation policy, interop."""

import numpy as np
import pytest

from mmehr.manifests import read_manifest

from ehr_encoders import dataio
from ehr_encoders.manifest import ManifestWriteError, write_manifest
from ehr_encoders.pretrained import (
    NOTE_SEPARATOR,
    UnknownModel,
    encode_pretrained,
    get_spec,
)


class TestRegistry:
    def test_advertised_dimensions(self):
        assert get_spec("radbert").dimension == 768
        assert get_spec("cxr-foundation").dimension == 1376

    def test_unknown_model_id(self):
        with pytest.raises(UnknownModel):
            get_spec("resnet50")

    def test_modality_mismatch_is_rejected(self):
        with pytest.raises(UnknownModel):
            encode_pretrained("image", "radbert", {1: ["a note"]})


class TestTextWrapper:
    def test_dimension_and_determinism(self):
        ids, vec_a = encode_pretrained("text", "radbert", {3: ["note a", "note b"]})
        _, vec_b = encode_pretrained("text", "radbert", {3: ["note a", "note b"]})
        assert ids == [3]
        assert vec_a.shape == (1, 768)
        assert vec_a.dtype == np.float32
        assert vec_a.tobytes() == vec_b.tobytes()

    def test_content_changes_the_embedding(self):
        _, vec_a = encode_pretrained("text", "radbert", {1: ["lungs are clear"]})
        _, vec_b = encode_pretrained("text", "radbert", {1: ["bilateral opacities"]})
        assert vec_a.tobytes() != vec_b.tobytes()

    def test_notes_are_concatenated_before_encoding(self):
        _, split = encode_pretrained("text", "radbert", {1: ["first", "second"]})
        _, joined = encode_pretrained(
            "text", "radbert", {1: [NOTE_SEPARATOR.join(["first", "second"])]}
        )
        assert split.tobytes() == joined.tobytes()

    def test_note_order_matters(self):
        _, ab = encode_pretrained("text", "radbert", {1: ["a", "b"]})
        _, ba = encode_pretrained("text", "radbert", {1: ["b", "a"]})
        assert ab.tobytes() != ba.tobytes()

    def test_stays_without_items_are_omitted(self):
        ids, vec = encode_pretrained("text", "radbert", {1: [], 2: ["x"], 5: ["y"]})
        assert ids == [2, 5]
        assert vec.shape == (2, 768)


class TestImageWrapper:
    def test_dimension(self):
        ids, vec = encode_pretrained("image", "cxr-foundation", {4: ["img/a.png"]})
        assert ids == [4]
        assert vec.shape == (1, 1376)

    def test_average_is_permutation_invariant_bitwise(self):
        items = [f"img/study_{i}.png" for i in range(5)]
        _, forward = encode_pretrained("image", "cxr-foundation", {1: items})
        _, reversed_ = encode_pretrained("image", "cxr-foundation", {1: items[::-1]})
        assert forward.tobytes() == reversed_.tobytes()

    def test_duplicated_image_averages_to_itself(self):
        _, once = encode_pretrained("image", "cxr-foundation", {1: ["img/a.png"]})
        _, twice = encode_pretrained("image", "cxr-foundation", {1: ["img/a.png", "img/a.png"]})
        assert once.tobytes() == twice.tobytes()


class TestConstantWrapper:
    def test_all_rows_identical(self):
        inputs = {i: [f"whatever {i}"] for i in range(6)}
        ids, vec = encode_pretrained("text", "constant", inputs)
        assert ids == list(range(6))
        assert np.all(vec == vec[0])

    def test_constant_accepts_any_modality_tag(self):
        _, as_text = encode_pretrained("text", "constant", {1: ["x"]})
        _, as_image = encode_pretrained("image", "constant", {1: ["y"]})
        assert as_text.tobytes() == as_image.tobytes()


class TestManifestInterop:
    def test_note_manifest_passes_pipeline_validation(self, master_dir, tmp_path):
        notes = dataio.read_notes(master_dir, window_hours=24.0)
        assert notes, "fixture master should have windowed notes"
        inputs = {sid: [text for _, text in items] for sid, items in notes.items()}
        ids, vec = encode_pretrained("text", "radbert", inputs)
        write_manifest(tmp_path, "text", "radbert", ids, vec)
        back = read_manifest(tmp_path)
        assert back.modality == "text"
        assert back.dimension == 768
        assert back.ids == ids

    def test_image_manifest_passes_pipeline_validation(self, master_dir, tmp_path):
        images = dataio.read_images(master_dir, window_hours=24.0)
        assert images, "fixture master should have windowed images"
        inputs = {sid: [path for _, path in items] for sid, items in images.items()}
        ids, vec = encode_pretrained("image", "cxr-foundation", inputs)
        write_manifest(tmp_path, "image", "cxr-foundation", ids, vec)
        back = read_manifest(tmp_path)
        assert back.modality == "image"
        assert back.dimension == 1376
        assert len(back.ids) == len(images)

    def test_writer_rejects_non_finite_rows(self, tmp_path):
        bad = np.full((2, 4), np.nan, dtype=np.float32)
        with pytest.raises(ManifestWriteError):
            write_manifest(tmp_path, "text", "bad", [1, 2], bad)

    def test_writer_rejects_duplicate_ids(self, tmp_path):
        vec = np.zeros((2, 4), dtype=np.float32)
        with pytest.raises(ManifestWriteError):
            write_manifest(tmp_path, "text", "bad", [7, 7], vec)
