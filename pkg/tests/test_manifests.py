import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmehr.ingest import Note
from mmehr.manifests import (
    AdapterFailure,
    ChecksumMismatch,
    CoverageGap,
    DimensionMismatch,
    EmbeddingManifest,
    EmptyInput,
    EncoderSpec,
    ManifestError,
    NonFiniteValue,
    aggregate_image_embeddings,
    concat_notes,
    encode_reference_manifest,
    read_manifest,
    reference_encode,
    run_external_encoder,
    write_manifest,
)


def make_manifest(n=5, dim=3, modality="text", seed=0):
    rng = np.random.default_rng(seed)
    return EmbeddingManifest(
        modality=modality,
        encoder_name="test-enc",
        dimension=dim,
        ids=list(range(100, 100 + n)),
        vectors=rng.normal(size=(n, dim)).astype(np.float32),
    )


class TestRoundTrip:
    def test_bitwise_identical(self, tmp_path):
        m = make_manifest()
        write_manifest(m, tmp_path / "m")
        again = read_manifest(tmp_path / "m")
        assert again.vectors.tobytes() == m.vectors.tobytes()
        assert again.ids == m.ids
        assert again.modality == m.modality
        assert again.encoder_name == m.encoder_name
        assert again.dimension == m.dimension

    def test_reserialization_stable(self, tmp_path):
        m = make_manifest()
        write_manifest(m, tmp_path / "a")
        write_manifest(read_manifest(tmp_path / "a"), tmp_path / "b")
        for fname in ("manifest.json", "ids.csv", "vectors.bin"):
            assert (tmp_path / "a" / fname).read_bytes() == (
                tmp_path / "b" / fname
            ).read_bytes()

    def test_empty_manifest_round_trips(self, tmp_path):
        m = EmbeddingManifest(
            "image", "e", 4, [], np.zeros((0, 4), dtype=np.float32)
        )
        write_manifest(m, tmp_path / "m")
        again = read_manifest(tmp_path / "m")
        assert again.ids == [] and again.vectors.shape == (0, 4)


class TestCorruption:
    def test_flipped_byte_in_vectors(self, tmp_path):
        write_manifest(make_manifest(), tmp_path / "m")
        blob = bytearray((tmp_path / "m" / "vectors.bin").read_bytes())
        blob[0] ^= 0xFF
        (tmp_path / "m" / "vectors.bin").write_bytes(bytes(blob))
        with pytest.raises(ChecksumMismatch):
            read_manifest(tmp_path / "m")

    def test_header_count_mismatch(self, tmp_path):
        write_manifest(make_manifest(), tmp_path / "m")
        header = json.loads((tmp_path / "m" / "manifest.json").read_text())
        header["count"] = 99
        (tmp_path / "m" / "manifest.json").write_text(json.dumps(header))
        with pytest.raises(DimensionMismatch):
            read_manifest(tmp_path / "m")

    def test_unsupported_dtype_rejected(self, tmp_path):
        write_manifest(make_manifest(), tmp_path / "m")
        header = json.loads((tmp_path / "m" / "manifest.json").read_text())
        header["dtype"] = "f64le"
        (tmp_path / "m" / "manifest.json").write_text(json.dumps(header))
        with pytest.raises(ManifestError):
            read_manifest(tmp_path / "m")

    def test_nan_vectors_rejected_on_write(self, tmp_path):
        m = make_manifest()
        m.vectors[1, 1] = np.nan
        with pytest.raises(NonFiniteValue):
            write_manifest(m, tmp_path / "m")

    def test_validate_catches_shape_and_dtype(self):
        m = make_manifest()
        m.vectors = m.vectors.astype(np.float64)
        with pytest.raises(ManifestError):
            m.validate()
        m = make_manifest()
        m.dimension = 7
        with pytest.raises(DimensionMismatch):
            m.validate()
        m = make_manifest()
        m.ids[1] = m.ids[0]
        with pytest.raises(ManifestError):
            m.validate()
        m = make_manifest()
        m.modality = "audio"
        with pytest.raises(ManifestError):
            m.validate()


class TestAggregation:
    def test_mean_of_rows(self):
        vecs = np.array([[1.0, 3.0], [3.0, 5.0]])
        assert aggregate_image_embeddings(vecs).tolist() == [2.0, 4.0]

    def test_single_vector_passes_through(self):
        assert aggregate_image_embeddings(np.array([2.0, 4.0])).tolist() == [2.0, 4.0]

    def test_empty_rejected(self):
        with pytest.raises(EmptyInput):
            aggregate_image_embeddings(np.zeros((0, 4)))


class TestConcatNotes:
    def test_chronological_with_headers(self):
        notes = [
            Note(offset_hours=5.0, seq=0, text="later note"),
            Note(offset_hours=1.25, seq=0, text="first note"),
        ]
        text = concat_notes(notes)
        assert text == "[t=+1.25h]\nfirst note\n\n[t=+5.00h]\nlater note"

    def test_ties_break_by_sequence(self):
        notes = [Note(2.0, 1, "b"), Note(2.0, 0, "a")]
        assert concat_notes(notes).index("a") < concat_notes(notes).index("b")

    def test_empty_list(self):
        assert concat_notes([]) == ""


class TestReferenceEncoder:
    def test_deterministic_and_seed_sensitive(self):
        a = reference_encode(42, "image", 16, seed=0)
        b = reference_encode(42, "image", 16, seed=0)
        c = reference_encode(42, "image", 16, seed=1)
        d = reference_encode(43, "image", 16, seed=0)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)
        assert not np.array_equal(a, d)
        assert a.dtype == np.float32

    def test_modalities_decorrelated(self):
        a = reference_encode(42, "image", 64, seed=0)
        b = reference_encode(42, "timeseries", 64, seed=0)
        assert not np.array_equal(a, b)

    def test_roughly_standard_normal(self):
        vecs = np.stack([reference_encode(i, "image", 64, seed=0) for i in range(200)])
        assert abs(float(vecs.mean())) < 0.05
        assert abs(float(vecs.std()) - 1.0) < 0.05

    def test_shared_tokens_pull_text_vectors_together(self, master):
        with_notes = [s for s in master.stays if s.notes][:12]
        # same stay id, same notes -> identical; different ids sharing
        # vocabulary correlate more than unrelated random vectors
        sims_content = []
        for a in with_notes:
            for b in with_notes:
                if a.stay_id >= b.stay_id:
                    continue
                va = reference_encode(a, "text", 64, seed=0)
                vb = reference_encode(b, "text", 64, seed=0)
                sims_content.append(
                    float(va @ vb / (np.linalg.norm(va) * np.linalg.norm(vb)))
                )
        base_sims = []
        for a in with_notes:
            for b in with_notes:
                if a.stay_id >= b.stay_id:
                    continue
                va = reference_encode(a.stay_id, "text", 64, seed=0)
                vb = reference_encode(b.stay_id, "text", 64, seed=0)
                base_sims.append(
                    float(va @ vb / (np.linalg.norm(va) * np.linalg.norm(vb)))
                )
        assert np.mean(sims_content) > np.mean(base_sims) + 0.05

    def test_bad_dimension_rejected(self):
        with pytest.raises(ValueError):
            reference_encode(1, "image", 0, seed=0)

    def test_manifest_skips_stays_without_modality(self, master):
        manifest = encode_reference_manifest(master.stays, "image", 8, seed=0)
        with_images = {s.stay_id for s in master.stays if s.images}
        assert set(manifest.ids) == with_images
        assert manifest.vectors.shape == (len(with_images), 8)


ADAPTER_OK = """\
import argparse, hashlib, json, sys
import numpy as np

p = argparse.ArgumentParser()
p.add_argument("--input", required=True)
p.add_argument("--output", required=True)
p.add_argument("--window-hours", required=True)
args = p.parse_args()

from pathlib import Path
out = Path(args.output)
out.mkdir(parents=True, exist_ok=True)
ids = [201, 202, 203]
vecs = np.ones((3, {dim}), dtype="<f4")
blob = vecs.tobytes()
(out / "vectors.bin").write_bytes(blob)
(out / "ids.csv").write_text("stay_id\\n" + "".join(f"{{i}}\\n" for i in ids))
header = {{
    "modality": "image",
    "encoder_name": "toy-adapter",
    "dimension": {dim},
    "count": 3,
    "dtype": "f32le",
    "checksum": "sha256:" + hashlib.sha256(blob).hexdigest(),
}}
(out / "manifest.json").write_text(json.dumps(header))
"""


class TestExternalAdapter:
    def write_adapter(self, tmp_path, dim=4):
        script = tmp_path / "adapter.py"
        script.write_text(ADAPTER_OK.format(dim=dim))
        return script

    def spec(self, script, dim=4):
        return EncoderSpec(
            name="toy",
            modality="image",
            dimension=dim,
            kind="external",
            command=("python3", str(script)),
        )

    def test_happy_path(self, tmp_path):
        script = self.write_adapter(tmp_path)
        result = run_external_encoder(
            self.spec(script), tmp_path / "master", tmp_path / "out", 24.0,
            expected_ids=[201, 202, 203],
        )
        assert result.manifest.ids == [201, 202, 203]
        assert result.missing_ids == []

    def test_coverage_gap_warns_but_returns(self, tmp_path):
        script = self.write_adapter(tmp_path)
        with pytest.warns(CoverageGap):
            result = run_external_encoder(
                self.spec(script), tmp_path / "master", tmp_path / "out", 24.0,
                expected_ids=[201, 202, 203, 204],
            )
        assert result.missing_ids == [204]

    def test_nonzero_exit_is_adapter_failure(self, tmp_path):
        script = tmp_path / "bad.py"
        script.write_text("import sys; sys.exit(3)")
        with pytest.raises(AdapterFailure):
            run_external_encoder(
                self.spec(script), tmp_path / "master", tmp_path / "out", 24.0
            )

    def test_dimension_lie_is_adapter_failure(self, tmp_path):
        script = self.write_adapter(tmp_path, dim=4)
        spec = self.spec(script, dim=9)  # spec disagrees with what it writes
        with pytest.raises(AdapterFailure):
            run_external_encoder(spec, tmp_path / "master", tmp_path / "out", 24.0)

    def test_malformed_output_is_adapter_failure(self, tmp_path):
        script = tmp_path / "noop.py"
        script.write_text("pass")
        with pytest.raises(AdapterFailure):
            run_external_encoder(
                self.spec(script), tmp_path / "master", tmp_path / "out", 24.0
            )

    def test_native_spec_rejected(self, tmp_path):
        spec = EncoderSpec(name="n", modality="text", dimension=4)
        with pytest.raises(ValueError):
            run_external_encoder(spec, tmp_path, tmp_path / "out", 24.0)

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            EncoderSpec(name="x", modality="text", dimension=0)
        with pytest.raises(ValueError):
            EncoderSpec(name="x", modality="text", dimension=4, kind="external")
        with pytest.raises(ValueError):
            EncoderSpec(name="x", modality="text", dimension=4, kind="weird")


@given(
    st.lists(st.integers(0, 10_000), min_size=1, max_size=20, unique=True),
    st.integers(1, 12),
    st.integers(0, 2**16),
)
@settings(max_examples=25, deadline=None)
def test_round_trip_property(tmp_path_factory, ids, dim, seed):
    rng = np.random.default_rng(seed)
    m = EmbeddingManifest(
        modality="timeseries",
        encoder_name="prop",
        dimension=dim,
        ids=ids,
        vectors=rng.normal(size=(len(ids), dim)).astype(np.float32),
    )
    out = tmp_path_factory.mktemp("prop")
    write_manifest(m, out)
    again = read_manifest(out)
    assert again.ids == ids
    assert np.array_equal(again.vectors, m.vectors)
