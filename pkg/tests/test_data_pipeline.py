"""Tests for manifests, patient-level splits, image handling and synthesis."""

import io

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from PIL import Image

from skipnet.data import (
    CLASS_NAMES,
    MANIFEST_NAME,
    REFERENCE_SLICE_COUNTS,
    NearestCentroid,
    SplitData,
    SplitProvenance,
    build_manifest,
    decode_image,
    encode_png,
    generate_synthetic,
    label_id,
    label_name,
    load_dataset,
    load_image,
    load_manifest,
    load_split,
    parse_manifest,
    preprocess,
    quantize,
    resize_bilinear,
    split_by_patient,
)
from skipnet.data.manifest import ManifestRecord
from skipnet.errors import ConfigurationError, DataError, SplitError
from tests.oracles import bilinear_weights


def png_bytes(array):
    buffer = io.BytesIO()
    Image.fromarray(array).save(buffer, format="PNG")
    return buffer.getvalue()


@pytest.fixture(scope="module")
def synthetic_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("synthetic")
    generate_synthetic(root, n_per_class=24, size=16, seed=3)
    return root


def records(per_class_patients, slices_per_patient=2):
    out = []
    for label in range(3):
        for p in range(per_class_patients):
            for s in range(slices_per_patient):
                out.append(
                    ManifestRecord(
                        path=f"{label}/{p}_{s}.png", label=label, patient_id=f"p{label}-{p}"
                    )
                )
    return out


class TestLabels:
    def test_round_trip(self):
        for k, name in enumerate(CLASS_NAMES):
            assert label_id(name) == k
            assert label_name(k) == name

    def test_case_and_whitespace(self):
        assert label_id(" Glioma ") == 1

    def test_unknown(self):
        with pytest.raises(DataError):
            label_id("astrocytoma")
        with pytest.raises(DataError):
            label_name(3)


class TestParseManifest:
    def parse(self, text, tmp_path):
        return parse_manifest(text, tmp_path / "m.csv", tmp_path, check_files=False)

    def test_valid_manifest(self, tmp_path):
        manifest = self.parse(
            "path,label,patient_id\na.png,meningioma,p1\n\nb.png,pituitary,p2\n", tmp_path
        )
        assert [r.label for r in manifest.records] == [0, 2]
        assert not manifest.has_splits
        assert manifest.class_counts() == (1, 0, 1)
        assert manifest.resolve(manifest.records[0]) == tmp_path / "a.png"

    def test_split_column(self, tmp_path):
        manifest = self.parse(
            "path,label,patient_id,split\na.png,glioma,p1,train\nb.png,glioma,p2,test\n",
            tmp_path,
        )
        assert manifest.has_splits
        assert [r.path for r in manifest.select("test")] == ["b.png"]

    @pytest.mark.parametrize(
        "text, line, message",
        [
            ("file,label,patient\n", 1, "header"),
            ("path,label,patient_id\na.png,meningioma\n", 2, "fields"),
            ("path,label,patient_id\na.png,meningioma,p1\nb.png,tumor,p1\n", 3, "label"),
            ("path,label,patient_id\na.png,glioma,\n", 2, "patient_id"),
            ("path,label,patient_id\na.png,glioma,p\na.png,glioma,p\n", 3, "duplicate"),
            ("path,label,patient_id\n../x.png,glioma,p\n", 2, "escapes"),
            ("path,label,patient_id,split\na.png,glioma,p,holdout\n", 2, "split"),
        ],
    )
    def test_errors_name_file_and_line(self, tmp_path, text, line, message):
        with pytest.raises(DataError, match=message) as exc_info:
            self.parse(text, tmp_path)
        assert f"m.csv:{line}:" in str(exc_info.value)

    def test_empty_manifest(self, tmp_path):
        with pytest.raises(DataError, match="no records"):
            self.parse("path,label,patient_id\n", tmp_path)
        with pytest.raises(DataError, match="no records"):
            self.parse("", tmp_path)

    def test_patient_in_two_splits(self, tmp_path):
        with pytest.raises(SplitError, match="p1"):
            self.parse(
                "path,label,patient_id,split\na.png,glioma,p1,train\nb.png,glioma,p1,val\n",
                tmp_path,
            )

    def test_dangling_image_path(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("path,label,patient_id\nmissing.png,glioma,p1\n")
        with pytest.raises(DataError, match="not found"):
            load_manifest(path)

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(DataError):
            load_manifest(tmp_path / "nope.csv")

    def test_reference_counts(self, tmp_path):
        rows = [
            ManifestRecord(path=f"{k}_{i}.png", label=k, patient_id=f"p{k}")
            for k, n in enumerate(REFERENCE_SLICE_COUNTS)
            for i in range(n)
        ]
        build_manifest(tmp_path, rows).check_reference_counts()
        with pytest.raises(DataError, match="708"):
            build_manifest(tmp_path, rows[1:]).check_reference_counts()

    def test_csv_round_trip(self, tmp_path):
        manifest = split_by_patient(build_manifest(tmp_path, records(8)), seed=1)
        again = self.parse(manifest.to_csv(), tmp_path)
        assert again.records == manifest.records


class TestSplitByPatient:
    def test_patients_never_straddle_splits(self, tmp_path):
        manifest = split_by_patient(build_manifest(tmp_path, records(10)), seed=0)
        manifest.check_patient_isolation()
        for label in range(3):
            for split in ("train", "val", "test"):
                assert any(r.label == label for r in manifest.select(split))

    def test_fractions_are_approximated(self, tmp_path):
        manifest = split_by_patient(build_manifest(tmp_path, records(20)), seed=0)
        total = len(manifest.records)
        assert abs(len(manifest.select("train")) / total - 0.70) < 0.05
        assert abs(len(manifest.select("val")) / total - 0.15) < 0.05

    def test_same_seed_same_split(self, tmp_path):
        base = build_manifest(tmp_path, records(10))
        assert split_by_patient(base, seed=4) == split_by_patient(base, seed=4)

    def test_too_few_patients(self, tmp_path):
        with pytest.raises(SplitError):
            split_by_patient(build_manifest(tmp_path, records(2)), seed=0)

    def test_invalid_fractions(self, tmp_path):
        base = build_manifest(tmp_path, records(10))
        with pytest.raises(ConfigurationError):
            split_by_patient(base, (0.5, 0.3, 0.3))
        with pytest.raises(ConfigurationError):
            split_by_patient(base, (1.0, 0.0, 0.0))


class TestSplitProvenance:
    def test_records_sorted_train_patients(self, tmp_path):
        manifest = split_by_patient(build_manifest(tmp_path, records(10)), seed=2)
        provenance = SplitProvenance.of(manifest, (0.70, 0.15, 0.15), 2)
        expected = sorted({r.patient_id for r in manifest.select("train")})
        assert list(provenance.train_patients) == expected
        assert provenance.seed == 2

    def test_other_seed_split_is_caught(self, tmp_path):
        base = build_manifest(tmp_path, records(10))
        provenance = SplitProvenance.of(split_by_patient(base, seed=7), (0.70, 0.15, 0.15), 7)
        provenance.check_disjoint(split_by_patient(base, seed=7), "test")
        leaky = next(
            seed
            for seed in range(100)
            if {r.patient_id for r in split_by_patient(base, seed=seed).select("test")}
            & set(provenance.train_patients)
        )
        with pytest.raises(SplitError, match="used for training"):
            provenance.check_disjoint(split_by_patient(base, seed=leaky), "test")

    def test_train_split_is_not_checked(self, tmp_path):
        manifest = split_by_patient(build_manifest(tmp_path, records(10)), seed=0)
        provenance = SplitProvenance.of(manifest, (0.70, 0.15, 0.15), 0)
        provenance.check_disjoint(manifest, "train")


class TestImages:
    def test_eight_bit_png(self):
        pixels = np.array([[0, 128], [255, 64]], dtype=np.uint8)
        assert_allclose(decode_image(png_bytes(pixels)), pixels / 255.0)

    def test_sixteen_bit_png(self):
        pixels = np.array([[0, 65535], [32768, 1000]], dtype=np.uint16)
        assert_allclose(decode_image(png_bytes(pixels)), pixels / 65535.0)

    def test_binary_pgm(self):
        pixels = np.array([[10, 20, 30]], dtype=np.uint8)
        buffer = io.BytesIO()
        Image.fromarray(pixels).save(buffer, format="PPM")
        assert buffer.getvalue().startswith(b"P5")
        assert_allclose(decode_image(buffer.getvalue()), pixels / 255.0)

    def test_color_image_is_rejected(self):
        rgb = np.zeros((2, 2, 3), dtype=np.uint8)
        with pytest.raises(DataError, match="grayscale"):
            decode_image(png_bytes(rgb))

    def test_garbage_bytes(self):
        with pytest.raises(DataError, match="Cannot decode"):
            decode_image(b"not an image", "x.png")

    def test_same_size_is_not_resampled(self):
        pixels = np.random.default_rng(0).random((8, 8))
        assert_array_equal(resize_bilinear(pixels, 8), pixels.astype(np.float32))

    def test_bilinear_upsampling_matches_weights(self):
        checker = np.array([[0.0, 1.0], [1.0, 0.0]])
        weights = bilinear_weights(2, 4)
        assert_allclose(weights[1], [0.75, 0.25])

        resized = resize_bilinear(checker, 4)

        assert_allclose(resized, weights @ checker @ weights.T, atol=1e-6)

    def test_preprocess_shape_and_range(self):
        pixels = (np.random.default_rng(1).random((20, 30)) * 255).astype(np.uint8)
        tensor = preprocess(png_bytes(pixels), size=16)
        assert tensor.shape == (1, 16, 16)
        assert tensor.dtype == np.float32
        assert tensor.min() >= 0.0 and tensor.max() <= 1.0

    def test_quantize_rounds_half_up(self):
        assert_array_equal(quantize([0.0, 0.5, 1.0, 1.5 / 255, -0.1, 2.0]), [0, 128, 255, 2, 0, 255])

    def test_png_round_trip_within_one_level(self):
        values = np.random.default_rng(2).random((5, 7))
        decoded = decode_image(encode_png(quantize(values)))
        assert np.max(np.abs(decoded - values)) <= 0.5 / 255 + 1e-12

    def test_load_image_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="Cannot read"):
            load_image(tmp_path / "absent.png")


class TestSynthetic:
    def test_layout_and_manifest(self, synthetic_root):
        manifest = load_manifest(synthetic_root / MANIFEST_NAME)
        assert manifest.class_counts() == (24, 24, 24)
        assert manifest.patient_counts() == (6, 6, 6)
        assert (synthetic_root / "images" / "glioma_0000.png").is_file()
        assert manifest.records[0].patient_id == "synth-0-0000"

    def test_same_seed_same_bytes(self, tmp_path):
        generate_synthetic(tmp_path / "a", n_per_class=2, size=16, seed=9)
        generate_synthetic(tmp_path / "b", n_per_class=2, size=16, seed=9)
        for path in sorted((tmp_path / "a").rglob("*.*")):
            twin = tmp_path / "b" / path.relative_to(tmp_path / "a")
            assert path.read_bytes() == twin.read_bytes()

    def test_invalid_arguments(self, tmp_path):
        with pytest.raises(ConfigurationError):
            generate_synthetic(tmp_path, n_per_class=0)
        with pytest.raises(ConfigurationError):
            generate_synthetic(tmp_path, size=8)


class TestDataset:
    def test_order_does_not_depend_on_threads(self, synthetic_root):
        manifest = split_by_patient(load_manifest(synthetic_root / MANIFEST_NAME), seed=0)
        serial = load_split(manifest, "train", 16, threads=1)
        parallel = load_split(manifest, "train", 16, threads=4)
        assert_array_equal(serial.images, parallel.images)
        assert_array_equal(serial.labels, parallel.labels)
        assert serial.patient_ids == parallel.patient_ids

    def test_load_dataset_covers_every_record(self, synthetic_root):
        manifest = split_by_patient(load_manifest(synthetic_root / MANIFEST_NAME), seed=0)
        dataset = load_dataset(manifest, 16)
        assert len(dataset.train) + len(dataset.val) + len(dataset.test) == 72
        assert dataset.split("val") is dataset.val
        assert dataset.train.images.shape[1:] == (1, 16, 16)

    def test_manifest_without_splits(self, synthetic_root):
        with pytest.raises(DataError, match="split"):
            load_split(load_manifest(synthetic_root / MANIFEST_NAME), "train", 16)

    def test_mismatched_arrays(self):
        with pytest.raises(DataError):
            SplitData.from_arrays("train", np.zeros((2, 1, 4, 4)), [0])


class TestNearestCentroid:
    def test_separable_classes(self):
        images = np.zeros((6, 1, 2, 2))
        for k in range(3):
            images[2 * k : 2 * k + 2, 0, 0, 0] = k
        split = SplitData.from_arrays("train", images, [0, 0, 1, 1, 2, 2])
        baseline = NearestCentroid.fit(split, 3)
        assert baseline.accuracy(split) == 1.0

    def test_missing_class(self):
        split = SplitData.from_arrays("train", np.zeros((2, 1, 2, 2)), [0, 1])
        with pytest.raises(DataError):
            NearestCentroid.fit(split, 3)

    def test_beats_chance_on_synthetic(self, synthetic_root):
        manifest = split_by_patient(load_manifest(synthetic_root / MANIFEST_NAME), seed=0)
        dataset = load_dataset(manifest, 16)
        baseline = NearestCentroid.fit(dataset.train, 3)
        assert baseline.accuracy(dataset.train) > 1 / 3

    @pytest.mark.slow
    def test_baseline_on_full_size_synthetic_test_split(self, tmp_path):
        generate_synthetic(tmp_path, n_per_class=200, size=128, seed=42)
        manifest = split_by_patient(load_manifest(tmp_path / MANIFEST_NAME), seed=42)
        dataset = load_dataset(manifest, 128, threads=4)
        baseline = NearestCentroid.fit(dataset.train, 3)
        assert baseline.accuracy(dataset.test) >= 0.6
