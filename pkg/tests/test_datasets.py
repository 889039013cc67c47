"""Generator and persistence checks for the synthetic datasets."""

import dataclasses

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from latentcf.container import write_container
from latentcf.datasets import (
    SynthSpec,
    generate,
    glyph_strokes,
    load_dataset,
    save_dataset,
    spec_from_dict,
    spec_to_dict,
)
from latentcf.errors import ConfigurationError, FormatError, UnsupportedVersionError


def blob_spec(**overrides):
    base = dict(
        generator="blobs",
        n_features=16,
        n_attributes=4,
        n_samples=200,
        seed=0,
        noise=0.0,
        train_frac=0.6,
        dev_frac=0.2,
    )
    base.update(overrides)
    return SynthSpec(**base)


class TestSpecValidation:
    def test_unknown_generator(self):
        with pytest.raises(ConfigurationError):
            blob_spec(generator="moons").validate()

    def test_fractions_must_leave_test_rows(self):
        with pytest.raises(ConfigurationError):
            blob_spec(train_frac=0.7, dev_frac=0.3).validate()

    def test_label_attribute_out_of_range(self):
        with pytest.raises(ConfigurationError):
            blob_spec(label_attributes=(4,)).validate()

    def test_label_attributes_must_address_classes(self):
        with pytest.raises(ConfigurationError):
            blob_spec(n_classes=3, label_attributes=(0,)).validate()

    def test_echo_needs_blobs(self):
        with pytest.raises(ConfigurationError):
            blob_spec(
                generator="glyphs", n_features=16, label_echo=0.5
            ).validate()

    def test_echo_needs_a_free_coordinate(self):
        with pytest.raises(ConfigurationError):
            blob_spec(n_features=4, label_echo=0.5).validate()

    def test_glyphs_need_square_feature_count(self):
        with pytest.raises(ConfigurationError):
            blob_spec(generator="glyphs", n_features=20).validate()

    def test_blobs_need_room_for_attributes(self):
        with pytest.raises(ConfigurationError):
            blob_spec(n_features=3).validate()

    def test_attribute_prob_open_interval(self):
        with pytest.raises(ConfigurationError):
            blob_spec(attribute_prob=1.0).validate()

    def test_negative_noise_rejected(self):
        with pytest.raises(ConfigurationError):
            blob_spec(noise=-0.1).validate()

    @settings(max_examples=40, deadline=None)
    @given(
        st.integers(10, 80),
        st.floats(0.3, 0.7),
        st.floats(0.05, 0.25),
    )
    def test_split_partitions_every_row(self, n, train_frac, dev_frac):
        spec = blob_spec(n_samples=n, train_frac=train_frac, dev_frac=dev_frac)
        try:
            spec.validate()
        except ConfigurationError:
            assume(False)
        ds = generate(spec)
        parts = [ds.indices(p) for p in ("train", "dev", "test")]
        assert sum(len(p) for p in parts) == n
        assert all(len(p) >= 1 for p in parts)
        # contiguous block split, in order
        joined = np.concatenate(parts)
        assert np.array_equal(joined, np.arange(n))


class TestBlobs:
    def test_attribute_block_exact_without_noise(self):
        ds = generate(blob_spec(shift=2.0))
        assert_allclose(ds.instances[:, :4], ds.attributes * 2.0, atol=0)

    def test_two_class_label_is_conjunction(self):
        ds = generate(blob_spec(label_attributes=(0, 1)))
        both = (ds.attributes[:, 0] == 1) & (ds.attributes[:, 1] == 1)
        assert np.array_equal(ds.class_indices, both.astype(int))

    def test_single_bit_label_degenerates_to_that_bit(self):
        ds = generate(blob_spec(label_attributes=(2,)))
        assert np.array_equal(ds.class_indices, ds.attributes[:, 2].astype(int))

    def test_echo_coordinate_carries_the_margin_score(self):
        # No styles and no noise, so the echoed coordinate is exactly
        # label_echo * margin * (2 * conjunction - 1).
        ds = generate(
            blob_spec(
                n_styles=0, label_echo=0.9, margin=1.5, label_attributes=(0, 1)
            )
        )
        both = (ds.attributes[:, 0] == 1) & (ds.attributes[:, 1] == 1)
        expected = 0.9 * 1.5 * (2.0 * both - 1.0)
        assert_allclose(ds.instances[:, 4], expected, atol=0)

    def test_style_leak_spreads_one_factor_over_attribute_columns(self):
        ds = generate(blob_spec(style_leak=0.7, shift=2.0))
        residue = ds.instances[:, :4] - ds.attributes * 2.0
        # Every attribute column picks up the same per-row style value.
        for j in range(1, 4):
            assert_allclose(residue[:, j], residue[:, 0], atol=0)
        assert np.abs(residue).max() > 0

    def test_deterministic_in_seed(self):
        a = generate(blob_spec(noise=0.3, seed=9))
        b = generate(blob_spec(noise=0.3, seed=9))
        assert np.array_equal(a.instances, b.instances)
        assert np.array_equal(a.attributes, b.attributes)
        assert np.array_equal(a.labels, b.labels)

    def test_attribute_balance_on_stock_sizes(self):
        ds = generate(blob_spec(n_samples=6000, noise=0.4, seed=7))
        freq = ds.attributes.mean(axis=0)
        assert np.all(freq >= 0.3) and np.all(freq <= 0.7)

    def test_linear_probe_recovers_attributes(self):
        ds = generate(blob_spec(n_samples=2000, noise=0.1, seed=3))
        x = np.hstack([ds.instances, np.ones((2000, 1))])
        coef, *_ = np.linalg.lstsq(x, ds.attributes * 2.0 - 1.0, rcond=None)
        acc = np.mean(((x @ coef) > 0) == (ds.attributes == 1), axis=0)
        assert np.all(acc > 0.95)

    def test_spec_dict_round_trip(self):
        spec = blob_spec(label_echo=0.9, style_leak=0.2, label_attributes=(0, 1))
        assert spec_from_dict(spec_to_dict(spec)) == spec


class TestGlyphs:
    def glyph(self, **overrides):
        return generate(
            blob_spec(
                generator="glyphs",
                n_features=64,
                n_samples=40,
                seed=2,
                train_frac=0.5,
                dev_frac=0.25,
                **overrides,
            )
        )

    def test_blank_glyph_is_the_base_patch(self):
        ds = self.glyph()
        side = 8
        base = np.zeros((side, side))
        lo, hi = side // 3, side - side // 3
        base[lo:hi, lo:hi] = 0.35
        off = np.all(ds.attributes == 0, axis=1)
        assert off.any()
        assert_allclose(ds.instances[off][0], base.ravel(), atol=0)

    def test_single_stroke_composites_exactly(self):
        ds = self.glyph()
        strokes = glyph_strokes(64, 4)
        only_first = (ds.attributes[:, 0] == 1) & np.all(ds.attributes[:, 1:] == 0, axis=1)
        assert only_first.any()
        base = ds.instances[np.all(ds.attributes == 0, axis=1)][0]
        expected = np.maximum(base, 0.95 * strokes[0])
        assert_allclose(ds.instances[only_first][0], expected, atol=0)

    def test_pixels_stay_in_unit_range(self):
        ds = self.glyph(noise=0.5)
        assert ds.instances.min() >= 0.0
        assert ds.instances.max() <= 1.0

    def test_too_many_attributes_rejected(self):
        with pytest.raises(ConfigurationError):
            blob_spec(generator="glyphs", n_features=144, n_attributes=9).validate()


class TestSaveLoad:
    def test_round_trip_is_bit_exact(self, tmp_path):
        ds = generate(blob_spec(noise=0.25, seed=4, label_echo=0.9, label_attributes=(0, 1)))
        path = tmp_path / "ds.lcfc"
        save_dataset(path, ds)
        back = load_dataset(path)
        assert np.array_equal(back.instances, ds.instances)
        assert np.array_equal(back.attributes, ds.attributes)
        assert np.array_equal(back.labels, ds.labels)
        assert np.array_equal(back.split, ds.split)
        assert back.metadata == ds.metadata

    def test_identical_saves_are_byte_identical(self, tmp_path):
        ds = generate(blob_spec(noise=0.25, seed=4))
        p1, p2 = tmp_path / "a.lcfc", tmp_path / "b.lcfc"
        save_dataset(p1, ds)
        save_dataset(p2, ds)
        assert p1.read_bytes() == p2.read_bytes()

    def test_wrong_kind_rejected(self, tmp_path):
        path = tmp_path / "other.lcfc"
        write_container(path, kind="something-else", meta={}, arrays={})
        with pytest.raises(FormatError):
            load_dataset(path)

    def test_bad_magic_rejected(self, tmp_path):
        ds = generate(blob_spec())
        path = tmp_path / "ds.lcfc"
        save_dataset(path, ds)
        blob = bytearray(path.read_bytes())
        blob[:4] = b"NOPE"
        path.write_bytes(bytes(blob))
        with pytest.raises(FormatError):
            load_dataset(path)

    def test_truncation_rejected(self, tmp_path):
        ds = generate(blob_spec())
        path = tmp_path / "ds.lcfc"
        save_dataset(path, ds)
        blob = path.read_bytes()
        path.write_bytes(blob[: len(blob) // 2])
        with pytest.raises(FormatError):
            load_dataset(path)

    def test_future_version_rejected(self, tmp_path):
        ds = generate(blob_spec())
        path = tmp_path / "ds.lcfc"
        save_dataset(path, ds)
        blob = bytearray(path.read_bytes())
        blob[4] = 99  # little-endian version field
        path.write_bytes(bytes(blob))
        with pytest.raises(UnsupportedVersionError):
            load_dataset(path)


class TestAugmentationMetadataFields:
    def test_generated_metadata_names_the_recipe(self):
        spec = blob_spec(seed=12)
        ds = generate(spec)
        assert ds.metadata["generator"] == "blobs"
        assert ds.metadata["seed"] == 12
        assert spec_from_dict(ds.metadata["spec"]) == spec
