import struct

import numpy as np
import pytest

from marginclip.errors import ArtifactFormatError, ArtifactMissingError
from marginclip.nn import ClipBounds, forward, forward_bounded
from marginclip.serialization import (
    CHECKPOINT_MAGIC,
    decode_checkpoint,
    decode_dataset,
    encode_checkpoint,
    encode_dataset,
    load_bounds,
    load_checkpoint,
    load_dataset,
    save_bounds,
    save_checkpoint,
    save_dataset,
)


def learned_bounds(net, rng):
    upper = [rng.uniform(0.1, 2.0, w).astype(np.float32) for w in net.bound_widths]
    upper[0][0] = np.inf
    return ClipBounds(upper)


class TestCheckpoint:
    """Test checkpoint files."""

    def test_reloaded_network_computes_identical_logits(self, conv_net, conv_dataset, temp_dir, rng):
        bounds = learned_bounds(conv_net, rng)
        path = save_checkpoint(temp_dir / "model.mmck", conv_net, bounds)
        loaded, loaded_bounds = load_checkpoint(path)
        x = conv_dataset.images
        assert np.array_equal(forward(loaded, x), forward(conv_net, x))
        assert np.array_equal(
            forward_bounded(loaded, loaded_bounds, x), forward_bounded(conv_net, bounds, x)
        )
        assert np.isposinf(loaded_bounds.upper[0][0])

    def test_checkpoint_without_bounds(self, dense_net):
        net, bounds = decode_checkpoint(encode_checkpoint(dense_net))
        assert bounds is None
        assert net.bound_widths == dense_net.bound_widths

    def test_leaky_network_keeps_slope_and_lower_bounds(self, leaky_dense_net):
        bounds = ClipBounds.constant(leaky_dense_net, 0.75)
        net, loaded = decode_checkpoint(encode_checkpoint(leaky_dense_net, bounds))
        assert net.leaky
        assert loaded.two_sided
        assert all(np.all(lo == -0.75) for lo in loaded.lower)

    def test_encoding_is_deterministic(self, conv_net):
        assert encode_checkpoint(conv_net) == encode_checkpoint(conv_net.copy())

    def test_bad_magic_raises(self, dense_net):
        data = b"XXXX" + encode_checkpoint(dense_net)[4:]
        with pytest.raises(ArtifactFormatError):
            decode_checkpoint(data)

    def test_unknown_version_raises(self, dense_net):
        data = CHECKPOINT_MAGIC + struct.pack("<I", 99) + encode_checkpoint(dense_net)[8:]
        with pytest.raises(ArtifactFormatError):
            decode_checkpoint(data)

    @pytest.mark.parametrize("cut", [3, 10, 40])
    def test_truncated_file_raises(self, dense_net, cut):
        data = encode_checkpoint(dense_net)
        with pytest.raises(ArtifactFormatError):
            decode_checkpoint(data[:-cut])

    def test_missing_file_raises(self, temp_dir):
        with pytest.raises(ArtifactMissingError):
            load_checkpoint(temp_dir / "absent.mmck")


class TestBoundsFile:
    """Test standalone bounds files and bounds in checkpoints."""

    def test_bare_bounds_file(self, conv_net, temp_dir, rng):
        bounds = learned_bounds(conv_net, rng)
        loaded = load_bounds(save_bounds(temp_dir / "bounds.zbnd", bounds))
        assert all(np.array_equal(a, b) for a, b in zip(loaded.upper, bounds.upper))
        assert loaded.lower is None

    def test_bounds_from_checkpoint_trailer(self, conv_net, temp_dir):
        bounds = ClipBounds.constant(conv_net, 0.5)
        path = save_checkpoint(temp_dir / "model.mmck", conv_net, bounds)
        assert all(np.all(u == 0.5) for u in load_bounds(path).upper)

    def test_checkpoint_without_trailer_has_no_bounds(self, conv_net, temp_dir):
        path = save_checkpoint(temp_dir / "model.mmck", conv_net)
        with pytest.raises(ArtifactMissingError):
            load_bounds(path)

    def test_missing_bounds_file_raises(self, temp_dir):
        with pytest.raises(ArtifactMissingError):
            load_bounds(temp_dir / "bounds.zbnd")


class TestDatasetFile:
    """Test dataset files."""

    def test_round_trip_keeps_images_and_labels(self, tiny_dataset, temp_dir):
        loaded = load_dataset(save_dataset(temp_dir / "data.mmds", tiny_dataset))
        assert np.array_equal(loaded.images, tiny_dataset.images)
        assert np.array_equal(loaded.labels, tiny_dataset.labels)
        assert loaded.class_count == 3
        assert not loaded.is_poisoned

    def test_poison_block_is_kept(self, tiny_dataset):
        poisoned = tiny_dataset.subset(np.arange(10))
        poisoned.poison_indices = np.array([1, 4])
        poisoned.intended = np.array([2, 0])
        loaded = decode_dataset(encode_dataset(poisoned))
        assert loaded.poison_indices.tolist() == [1, 4]
        assert loaded.intended.tolist() == [2, 0]

    def test_truncated_dataset_raises(self, tiny_dataset):
        with pytest.raises(ArtifactFormatError):
            decode_dataset(encode_dataset(tiny_dataset)[:-5])

    def test_missing_dataset_raises(self, temp_dir):
        with pytest.raises(ArtifactMissingError):
            load_dataset(temp_dir / "absent.mmds")
