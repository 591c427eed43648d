def test_imports():
    """Test that the main package can be imported."""
    import marginclip

    assert marginclip is not None
    assert marginclip.__version__


def test_fixtures_available(temp_dir, dense_net, conv_net, tiny_dataset, small_config):
    """Test that all shared fixtures are available and working."""
    assert temp_dir.exists()
    assert temp_dir.is_dir()

    assert dense_net.bound_widths == [6, 5]
    assert conv_net.bound_widths == [3, 5]

    assert len(tiny_dataset) == 60
    assert tiny_dataset.image_shape == (8, 8, 3)

    assert small_config.output_dir() == temp_dir / "run"


def test_pytest_markers():
    """Test that pytest is configured correctly."""
    import pytest

    assert pytest.__version__ is not None
