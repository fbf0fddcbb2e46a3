import numpy as np
import pytest

from hedonic_fusion import _kernels
from hedonic_fusion.feature_store import load_dataset
from hedonic_fusion.synthetic import GenConfig, generate


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # JIT compile once so timed acceptance sections measure compute, not numba
    _kernels.warmup()


@pytest.fixture(scope="session")
def small_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth-small")
    generate(
        GenConfig(n=240, cnn_categories=12, panoptic_categories=8, n_clusters=8, seed=42),
        out,
    )
    return out


@pytest.fixture(scope="session")
def small_dataset(small_dir):
    return load_dataset(small_dir / "manifest.json", small_dir)


@pytest.fixture(scope="session")
def medium_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth-medium")
    generate(
        GenConfig(n=600, cnn_categories=16, panoptic_categories=10, n_clusters=12, seed=7),
        out,
    )
    return out


@pytest.fixture(scope="session")
def medium_dataset(medium_dir):
    return load_dataset(medium_dir / "manifest.json", medium_dir)


@pytest.fixture(scope="session")
def full_dir_seed0(tmp_path_factory):
    """Acceptance-scale dataset (defaults: n=6887, signal 0.15), seed 0."""
    out = tmp_path_factory.mktemp("synth-full-0")
    generate(GenConfig(seed=0), out)
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(0)
