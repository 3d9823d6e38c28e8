"""Pytest fixtures and configuration."""

import os

import numpy as np
import pytest

# Set test environment variables before importing voxpath modules
os.environ["VOXPATH_AUDIT_ENABLED"] = "false"
os.environ["VOXPATH_AUDIT_JSONL_PATH"] = "./test_data/test_runs.jsonl"
os.environ["VOXPATH_LOG_LEVEL"] = "WARNING"
os.environ["VOXPATH_JOBS"] = "1"

from voxpath.models import FeatureConfig, MfccConfig  # noqa: E402
from voxpath.services.dsp import AudioClip  # noqa: E402
from voxpath.services.features import FeatureTable  # noqa: E402


def make_separable_table(per_class: int = 16, d: int = 2, seed: int = 0) -> FeatureTable:
    """Four tight clusters, 5 units apart along every feature."""
    rng = np.random.default_rng(seed)
    y = np.repeat(np.arange(4), per_class)
    X = 5.0 * y[:, None] + 0.3 * rng.standard_normal((y.size, 3 * d))
    return FeatureTable(
        clip_ids=[f"clip_{i:03d}.wav" for i in range(y.size)],
        X=X,
        y=y,
        d=d,
        mfcc_config=MfccConfig(n_mfcc=d),
    )


@pytest.fixture
def rng():
    """Seeded generator for test data."""
    return np.random.default_rng(1234)


@pytest.fixture
def sine_clip():
    """One second of a 1 kHz sine at 44.1 kHz."""
    t = np.arange(44100) / 44100.0
    return AudioClip(samples=0.5 * np.sin(2 * np.pi * 1000.0 * t), sample_rate=44100)


@pytest.fixture
def small_mfcc_config():
    """Cheap front end for 8 kHz clips."""
    return MfccConfig(sample_rate=8000, n_fft=256, hop=64, n_mels=20, n_mfcc=10)


@pytest.fixture
def feature_config():
    """Default delta and block layout."""
    return FeatureConfig()


@pytest.fixture
def separable_table():
    """4 classes x 16 rows, d=2, trivially separable."""
    return make_separable_table()
