"""Tests for the synthetic vowel corpus."""

import numpy as np
import pytest

from voxpath.errors import ConfigError, InvalidArgumentError
from voxpath.models import ClassLabel, VoiceParams
from voxpath.services.features import read_manifest
from voxpath.services.synth import (
    default_corpus_spec,
    gen_corpus,
    load_corpus_spec,
    parse_corpus_spec,
    synth_vowel,
)


def dominant_period(samples: np.ndarray, sample_rate: int, f0: float) -> int:
    """Autocorrelation peak within half to 1.5 expected periods."""
    x = samples[sample_rate // 10 :]
    x = x - x.mean()
    expected = sample_rate / f0
    lags = np.arange(int(0.5 * expected), int(1.5 * expected))
    r = [np.dot(x[:-lag], x[lag:]) / (x.size - lag) for lag in lags]
    return int(lags[int(np.argmax(r))])


class TestSynthVowel:
    """Tests for one synthetic clip."""

    def test_length(self):
        """3 s at 44.1 kHz is 132300 samples."""
        clip = synth_vowel(VoiceParams(), seed=1)
        assert len(clip) == 132300
        assert clip.sample_rate == 44100

    def test_peak_normalized(self):
        """Peaks sit at 0.9."""
        clip = synth_vowel(VoiceParams(jitter=0.02, shimmer=0.05, hnr_db=15.0, duration_s=0.5), seed=2)
        assert np.max(np.abs(clip.samples)) == pytest.approx(0.9)

    @pytest.mark.parametrize("f0", [150.0, 137.0])
    def test_clean_voice_is_periodic(self, f0):
        """Without perturbations the autocorrelation peaks at one period."""
        clip = synth_vowel(VoiceParams(f0=f0, duration_s=1.0), seed=3)
        period = dominant_period(clip.samples, 44100, f0)
        assert abs(period - 44100 / f0) <= 1.0

    def test_same_seed_same_samples(self):
        """Synthesis is reproducible."""
        params = VoiceParams(jitter=0.05, shimmer=0.1, hnr_db=10.0, duration_s=0.3)
        assert np.array_equal(synth_vowel(params, 5).samples, synth_vowel(params, 5).samples)
        assert not np.array_equal(synth_vowel(params, 5).samples, synth_vowel(params, 6).samples)

    def test_invalid_params(self):
        """f0 outside 60-400 Hz is rejected."""
        with pytest.raises(ValueError):
            VoiceParams(f0=30.0)
        with pytest.raises(ValueError):
            VoiceParams(jitter=0.5)

    def test_negative_seed(self):
        """Seeds must be non-negative."""
        with pytest.raises(InvalidArgumentError):
            synth_vowel(VoiceParams(duration_s=0.1), seed=-1)


class TestCorpusSpec:
    """Tests for corpus spec parsing."""

    def test_default_counts(self):
        """Built-in regimes hold 50/40/60/50 clips."""
        spec = default_corpus_spec()
        assert [spec.classes[label].count for label in ClassLabel] == [50, 40, 60, 50]

    def test_partial_override(self):
        """Class tables override only the keys they name."""
        spec = parse_corpus_spec({"duration_s": 0.5, "classes": {"neoplasm": {"count": 3}}})
        assert spec.classes[ClassLabel.NEOPLASM].count == 3
        assert spec.classes[ClassLabel.NEOPLASM].hnr_db == (2.0, 8.0)
        assert spec.classes[ClassLabel.NORMAL].count == 50
        assert spec.duration_s == 0.5

    def test_unknown_class(self):
        """Unknown class tables are config errors."""
        with pytest.raises(ConfigError, match="classes.flu"):
            parse_corpus_spec({"classes": {"flu": {"count": 1}}})

    def test_unknown_key(self):
        """Unknown keys are config errors naming the key."""
        with pytest.raises(ConfigError, match="unknown key"):
            parse_corpus_spec({"classes": {"normal": {"colour": "red"}}})

    def test_load_from_toml(self, tmp_path):
        """TOML files use the same schema."""
        path = tmp_path / "corpus.toml"
        path.write_text('seed = 3\n\n[classes.vocal_palsy]\ncount = 2\nhnr_db = [5.0, 6.0]\n')
        spec = load_corpus_spec(path)
        assert spec.seed == 3
        assert spec.classes[ClassLabel.VOCAL_PALSY].hnr_db == (5.0, 6.0)


class TestGenCorpus:
    """Tests for writing a corpus to disk."""

    SMALL = {
        "duration_s": 0.2,
        "classes": {
            "normal": {"count": 2},
            "neoplasm": {"count": 0},
            "phonotrauma": {"count": 1},
            "vocal_palsy": {"count": 1},
        },
    }

    def test_layout_and_manifest(self, tmp_path):
        """One WAV per clip under its label directory, listed in the manifest."""
        manifest = gen_corpus(parse_corpus_spec(self.SMALL), tmp_path, seed=7)
        entries = read_manifest(manifest)
        assert [e.path for e in entries] == [
            "normal/normal_000.wav",
            "normal/normal_001.wav",
            "phonotrauma/phonotrauma_000.wav",
            "vocal_palsy/vocal_palsy_000.wav",
        ]
        assert all((tmp_path / e.path).exists() for e in entries)
        assert not (tmp_path / "neoplasm").exists()

    def test_byte_identical_regeneration(self, tmp_path):
        """Same spec and seed write identical files."""
        spec = parse_corpus_spec(self.SMALL)
        first = gen_corpus(spec, tmp_path / "a", seed=7)
        second = gen_corpus(spec, tmp_path / "b", seed=7, jobs=2)
        assert first.read_bytes() == second.read_bytes()
        for entry in read_manifest(first):
            assert (tmp_path / "a" / entry.path).read_bytes() == (tmp_path / "b" / entry.path).read_bytes()

    def test_empty_corpus(self, tmp_path):
        """All counts zero leaves only a manifest."""
        spec = parse_corpus_spec(
            {"classes": {slug: {"count": 0} for slug in ("normal", "neoplasm", "phonotrauma", "vocal_palsy")}}
        )
        manifest = gen_corpus(spec, tmp_path / "empty", seed=1)
        assert read_manifest(manifest) == []

    def test_seed_required(self, tmp_path):
        """Without a seed in the call or the spec nothing is written."""
        with pytest.raises(InvalidArgumentError):
            gen_corpus(parse_corpus_spec(self.SMALL), tmp_path)
