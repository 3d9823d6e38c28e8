"""Synthetic sustained-vowel corpus standing in for clinical recordings.

A jittered, shimmered pulse train is shaped into a glottal waveform, passed
through cascaded formant resonators and mixed with white noise at the
requested harmonics-to-noise ratio. The per-class regimes are caricatures
chosen to be separable, not clinical models.
"""

import logging
import math
from functools import partial
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np
from pydantic import ValidationError
from scipy import signal

from voxpath.config import describe_validation_error, read_toml
from voxpath.errors import ConfigError, InvalidArgumentError, StorageError
from voxpath.models import ClassLabel, ClassRegime, CorpusSpec, ManifestEntry, VoiceParams
from voxpath.services.dsp import AudioClip, write_wav
from voxpath.services.features import write_manifest
from voxpath.services.workers import parallel_map

logger = logging.getLogger(__name__)

PEAK_LEVEL = 0.9
# Double pole of the glottal pulse shaping filter
GLOTTAL_POLE = 0.97
MANIFEST_NAME = "manifest.txt"

DEFAULT_REGIMES: dict[ClassLabel, dict[str, Any]] = {
    ClassLabel.NORMAL: {
        "count": 50,
        "f0": (100.0, 220.0),
        "jitter": (0.002, 0.008),
        "shimmer": (0.01, 0.04),
        "hnr_db": (24.0, 32.0),
        "bandwidth_scale": 1.0,
    },
    ClassLabel.NEOPLASM: {
        "count": 40,
        "f0": (90.0, 170.0),
        "jitter": (0.02, 0.05),
        "shimmer": (0.06, 0.12),
        "hnr_db": (2.0, 8.0),
        "bandwidth_scale": 1.3,
    },
    ClassLabel.PHONOTRAUMA: {
        "count": 60,
        "f0": (150.0, 260.0),
        "jitter": (0.008, 0.02),
        "shimmer": (0.12, 0.2),
        "hnr_db": (12.0, 18.0),
        "bandwidth_scale": 1.0,
    },
    ClassLabel.VOCAL_PALSY: {
        "count": 50,
        "f0": (110.0, 230.0),
        "jitter": (0.06, 0.12),
        "shimmer": (0.03, 0.07),
        "hnr_db": (6.0, 12.0),
        "bandwidth_scale": 1.8,
    },
}


def default_corpus_spec(seed: Optional[int] = None) -> CorpusSpec:
    """Four classes, 50/40/60/50 clips of 3 s at 44.1 kHz."""
    return CorpusSpec(seed=seed, classes={label: ClassRegime(**r) for label, r in DEFAULT_REGIMES.items()})


def parse_corpus_spec(data: dict, source: str = "<corpus spec>") -> CorpusSpec:
    """Validate a mapping; each [classes.<label>] table overrides that class's defaults."""
    data = dict(data)
    overrides = data.pop("classes", {}) or {}
    if not isinstance(overrides, dict):
        raise ConfigError(f"{source}: classes must be a table")
    classes = {}
    for label, regime in DEFAULT_REGIMES.items():
        classes[label.slug] = dict(regime)
    for key, table in overrides.items():
        if key not in classes:
            raise ConfigError(f"{source}: classes.{key}: unknown class label")
        if not isinstance(table, dict):
            raise ConfigError(f"{source}: classes.{key} must be a table")
        classes[key].update(table)
    try:
        return CorpusSpec.model_validate({**data, "classes": classes})
    except ValidationError as e:
        raise ConfigError(f"{source}: {describe_validation_error(e)}")


def load_corpus_spec(path: Union[str, Path]) -> CorpusSpec:
    return parse_corpus_spec(read_toml(path), source=str(path))


def _resonator(freq: float, bandwidth: float, sample_rate: int) -> tuple[np.ndarray, np.ndarray]:
    """Two-pole resonator with unity gain at DC."""
    r = math.exp(-math.pi * bandwidth / sample_rate)
    c = 2.0 * r * math.cos(2.0 * math.pi * freq / sample_rate)
    a = np.array([1.0, -c, r * r])
    return np.array([a.sum()]), a


def _pulse_train(p: VoiceParams, rng: np.random.Generator, n: int) -> np.ndarray:
    period = p.sample_rate / p.f0
    pulses = np.zeros(n)
    pos = 0.0
    while pos < n:
        amplitude = max(0.0, 1.0 + p.shimmer * rng.standard_normal())
        pulses[min(int(round(pos)), n - 1)] += amplitude
        pos += max(period * (1.0 + p.jitter * rng.standard_normal()), 0.5 * period)
    return pulses


def synth_vowel(p: VoiceParams, seed: int) -> AudioClip:
    """Source-filter vowel peak-normalized to 0.9; same (p, seed) gives the same samples."""
    if seed < 0:
        raise InvalidArgumentError(f"seed must be non-negative, got {seed}")
    n = int(round(p.duration_s * p.sample_rate))
    if n == 0:
        raise InvalidArgumentError(f"duration {p.duration_s} s is shorter than one sample")
    rng = np.random.default_rng(seed)

    source = _pulse_train(p, rng, n)
    # glottal pulse shape, then lip radiation
    source = signal.lfilter([1.0], [1.0, -2.0 * GLOTTAL_POLE, GLOTTAL_POLE**2], source)
    voiced = signal.lfilter([1.0, -1.0], [1.0], source)
    for freq, bandwidth in p.formants:
        b, a = _resonator(freq, bandwidth, p.sample_rate)
        voiced = signal.lfilter(b, a, voiced)

    noise = rng.standard_normal(n)
    if math.isfinite(p.hnr_db):
        power = float(np.mean(voiced**2))
        voiced = voiced + noise * math.sqrt(power / 10.0 ** (p.hnr_db / 10.0))

    peak = float(np.max(np.abs(voiced)))
    if peak > 0:
        voiced = voiced * (PEAK_LEVEL / peak)
    return AudioClip(samples=voiced, sample_rate=p.sample_rate)


def draw_voice_params(regime: ClassRegime, spec: CorpusSpec, rng: np.random.Generator) -> VoiceParams:
    """Uniform draw of f0, jitter, shimmer and HNR inside a class regime."""
    return VoiceParams(
        f0=float(rng.uniform(*regime.f0)),
        jitter=float(rng.uniform(*regime.jitter)),
        shimmer=float(rng.uniform(*regime.shimmer)),
        hnr_db=float(rng.uniform(*regime.hnr_db)),
        formants=tuple((f, b * regime.bandwidth_scale) for f, b in spec.formants),
        duration_s=spec.duration_s,
        sample_rate=spec.sample_rate,
    )


def _render(task: tuple[str, VoiceParams, int], out_dir: Path) -> str:
    rel_path, params, seed = task
    write_wav(synth_vowel(params, seed), out_dir / rel_path)
    return rel_path


def gen_corpus(spec: CorpusSpec, out_dir: Union[str, Path], seed: Optional[int] = None, jobs: int = 1) -> Path:
    """Write <label>/<label>_NNN.wav files and a manifest; returns the manifest path."""
    seed = seed if seed is not None else spec.seed
    if seed is None:
        raise InvalidArgumentError("a corpus seed is required")
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise StorageError(f"cannot create {out_dir}: {e}", path=str(out_dir))

    tasks = []
    entries = []
    for label in ClassLabel:
        regime = spec.classes.get(label)
        if regime is None:
            continue
        for i in range(regime.count):
            rng = np.random.default_rng([seed, int(label), i])
            params = draw_voice_params(regime, spec, rng)
            rel_path = f"{label.slug}/{label.slug}_{i:03d}.wav"
            tasks.append((rel_path, params, int(rng.integers(0, 2**32))))
            entries.append(ManifestEntry(path=rel_path, label=label))

    logger.info(f"Synthesizing {len(tasks)} clips into {out_dir} (seed={seed})")
    parallel_map(partial(_render, out_dir=out_dir), tasks, jobs)
    manifest = out_dir / MANIFEST_NAME
    write_manifest(entries, manifest, header=f"voxpath synthetic corpus, seed {seed}")
    return manifest
