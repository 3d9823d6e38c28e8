"""Signal front end: WAV decoding, resampling, MFCCs and smoothed deltas."""

import logging
import math
import struct
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import fft as sp_fft
from scipy import ndimage, signal

from voxpath.errors import ConfigError, DecodeError, InvalidArgumentError, StorageError
from voxpath.models import MfccConfig

logger = logging.getLogger(__name__)

# Slaney mel scale: linear below 1 kHz, logarithmic above
MEL_F_SP = 200.0 / 3.0
MEL_MIN_LOG_HZ = 1000.0
MEL_MIN_LOG_MEL = MEL_MIN_LOG_HZ / MEL_F_SP
MEL_LOGSTEP = math.log(6.4) / 27.0

# Polyphase anti-alias filter: half length in input-rate zero crossings
RESAMPLE_HALF_ZEROS = 32
RESAMPLE_KAISER_BETA = 8.6

PCM_FORMAT = 1
EXTENSIBLE_FORMAT = 0xFFFE
PCM16_SCALE = 32768.0


@dataclass(frozen=True, eq=False)
class AudioClip:
    """Mono float samples in [-1, 1) at a fixed rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self) -> None:
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise InvalidArgumentError(f"AudioClip needs 1-D samples, got shape {samples.shape}")
        if self.sample_rate <= 0:
            raise InvalidArgumentError(f"sample_rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return int(self.samples.size)

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True, eq=False)
class MfccMatrix:
    """Coefficients (rows) over frames (columns) plus the settings that made them."""

    values: np.ndarray
    config: MfccConfig

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[1] == 0:
            raise InvalidArgumentError(f"MfccMatrix needs (L, N>=1) values, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise InvalidArgumentError("MfccMatrix values must be finite")
        object.__setattr__(self, "values", values)

    @property
    def n_coeffs(self) -> int:
        return int(self.values.shape[0])

    @property
    def n_frames(self) -> int:
        return int(self.values.shape[1])


@dataclass(frozen=True, eq=False)
class SgFilter:
    """Savitzky-Golay weights applied as sum_m w[m] * f[n+m], m = -M..M."""

    half_width: int
    poly_order: int
    deriv_order: int
    weights: np.ndarray

    @property
    def width(self) -> int:
        return 2 * self.half_width + 1

    def apply_at(self, values: np.ndarray, n: int) -> float:
        """Evaluate at position n with edge-replicated boundaries."""
        values = np.asarray(values, dtype=np.float64)
        idx = np.clip(np.arange(n - self.half_width, n + self.half_width + 1), 0, values.size - 1)
        return float(np.dot(self.weights, values[idx]))


# WAV container


def decode_wav(data: bytes) -> AudioClip:
    """Decode 16-bit PCM RIFF/WAVE bytes; stereo is averaged to mono."""
    if len(data) < 12:
        raise DecodeError(f"RIFF header: need 12 bytes, got {len(data)}")
    riff, _, wave = struct.unpack("<4sI4s", data[:12])
    if riff != b"RIFF" or wave != b"WAVE":
        raise DecodeError("RIFF header: not a RIFF/WAVE container")

    fmt = None
    pcm = None
    pos = 12
    while pos + 8 <= len(data):
        chunk_id, chunk_size = struct.unpack("<4sI", data[pos : pos + 8])
        name = chunk_id.decode("ascii", errors="replace").strip()
        start = pos + 8
        end = start + chunk_size
        if end > len(data):
            raise DecodeError(
                f"{name} chunk: declares {chunk_size} bytes but only {len(data) - start} remain"
            )
        body = data[start:end]
        if chunk_id == b"fmt ":
            fmt = _parse_fmt(body)
        elif chunk_id == b"data":
            pcm = body
        # chunks are word aligned
        pos = end + (chunk_size & 1)

    if fmt is None:
        raise DecodeError("fmt chunk: missing")
    if pcm is None:
        raise DecodeError("data chunk: missing")

    channels, sample_rate = fmt
    frame_bytes = 2 * channels
    if len(pcm) % frame_bytes:
        raise DecodeError(f"data chunk: {len(pcm)} bytes is not a whole number of {frame_bytes}-byte frames")
    if not pcm:
        raise DecodeError("data chunk: holds no samples")

    samples = np.frombuffer(pcm, dtype="<i2").astype(np.float64) / PCM16_SCALE
    if channels == 2:
        samples = samples.reshape(-1, 2).mean(axis=1)
    return AudioClip(samples=samples, sample_rate=sample_rate)


def _parse_fmt(body: bytes) -> tuple[int, int]:
    if len(body) < 16:
        raise DecodeError(f"fmt chunk: need 16 bytes, got {len(body)}")
    audio_format, channels, sample_rate, _, _, bits = struct.unpack("<HHIIHH", body[:16])
    if audio_format == EXTENSIBLE_FORMAT and len(body) >= 26:
        # first two bytes of the subformat GUID carry the codec
        (audio_format,) = struct.unpack("<H", body[24:26])
    if audio_format != PCM_FORMAT:
        raise DecodeError(f"fmt chunk: unsupported codec 0x{audio_format:04x}, only PCM is read")
    if bits != 16:
        raise DecodeError(f"fmt chunk: unsupported bit depth {bits}, only 16-bit is read")
    if channels not in (1, 2):
        raise DecodeError(f"fmt chunk: unsupported channel count {channels}")
    if sample_rate == 0:
        raise DecodeError("fmt chunk: sample rate is zero")
    return channels, sample_rate


def encode_wav(clip: AudioClip) -> bytes:
    """Encode a clip as mono 16-bit PCM with a canonical 44-byte header."""
    ints = np.clip(np.round(clip.samples * PCM16_SCALE), -32768, 32767).astype("<i2")
    payload = ints.tobytes()
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF",
        36 + len(payload),
        b"WAVE",
        b"fmt ",
        16,
        PCM_FORMAT,
        1,
        clip.sample_rate,
        clip.sample_rate * 2,
        2,
        16,
        b"data",
        len(payload),
    )
    return header + payload


def read_wav(path: Union[str, Path]) -> AudioClip:
    """Read and decode a WAV file."""
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise StorageError(f"cannot read {path}: {e}", path=str(path))
    try:
        return decode_wav(data)
    except DecodeError as e:
        raise DecodeError(f"{path}: {e}")


def write_wav(clip: AudioClip, path: Union[str, Path]) -> None:
    """Encode a clip and write it, creating parent directories."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(encode_wav(clip))
    except OSError as e:
        raise StorageError(f"cannot write {path}: {e}", path=str(path))


# Resampling


def resample(clip: AudioClip, target_rate: int) -> AudioClip:
    """Band-limited rational resampling to target_rate.

    The output holds round(n * target / source) samples. Equal rates return
    a copy of the input.
    """
    if target_rate <= 0:
        raise InvalidArgumentError(f"target_rate must be positive, got {target_rate}")
    if len(clip) == 0:
        raise InvalidArgumentError("cannot resample an empty clip")
    source_rate = clip.sample_rate
    if target_rate == source_rate:
        return AudioClip(samples=clip.samples.copy(), sample_rate=target_rate)

    g = math.gcd(target_rate, source_rate)
    up, down = target_rate // g, source_rate // g
    taps = _resample_taps(max(up, down))
    out = signal.resample_poly(clip.samples, up, down, window=taps)

    n_out = int(math.floor(len(clip) * target_rate / source_rate + 0.5))
    if out.size >= n_out:
        out = out[:n_out]
    else:
        out = np.pad(out, (0, n_out - out.size))
    logger.debug(f"Resampled {len(clip)} samples {source_rate}->{target_rate} Hz ({up}/{down})")
    return AudioClip(samples=out, sample_rate=target_rate)


@lru_cache(maxsize=16)
def _resample_taps(max_factor: int) -> np.ndarray:
    half = RESAMPLE_HALF_ZEROS * max_factor
    taps = signal.firwin(2 * half + 1, 1.0 / max_factor, window=("kaiser", RESAMPLE_KAISER_BETA))
    taps.setflags(write=False)
    return taps


# Framing and spectra


def frame_signal(clip: AudioClip, cfg: MfccConfig) -> np.ndarray:
    """Centered, reflect-padded, Hann-windowed frames of shape (N, n_fft).

    N = 1 + floor(len / hop).
    """
    if len(clip) == 0:
        raise InvalidArgumentError("cannot frame an empty clip")
    pad = cfg.n_fft // 2
    padded = np.pad(clip.samples, pad, mode="reflect")
    n_frames = 1 + len(clip) // cfg.hop
    windows = sliding_window_view(padded, cfg.n_fft)[:: cfg.hop][:n_frames]
    return windows * _hann(cfg.n_fft)


@lru_cache(maxsize=8)
def _hann(n_fft: int) -> np.ndarray:
    window = signal.get_window("hann", n_fft, fftbins=True)
    window.setflags(write=False)
    return window


def power_spectrum(frame: np.ndarray) -> np.ndarray:
    """|rfft|^2 along the last axis (n_fft/2 + 1 bins)."""
    return np.abs(np.fft.rfft(np.asarray(frame, dtype=np.float64), axis=-1)) ** 2


# Mel scale


def hz_to_mel(freq: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """Slaney mel of a frequency in Hz (scalar or array)."""
    f = np.asarray(freq, dtype=np.float64)
    if np.any(f < 0):
        raise InvalidArgumentError("frequencies must be non-negative")
    mels = np.where(
        f >= MEL_MIN_LOG_HZ,
        MEL_MIN_LOG_MEL + np.log(np.maximum(f, MEL_MIN_LOG_HZ) / MEL_MIN_LOG_HZ) / MEL_LOGSTEP,
        f / MEL_F_SP,
    )
    return float(mels) if mels.ndim == 0 else mels


def mel_to_hz(mel: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """Inverse of hz_to_mel."""
    m = np.asarray(mel, dtype=np.float64)
    if np.any(m < 0):
        raise InvalidArgumentError("mel values must be non-negative")
    freqs = np.where(
        m >= MEL_MIN_LOG_MEL,
        MEL_MIN_LOG_HZ * np.exp(MEL_LOGSTEP * (m - MEL_MIN_LOG_MEL)),
        MEL_F_SP * m,
    )
    return float(freqs) if freqs.ndim == 0 else freqs


def mel_edges(cfg: MfccConfig) -> np.ndarray:
    """n_mels + 2 band edges in Hz, equally spaced in mel."""
    lo, hi = hz_to_mel(cfg.fmin), hz_to_mel(cfg.resolved_fmax)
    return np.asarray(mel_to_hz(np.linspace(lo, hi, cfg.n_mels + 2)))


def mel_centers(cfg: MfccConfig) -> np.ndarray:
    """Center frequency in Hz of each triangular filter."""
    return mel_edges(cfg)[1:-1]


@lru_cache(maxsize=16)
def mel_filterbank(cfg: MfccConfig) -> np.ndarray:
    """Area-normalized triangular filters, shape (n_mels, n_fft/2 + 1). Read-only."""
    fft_freqs = np.linspace(0.0, cfg.sample_rate / 2.0, cfg.n_bins)
    edges = mel_edges(cfg)
    widths = np.diff(edges)
    ramps = edges[:, None] - fft_freqs[None, :]
    lower = -ramps[:-2] / widths[:-1, None]
    upper = ramps[2:] / widths[1:, None]
    weights = np.maximum(0.0, np.minimum(lower, upper))
    weights *= (2.0 / (edges[2:] - edges[:-2]))[:, None]

    empty = np.flatnonzero(weights.max(axis=1) <= 0.0)
    if empty.size:
        raise ConfigError(
            f"dsp: n_mels={cfg.n_mels} is too many for n_fft={cfg.n_fft}; "
            f"filters {empty[:5].tolist()} cover no FFT bin"
        )
    weights.setflags(write=False)
    return weights


def dct_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II basis, rows are basis vectors."""
    if n <= 0:
        raise InvalidArgumentError(f"DCT size must be positive, got {n}")
    return sp_fft.dct(np.eye(n), type=2, norm="ortho", axis=0)


def log_mel_spectrogram(clip: AudioClip, cfg: MfccConfig) -> np.ndarray:
    """Floored natural-log mel energies, shape (n_mels, N)."""
    if clip.sample_rate != cfg.sample_rate:
        raise InvalidArgumentError(
            f"clip is at {clip.sample_rate} Hz but the config expects {cfg.sample_rate} Hz"
        )
    power = power_spectrum(frame_signal(clip, cfg))
    mel = power @ mel_filterbank(cfg).T
    return np.log(np.maximum(mel, cfg.log_floor)).T


def mfcc(clip: AudioClip, cfg: MfccConfig) -> MfccMatrix:
    """First n_mfcc orthonormal DCT-II coefficients of the log-mel spectrogram."""
    log_mel = log_mel_spectrogram(clip, cfg)
    coeffs = sp_fft.dct(log_mel, type=2, norm="ortho", axis=0)[: cfg.n_mfcc]
    return MfccMatrix(values=coeffs, config=cfg)


# Savitzky-Golay derivatives


def sg_filter(half_width: int, poly_order: int, deriv_order: int) -> SgFilter:
    """Least-squares polynomial filter weights for window 2M+1."""
    if half_width < 1:
        raise InvalidArgumentError(f"half_width must be >= 1, got {half_width}")
    if deriv_order < 0 or poly_order < deriv_order:
        raise InvalidArgumentError(
            f"need 0 <= deriv_order <= poly_order, got deriv={deriv_order}, poly={poly_order}"
        )
    if poly_order >= 2 * half_width + 1:
        raise InvalidArgumentError(
            f"poly_order={poly_order} must be below the window width {2 * half_width + 1}"
        )
    weights = signal.savgol_coeffs(2 * half_width + 1, poly_order, deriv=deriv_order, use="dot")
    return SgFilter(half_width, poly_order, deriv_order, np.asarray(weights, dtype=np.float64))


def delta(mat: MfccMatrix, width: int = 9, poly_order: int = 1) -> MfccMatrix:
    """First time-derivative of every coefficient row, edges replicated."""
    if width < 3 or width % 2 == 0:
        raise InvalidArgumentError(f"delta width must be odd and >= 3, got {width}")
    sg = sg_filter(width // 2, poly_order, 1)
    values = ndimage.correlate1d(mat.values, sg.weights, axis=-1, mode="nearest")
    return MfccMatrix(values=values, config=mat.config)


def delta_delta(mat: MfccMatrix, width: int = 9, poly_order: int = 1) -> MfccMatrix:
    """Delta applied twice."""
    return delta(delta(mat, width, poly_order), width, poly_order)
