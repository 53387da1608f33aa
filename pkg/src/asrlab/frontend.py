"""Log-RASTA-PLP front end.

Pipeline per utterance::

    frame_signal -> trim_silence -> plp_spectrum (per frame)
      -> log -> rasta_filter (per band, along time) -> exp
      -> plp_cepstra -> assemble_utterance

All functions are pure; the same input and config always produce the same
floating point output.
"""

from __future__ import annotations

import csv
import functools
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import lfilter

from asrlab.errors import DimensionMismatch, SignalTooShort, SingularToeplitz

# Classic RASTA band-pass: 0.1 * (2 + z^-1 - z^-3 - 2 z^-4) / (1 - 0.98 z^-1)
RASTA_NUMERATOR = np.array([0.2, 0.1, 0.0, -0.1, -0.2])
RASTA_DENOMINATOR = np.array([1.0, -0.98])

ENERGY_FLOOR = 1e-20
LOG_FLOOR = 1e-12


@dataclass(frozen=True)
class FrontendConfig:
    frame_ms: float = 25.0
    overlap_ms: float = 10.0
    model_order: int = 12
    n_cepstra: int | None = None
    # None means "longest trimmed training utterance", resolved by the caller.
    target_frames: int | None = None
    trim_threshold_db: float = 40.0
    rasta_enabled: bool = True
    # Overrides frame_ms - overlap_ms when set (e.g. the conventional 10 ms hop).
    hop_ms: float | None = None

    def __post_init__(self):
        if self.n_cepstra is None:
            object.__setattr__(self, "n_cepstra", self.model_order + 1)
        if not 0 < self.overlap_ms < self.frame_ms:
            raise ValueError("need 0 < overlap_ms < frame_ms")
        if self.hop_ms is not None and self.hop_ms <= 0:
            raise ValueError("hop_ms must be positive")
        if self.model_order < 1:
            raise ValueError("model_order must be >= 1")
        if self.n_cepstra != self.model_order + 1:
            raise ValueError("n_cepstra must equal model_order + 1")
        if self.target_frames is not None and self.target_frames < 1:
            raise ValueError("target_frames must be >= 1")

    def frame_samples(self, rate):
        return _round_half_up(self.frame_ms * rate / 1000.0)

    def hop_samples(self, rate):
        hop_ms = self.hop_ms if self.hop_ms is not None else self.frame_ms - self.overlap_ms
        return max(1, _round_half_up(hop_ms * rate / 1000.0))


@dataclass
class AudioSignal:
    samples: np.ndarray
    sample_rate_hz: int = 16000

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError("AudioSignal expects mono samples")
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")


@dataclass
class FrameMatrix:
    frames: np.ndarray
    hop_samples: int
    frame_samples: int

    @property
    def n_frames(self):
        return self.frames.shape[0]


@dataclass
class UtteranceFeature:
    values: np.ndarray
    n_valid_frames: int
    n_cepstra: int = 13

    @property
    def target_frames(self):
        return self.values.size // self.n_cepstra

    def as_matrix(self):
        return self.values.reshape(self.target_frames, self.n_cepstra)


def _round_half_up(x):
    return int(math.floor(x + 0.5))


# ---------------------------------------------------------------- framing


def frame_signal(signal: AudioSignal, cfg: FrontendConfig) -> FrameMatrix:
    rate = signal.sample_rate_hz
    frame_len = cfg.frame_samples(rate)
    hop = cfg.hop_samples(rate)
    n = signal.samples.size
    if n < frame_len:
        raise SignalTooShort(f"{n} samples < one frame of {frame_len}")
    n_frames = (n - frame_len) // hop + 1
    starts = np.arange(n_frames) * hop
    idx = starts[:, None] + np.arange(frame_len)[None, :]
    frames = signal.samples[idx] * np.hamming(frame_len)
    return FrameMatrix(frames=frames, hop_samples=hop, frame_samples=frame_len)


def frame_energy_db(frames: np.ndarray) -> np.ndarray:
    return 10.0 * np.log10(np.sum(frames * frames, axis=1) + ENERGY_FLOOR)


def trim_silence(frames: FrameMatrix, cfg: FrontendConfig) -> FrameMatrix:
    """Drop leading/trailing frames more than ``trim_threshold_db`` below the loudest one."""
    energy = frame_energy_db(frames.frames)
    keep = energy >= energy.max() - cfg.trim_threshold_db
    # keep always contains argmax, so an all-quiet input collapses to that frame
    idx = np.flatnonzero(keep)
    first, last = idx[0], idx[-1]
    return FrameMatrix(
        frames=frames.frames[first:last + 1].copy(),
        hop_samples=frames.hop_samples,
        frame_samples=frames.frame_samples,
    )


# ------------------------------------------------------------ PLP spectrum


def hz_to_bark(f):
    return 6.0 * np.arcsinh(np.asarray(f, dtype=np.float64) / 600.0)


def bark_to_hz(z):
    return 600.0 * np.sinh(np.asarray(z, dtype=np.float64) / 6.0)


def equal_loudness(f):
    fsq = np.asarray(f, dtype=np.float64) ** 2
    return (fsq / (fsq + 1.6e5)) ** 2 * ((fsq + 1.44e6) / (fsq + 9.61e6))


def n_bark_bands(rate):
    return int(math.ceil(float(hz_to_bark(rate / 2.0)))) + 1


def _nfft(frame_len):
    return 1 << max(0, (frame_len - 1).bit_length())


@functools.lru_cache(maxsize=16)
def bark_filterbank(frame_len: int, rate: int) -> np.ndarray:
    """Critical-band integration matrix (n_bands x n_bins), equal-loudness folded in.

    Bands are contiguous one-step-wide intervals on the Bark axis; each DFT bin
    belongs to exactly one band, weighted by the equal-loudness curve at the
    bin's own frequency.
    """
    nfft = _nfft(frame_len)
    n_bins = nfft // 2 + 1
    n_bands = n_bark_bands(rate)
    step = float(hz_to_bark(rate / 2.0)) / (n_bands - 1)
    freqs = np.arange(n_bins) * rate / nfft
    band_of_bin = np.clip(np.floor(hz_to_bark(freqs) / step + 0.5).astype(int), 0, n_bands - 1)
    wts = np.zeros((n_bands, n_bins))
    wts[band_of_bin, np.arange(n_bins)] = equal_loudness(freqs)
    wts.setflags(write=False)
    return wts


def band_of_frequency(f, rate):
    """Index of the critical band that ``f`` Hz falls into."""
    n_bands = n_bark_bands(rate)
    step = float(hz_to_bark(rate / 2.0)) / (n_bands - 1)
    return min(n_bands - 1, int(math.floor(float(hz_to_bark(f)) / step + 0.5)))


def plp_spectra(frames: np.ndarray, rate: int) -> np.ndarray:
    """Bark-band energies for every row of an (n_frames, frame_len) matrix."""
    frames = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    frame_len = frames.shape[1]
    power = np.abs(np.fft.rfft(frames, n=_nfft(frame_len), axis=1)) ** 2
    return power @ bark_filterbank(frame_len, rate).T


def plp_spectrum(frame, rate: int) -> np.ndarray:
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim != 1 or frame.size == 0:
        raise ValueError("expected a non-empty 1-D frame")
    return plp_spectra(frame[None, :], rate)[0]


# ------------------------------------------------------------------ RASTA


def rasta_filter(log_band_trajectory) -> np.ndarray:
    """Causal RASTA band-pass along axis 0 (time), zero initial state."""
    x = np.asarray(log_band_trajectory, dtype=np.float64)
    return lfilter(RASTA_NUMERATOR, RASTA_DENOMINATOR, x, axis=0)


# ---------------------------------------------------------- LPC / cepstra


def levinson_durbin(r, order):
    """Solve the Toeplitz normal equations for every row of ``r``.

    ``r`` has shape (..., >= order + 1). Returns ``(a, err, k)`` with
    ``a[..., 0] == 1`` (prediction polynomial A(z) = sum a_i z^-i), the final
    prediction error variance, and the reflection coefficients.
    """
    r = np.asarray(r, dtype=np.float64)
    batch = r.shape[:-1]
    r = r.reshape(-1, r.shape[-1])
    m = r.shape[0]
    a = np.zeros((m, order + 1))
    a[:, 0] = 1.0
    k = np.zeros((m, order))
    err = r[:, 0].copy()
    scale = np.abs(r[:, 0])
    for i in range(1, order + 1):
        if np.any(~(err > 1e-14 * scale)) or np.any(scale == 0):
            raise SingularToeplitz(f"prediction error vanished at order {i - 1}")
        acc = r[:, i] + np.sum(a[:, 1:i] * r[:, i - 1:0:-1], axis=1)
        ki = -acc / err
        prev = a[:, 1:i].copy()
        a[:, 1:i] = prev + ki[:, None] * prev[:, ::-1]
        a[:, i] = ki
        k[:, i - 1] = ki
        err = err * (1.0 - ki * ki)
    if np.any(~(err > 1e-14 * scale)):
        raise SingularToeplitz(f"prediction error vanished at order {order}")
    return a.reshape(batch + (order + 1,)), err.reshape(batch), k.reshape(batch + (order,))


def lpc_to_cepstrum(a, gain, n_out):
    """Cepstrum of the all-pole model gain / A(z); c0 = ln(gain)."""
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    gain = np.atleast_1d(np.asarray(gain, dtype=np.float64))
    order = a.shape[1] - 1
    c = np.zeros((a.shape[0], n_out))
    c[:, 0] = np.log(gain)
    for n in range(1, n_out):
        acc = -a[:, n] if n <= order else np.zeros(a.shape[0])
        for kk in range(max(1, n - order), n):
            acc = acc - (kk / n) * c[:, kk] * a[:, n - kk]
        c[:, n] = acc
    return c


def compressed_autocorrelation(bark_energies, order):
    """Cube-root loudness compression, then inverse DFT of the (symmetric) band spectrum."""
    x = np.atleast_2d(np.asarray(bark_energies, dtype=np.float64))
    n_bands = x.shape[1]
    if n_bands < order + 1:
        raise DimensionMismatch(f"{n_bands} bands cannot support order {order}")
    if np.any(x < 0):
        raise ValueError("bark energies must be non-negative")
    loud = np.cbrt(x)
    return np.fft.irfft(loud, n=2 * (n_bands - 1), axis=1)[:, :order + 1]


def plp_cepstra(bark_energies, cfg: FrontendConfig) -> np.ndarray:
    """(n_frames, n_bands) band energies -> (n_frames, n_cepstra) cepstra."""
    r = compressed_autocorrelation(bark_energies, cfg.model_order)
    a, err, _ = levinson_durbin(r, cfg.model_order)
    return lpc_to_cepstrum(a, err, cfg.n_cepstra)


def assemble_utterance(cepstra, cfg: FrontendConfig, target_frames: int | None = None) -> UtteranceFeature:
    cep = np.atleast_2d(np.asarray(cepstra, dtype=np.float64))
    if cep.shape[0] < 1:
        raise ValueError("need at least one cepstral frame")
    if cep.shape[1] != cfg.n_cepstra:
        raise DimensionMismatch(f"expected {cfg.n_cepstra} cepstra per frame, got {cep.shape[1]}")
    T = target_frames if target_frames is not None else cfg.target_frames
    if T is None:
        raise ValueError("target_frames is unresolved")
    n_valid = min(cep.shape[0], T)
    out = np.zeros((T, cfg.n_cepstra))
    out[:n_valid] = cep[:n_valid]
    return UtteranceFeature(values=out.reshape(-1), n_valid_frames=n_valid, n_cepstra=cfg.n_cepstra)


# -------------------------------------------------------------- full chain


def utterance_cepstra(signal: AudioSignal, cfg: FrontendConfig) -> np.ndarray:
    """Every per-frame cepstral vector of the endpointed utterance (not yet padded)."""
    frames = trim_silence(frame_signal(signal, cfg), cfg)
    bands = plp_spectra(frames.frames, signal.sample_rate_hz)
    if cfg.rasta_enabled:
        bands = np.exp(rasta_filter(np.log(np.maximum(bands, LOG_FLOOR))))
    return plp_cepstra(bands, cfg)


def extract(signal: AudioSignal, cfg: FrontendConfig, target_frames: int | None = None) -> UtteranceFeature:
    return assemble_utterance(utterance_cepstra(signal, cfg), cfg, target_frames)


# ----------------------------------------------------------------- file io


def read_wav(path) -> AudioSignal:
    rate, data = wavfile.read(str(path))
    if data.ndim != 1:
        raise ValueError(f"{path}: only mono WAV is supported")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        samples = data.astype(np.float64) / 2147483648.0
    elif data.dtype == np.uint8:
        samples = (data.astype(np.float64) - 128.0) / 128.0
    elif np.issubdtype(data.dtype, np.floating):
        samples = data.astype(np.float64)
    else:
        raise ValueError(f"{path}: unsupported sample type {data.dtype}")
    return AudioSignal(samples=samples, sample_rate_hz=int(rate))


def write_wav(path, samples, rate=16000):
    """16-bit PCM mono."""
    pcm = np.round(np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0) * 32767.0).astype("<i2")
    wavfile.write(str(path), int(rate), pcm)


@dataclass
class FeatureTable:
    """Feature dump: utterance ids in order, with their fixed-length vectors."""

    ids: list = field(default_factory=list)
    features: list = field(default_factory=list)

    def matrix(self):
        return np.vstack([f.values for f in self.features])

    def by_id(self):
        return dict(zip(self.ids, self.features))


def write_features(path, table: FeatureTable):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        dim = table.features[0].values.size if table.features else 0
        w.writerow(["utterance_id", "n_valid_frames"] + [f"f{i}" for i in range(dim)])
        for uid, feat in zip(table.ids, table.features):
            w.writerow([uid, feat.n_valid_frames] + [repr(float(v)) for v in feat.values])


def read_features(path, n_cepstra=13) -> FeatureTable:
    table = FeatureTable()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:2] != ["utterance_id", "n_valid_frames"]:
            raise ValueError(f"{path}: not a feature dump")
        for row in reader:
            if not row:
                continue
            values = np.array([float(v) for v in row[2:]])
            table.ids.append(row[0])
            table.features.append(UtteranceFeature(values=values, n_valid_frames=int(row[1]), n_cepstra=n_cepstra))
    return table


def resolve_target_frames(cepstra_by_utt, cfg: FrontendConfig) -> int:
    if cfg.target_frames is not None:
        return cfg.target_frames
    return max(c.shape[0] for c in cepstra_by_utt)


def extract_corpus(manifest, cfg: FrontendConfig, base_dir=None) -> FeatureTable:
    """Features for every manifest record, in manifest order.

    With ``cfg.target_frames`` unset, T is the longest trimmed training
    utterance (all records if nothing is marked train).
    """
    base = Path(base_dir) if base_dir is not None else Path(".")
    cepstra = []
    for rec in manifest.records:
        cepstra.append(utterance_cepstra(read_wav(base / rec.audio_path), cfg))
    train = [c for c, rec in zip(cepstra, manifest.records) if rec.split == "train"]
    T = resolve_target_frames(train or cepstra, cfg)
    table = FeatureTable()
    for rec, cep in zip(manifest.records, cepstra):
        table.ids.append(rec.utterance_id)
        table.features.append(assemble_utterance(cep, cfg, T))
    return table
