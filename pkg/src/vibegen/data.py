"""Loading the vibration record and sampling raw 1024-sample windows from it.

Nothing in here rescales, detrends or filters the signal: the generator learns
raw amplitudes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DataError, DatasetTooSmallError, ParseError

WINDOW = 1024
SAMPLE_RATE = 1024.0
RAW_FORMATS = {"f32le": "<f4", "f64le": "<f8"}
EXTENSIONS = {".csv": "csv", ".f32": "f32le", ".f64": "f64le"}

# Synthetic stand-in for a joint accelerometer record: (frequency Hz, amplitude)
# partials with seeded random phases, a slow amplitude envelope, and white noise.
SYNTH_PARTIALS = ((5.9, 0.12), (14.3, 0.08), (27.6, 0.05), (52.1, 0.035), (103.7, 0.02))
SYNTH_ENVELOPE_HZ = 0.07
SYNTH_ENVELOPE_DEPTH = 0.3
SYNTH_NOISE_STD = 0.03


@dataclass(frozen=True)
class SignalDataset:
    samples: np.ndarray
    sample_rate: float = SAMPLE_RATE
    path: str | None = None

    def __post_init__(self):
        if self.samples.ndim != 1:
            raise DataError("a signal dataset is a single channel (1-D array)")
        if len(self.samples) < WINDOW:
            raise DatasetTooSmallError(f"record has {len(self.samples)} samples; need at least {WINDOW}")
        bad = np.flatnonzero(~np.isfinite(self.samples))
        if bad.size:
            raise DataError(f"non-finite sample at index {int(bad[0])}")
        self.samples.setflags(write=False)

    def __len__(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class WindowBatch:
    tensor: np.ndarray  # (B, 1, WINDOW)
    offsets: np.ndarray


def _parse_csv(path: Path) -> np.ndarray:
    values = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            try:
                values.append(float(text))
            except ValueError:
                if lineno == 1:
                    continue  # header
                raise ParseError(f"not a number: {text[:40]!r}", lineno) from None
    return np.asarray(values, dtype=np.float64)


def load_signal(path, fmt: str = "auto", sample_rate: float = SAMPLE_RATE) -> SignalDataset:
    """Read a single-channel record from CSV (one value per line) or raw little-endian floats."""
    path = Path(path)
    if fmt == "auto":
        try:
            fmt = EXTENSIONS[path.suffix.lower()]
        except KeyError:
            raise ConfigurationError(
                f"cannot infer format from extension {path.suffix!r}; use one of {sorted(EXTENSIONS)}"
            ) from None
    if fmt == "csv":
        samples = _parse_csv(path)
    elif fmt in RAW_FORMATS:
        dtype = np.dtype(RAW_FORMATS[fmt])
        raw = path.read_bytes()
        if len(raw) % dtype.itemsize:
            raise DataError(f"{path}: size {len(raw)} is not a multiple of {dtype.itemsize} bytes")
        samples = np.frombuffer(raw, dtype=dtype).astype(dtype.newbyteorder("="))
    else:
        raise ConfigurationError(f"unknown signal format {fmt!r}")
    return SignalDataset(samples, sample_rate, str(path))


def write_signal(samples, path, fmt: str = "auto") -> Path:
    path = Path(path)
    if fmt == "auto":
        fmt = EXTENSIONS.get(path.suffix.lower(), "f32le")
    samples = np.asarray(samples)
    if fmt == "csv":
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.writelines(f"{float(v)!r}\n" for v in samples)
    else:
        path.write_bytes(samples.astype(RAW_FORMATS[fmt]).tobytes())
    return path


def sample_windows(ds: SignalDataset, batch: int, rng: np.random.Generator, dtype=None) -> WindowBatch:
    """Uniform random offsets on [0, len - WINDOW], with replacement; windows copied raw."""
    if batch < 1:
        raise ConfigurationError("batch must be >= 1")
    offsets = rng.integers(0, len(ds) - WINDOW + 1, size=batch)
    tensor = ds.samples[offsets[:, None] + np.arange(WINDOW)][:, None, :]
    if dtype is not None:
        tensor = tensor.astype(dtype, copy=False)
    return WindowBatch(tensor, offsets)


def dataset_stats(ds: SignalDataset) -> tuple[float, float, float, float]:
    """(mean, population std, min, max), two-pass in float64."""
    x = ds.samples.astype(np.float64)
    mean = float(x.mean())
    std = math.sqrt(float(((x - mean) ** 2).mean()))
    return mean, std, float(x.min()), float(x.max())


def synth_signal(samples: int, seed: int, sample_rate: float = SAMPLE_RATE) -> np.ndarray:
    """Seeded sum-of-sinusoids record with envelope and Gaussian noise, float32."""
    rng = np.random.default_rng(seed)
    t = np.arange(samples) / sample_rate
    phases = rng.uniform(0, 2 * np.pi, size=len(SYNTH_PARTIALS) + 1)
    x = np.zeros(samples)
    for (freq, amp), ph in zip(SYNTH_PARTIALS, phases):
        x += amp * np.sin(2 * np.pi * freq * t + ph)
    x *= 1.0 + SYNTH_ENVELOPE_DEPTH * np.sin(2 * np.pi * SYNTH_ENVELOPE_HZ * t + phases[-1])
    x += rng.normal(0.0, SYNTH_NOISE_STD, size=samples)
    return x.astype(np.float32)
