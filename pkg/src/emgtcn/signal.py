"""Conditioning and windowing of raw surface-EMG recordings.

The pipeline is: causal first-order Butterworth low-pass per channel,
per-recording max-abs normalization into [-1, 1], logarithmic mu-law
companding, then segmentation into fixed-length windows that lie fully
inside a single gesture's active span.

Two knobs here are deliberate configuration, not derived constants, and
both matter when trying to reproduce published accuracy numbers: the
filter cutoff (default 450 Hz) and the companding strength mu (default
255, the telephony convention). Window stride defaults to the window
length, i.e. non-overlapping segments.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import butter, lfilter

from .errors import ConfigError, DataError, RangeError

__all__ = [
    "MuLawParams",
    "FilterParams",
    "Segment",
    "SegmentSet",
    "butterworth_lowpass",
    "normalize_max_abs",
    "mu_law",
    "segment",
    "preprocess",
]


@dataclass(frozen=True)
class MuLawParams:
    """Compression strength for the logarithmic scaler."""

    mu: float = 255.0

    def __post_init__(self):
        if not (self.mu > 0 and np.isfinite(self.mu)):
            raise ConfigError(f"mu must be a positive finite float, got {self.mu!r}")


@dataclass(frozen=True)
class FilterParams:
    cutoff_hz: float = 450.0
    sample_rate_hz: float = 2000.0

    def __post_init__(self):
        if not (self.sample_rate_hz > 0 and np.isfinite(self.sample_rate_hz)):
            raise ConfigError(
                f"sample_rate_hz must be positive, got {self.sample_rate_hz!r}"
            )
        if not (0 < self.cutoff_hz < self.sample_rate_hz / 2):
            raise ConfigError(
                f"cutoff_hz must lie in (0, {self.sample_rate_hz / 2}) "
                f"(below Nyquist), got {self.cutoff_hz!r}"
            )


@dataclass
class Segment:
    """One labeled window: channels x samples, plus its provenance."""

    x: np.ndarray
    label: int
    subject: int
    repetition: int


@dataclass
class SegmentSet:
    """Columnar batch of segments.

    data is M x C x L float64; labels are zero-based class indices
    (annotation gesture g maps to class g-1; rest never appears).
    """

    data: np.ndarray
    labels: np.ndarray
    subjects: np.ndarray
    repetitions: np.ndarray
    sample_rate_hz: float
    window_ms: int
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.data.ndim != 3:
            raise DataError(f"segment data must be M x C x L, got {self.data.shape}")
        m = self.data.shape[0]
        for name in ("labels", "subjects", "repetitions"):
            arr = getattr(self, name)
            if arr.shape != (m,):
                raise DataError(
                    f"{name} must have one entry per segment ({m}), got {arr.shape}"
                )

    def __len__(self) -> int:
        return self.data.shape[0]

    def __getitem__(self, i: int) -> Segment:
        return Segment(
            x=self.data[i],
            label=int(self.labels[i]),
            subject=int(self.subjects[i]),
            repetition=int(self.repetitions[i]),
        )

    @property
    def channels(self) -> int:
        return self.data.shape[1]

    @property
    def seg_len(self) -> int:
        return self.data.shape[2]


def butterworth_lowpass(signal: np.ndarray, p: FilterParams) -> np.ndarray:
    """First-order causal low-pass, one forward pass per channel.

    Accepts a single series or a channels x T matrix; returns float64 of
    the same shape. The discretization is the bilinear transform with
    frequency prewarping, which pins DC gain to exactly 1.
    """
    x = np.asarray(signal, dtype=np.float64)
    if x.size == 0:
        raise DataError("cannot filter an empty series")
    b, a = butter(1, p.cutoff_hz, btype="low", fs=p.sample_rate_hz)
    return lfilter(b, a, x, axis=-1)


def normalize_max_abs(x: np.ndarray) -> np.ndarray:
    """Scale a whole recording into [-1, 1] by its global peak.

    One shared factor across channels preserves inter-channel amplitude
    ratios. An all-zero input is returned unchanged.
    """
    x = np.asarray(x, dtype=np.float64)
    peak = np.abs(x).max() if x.size else 0.0
    return x if peak == 0.0 else x / peak


def mu_law(x, p: MuLawParams = MuLawParams()):
    """Logarithmic companding sign(x) * ln(1 + mu|x|) / ln(1 + mu).

    Odd, strictly increasing, and fixes -1, 0, 1 exactly. Inputs must
    already be normalized into [-1, 1].
    """
    arr = np.asarray(x, dtype=np.float64)
    bad = np.abs(arr) > 1.0
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        pos = idx[0] if len(idx) == 1 else idx
        raise RangeError(
            f"mu_law input must satisfy |x| <= 1; index {pos} holds {arr[idx]!r}"
        )
    out = np.sign(arr) * np.log1p(p.mu * np.abs(arr)) / np.log1p(p.mu)
    return float(out) if np.isscalar(x) else out


def segment(
    recording,
    window_ms: int,
    stride_ms: int | None = None,
    sample_rate_hz: float | None = None,
) -> SegmentSet:
    """Cut a recording into labeled windows.

    A window is emitted only when it fits entirely inside one
    contiguous run of constant (gesture, repetition) with gesture != 0;
    rest samples and boundary-straddling windows are discarded. Within
    a run of span samples the count is floor((span - L) / stride) + 1.
    Emitted labels are zero-based (gesture g -> class g-1).
    """
    if stride_ms is None:
        stride_ms = window_ms
    if sample_rate_hz is None:
        sample_rate_hz = float(recording.sample_rate_hz)
    if window_ms < 1 or stride_ms < 1:
        raise ConfigError(
            f"window_ms and stride_ms must be >= 1, got {window_ms}, {stride_ms}"
        )
    seg_len = _ms_to_samples(window_ms, sample_rate_hz, "window_ms")
    stride = _ms_to_samples(stride_ms, sample_rate_hz, "stride_ms")

    data = np.asarray(recording.data, dtype=np.float64)
    gesture = np.asarray(recording.gesture)
    repetition = np.asarray(recording.repetition)
    subject = int(getattr(recording, "subject", 0))

    windows, labels, reps = [], [], []
    saw_active = False
    for start, stop in _constant_runs(gesture, repetition):
        g = int(gesture[start])
        if g == 0:
            continue
        saw_active = True
        for off in range(start, stop - seg_len + 1, stride):
            windows.append(data[:, off : off + seg_len])
            labels.append(g - 1)
            reps.append(int(repetition[start]))

    if not windows:
        if saw_active:
            warnings.warn(
                f"window of {seg_len} samples exceeds every active gesture span; "
                "no segments emitted",
                stacklevel=2,
            )
        m = 0
        out = np.empty((0, data.shape[0], seg_len))
    else:
        m = len(windows)
        out = np.stack(windows)
    return SegmentSet(
        data=out,
        labels=np.asarray(labels, dtype=np.int64).reshape(m),
        subjects=np.full(m, subject, dtype=np.int64),
        repetitions=np.asarray(reps, dtype=np.int64).reshape(m),
        sample_rate_hz=sample_rate_hz,
        window_ms=window_ms,
    )


def preprocess(
    data: np.ndarray,
    filter_params: FilterParams = FilterParams(),
    mu_params: MuLawParams = MuLawParams(),
) -> np.ndarray:
    """Filter, normalize, and compand one recording's channel matrix."""
    filtered = butterworth_lowpass(data, filter_params)
    return mu_law(normalize_max_abs(filtered), mu_params)


def _ms_to_samples(ms: int, rate_hz: float, name: str) -> int:
    exact = ms * rate_hz / 1000.0
    n = round(exact)
    if abs(exact - n) > 1e-9 or n < 1:
        raise ConfigError(
            f"{name}={ms} is not a whole positive number of samples at {rate_hz} Hz"
        )
    return int(n)


def _constant_runs(gesture: np.ndarray, repetition: np.ndarray):
    """Yield (start, stop) of maximal runs with constant (gesture, rep)."""
    n = gesture.shape[0]
    if n == 0:
        return
    change = (gesture[1:] != gesture[:-1]) | (repetition[1:] != repetition[:-1])
    edges = np.flatnonzero(change) + 1
    bounds = np.concatenate(([0], edges, [n]))
    for i in range(len(bounds) - 1):
        yield int(bounds[i]), int(bounds[i + 1])
