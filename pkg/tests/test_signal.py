import numpy as np
import pytest

from emgtcn.errors import ConfigError, RangeError
from emgtcn.signal import (
    FilterParams,
    MuLawParams,
    butterworth_lowpass,
    mu_law,
    normalize_max_abs,
    preprocess,
    segment,
)

# ln(128.5)/ln(256) at 40 decimal digits, rounded to float64
MU_LAW_HALF_255 = 0.87570306864923476


class FakeRecording:
    def __init__(self, data, gesture, repetition, subject=1, rate=2000.0):
        self.data = np.asarray(data)
        self.gesture = np.asarray(gesture, dtype=np.uint16)
        self.repetition = np.asarray(repetition, dtype=np.uint16)
        self.subject = subject
        self.sample_rate_hz = rate


def test_filter_params_validation():
    with pytest.raises(ConfigError):
        FilterParams(cutoff_hz=1000.0, sample_rate_hz=2000.0)  # at Nyquist
    with pytest.raises(ConfigError):
        FilterParams(cutoff_hz=-5.0)
    FilterParams(cutoff_hz=999.0, sample_rate_hz=2000.0)


def test_filter_constant_signal_converges_to_constant():
    x = np.full(4000, 3.25)
    y = butterworth_lowpass(x, FilterParams())
    assert abs(y[-1] - 3.25) <= 1e-9


def test_filter_zero_signal():
    y = butterworth_lowpass(np.zeros(100), FilterParams())
    assert np.array_equal(y, np.zeros(100))


def test_filter_cutoff_attenuation_is_half_power():
    # drive with a pure tone at the cutoff and fit a sinusoid to the
    # steady-state tail; a first-order filter passes 1/sqrt(2) there
    p = FilterParams(cutoff_hz=450.0, sample_rate_hz=2000.0)
    t = np.arange(20000) / p.sample_rate_hz
    x = np.sin(2 * np.pi * p.cutoff_hz * t)
    y = butterworth_lowpass(x, p)[-4000:]
    tt = t[-4000:]
    basis = np.column_stack(
        [np.sin(2 * np.pi * p.cutoff_hz * tt), np.cos(2 * np.pi * p.cutoff_hz * tt)]
    )
    coef, *_ = np.linalg.lstsq(basis, y, rcond=None)
    amplitude = float(np.hypot(*coef))
    assert amplitude == pytest.approx(1.0 / np.sqrt(2.0), abs=0.01)


def test_filter_applies_per_channel():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(3, 500))
    y = butterworth_lowpass(x, FilterParams())
    for c in range(3):
        assert np.array_equal(y[c], butterworth_lowpass(x[c], FilterParams()))


def test_mu_law_fixes_zero_and_endpoints():
    p = MuLawParams(mu=255.0)
    assert mu_law(0.0, p) == 0.0
    assert mu_law(1.0, p) == 1.0
    assert mu_law(-1.0, p) == -1.0


def test_mu_law_reference_value():
    assert mu_law(0.5, MuLawParams(mu=255.0)) == pytest.approx(
        MU_LAW_HALF_255, abs=1e-9
    )


def test_mu_law_odd_bit_symmetric():
    x = np.linspace(0.0, 1.0, 1001)
    p = MuLawParams(mu=255.0)
    assert np.array_equal(mu_law(-x, p), -mu_law(x, p))


def test_mu_law_monotone_on_grid():
    x = np.linspace(-1.0, 1.0, 1000)
    y = mu_law(x, MuLawParams(mu=255.0))
    assert np.all(np.diff(y) > 0)


def test_mu_law_small_mu_is_near_identity():
    x = np.linspace(-1.0, 1.0, 2001)
    y = mu_law(x, MuLawParams(mu=1e-6))
    assert np.abs(y - x).max() <= 1e-5


def test_mu_law_rejects_out_of_range_with_index():
    x = np.array([0.0, 0.5, 1.5, 0.2])
    with pytest.raises(RangeError) as err:
        mu_law(x)
    assert "2" in str(err.value)


def test_mu_law_params_validation():
    with pytest.raises(ConfigError):
        MuLawParams(mu=0.0)
    with pytest.raises(ConfigError):
        MuLawParams(mu=-1.0)


def test_normalize_max_abs():
    x = np.array([[1.0, -4.0], [2.0, 0.5]])
    y = normalize_max_abs(x)
    assert np.abs(y).max() == 1.0
    assert np.allclose(y, x / 4.0)
    z = np.zeros((2, 3))
    assert np.array_equal(normalize_max_abs(z), z)


def _single_span_recording(span, total=None, start=100, channels=2):
    total = total or start + span + 100
    gesture = np.zeros(total, dtype=np.uint16)
    repetition = np.zeros(total, dtype=np.uint16)
    gesture[start : start + span] = 7
    repetition[start : start + span] = 1
    rng = np.random.default_rng(9)
    return FakeRecording(rng.normal(size=(channels, total)), gesture, repetition)


def test_segment_counts_single_span():
    rec = _single_span_recording(span=2000)
    out = segment(rec, window_ms=200, stride_ms=200)  # 400 samples at 2 kHz
    assert len(out) == 5
    assert out.data.shape == (5, 2, 400)
    assert np.all(out.labels == 6)
    assert np.all(out.repetitions == 1)
    assert np.all(out.subjects == 1)


def test_segment_counts_with_overlap():
    rec = _single_span_recording(span=800)
    out = segment(rec, window_ms=200, stride_ms=100)  # 400/200 samples
    assert len(out) == 3


def test_segment_counts_protocol_layout():
    rec = _single_span_recording(span=10000)
    out = segment(rec, window_ms=300, stride_ms=300)  # 600 samples
    assert len(out) == 16


def test_segment_count_formula_property():
    rng = np.random.default_rng(33)
    for span in rng.integers(400, 3000, size=10):
        rec = _single_span_recording(span=int(span))
        for stride_ms in (100, 200, 350):
            out = segment(rec, window_ms=200, stride_ms=stride_ms)
            stride = stride_ms * 2
            assert len(out) == (int(span) - 400) // stride + 1


def test_segment_windows_copy_exact_samples():
    rec = _single_span_recording(span=1000)
    out = segment(rec, window_ms=200)
    assert np.array_equal(out.data[0], rec.data[:, 100:500])
    assert np.array_equal(out.data[1], rec.data[:, 500:900])


def test_segment_skips_rest_and_boundaries():
    total = 1200
    gesture = np.zeros(total, dtype=np.uint16)
    repetition = np.zeros(total, dtype=np.uint16)
    gesture[0:500] = 1
    repetition[0:500] = 1
    # 200 samples of rest, then a second gesture
    gesture[700:1200] = 2
    repetition[700:1200] = 1
    rec = FakeRecording(np.ones((1, total)), gesture, repetition)
    out = segment(rec, window_ms=200, stride_ms=50)
    # each 500-sample span yields floor((500-400)/100)+1 = 2 windows
    assert len(out) == 4
    assert list(out.labels) == [0, 0, 1, 1]


def test_segment_separates_repetitions_of_same_gesture():
    total = 1000
    gesture = np.full(total, 3, dtype=np.uint16)
    repetition = np.concatenate(
        [np.full(500, 1, dtype=np.uint16), np.full(500, 2, dtype=np.uint16)]
    )
    rec = FakeRecording(np.ones((1, total)), gesture, repetition)
    out = segment(rec, window_ms=200, stride_ms=200)
    # no window may straddle the repetition boundary at sample 500
    assert len(out) == 2
    assert list(out.repetitions) == [1, 2]


def test_segment_window_too_long_warns_and_returns_empty():
    rec = _single_span_recording(span=300)  # shorter than 400-sample window
    with pytest.warns(UserWarning):
        out = segment(rec, window_ms=200)
    assert len(out) == 0


def test_segment_rejects_bad_window():
    rec = _single_span_recording(span=2000)
    with pytest.raises(ConfigError):
        segment(rec, window_ms=0)
    with pytest.raises(ConfigError):
        segment(rec, window_ms=200, stride_ms=0)


def test_preprocess_pipeline_range():
    rng = np.random.default_rng(21)
    x = rng.normal(size=(3, 2000)) * 50
    y = preprocess(x)
    assert y.shape == x.shape
    assert np.abs(y).max() <= 1.0
    assert np.isclose(np.abs(y).max(), 1.0)
