import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import signal as sps

from conftest import make_recording
from spectral_mind.dsp import (PreprocessConfig, antialias_filter, baseline_slice, decimate,
                               design_butterworth_bandpass, design_butterworth_lowpass,
                               filter_zero_phase, preprocess, remove_baseline_mean, segment_epochs)
from spectral_mind.eegio import EpochSet, Marker, Recording

FS = 200.0


@pytest.fixture(scope="module")
def band():
    return design_butterworth_bandpass(3, 0.5, 50.0, FS)


def test_bandpass_edges(band):
    h = np.abs(band.response([0.5, 50.0]))
    np.testing.assert_allclose(h, 1 / np.sqrt(2), atol=1e-3)


def test_bandpass_dc_nyquist_and_center(band):
    assert np.abs(band.response([0.0]))[0] <= 1e-10
    assert np.abs(band.response([FS / 2]))[0] <= 1e-10
    assert np.abs(band.response([5.0]))[0] >= 0.99


def test_bandpass_structure(band):
    assert band.sections.shape == (3, 5)
    assert len(band.poles()) == 6
    assert np.all(np.abs(band.poles()) < 1)


def test_bandpass_matches_reference_design(band):
    # cross-check the hand design against scipy's zpk route
    ref = sps.butter(3, [0.5, 50.0], btype="bandpass", fs=FS, output="sos")
    f = np.linspace(0, FS / 2, 257)
    _, h_ref = sps.sosfreqz(ref, worN=f, fs=FS)
    np.testing.assert_allclose(np.abs(band.response(f)), np.abs(h_ref), atol=1e-9)


def test_lowpass_design():
    lp = design_butterworth_lowpass(8, 80.0, 1000.0)
    assert abs(abs(lp.response([80.0])[0]) - 1 / np.sqrt(2)) < 1e-6
    assert abs(abs(lp.response([0.0])[0]) - 1.0) < 1e-9
    assert np.all(np.abs(lp.poles()) < 1)


@pytest.mark.parametrize("args", [(0, 0.5, 50, 200), (3, 0.0, 50, 200), (3, 10, 5, 200), (3, 0.5, 100, 200)])
def test_bandpass_errors(args):
    with pytest.raises(ValueError):
        design_butterworth_bandpass(*args)


@settings(max_examples=40, deadline=None)
@given(
    order=st.integers(1, 6),
    fs=st.sampled_from([100.0, 200.0, 250.0, 500.0, 1000.0]),
    lo_frac=st.floats(0.002, 0.3),
    width=st.floats(0.05, 0.6),
)
def test_bandpass_stability_property(order, fs, lo_frac, width):
    lo = lo_frac * fs / 2
    hi = min(lo + width * fs / 2, 0.95 * fs / 2)
    if hi <= lo * 1.01:
        return
    f = design_butterworth_bandpass(order, lo, hi, fs)
    assert np.all(np.abs(f.poles()) < 1)
    np.testing.assert_allclose(np.abs(f.response([lo, hi])), 1 / np.sqrt(2), atol=1e-6)


def test_zero_phase_zero_input(band):
    np.testing.assert_array_equal(filter_zero_phase(np.zeros(1000), band), np.zeros(1000))


def test_zero_phase_sinusoid_gain(band):
    t = np.arange(int(10 * FS)) / FS
    y = filter_zero_phase(np.sin(2 * np.pi * 25 * t), band)
    assert y.shape == t.shape
    interior = (t >= 3.0) & (t <= 7.0)
    # lock-in amplitude over the interior
    ref = np.exp(-2j * np.pi * 25 * t[interior])
    amp = 2 * np.abs(np.mean(y[interior] * ref))
    expected = np.abs(band.response([25.0])[0]) ** 2
    assert abs(amp - expected) <= 0.02 * expected


def test_zero_phase_dc(band):
    y = filter_zero_phase(np.full(4000, 2.5), band)
    assert np.max(np.abs(y[1000:-1000])) <= 1e-6 * 2.5


def test_zero_phase_no_lag(band):
    rng = np.random.default_rng(3)
    x = filter_zero_phase(rng.standard_normal(4000), design_butterworth_bandpass(4, 5, 20, FS))
    y = filter_zero_phase(x, band)
    lags = np.arange(-20, 21)
    xc = [np.dot(x[200 + k : 3800 + k], y[200:3800]) for k in lags]
    assert lags[int(np.argmax(xc))] == 0


def test_zero_phase_too_short(band):
    with pytest.raises(ValueError, match="too short"):
        filter_zero_phase(np.zeros(band.pad_length), band)


def test_zero_phase_axis(band):
    x = np.random.default_rng(0).standard_normal((3, 500))
    y = filter_zero_phase(x, band, axis=1)
    yt = filter_zero_phase(x.T, band, axis=0)
    np.testing.assert_allclose(y, yt.T, atol=1e-12)
    np.testing.assert_allclose(y[1], filter_zero_phase(x[1], band), atol=1e-12)


def test_decimate_length():
    assert decimate(np.zeros(12000), 1000, 200).shape == (2400,)
    assert decimate(np.zeros(12003), 1000, 200).shape == (2400,)


def test_decimate_dc():
    y = decimate(np.full(12000, 3.0), 1000, 200)
    np.testing.assert_allclose(y, 3.0, atol=1e-6)


def test_decimate_tone_attenuation():
    t = np.arange(12000) / 1000.0
    fs_out = 200.0
    aa = antialias_filter(1000.0, fs_out)
    rms = lambda v: np.sqrt(np.mean(v ** 2))  # noqa: E731
    # 150 Hz lies above the new Nyquist: removed almost entirely
    y = decimate(np.sin(2 * np.pi * 150 * t), 1000, fs_out)
    assert rms(y[200:-200]) <= 0.05 * rms(np.sin(2 * np.pi * 150 * t))
    # 90 Hz sits below the new Nyquist (100 Hz) but above the 80 Hz anti-alias corner;
    # its attenuation is exactly the zero-phase response of the anti-alias filter
    x = np.sin(2 * np.pi * 90 * t)
    y = decimate(x, 1000, fs_out)
    ratio = rms(y[200:-200]) / rms(x)
    assert abs(ratio - np.abs(aa.response([90.0])[0]) ** 2) < 5e-3


def test_decimate_bad_ratio():
    with pytest.raises(ValueError, match="integer"):
        decimate(np.zeros(1000), 1000, 300)


def test_segment_epochs_full_scale_shape():
    onsets = tuple(5.0 + 12.0 * i for i in range(60))
    rec = make_recording(n_channels=22, seconds=740.0, onsets=onsets)
    ep = segment_epochs(rec, -2.0, 10.0)
    assert ep.data.shape == (60, 22, 2400)
    assert ep.labels[:2] == ["MA", "BL"]
    i = int(round((onsets[3] - 2.0) * FS))
    np.testing.assert_array_equal(ep.data[3], rec.data[:, i : i + 2400])


def test_segment_epochs_bounds():
    rec = make_recording(onsets=(1.0,))
    with pytest.raises(ValueError, match="marker 0"):
        segment_epochs(rec, -2.0, 10.0)


def test_segment_epochs_empty():
    rec = make_recording(onsets=())
    assert segment_epochs(rec).n_epochs == 0


def _epochset(data):
    data = np.asarray(data, dtype=np.float32)
    return EpochSet(FS, -2.0, 10.0, data, ["MA"] * len(data), "S", [f"c{i}" for i in range(data.shape[1])])


def test_baseline_constant():
    out = remove_baseline_mean(_epochset(np.full((2, 2, 2400), 7.0)))
    np.testing.assert_array_equal(out.data, 0)


def test_baseline_zero_mean_unchanged():
    t = np.arange(2400) / FS - 2.0
    x = np.where(t > 0, 5.0, 0.0)
    out = remove_baseline_mean(_epochset(x[None, None]))
    np.testing.assert_array_equal(out.data[0, 0], x)


def test_baseline_ramp():
    t = np.arange(2400) / FS - 2.0
    out = remove_baseline_mean(_epochset(t[None, None]), -1.0, 0.0)
    np.testing.assert_allclose(out.data[0, 0], t + 0.5, atol=1e-5)


def test_baseline_slice_closed():
    sl = baseline_slice(-2.0, 2400, FS, -1.0, 0.0)
    assert (sl.start, sl.stop) == (200, 401)


def test_baseline_outside_epoch():
    with pytest.raises(ValueError, match="outside"):
        remove_baseline_mean(_epochset(np.zeros((1, 1, 2400))), -3.0, 0.0)


def test_channel_permutation_commutes():
    rec = make_recording(n_channels=4, onsets=(10.0, 25.0, 40.0))
    perm = [2, 0, 3, 1]
    rec_p = Recording(rec.sample_rate_hz, [rec.channel_names[i] for i in perm], rec.data[perm],
                      rec.markers, rec.subject_id)
    a = remove_baseline_mean(segment_epochs(rec))
    b = remove_baseline_mean(segment_epochs(rec_p))
    np.testing.assert_array_equal(a.data[:, perm], b.data)


def test_preprocess_deterministic_and_shape():
    rng = np.random.default_rng(5)
    data = rng.standard_normal((3, 60000))
    rec = Recording(1000.0, ["a", "b", "c"], data, [Marker(10.0, "MA"), Marker(30.0, "BL")], "S01")
    a = preprocess(rec)
    b = preprocess(rec)
    assert a.data.shape == (2, 3, 2400) and a.sample_rate_hz == 200.0
    assert a.data.tobytes() == b.data.tobytes()
    c = preprocess(rec, PreprocessConfig(chain_order="filter_first"))
    assert c.data.shape == a.data.shape


def test_preprocess_config_validation():
    with pytest.raises(ValueError, match="chain_order"):
        PreprocessConfig(chain_order="sideways").validate()
    with pytest.raises(ValueError, match="band_hz"):
        PreprocessConfig(band_hz=(0.5, 120.0)).validate()
