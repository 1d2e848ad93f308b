import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from arraydpd import waveform as wf
from arraydpd.errors import ConfigurationError, InputError


def test_qpsk_constant_modulus():
    s = wf.gen_qam_symbols(4, order=4, seed=3)
    assert np.allclose(np.abs(s.symbols), 1.0, atol=1e-12)


def test_constellation_unit_power():
    for order in (4, 16, 64):
        pts = wf.qam_constellation(order)
        assert abs(np.mean(np.abs(pts) ** 2) - 1) < 1e-12


def test_16qam_empirical_power():
    s = wf.gen_qam_symbols(10**6, order=16, seed=11)
    p = np.mean(np.abs(s.symbols) ** 2)
    assert 0.995 <= p <= 1.005


def test_symbols_on_grid():
    s = wf.gen_qam_symbols(2000, order=16, seed=1)
    grid = wf.qam_constellation(16)
    d = np.min(np.abs(s.symbols[:, None] - grid[None, :]), axis=1)
    assert np.max(d) < 1e-12


def test_symbols_deterministic():
    a = wf.gen_qam_symbols(500, 16, seed=9).symbols
    b = wf.gen_qam_symbols(500, 16, seed=9).symbols
    assert np.array_equal(a, b)


@pytest.mark.parametrize("order", [2, 8, 32, 9])
def test_bad_qam_order(order):
    with pytest.raises(ConfigurationError):
        wf.gen_qam_symbols(10, order)


@pytest.mark.parametrize("rolloff", [0.0, 1.0, -0.1, 1.5])
def test_bad_rolloff(rolloff):
    with pytest.raises(ConfigurationError):
        wf.design_rrc(rolloff)


def test_rrc_symmetric_unit_energy():
    f = wf.design_rrc(0.22, 80, 6)
    assert f.length == 80 * 6 + 1
    assert np.max(np.abs(f.taps - f.taps[::-1])) < 1e-12
    assert abs(np.sum(f.taps ** 2) - 1) < 1e-12


def test_rrc_explicit_length():
    f = wf.design_rrc(0.22, U=6, length=32)
    assert f.length == 32
    assert np.max(np.abs(f.taps - f.taps[::-1])) < 1e-12


def test_rrc_pole_samples_finite():
    # rolloff 0.25 with U=4 puts samples exactly on t = +-1/(4 b)
    f = wf.design_rrc(0.25, 8, 4)
    assert np.all(np.isfinite(f.taps))


def test_rrc_stopband():
    f = wf.design_rrc(0.22, 80, 6)
    # DTFT at f = 0.61 Rs, i.e. normalized 0.61 / U cycles/sample
    n = np.arange(f.length)
    resp = lambda fn: abs(np.sum(f.taps * np.exp(-2j * np.pi * fn * n)))
    assert 20 * np.log10(resp(0.61 / 6) / resp(0.0)) < -40


def test_rrc_back_to_back_isi():
    f = wf.design_rrc(0.22, 80, 6)
    rc = np.convolve(f.taps, f.taps[::-1])
    c = len(rc) // 2
    symbol_taps = rc[c % 6::6]
    main = rc[c]
    isi = np.delete(symbol_taps, c // 6)
    assert 20 * np.log10(np.max(np.abs(isi)) / main) < -50


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31), U=st.integers(2, 8), span=st.integers(4, 20),
       count=st.integers(1, 300))
def test_polyphase_matches_naive(seed, U, span, count):
    f = wf.design_rrc(0.3, span, U)
    s = wf.gen_qam_symbols(count, 16, seed)
    a = wf.upsample_filter(s, f).samples
    b = wf.upsample_filter_naive(s, f).samples
    assert len(a) == count * U
    assert np.max(np.abs(a - b)) < 1e-12


def test_polyphase_1000_symbols():
    f = wf.design_rrc(0.22, 80, 6)
    s = wf.gen_qam_symbols(1000, 16, 5)
    d = wf.upsample_filter(s, f).samples - wf.upsample_filter_naive(s, f).samples
    assert np.max(np.abs(d)) < 1e-12


def test_impulse_response():
    f = wf.design_rrc(0.22, 10, 4)
    count = 40
    sym = np.zeros(count, dtype=complex)
    sym[20] = 1
    y = wf.upsample_filter(wf.SymbolStream(sym), f).samples
    start = 20 * 4 - f.group_delay
    assert np.allclose(y[start:start + f.length], f.taps, atol=1e-15)


def test_zero_stream():
    f = wf.design_rrc()
    y = wf.upsample_filter(wf.SymbolStream(np.zeros(50, complex)), f)
    assert not np.any(y.samples)
    assert y.sample_rate_hz == 6 * wf.DEFAULT_SYMBOL_RATE_HZ
    back = wf.matched_filter_downsample(wf.ComplexSignal(np.zeros(2000, complex), 120e6, 20e6), f)
    assert not np.any(back.symbols)


def test_back_to_back_chain():
    f = wf.design_rrc(0.22, 80, 6)
    s = wf.gen_qam_symbols(3000, 16, 2)
    rx = wf.matched_filter_downsample(wf.upsample_filter(s, f), f).symbols
    edge = 80
    err = rx[edge:-edge] - s.symbols[edge:-edge]
    assert 10 * np.log10(np.mean(np.abs(err) ** 2)) < -50


def test_matched_filter_peak_position():
    f = wf.design_rrc(0.22, 20, 6)
    sym = np.zeros(200, complex)
    sym[100] = 1
    sig = wf.upsample_filter(wf.SymbolStream(sym), f)
    x = np.convolve(sig.samples, f.taps[::-1])
    d = f.length - 1 - f.group_delay
    aligned = x[d:d + len(sig)]
    assert np.argmax(np.abs(aligned)) == 100 * 6
    out = wf.matched_filter_downsample(sig, f).symbols
    assert np.argmax(np.abs(out)) == 100


def test_matched_filter_short_input():
    f = wf.design_rrc(0.22, 80, 6)
    with pytest.raises(InputError):
        wf.matched_filter_downsample(wf.ComplexSignal(np.ones(100, complex), 120e6), f)


def test_psd_tone():
    fs = 120e6
    n = 2**15
    f0 = 64 * fs / 4096
    x = np.exp(2j * np.pi * f0 * np.arange(n) / fs)
    spec = wf.psd_welch(wf.ComplexSignal(x, fs), 4096)
    assert abs(spec.freqs_hz[np.argmax(spec.psd)] - f0) < 1e-6
    assert abs(spec.total_power() - 1) < 0.02


def test_psd_white_noise():
    rng = np.random.default_rng(0)
    var = 2.5
    x = np.sqrt(var / 2) * (rng.standard_normal(2**17) + 1j * rng.standard_normal(2**17))
    spec = wf.psd_welch(wf.ComplexSignal(x, 120e6))
    assert abs(spec.total_power() / var - 1) < 0.05
    # flat: no bin strays far from the mean density
    assert np.max(spec.psd) / np.mean(spec.psd) < 2.0


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_psd_parseval(seed):
    f = wf.design_rrc(0.22, 40, 6)
    sig = wf.upsample_filter(wf.gen_qam_symbols(8000, 16, seed), f)
    ratio = wf.psd_welch(sig).total_power() / sig.mean_power()
    assert 0.98 <= ratio <= 1.02


def test_psd_rows():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((3, 8192)) + 0j
    spec = wf.psd_welch(wf.ComplexSignal(x, 1e6), 1024)
    assert spec.psd.shape == (3, 1024)
    single = wf.psd_welch(wf.ComplexSignal(x[1], 1e6), 1024)
    assert np.allclose(spec.psd[1], single.psd)


@pytest.mark.parametrize("seg,ov", [(4, 0.5), (10**6, 0.5), (256, 1.0)])
def test_psd_degenerate(seg, ov):
    with pytest.raises(InputError):
        wf.psd_welch(wf.ComplexSignal(np.ones(4096, complex), 1e6), seg, ov)


def test_spectrum_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(2)
    x = rng.standard_normal(8192) + 1j * rng.standard_normal(8192)
    spec = wf.psd_welch(wf.ComplexSignal(x, 120e6), 1024)
    p = tmp_path / "s.csv"
    spec.to_csv(p)
    assert p.read_text().splitlines()[0] == "freq_hz,power_db"
    back = wf.Spectrum.from_csv(p)
    assert np.allclose(back.psd, spec.psd, rtol=1e-5)
    assert abs(back.sample_rate_hz - 120e6) < 1


def test_pure_repeat():
    f = wf.design_rrc()
    a = wf.upsample_filter(wf.gen_qam_symbols(100, 16, 4), f).samples
    b = wf.upsample_filter(wf.gen_qam_symbols(100, 16, 4), f).samples
    assert a.tobytes() == b.tobytes()
