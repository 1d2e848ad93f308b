"""Symbol generation, RRC pulse shaping and spectral estimation.

Single-carrier square-QAM streams are interpolated by a polyphase RRC
interpolator to ``U`` samples per symbol.  All routines are pure: the
only randomness comes from ``numpy.random.default_rng(seed)``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import signal as sps

from .errors import ConfigurationError, InputError

DEFAULT_SYMBOL_RATE_HZ = 20e6
DEFAULT_UPSAMPLING = 6
DEFAULT_ROLLOFF = 0.22
# Long enough for the truncated response to sit below -40 dB at the band edge.
DEFAULT_SPAN_SYMBOLS = 80


@dataclass(frozen=True)
class SymbolStream:
    symbols: np.ndarray
    modulation_order: int | None = None
    seed: int | None = None
    symbol_rate_hz: float = DEFAULT_SYMBOL_RATE_HZ

    def __len__(self) -> int:
        return len(self.symbols)


@dataclass(frozen=True)
class ComplexSignal:
    """Uniformly sampled complex baseband sequence."""

    samples: np.ndarray
    sample_rate_hz: float
    symbol_rate_hz: float | None = None

    def __post_init__(self):
        if not self.sample_rate_hz > 0:
            raise ConfigurationError("sample_rate_hz must be positive")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def upsampling(self) -> int | None:
        if self.symbol_rate_hz is None:
            return None
        return int(round(self.sample_rate_hz / self.symbol_rate_hz))

    def with_samples(self, samples: np.ndarray) -> "ComplexSignal":
        """Same rate metadata, new samples."""
        return ComplexSignal(np.asarray(samples, dtype=complex), self.sample_rate_hz, self.symbol_rate_hz)

    def mean_power(self) -> float:
        return float(np.mean(np.abs(self.samples) ** 2))


@dataclass(frozen=True)
class RrcFilter:
    taps: np.ndarray
    rolloff: float
    span_symbols: float
    upsampling: int

    @property
    def length(self) -> int:
        return len(self.taps)

    @property
    def group_delay(self) -> int:
        """Integer group delay in samples, ``(L - 1) // 2``."""
        return (len(self.taps) - 1) // 2


@dataclass(frozen=True)
class Spectrum:
    """Two-sided power spectral density, frequencies ascending.

    ``psd`` may carry leading axes (one row per receiver); frequency is
    always the last axis.
    """

    freqs_hz: np.ndarray
    psd: np.ndarray
    sample_rate_hz: float = field(default=0.0)

    @property
    def bin_width_hz(self) -> float:
        return float(self.freqs_hz[1] - self.freqs_hz[0])

    def total_power(self):
        p = np.sum(self.psd, axis=-1) * self.bin_width_hz
        return float(p) if np.ndim(p) == 0 else p

    def power_db(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 10 * np.log10(self.psd)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["freq_hz", "power_db"])
            for f, p in zip(self.freqs_hz, self.power_db()):
                w.writerow([f"{f:.6f}", f"{p:.6f}"])

    @classmethod
    def from_csv(cls, path) -> "Spectrum":
        data = np.loadtxt(Path(path), delimiter=",", skiprows=1, ndmin=2)
        freqs = data[:, 0]
        fs = (freqs[1] - freqs[0]) * len(freqs)
        return cls(freqs, 10 ** (data[:, 1] / 10), fs)


def qam_constellation(order: int) -> np.ndarray:
    """Square QAM grid normalized to unit average power."""
    side = int(round(np.sqrt(order)))
    if order < 4 or side * side != order or side % 2:
        raise ConfigurationError(f"unsupported QAM order {order}: must be a square of an even integer")
    levels = np.arange(-side + 1, side, 2, dtype=float)
    grid = (levels[:, None] + 1j * levels[None, :]).ravel()
    # analytic mean of |I|^2 + |Q|^2 over the grid
    return grid / np.sqrt(2 * (order - 1) / 3)


def gen_qam_symbols(count: int, order: int = 16, seed: int = 0,
                    symbol_rate_hz: float = DEFAULT_SYMBOL_RATE_HZ) -> SymbolStream:
    if count <= 0:
        raise ConfigurationError("count must be positive")
    points = qam_constellation(order)
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, order, size=count)
    return SymbolStream(points[idx], order, seed, symbol_rate_hz)


def _rrc_impulse(t: np.ndarray, rolloff: float) -> np.ndarray:
    """RRC pulse at times ``t`` in symbol periods, singular points filled analytically."""
    b = rolloff
    h = np.empty_like(t)
    at_zero = np.isclose(t, 0.0, atol=1e-12)
    at_pole = np.isclose(np.abs(t), 1 / (4 * b), atol=1e-12)
    regular = ~(at_zero | at_pole)
    tr = t[regular]
    h[regular] = (np.sin(np.pi * tr * (1 - b)) + 4 * b * tr * np.cos(np.pi * tr * (1 + b))) / (
        np.pi * tr * (1 - (4 * b * tr) ** 2))
    h[at_zero] = 1 - b + 4 * b / np.pi
    h[at_pole] = b / np.sqrt(2) * ((1 + 2 / np.pi) * np.sin(np.pi / (4 * b))
                                   + (1 - 2 / np.pi) * np.cos(np.pi / (4 * b)))
    return h


def design_rrc(rolloff: float = DEFAULT_ROLLOFF, span_symbols: int = DEFAULT_SPAN_SYMBOLS,
               U: int = DEFAULT_UPSAMPLING, length: int | None = None) -> RrcFilter:
    """Unit-energy, linear-phase RRC taps.

    The tap count is ``span_symbols * U + 1`` unless ``length`` is given,
    in which case exactly ``length`` taps are produced and the span is
    derived from it.
    """
    if not 0 < rolloff < 1:
        raise ConfigurationError(f"rolloff must lie in (0, 1), got {rolloff}")
    if U < 2:
        raise ConfigurationError("upsampling factor must be >= 2")
    if length is None:
        if span_symbols < 4:
            raise ConfigurationError("span_symbols must be >= 4")
        length = span_symbols * U + 1
        span = float(span_symbols)
    else:
        if length < 2:
            raise ConfigurationError("length must be >= 2")
        span = (length - 1) / U
    t = (np.arange(length) - (length - 1) / 2) / U
    taps = _rrc_impulse(t, rolloff)
    taps = taps / np.linalg.norm(taps)
    # enforce exact symmetry against rounding in the closed form
    taps = 0.5 * (taps + taps[::-1])
    taps = taps / np.linalg.norm(taps)
    return RrcFilter(taps, rolloff, span, U)


def upsample_filter(stream: SymbolStream, filt: RrcFilter) -> ComplexSignal:
    """Polyphase interpolation by ``filt.upsampling``.

    Output has ``len(stream) * U`` samples with the filter group delay
    removed, so symbol ``n`` sits at sample ``n * U``.
    """
    U = filt.upsampling
    x = np.asarray(stream.symbols, dtype=complex)
    count = len(x)
    h = filt.taps
    full_len = count * U + len(h) - 1
    y = np.zeros(full_len + U, dtype=complex)
    for r in range(U):
        branch = h[r::U]
        if len(branch) == 0:
            continue
        out = np.convolve(x, branch)
        y[r: r + U * len(out): U] = out
    d = filt.group_delay
    return ComplexSignal(y[d: d + count * U], stream.symbol_rate_hz * U, stream.symbol_rate_hz)


def upsample_filter_naive(stream: SymbolStream, filt: RrcFilter) -> ComplexSignal:
    """Zero-stuff then full FIR; reference for :func:`upsample_filter`."""
    U = filt.upsampling
    x = np.asarray(stream.symbols, dtype=complex)
    stuffed = np.zeros(len(x) * U, dtype=complex)
    stuffed[::U] = x
    y = np.convolve(stuffed, filt.taps)
    d = filt.group_delay
    return ComplexSignal(y[d: d + len(x) * U], stream.symbol_rate_hz * U, stream.symbol_rate_hz)


def matched_filter_downsample(sig: ComplexSignal, filt: RrcFilter) -> SymbolStream:
    """Matched RRC filtering, group-delay compensation and decimation by U."""
    x = np.asarray(sig.samples, dtype=complex)
    if len(x) < filt.length:
        raise InputError(f"signal of {len(x)} samples is shorter than the {filt.length}-tap filter")
    U = filt.upsampling
    y = np.convolve(x, filt.taps[::-1])
    d = filt.length - 1 - filt.group_delay
    aligned = y[d: d + len(x)]
    symbol_rate = sig.symbol_rate_hz if sig.symbol_rate_hz else sig.sample_rate_hz / U
    return SymbolStream(aligned[::U], None, None, symbol_rate)


def psd_welch(sig: ComplexSignal, segment_len: int = 4096, overlap: float = 0.5) -> Spectrum:
    """Hann-windowed averaged periodogram, two-sided, fftshifted.

    Scaled as a density so that ``sum(psd) * df`` estimates the mean power.
    A 2-D sample array gives one PSD row per signal row.
    """
    x = np.asarray(sig.samples, dtype=complex)
    n = x.shape[-1]
    if segment_len < 8 or segment_len > n:
        raise InputError(f"segment_len={segment_len} invalid for signal of length {n}")
    if not 0 <= overlap < 1:
        raise InputError("overlap must lie in [0, 1)")
    noverlap = int(round(segment_len * overlap))
    f, p = sps.welch(x, fs=sig.sample_rate_hz, window="hann", nperseg=segment_len,
                     noverlap=noverlap, detrend=False, return_onesided=False, scaling="density",
                     axis=-1)
    return Spectrum(np.fft.fftshift(f), np.fft.fftshift(p, axes=-1), sig.sample_rate_hz)
