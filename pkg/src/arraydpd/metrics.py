"""EVM, ACLR, 99 % occupied bandwidth and in-band/OOB power measurement."""

from __future__ import annotations

import logging
from dataclasses import dataclass, asdict

import numpy as np

from .errors import ConfigurationError, InputError, SingularityError
from .waveform import ComplexSignal, Spectrum, SymbolStream, psd_welch

log = logging.getLogger(__name__)

SYMMETRY_TOL_DB = 0.2


@dataclass(frozen=True)
class MetricsReport:
    evm_percent: float
    aclr_db: float
    inband_power_db: float
    oob_power_db: float
    occupied_bw_hz: float

    def __post_init__(self):
        if self.evm_percent < 0:
            raise ConfigurationError("evm_percent must be >= 0")
        if not self.occupied_bw_hz > 0:
            raise ConfigurationError("occupied_bw_hz must be > 0")

    def as_dict(self) -> dict:
        return asdict(self)


def _symbols(x) -> np.ndarray:
    if isinstance(x, SymbolStream):
        return np.asarray(x.symbols, dtype=complex)
    return np.asarray(x, dtype=complex)


def evm(rx_symbols, ref_symbols, equalize: bool = True) -> float:
    """RMS error vector magnitude in percent.

    With ``equalize`` the received symbols are first scaled by the single
    complex LS gain onto the reference, which removes the common gain and
    phase rotation before differencing.
    """
    rx, ref = _symbols(rx_symbols), _symbols(ref_symbols)
    if len(rx) != len(ref):
        raise InputError(f"symbol streams differ in length: {len(rx)} vs {len(ref)}")
    p_ref = float(np.mean(np.abs(ref) ** 2))
    if p_ref == 0:
        raise SingularityError("reference constellation has zero power")
    if equalize:
        p_rx = np.vdot(rx, rx).real
        if p_rx > 0:
            rx = rx * (np.vdot(rx, ref) / p_rx)
    p_err = float(np.mean(np.abs(rx - ref) ** 2))
    return float(np.sqrt(p_err / p_ref) * 100)


def _as_spectrum(x) -> Spectrum:
    if isinstance(x, Spectrum):
        return x
    if isinstance(x, ComplexSignal):
        return psd_welch(x)
    raise InputError(f"expected a Spectrum or ComplexSignal, got {type(x).__name__}")


def occupied_bandwidth_99(spec: Spectrum, fraction: float = 0.99) -> tuple[float, float]:
    """Smallest band symmetric about the power centroid holding ``fraction`` of the power."""
    f, p = spec.freqs_hz, np.asarray(spec.psd, dtype=float)
    total = p.sum()
    df = spec.bin_width_hz
    if total <= 0:
        return (-df / 2, df / 2)
    fc = float(np.sum(f * p) / total)
    dist = np.abs(f - fc)
    order = np.argsort(dist, kind="stable")
    cum = np.cumsum(p[order])
    idx = int(np.searchsorted(cum, fraction * total * (1 - 1e-12)))
    idx = min(idx, len(order) - 1)
    # widen to the whole tie group at the boundary distance
    half = float(dist[order[idx]])
    half = float(np.max(dist[dist <= half + 1e-9 * df])) + df / 2
    return (fc - half, fc + half)


def _band_power(spec: Spectrum, lo: float, hi: float):
    f = spec.freqs_hz
    mask = (f >= lo) & (f < hi)
    p = np.sum(spec.psd[..., mask], axis=-1) * spec.bin_width_hz
    return float(p) if np.ndim(p) == 0 else p


def adjacent_bands(intended_band, adjacent_offset_hz=None):
    """Left/right bands of the intended width, centred ``adjacent_offset_hz`` away.

    Without an offset the adjacent bands start exactly at the intended
    band edges.
    """
    lo, hi = intended_band
    width = hi - lo
    offset = width if adjacent_offset_hz is None else adjacent_offset_hz
    return (lo - offset, hi - offset), (lo + offset, hi + offset)


def _check_span(spec: Spectrum, bands):
    nyq = spec.sample_rate_hz / 2 if spec.sample_rate_hz else np.max(np.abs(spec.freqs_hz))
    for lo, hi in bands:
        if lo < -nyq - 1e-6 or hi > nyq + 1e-6:
            raise ConfigurationError(
                f"adjacent band [{lo / 1e6:.2f}, {hi / 1e6:.2f}] MHz exceeds the Nyquist span +/-{nyq / 1e6:.2f} MHz")


@dataclass(frozen=True)
class AclrResult:
    left_db: float
    right_db: float
    aclr_db: float

    @property
    def asymmetry_db(self) -> float:
        return abs(self.left_db - self.right_db)


def aclr_sides(signal, intended_band, adjacent_offset_hz=None) -> AclrResult:
    spec = _as_spectrum(signal)
    left, right = adjacent_bands(intended_band, adjacent_offset_hz)
    _check_span(spec, (left, right))
    p_in = _band_power(spec, *intended_band)
    p_l, p_r = _band_power(spec, *left), _band_power(spec, *right)
    with np.errstate(divide="ignore", invalid="ignore"):
        l_db = 10 * np.log10(p_in / p_l)
        r_db = 10 * np.log10(p_in / p_r)
        mean_db = 10 * np.log10(p_in / (0.5 * (p_l + p_r)))
    return AclrResult(float(l_db), float(r_db), float(mean_db))


def aclr(signal, intended_band, adjacent_offset_hz=None, check_symmetry: bool = False) -> float:
    """Intended-band power over mean adjacent-band power, in dB.

    ``check_symmetry`` raises when the two sides differ by more than 0.2 dB,
    which memoryless nonlinearities should never produce.
    """
    res = aclr_sides(signal, intended_band, adjacent_offset_hz)
    if res.asymmetry_db > SYMMETRY_TOL_DB:
        msg = f"ACLR sides differ by {res.asymmetry_db:.2f} dB"
        if check_symmetry:
            raise InputError(msg)
        log.debug(msg)
    return res.aclr_db


def band_powers(spec, intended_band, adjacent_offset_hz=None, reference_db: float = 0.0):
    """``(inband_db, oob_db)``; OOB is the mean of the two adjacent bands.

    Both are reported relative to ``reference_db``.  A silent signal gives
    ``-inf`` for both.  A multi-row spectrum gives arrays.
    """
    spec = _as_spectrum(spec)
    left, right = adjacent_bands(intended_band, adjacent_offset_hz)
    _check_span(spec, (left, right))
    p_in = _band_power(spec, *intended_band)
    p_oob = 0.5 * (_band_power(spec, *left) + _band_power(spec, *right))
    with np.errstate(divide="ignore"):
        in_db = 10 * np.log10(p_in) - reference_db
        oob_db = 10 * np.log10(p_oob) - reference_db
    if np.ndim(in_db) == 0:
        return float(in_db), float(oob_db)
    return in_db, oob_db
