"""Flat Rayleigh array channels, phase-only MF precoding and OTA combining."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .pa import PaBank, apply_pa
from .waveform import ComplexSignal


@dataclass(frozen=True)
class ChannelRealization:
    gains: np.ndarray
    seed: int | None = None

    def __len__(self) -> int:
        return len(self.gains)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["re", "im"])
            for h in self.gains:
                w.writerow([repr(float(h.real)), repr(float(h.imag))])

    @classmethod
    def from_csv(cls, path) -> "ChannelRealization":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0] + 1j * data[:, 1])


@dataclass(frozen=True)
class Precoder:
    weights: np.ndarray

    def __len__(self) -> int:
        return len(self.weights)


def draw_rayleigh_channel(M: int, seed: int | np.random.Generator = 0) -> ChannelRealization:
    """i.i.d. CN(0, 1) gains."""
    if M < 1:
        raise ConfigurationError("M must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    g = (rng.standard_normal(M) + 1j * rng.standard_normal(M)) / np.sqrt(2)
    return ChannelRealization(g, None if isinstance(seed, np.random.Generator) else seed)


def mf_phase_precoder(channel: ChannelRealization) -> Precoder:
    """``w_m = exp(-j angle(h_m))``; a zero gain gets ``w_m = 1``."""
    h = np.asarray(channel.gains, dtype=complex)
    w = np.ones_like(h)
    nz = h != 0
    w[nz] = np.conj(h[nz]) / np.abs(h[nz])
    return Precoder(w)


def perturb_channel(channel: ChannelRealization, mag_jitter: float = 0.0, phase_jitter_rad: float = 0.0,
                    seed: int = 0) -> ChannelRealization:
    """Channel estimate with multiplicative log-normal magnitude and Gaussian phase errors."""
    if mag_jitter == 0 and phase_jitter_rad == 0:
        return channel
    rng = np.random.default_rng(seed)
    M = len(channel)
    err = np.exp(mag_jitter * rng.standard_normal(M) + 1j * phase_jitter_rad * rng.standard_normal(M))
    return ChannelRealization(channel.gains * err, channel.seed)


def _check_dims(*sizes):
    if len(set(sizes)) != 1:
        raise ConfigurationError(f"dimension mismatch between bank/precoder/channel: {sizes}")


def pa_outputs(s, precoder: Precoder, bank: PaBank) -> np.ndarray:
    """``(M, N)`` array of per-antenna PA outputs ``y_m = PA_m(w_m s)``."""
    _check_dims(len(precoder), len(bank))
    x = s.samples if isinstance(s, ComplexSignal) else np.asarray(s, dtype=complex)
    return np.stack([apply_pa(model, w * x) for model, w in zip(bank, precoder.weights)])


def combine(outputs: np.ndarray, channel: ChannelRealization) -> np.ndarray:
    """Over-the-air sum ``sum_m h_m y_m`` for one or several ``(R, M)`` channels."""
    h = np.asarray(channel.gains if isinstance(channel, ChannelRealization) else channel)
    if h.shape[-1] != outputs.shape[0]:
        raise ConfigurationError(f"dimension mismatch: {h.shape[-1]} gains vs {outputs.shape[0]} branches")
    return h @ outputs


def transmit_and_combine(s: ComplexSignal, precoder: Precoder, bank: PaBank,
                         channel: ChannelRealization) -> ComplexSignal:
    """Noise-free received signal ``r(n) = sum_m h_m PA_m(w_m s(n))``."""
    _check_dims(len(precoder), len(bank), len(channel))
    return s.with_samples(combine(pa_outputs(s, precoder, bank), channel))
