"""Clipped odd-order memoryless polynomial PA models.

A model maps ``x -> sum_p alpha_p x |x|^(p-1)`` for odd ``p <= P``.  Inputs
whose magnitude exceeds ``clip_amplitude`` are saturated: the output
magnitude is the polynomial evaluated at ``clip_amplitude`` and the input
phase is kept.  Amplitudes are normalized so that the nominal soft
limiter saturates around 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, InputError, SingularityError, ConditioningError
from .linalg import cholesky_lower, cholesky_solve
from .waveform import ComplexSignal

# Nominal soft-limiter used to build synthetic PA banks.
NOMINAL_AMPM_DEG = 5.0
NOMINAL_CLIP = 0.865
# Per-coefficient shape perturbation.  Kept small: any branch-to-branch
# difference in normalized nonlinearity leaves an incoherent residual at
# victim receivers that can exceed the no-DPD level there.
DEFAULT_SPREAD = 0.001
# Per-branch complex gain perturbation common to all coefficients.
DEFAULT_GAIN_SPREAD = 0.1


@dataclass(frozen=True)
class PaModel:
    coeffs: np.ndarray
    clip_amplitude: float = np.inf

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.coeffs, dtype=complex))
        object.__setattr__(self, "coeffs", c)
        if c.size == 0 or c[0] == 0:
            raise ConfigurationError("linear coefficient alpha_1 must be nonzero")
        if not self.clip_amplitude > 0:
            raise ConfigurationError("clip_amplitude must be positive")

    @property
    def order(self) -> int:
        return 2 * len(self.coeffs) - 1

    @property
    def orders(self) -> np.ndarray:
        return np.arange(1, self.order + 1, 2)

    def gain(self, amplitude):
        """Complex gain ``sum_p alpha_p a^(p-1)`` at real amplitude(s) ``a``."""
        a2 = np.asarray(amplitude, dtype=float) ** 2
        g = np.zeros(np.shape(a2), dtype=complex)
        for c in self.coeffs[::-1]:
            g = g * a2 + c
        return g


@dataclass(frozen=True)
class PaBank:
    models: tuple

    def __post_init__(self):
        models = tuple(self.models)
        object.__setattr__(self, "models", models)
        if not models:
            raise ConfigurationError("PA bank is empty")
        orders = {m.order for m in models}
        if len(orders) > 1:
            raise ConfigurationError(f"mixed PA orders in bank: {sorted(orders)}")

    def __len__(self) -> int:
        return len(self.models)

    def __iter__(self):
        return iter(self.models)

    def __getitem__(self, i) -> PaModel:
        return self.models[i]

    @property
    def order(self) -> int:
        return self.models[0].order

    def coefficient_matrix(self) -> np.ndarray:
        """``(M, (P+1)/2)`` array of coefficients."""
        return np.array([m.coeffs for m in self.models])

    def to_text(self) -> str:
        """Whitespace table: one row per branch, Re/Im per order, then clip level."""
        head = []
        for p in self.models[0].orders:
            head += [f"re_a{p}", f"im_a{p}"]
        lines = ["# " + " ".join(head + ["clip"])]
        for m in self.models:
            vals = []
            for c in m.coeffs:
                vals += [repr(float(c.real)), repr(float(c.imag))]
            vals.append(repr(float(m.clip_amplitude)))
            lines.append(" ".join(vals))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "PaBank":
        models = []
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            vals = [float(v) for v in line.split()]
            if len(vals) % 2 != 1:
                raise InputError(f"malformed PA table row: {line!r}")
            re, im = np.array(vals[:-1:2]), np.array(vals[1:-1:2])
            models.append(PaModel(re + 1j * im, vals[-1]))
        return cls(tuple(models))


def _samples(x):
    if isinstance(x, ComplexSignal):
        return np.asarray(x.samples, dtype=complex)
    return np.asarray(x, dtype=complex)


def _wrap(like, samples):
    if isinstance(like, ComplexSignal):
        return like.with_samples(samples)
    return samples


def apply_pa(model: PaModel, x):
    """PA output for a ComplexSignal or a plain complex array."""
    s = _samples(x)
    a = np.abs(s)
    if np.isfinite(model.clip_amplitude) and np.any(a > model.clip_amplitude):
        clipped = np.minimum(a, model.clip_amplitude)
        scale = np.divide(clipped, a, out=np.ones_like(a), where=a > 0)
        y = model.gain(clipped) * s * scale
    else:
        y = model.gain(a) * s
    return _wrap(x, y)


def nominal_pa(P: int = 9, ampm_deg: float = NOMINAL_AMPM_DEG, clip: float = NOMINAL_CLIP) -> PaModel:
    """Odd-order LS fit of a tanh AM/AM with saturating AM/PM.

    The fit runs over ``[0, clip]``; beyond that the model is clipped.
    """
    if P < 1 or P % 2 == 0:
        raise ConfigurationError("P must be an odd integer >= 1")
    a = np.linspace(1e-3, clip, 400)
    phase = np.deg2rad(ampm_deg) * a ** 2 / (1 + a ** 2) * 2
    target = np.tanh(a) * np.exp(1j * phase)
    powers = np.arange(1, P + 1, 2)
    basis = a[:, None] ** powers[None, :]
    coeffs, *_ = np.linalg.lstsq(basis, target, rcond=None)
    return PaModel(coeffs, clip)


def synthesize_pa_bank(M: int, P: int = 9, spread: float = DEFAULT_SPREAD, seed: int = 0,
                       nominal: PaModel | None = None, gain_spread: float = DEFAULT_GAIN_SPREAD) -> PaBank:
    """Bank of ``M`` perturbed copies of the nominal model.

    Each coefficient is multiplied by ``1 + spread * xi`` with ``xi`` drawn
    uniformly from the unit complex disk, independently per branch and order.
    Each branch is further scaled by ``1 + gain_spread * zeta`` (``zeta``
    again uniform on the unit disk), a complex gain difference that leaves
    the normalized nonlinearity untouched.
    """
    if M < 1:
        raise ConfigurationError("M must be >= 1")
    if spread < 0 or gain_spread < 0:
        raise ConfigurationError("spread must be non-negative")
    base = nominal if nominal is not None else nominal_pa(P)
    if base.order != P:
        raise ConfigurationError(f"nominal model order {base.order} != P={P}")
    rng = np.random.default_rng(seed)
    n = len(base.coeffs)
    radius = np.sqrt(rng.uniform(0, 1, size=(M, n)))
    angle = rng.uniform(0, 2 * np.pi, size=(M, n))
    factors = 1 + spread * radius * np.exp(1j * angle)
    g_radius = np.sqrt(rng.uniform(0, 1, size=(M, 1)))
    g_angle = rng.uniform(0, 2 * np.pi, size=(M, 1))
    factors = factors * (1 + gain_spread * g_radius * np.exp(1j * g_angle))
    return PaBank(tuple(PaModel(base.coeffs * f, base.clip_amplitude) for f in factors))


def snl_regressors(x: np.ndarray, P: int) -> np.ndarray:
    """``(N, (P+1)/2)`` matrix with columns ``x |x|^(p-1)``."""
    a2 = np.abs(x) ** 2
    cols = [x]
    for _ in range((P - 1) // 2):
        cols.append(cols[-1] * a2)
    return np.stack(cols, axis=1)


@dataclass(frozen=True)
class PaFit:
    model: PaModel
    residual_power: float


def identify_pa_ls(x, y, P: int = 9, clip_amplitude: float = np.inf) -> PaFit:
    """Least-squares polynomial fit via Cholesky-factored normal equations."""
    xs, ys = _samples(x), _samples(y)
    if P < 1 or P % 2 == 0:
        raise ConfigurationError("P must be an odd integer >= 1")
    n_coef = (P + 1) // 2
    if len(xs) != len(ys):
        raise InputError("x and y lengths differ")
    if len(xs) < 10 * n_coef:
        raise InputError(f"need at least {10 * n_coef} samples for P={P}")
    phi = snl_regressors(xs, P)
    gram = phi.conj().T @ phi
    rhs = phi.conj().T @ ys
    orders = list(range(1, P + 1, 2))
    try:
        low = cholesky_lower(gram, labels=orders)
    except ConditioningError as exc:
        raise SingularityError(
            f"PA coefficients unidentifiable from order {exc.order} upwards: {exc}") from exc
    alpha = cholesky_solve(low, rhs)
    resid = ys - phi @ alpha
    return PaFit(PaModel(alpha, clip_amplitude), float(np.mean(np.abs(resid) ** 2)))


def equivalent_array_pa(bank: PaBank | Sequence[PaModel]) -> PaModel:
    """Plain coefficient sum over branches; clip level is the bank minimum."""
    if not isinstance(bank, PaBank):
        bank = PaBank(tuple(bank))
    coeffs = bank.coefficient_matrix().sum(axis=0)
    clip = min(m.clip_amplitude for m in bank)
    return PaModel(coeffs, clip)
