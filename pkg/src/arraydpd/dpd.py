"""Injection-type stream-level DPD and its decorrelation-based learning.

A single predistorter sits in front of the spatial precoder:

    s~(n) = s_u(n) + sum_{q=3,5,..,Q} conj(beta_q) u_q(n),   u_q = |s_u|^(q-1) s_u

Coefficients are learned from a transmitter-local replica of the signal
seen by the intended receiver, either through every estimated PA and
channel gain (full replica) or through one equivalent array PA fed with
the unprecoded stream (reduced replica).

Learning runs in an orthonormalized basis.  The transform comes from the
Cholesky factor of the sample Gram matrix of ``[u_1, u_3, ..., u_Q]``, so
the correlation regressors ``ut_3 .. ut_Q`` are orthonormal and orthogonal
to ``s_u``.  The injection uses the same combinations with the ``u_1``
component removed; because ``ut_q`` is orthogonal to ``u_1`` that removal
leaves the regressor/injection cross-Gram equal to the identity, and a
single scalar step size serves every order.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np

from .channel import ChannelRealization, Precoder, combine, pa_outputs
from .errors import ConfigurationError, DivergenceError, SingularityError
from .linalg import cholesky_lower
from .pa import PaBank, PaModel, apply_pa, snl_regressors
from .waveform import ComplexSignal

log = logging.getLogger(__name__)

Domain = Literal["raw", "orthogonalized"]


@dataclass(frozen=True)
class BasisMatrix:
    """Columns ``u_p(n)`` for odd ``p`` in ``orders``."""

    columns: np.ndarray
    orders: tuple

    @property
    def n_samples(self) -> int:
        return self.columns.shape[0]

    def column(self, p: int) -> np.ndarray:
        return self.columns[:, self.orders.index(p)]


@dataclass(frozen=True)
class OrthoTransform:
    """Lower-triangular ``T`` with orthonormal columns ``U @ T.T``."""

    matrix: np.ndarray
    inverse: np.ndarray
    orders: tuple

    def apply(self, raw_columns: np.ndarray) -> np.ndarray:
        return raw_columns @ self.matrix.T

    def invert(self, ortho_columns: np.ndarray) -> np.ndarray:
        return ortho_columns @ self.inverse.T

    @property
    def nonlinear_block(self) -> np.ndarray:
        """Rows/columns of ``T`` for orders >= 3."""
        return self.matrix[1:, 1:]

    def to_dict(self) -> dict:
        return {
            "orders": list(self.orders),
            "re": self.matrix.real.tolist(),
            "im": self.matrix.imag.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OrthoTransform":
        m = np.array(d["re"]) + 1j * np.array(d["im"])
        return cls(m, np.linalg.inv(m), tuple(d["orders"]))


@dataclass(frozen=True)
class DpdCoefficients:
    """Coefficients ``beta_q`` for odd ``q = 3..Q`` in a declared basis domain.

    In the orthogonalized domain the injected signal is
    ``sum_q conj(beta_q) v_q`` with ``v_q`` the ``u_1``-free part of the
    orthonormal regressor ``ut_q``.
    """

    beta: np.ndarray
    domain: Domain = "raw"
    transform: OrthoTransform | None = None

    def __post_init__(self):
        object.__setattr__(self, "beta", np.atleast_1d(np.asarray(self.beta, dtype=complex)))
        if self.domain not in ("raw", "orthogonalized"):
            raise ConfigurationError(f"unknown basis domain {self.domain!r}")
        if self.domain == "orthogonalized":
            if self.transform is None:
                raise ConfigurationError("orthogonalized coefficients need their transform")
            if len(self.transform.orders) != len(self.beta) + 1:
                raise ConfigurationError("transform size does not match coefficient count")

    @property
    def Q(self) -> int:
        return 2 * len(self.beta) + 1

    @property
    def orders(self) -> tuple:
        return tuple(range(3, self.Q + 1, 2))

    def to_raw(self) -> "DpdCoefficients":
        if self.domain == "raw":
            return self
        beta = self.transform.nonlinear_block.conj().T @ self.beta
        return DpdCoefficients(beta, "raw")

    def to_orthogonalized(self, transform: OrthoTransform) -> "DpdCoefficients":
        raw = self.to_raw().beta
        if len(transform.orders) != len(raw) + 1:
            raise ConfigurationError("transform size does not match coefficient count")
        gamma = np.linalg.solve(transform.nonlinear_block.conj().T, raw)
        return DpdCoefficients(gamma, "orthogonalized", transform)

    def to_dict(self) -> dict:
        d = {
            "domain": self.domain,
            "orders": list(self.orders),
            "beta_re": self.beta.real.tolist(),
            "beta_im": self.beta.imag.tolist(),
        }
        if self.transform is not None:
            d["transform"] = self.transform.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DpdCoefficients":
        t = OrthoTransform.from_dict(d["transform"]) if "transform" in d else None
        beta = np.array(d["beta_re"]) + 1j * np.array(d["beta_im"])
        return cls(beta, d["domain"], t)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "DpdCoefficients":
        return cls.from_dict(json.loads(text))

    @classmethod
    def zeros(cls, Q: int) -> "DpdCoefficients":
        return cls(np.zeros((Q - 1) // 2, dtype=complex))


@dataclass(frozen=True)
class LearnConfig:
    iterations: int = 20
    block_size: int = 100_000
    step_size: float = 1.0
    Q: int = 9
    mode: Literal["full", "reduced"] = "reduced"

    def __post_init__(self):
        if self.Q < 3 or self.Q % 2 == 0:
            raise ConfigurationError("Q must be an odd integer >= 3")
        if self.iterations < 1:
            raise ConfigurationError("iterations K must be >= 1")
        if self.block_size < 100 * (self.Q - 1) // 2:
            raise ConfigurationError(f"block_size must be >= {100 * (self.Q - 1) // 2} for Q={self.Q}")
        if not self.step_size > 0:
            raise ConfigurationError("step_size must be positive")
        if self.mode not in ("full", "reduced"):
            raise ConfigurationError(f"unknown learning mode {self.mode!r}")


def _samples(x) -> np.ndarray:
    if isinstance(x, ComplexSignal):
        return np.asarray(x.samples, dtype=complex)
    return np.asarray(x, dtype=complex)


def _check_order(Q: int):
    if Q < 1 or Q % 2 == 0:
        raise ConfigurationError(f"basis order must be an odd integer >= 1, got {Q}")


def snl_basis(s, Q: int) -> BasisMatrix:
    _check_order(Q)
    return BasisMatrix(snl_regressors(_samples(s), Q), tuple(range(1, Q + 1, 2)))


def orthogonalize(basis: BasisMatrix) -> tuple[BasisMatrix, OrthoTransform]:
    """Cholesky whitening of the basis columns.

    With sample Gram ``G = U^H U / N = L L^H`` the orthonormal columns are
    ``U L^{-H}``; in row form that is ``T = conj(L^{-1})``, lower triangular.
    """
    n, k = basis.columns.shape
    if n < 10 * k:
        raise ConfigurationError(f"need at least {10 * k} samples to orthogonalize {k} columns")
    gram = basis.columns.conj().T @ basis.columns / n
    low = cholesky_lower(gram, labels=list(basis.orders))
    low_inv = np.linalg.inv(low)
    t = np.tril(low_inv.conj())
    transform = OrthoTransform(t, np.tril(low.conj()), basis.orders)
    return BasisMatrix(transform.apply(basis.columns), basis.orders), transform


def injection_signal(s_u, dpd: DpdCoefficients) -> np.ndarray:
    """Second term of the predistorter output."""
    s = _samples(s_u)
    if dpd.domain == "raw":
        cols = snl_regressors(s, dpd.Q)[:, 1:]
        return cols @ np.conj(dpd.beta)
    t_nl = dpd.transform.nonlinear_block
    cols = snl_regressors(s, dpd.Q)[:, 1:]
    return (cols @ t_nl.T) @ np.conj(dpd.beta)


def predistort(s_u, dpd: DpdCoefficients):
    s = _samples(s_u)
    out = s + injection_signal(s, dpd)
    return s_u.with_samples(out) if isinstance(s_u, ComplexSignal) else out


def closed_form_beta(alpha_tot) -> DpdCoefficients:
    """``beta_p^* = -alpha_p,tot / alpha_1,tot`` for odd ``p >= 3``."""
    a = np.asarray(alpha_tot, dtype=complex)
    if a.size == 0 or a[0] == 0:
        raise SingularityError("alpha_1,tot is zero: linear response cannot carry the injection")
    return DpdCoefficients(np.conj(-a[1:] / a[0]), "raw")


def combined_alpha(bank: PaBank, weights=None) -> np.ndarray:
    """``alpha_p,tot = sum_m alpha_p,m * weight_m`` (weights default to 1)."""
    c = bank.coefficient_matrix()
    if weights is None:
        return c.sum(axis=0)
    return np.asarray(weights) @ c


def residual_nonlinear_coefficients(alpha_tot, dpd: DpdCoefficients) -> np.ndarray:
    """Coefficients of ``u_p``, ``p >= 3``, at the receiver in the low-power analysis model.

    Returns ``alpha_p,tot + conj(beta_p) * alpha_1,tot`` for odd ``p`` up to
    ``max(P, Q)``; an order missing on either side contributes zero.
    """
    a = np.asarray(alpha_tot, dtype=complex)
    b = np.conj(dpd.to_raw().beta)
    n = max(len(a) - 1, len(b))
    out = np.zeros(n, dtype=complex)
    out[: len(a) - 1] += a[1:]
    out[: len(b)] += b * a[0]
    return out


def feedback_replica_full(s_tilde, precoder: Precoder, pa_estimates: PaBank,
                          channel_estimates: ChannelRealization):
    """``z(n) = sum_m h^e_m PA^e_m(w_m s~(n))``.

    With ``w`` matched to ``h^e`` this is ``sum_m |h^e_m| PA^e_m(s~(n))``.
    """
    s = _samples(s_tilde)
    z = combine(pa_outputs(s, precoder, pa_estimates), channel_estimates)
    return s_tilde.with_samples(z) if isinstance(s_tilde, ComplexSignal) else z


def feedback_replica_reduced(s_tilde, equiv: PaModel):
    """Unprecoded stream through the single equivalent array PA."""
    return apply_pa(equiv, s_tilde)


class FullReplica:
    """Replica provider backed by per-branch PA and channel estimates."""

    mode = "full"

    def __init__(self, precoder: Precoder, pa_estimates: PaBank, channel_estimates: ChannelRealization):
        self.precoder = precoder
        self.pa_estimates = pa_estimates
        self.channel_estimates = channel_estimates

    def __call__(self, s_tilde: np.ndarray) -> np.ndarray:
        return feedback_replica_full(s_tilde, self.precoder, self.pa_estimates, self.channel_estimates)


class ReducedReplica:
    """Replica provider backed by one equivalent array PA."""

    mode = "reduced"

    def __init__(self, equiv: PaModel):
        self.equiv = equiv

    def __call__(self, s_tilde: np.ndarray) -> np.ndarray:
        return feedback_replica_reduced(s_tilde, self.equiv)


def estimate_linear_gain(z, s_u) -> complex:
    """Least-squares gain ``G = <s_u, z> / <s_u, s_u>``."""
    zs, ss = _samples(z), _samples(s_u)
    if len(zs) != len(ss):
        raise ConfigurationError("z and s_u lengths differ")
    energy = np.vdot(ss, ss).real
    if energy == 0:
        raise SingularityError("s_u has zero energy")
    return complex(np.vdot(ss, zs) / energy)


@dataclass
class LearnTrace:
    residual_corr_norm: list = field(default_factory=list)
    residual_corr: list = field(default_factory=list)
    gain: list = field(default_factory=list)
    beta_raw: list = field(default_factory=list)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            self.write_csv(fh)

    def write_csv(self, fh, prefix_cols=None, header: bool = True) -> None:
        prefix_cols = prefix_cols or {}
        w = csv.writer(fh, lineterminator="\n")
        n_beta = len(self.beta_raw[0]) if self.beta_raw else 0
        head = list(prefix_cols) + ["iteration", "residual_corr_norm"]
        for i in range(n_beta):
            q = 2 * i + 3
            head += [f"beta_{q}_re", f"beta_{q}_im"]
        if header:
            w.writerow(head)
        for k, (rho, beta) in enumerate(zip(self.residual_corr_norm, self.beta_raw)):
            row = [str(v) for v in prefix_cols.values()] + [k, f"{rho:.9e}"]
            for b in beta:
                row += [f"{b.real:.12e}", f"{b.imag:.12e}"]
            w.writerow(row)


@dataclass
class LearnResult:
    coefficients: DpdCoefficients
    trace: LearnTrace
    final_residual_corr: np.ndarray
    transform: OrthoTransform

    @property
    def final_residual_corr_max(self) -> float:
        return float(np.max(self.final_residual_corr))


def _residual_correlation(ut_nl: np.ndarray, e: np.ndarray):
    n = len(e)
    c = ut_nl.conj().T @ e / n
    e_rms = np.sqrt(np.mean(np.abs(e) ** 2))
    rho = np.abs(c) / e_rms if e_rms > 0 else np.zeros(len(c))
    return c, rho


def decorrelation_learn(s_u, replica: Callable[[np.ndarray], np.ndarray], cfg: LearnConfig,
                        divergence_floor: float = 1e-9) -> LearnResult:
    """Block-adaptive decorrelation learning over ``cfg.iterations`` blocks.

    Per iteration: predistort the block, form the replica ``z``, take
    ``e = z - G s_u`` with ``G`` the current LS linear gain, correlate ``e``
    with the orthonormal regressors and step the coefficients against the
    correlation, normalized by ``G``.  Blocks cycle through ``s_u`` in
    chunks of ``cfg.block_size`` samples.
    """
    s_all = _samples(s_u)
    N = min(cfg.block_size, len(s_all))
    if N < 100 * (cfg.Q - 1) // 2:
        raise ConfigurationError(f"s_u too short for Q={cfg.Q}: {len(s_all)} samples")
    n_blocks = len(s_all) // N

    first = s_all[:N]
    _, transform = orthogonalize(snl_basis(first, cfg.Q))
    t_full = transform.matrix
    t_nl = transform.nonlinear_block

    def block_views(k):
        s = s_all[(k % n_blocks) * N: (k % n_blocks + 1) * N]
        raw = snl_regressors(s, cfg.Q)
        ut_nl = raw @ t_full[1:, :].T
        v = raw[:, 1:] @ t_nl.T
        return s, ut_nl, v

    gamma = np.zeros((cfg.Q - 1) // 2, dtype=complex)
    trace = LearnTrace()
    growth = 0
    prev = None
    cache = {}
    for k in range(cfg.iterations):
        key = k % n_blocks
        if key not in cache:
            cache = {key: block_views(k)}
        s, ut_nl, v = cache[key]
        s_tilde = s + v @ np.conj(gamma)
        z = replica(s_tilde)
        G = estimate_linear_gain(z, s)
        e = z - G * s
        c, rho = _residual_correlation(ut_nl, e)
        rho_norm = float(np.linalg.norm(rho))
        trace.residual_corr_norm.append(rho_norm)
        trace.residual_corr.append(rho)
        trace.gain.append(G)
        trace.beta_raw.append(t_nl.conj().T @ gamma)
        if not np.isfinite(rho_norm) or not np.isfinite(G):
            raise DivergenceError("non-finite residual correlation; reduce step_size", trace)
        if prev is not None and rho_norm > prev and rho_norm > divergence_floor:
            growth += 1
            if growth >= 3:
                raise DivergenceError(
                    f"residual correlation grew for 3 consecutive iterations (now {rho_norm:.3e}); "
                    f"reduce step_size below {cfg.step_size}", trace)
        else:
            growth = 0
        prev = rho_norm
        gamma = gamma - cfg.step_size * np.conj(c / G)

    s, ut_nl, v = cache[(cfg.iterations - 1) % n_blocks]
    z = replica(s + v @ np.conj(gamma))
    e = z - estimate_linear_gain(z, s) * s
    _, rho_final = _residual_correlation(ut_nl, e)
    log.debug("decorrelation learning done: final max corr %.3e", float(np.max(rho_final)))
    coeffs = DpdCoefficients(gamma, "orthogonalized", transform)
    return LearnResult(coeffs, trace, rho_final, transform)
