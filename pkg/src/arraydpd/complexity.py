"""Closed-form FLOP counts for the stream-level DPD (proposed and reduced
learning) and a per-branch DPD reference.

Transmission counts are per symbol times ``N``; learning counts cover one
orthogonalization, PA estimation and ``K`` learning iterations over blocks
of ``N`` samples.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace

from .errors import ConfigurationError

ARCHITECTURES = ("proposed", "reduced", "reference")
GFLOP = 1e9


@dataclass(frozen=True)
class FlopParams:
    M: int = 32
    Q: int = 9
    K: int = 20
    N: int = 100_000
    U: int = 6
    L: int = 32

    def __post_init__(self):
        for name in ("M", "Q", "K", "N", "U", "L"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ConfigurationError(f"{name} must be an integer >= 1, got {v}")
        if self.Q % 2 == 0:
            raise ConfigurationError(f"Q must be odd, got {self.Q}")


PRESETS = {"table1": FlopParams(M=32, Q=9, K=20, N=100_000, U=6, L=32)}


@dataclass(frozen=True)
class FlopReport:
    arch: str
    stages: dict = field(default_factory=dict)
    transmission_stages: tuple = ()
    learning_stages: tuple = ()

    @property
    def transmission_gflop(self) -> float:
        return sum(self.stages[s] for s in self.transmission_stages) / GFLOP

    @property
    def learning_gflop(self) -> float:
        return sum(self.stages[s] for s in self.learning_stages) / GFLOP

    def merged(self, other: "FlopReport") -> "FlopReport":
        if other.arch != self.arch:
            raise ConfigurationError("cannot merge reports of different architectures")
        return FlopReport(self.arch, {**self.stages, **other.stages},
                          self.transmission_stages + other.transmission_stages,
                          self.learning_stages + other.learning_stages)


def _check_arch(arch: str):
    if arch not in ARCHITECTURES:
        raise ConfigurationError(f"unknown architecture {arch!r}; expected one of {ARCHITECTURES}")


def cholesky_flops(p: FlopParams) -> float:
    """Gram accumulation plus Cholesky for ``(Q+1)/2`` basis functions over ``N`` samples."""
    n = (p.Q + 1) / 2
    return 4 * (p.N + (p.Q + 1) / 6) * n ** 2


def flops_transmission(arch: str, p: FlopParams) -> FlopReport:
    _check_arch(arch)
    filt = 2 * (2 * p.L - p.U)
    basis = p.Q + 2
    main = 4 * (p.Q - 1)
    if arch == "reference":
        per_symbol = {"upsampling_filtering": filt * p.M, "basis_generation": basis * p.M,
                      "dpd_main": main * p.M, "spatial_precoder": 6 * p.M}
    else:
        per_symbol = {"upsampling_filtering": filt, "basis_generation": basis,
                      "dpd_main": main, "spatial_precoder": 6 * p.M * p.U}
    stages = {k: float(v * p.N) for k, v in per_symbol.items()}
    return FlopReport(arch, stages, tuple(stages), ())


def flops_learning(arch: str, p: FlopParams) -> FlopReport:
    _check_arch(arch)
    chol = cholesky_flops(p)
    N, K, M, Q = p.N, p.K, p.M, p.Q
    if arch == "proposed":
        stages = {"orthogonalization": chol, "pa_estimation": M * chol,
                  "dpd_learning": 92 * K * N + M * N * K * (Q + 54) + 2 * (Q - 1) * K}
    elif arch == "reduced":
        stages = {"orthogonalization": chol, "pa_estimation": chol,
                  "dpd_learning": 92 * K * N + N * K * (Q + 40) + 2 * (Q - 1) * K}
    else:
        # one orthogonalization per branch, no PA models needed
        stages = {"orthogonalization": M * chol, "pa_estimation": 0.0,
                  "dpd_learning": M * K * (92 * N + 2 * (Q - 1))}
    stages = {k: float(v) for k, v in stages.items()}
    return FlopReport(arch, stages, (), tuple(stages))


def flops_report(arch: str, p: FlopParams) -> FlopReport:
    return flops_transmission(arch, p).merged(flops_learning(arch, p))


def complexity_table(p: FlopParams) -> list[FlopReport]:
    return [flops_report(a, p) for a in ARCHITECTURES]


def complexity_sweep(base: FlopParams | None = None, **ranges) -> list[dict]:
    """Totals for every architecture as each named parameter is swept.

    ``crossover`` marks a row where the proposed learning total moves to
    the other side of the reference total compared with the previous value.
    """
    if not ranges:
        raise ConfigurationError("complexity_sweep needs at least one swept parameter")
    base = base or PRESETS["table1"]
    rows = []
    for name, values in ranges.items():
        if name not in ("M", "Q", "K", "N", "U", "L"):
            raise ConfigurationError(f"cannot sweep unknown parameter {name!r}")
        prev_sign = None
        for v in values:
            p = replace(base, **{name: v})
            reps = {r.arch: r for r in complexity_table(p)}
            sign = reps["proposed"].learning_gflop < reps["reference"].learning_gflop
            row = {"param": name, "value": v}
            for a in ARCHITECTURES:
                row[f"{a}_tx_gflop"] = reps[a].transmission_gflop
                row[f"{a}_learn_gflop"] = reps[a].learning_gflop
            row["reference_over_reduced_learn"] = reps["reference"].learning_gflop / reps["reduced"].learning_gflop
            row["crossover"] = prev_sign is not None and sign != prev_sign
            prev_sign = sign
            rows.append(row)
    return rows


def format_table(reports: list[FlopReport]) -> str:
    names = []
    for r in reports:
        for s in r.stages:
            if s not in names:
                names.append(s)
    head = ["stage"] + [r.arch for r in reports]
    body = [[s] + [f"{r.stages.get(s, 0.0) / GFLOP:.4f}" for r in reports] for s in names]
    body.append(["transmission_gflop"] + [f"{r.transmission_gflop:.4f}" for r in reports])
    body.append(["learning_gflop"] + [f"{r.learning_gflop:.4f}" for r in reports])
    widths = [max(len(row[i]) for row in [head] + body) for i in range(len(head))]
    lines = []
    for row in [head] + body:
        cells = [row[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(row[1:], widths[1:])]
        lines.append("  ".join(cells))
    return "\n".join(lines) + "\n"


def table_csv(reports: list[FlopReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["arch", "stage", "kind", "gflop"])
    for r in reports:
        for s, v in r.stages.items():
            kind = "transmission" if s in r.transmission_stages else "learning"
            w.writerow([r.arch, s, kind, f"{v / GFLOP:.9f}"])
        w.writerow([r.arch, "total", "transmission", f"{r.transmission_gflop:.9f}"])
        w.writerow([r.arch, "total", "learning", f"{r.learning_gflop:.9f}"])
    return buf.getvalue()


def sweep_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    if not rows:
        return ""
    w = csv.writer(buf, lineterminator="\n")
    cols = list(rows[0])
    w.writerow(cols)
    for r in rows:
        w.writerow([f"{r[c]:.9f}" if isinstance(r[c], float) else r[c] for c in cols])
    return buf.getvalue()
