"""Monte-Carlo drivers: single link, emission statistics over array sizes
and victims, and robustness of fixed DPD coefficients to channel changes.

Every random quantity is seeded from ``(cfg.seed, tag, M, draw, ...)``
through ``numpy.random.SeedSequence``, so a trial does not depend on
which worker runs it or in what order.  The PA bank models the array
hardware and is fixed per array size; channels and data streams are
drawn per trial.
"""

from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import channel as ch
from . import dpd
from . import metrics as mt
from . import pa
from . import waveform as wf
from .config import ScenarioConfig
from .errors import ConfigurationError, DivergenceError, InputError

log = logging.getLogger(__name__)

_TAG_BANK, _TAG_CHANNEL, _TAG_LEARN, _TAG_EVAL, _TAG_VICTIM, _TAG_REDRAW, _TAG_BAND = range(1, 8)


def derive_seed(cfg: ScenarioConfig, *tags: int) -> int:
    ss = np.random.SeedSequence([int(cfg.seed) & 0xFFFFFFFF, *[int(t) for t in tags]])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


@dataclass(frozen=True)
class DistributionSummary:
    samples: np.ndarray
    p5: float
    p50: float
    p95: float
    hist_counts: np.ndarray
    hist_edges: np.ndarray

    @classmethod
    def from_samples(cls, samples, bins: int = 20) -> "DistributionSummary":
        x = np.asarray(samples, dtype=float)
        x = x[np.isfinite(x)]
        if x.size == 0:
            nan = float("nan")
            return cls(x, nan, nan, nan, np.zeros(0, dtype=int), np.zeros(0))
        p5, p50, p95 = (float(v) for v in np.percentile(x, [5, 50, 95]))
        counts, edges = np.histogram(x, bins=bins)
        return cls(x, p5, p50, p95, counts, edges)

    @property
    def spread(self) -> float:
        return self.p95 - self.p5

    def __len__(self) -> int:
        return len(self.samples)


# --------------------------------------------------------------------------
# building blocks

def rrc_filter(cfg: ScenarioConfig) -> wf.RrcFilter:
    return wf.design_rrc(cfg.rolloff, cfg.rrc_span, cfg.U)


def make_stream(cfg: ScenarioConfig, n_samples: int, seed: int, filt: wf.RrcFilter | None = None):
    """Symbols and the pulse-shaped stream scaled to RMS amplitude ``cfg.drive``.

    The scale is the analytic one (unit-power symbols through a unit-energy
    filter give mean power ``1/U``), so it does not depend on the draw.
    """
    filt = filt or rrc_filter(cfg)
    count = math.ceil(n_samples / cfg.U)
    sym = wf.gen_qam_symbols(count, cfg.modulation_order, seed, cfg.symbol_rate_hz)
    sig = wf.upsample_filter(sym, filt)
    scaled = sig.samples[:n_samples] * (cfg.drive * math.sqrt(cfg.U))
    return sym, sig.with_samples(scaled)


def make_bank(cfg: ScenarioConfig, M: int) -> pa.PaBank:
    nominal = pa.nominal_pa(cfg.P, cfg.ampm_deg, cfg.pa_clip)
    return pa.synthesize_pa_bank(M, cfg.P, cfg.pa_spread, derive_seed(cfg, _TAG_BANK, M),
                                 nominal=nominal, gain_spread=cfg.pa_gain_spread)


def intended_band(cfg: ScenarioConfig) -> tuple[float, float]:
    """99 % band of the ideal (linear) transmit signal, measured once per config."""
    _, ideal = make_stream(cfg, cfg.eval_samples, derive_seed(cfg, _TAG_BAND))
    return mt.occupied_bandwidth_99(wf.psd_welch(ideal, cfg.welch_segment, cfg.welch_overlap))


@dataclass
class Link:
    """One transmitter and intended receiver with its learning/evaluation data."""

    M: int
    draw: int
    bank: pa.PaBank
    channel: ch.ChannelRealization
    precoder: ch.Precoder
    learn_signal: wf.ComplexSignal
    eval_signal: wf.ComplexSignal
    eval_symbols: wf.SymbolStream


def build_link(cfg: ScenarioConfig, M: int, draw: int, filt: wf.RrcFilter | None = None,
               bank: pa.PaBank | None = None) -> Link:
    filt = filt or rrc_filter(cfg)
    bank = bank if bank is not None else make_bank(cfg, M)
    h = ch.draw_rayleigh_channel(M, derive_seed(cfg, _TAG_CHANNEL, M, draw))
    _, learn = make_stream(cfg, cfg.block_size, derive_seed(cfg, _TAG_LEARN, M, draw), filt)
    sym, ev = make_stream(cfg, cfg.eval_samples, derive_seed(cfg, _TAG_EVAL, M, draw), filt)
    return Link(M, draw, bank, h, ch.mf_phase_precoder(h), learn, ev, sym)


def estimate_bank(cfg: ScenarioConfig, link: Link) -> pa.PaBank:
    """PA models used by the replica: the true bank, or per-branch LS fits on the learning block."""
    if cfg.pa_estimates == "true":
        return link.bank
    s = link.learn_signal.samples
    fits = []
    for model, w in zip(link.bank, link.precoder.weights):
        x = w * s
        fits.append(pa.identify_pa_ls(x, pa.apply_pa(model, x), cfg.P).model)
    return pa.PaBank(tuple(fits))


def make_replica(cfg: ScenarioConfig, link: Link, mode: str):
    est = estimate_bank(cfg, link)
    if mode == "reduced":
        return dpd.ReducedReplica(pa.equivalent_array_pa(est))
    if mode == "full":
        h_est = ch.perturb_channel(link.channel, cfg.chan_mag_jitter, cfg.chan_phase_jitter,
                                   derive_seed(cfg, _TAG_CHANNEL, link.M, link.draw, 1))
        return dpd.FullReplica(link.precoder, est, h_est)
    raise ConfigurationError(f"dpd_mode: no replica for mode {mode!r}")


def learn_config(cfg: ScenarioConfig, mode: str | None = None) -> dpd.LearnConfig:
    mode = mode or cfg.dpd_mode
    return dpd.LearnConfig(cfg.iterations, cfg.block_size, cfg.step_size, cfg.Q,
                           "reduced" if mode == "off" else mode)


def learn_link(cfg: ScenarioConfig, link: Link, mode: str | None = None) -> dpd.LearnResult:
    lc = learn_config(cfg, mode)
    return dpd.decorrelation_learn(link.learn_signal, make_replica(cfg, link, lc.mode), lc)


def transmit(link: Link, coefficients: dpd.DpdCoefficients | None, receivers: np.ndarray,
             precoder: ch.Precoder | None = None) -> np.ndarray:
    """Received samples, one row per receiver channel row."""
    x = link.eval_signal.samples
    if coefficients is not None:
        x = dpd.predistort(x, coefficients)
    y = ch.pa_outputs(x, precoder or link.precoder, link.bank)
    return ch.combine(y, receivers)


def _spectrum(cfg: ScenarioConfig, rx: np.ndarray) -> wf.Spectrum:
    return wf.psd_welch(wf.ComplexSignal(rx, cfg.sample_rate_hz, cfg.symbol_rate_hz),
                        cfg.welch_segment, cfg.welch_overlap)


def _powers(cfg, rx, band):
    spec = _spectrum(cfg, rx)
    inband, oob = mt.band_powers(spec, band, cfg.adjacent_offset_hz)
    return np.asarray(inband), np.asarray(oob)


def _db_mean(values_db) -> float:
    v = np.asarray(values_db, dtype=float)
    if v.size == 0:
        return float("nan")
    return float(10 * np.log10(np.mean(10 ** (v / 10))))


# --------------------------------------------------------------------------
# single link

@dataclass
class DemoResult:
    spectra: tuple
    reports: tuple
    learn: dpd.LearnResult | None
    band: tuple

    @property
    def aclr_gain_db(self) -> float:
        return self.reports[1].aclr_db - self.reports[0].aclr_db


def _report(cfg, link, rx, band, filt) -> tuple[wf.Spectrum, mt.MetricsReport]:
    spec = _spectrum(cfg, rx)
    inband, oob = mt.band_powers(spec, band, cfg.adjacent_offset_hz)
    aclr = mt.aclr(spec, band, cfg.adjacent_offset_hz)
    sym = wf.matched_filter_downsample(link.eval_signal.with_samples(rx), filt).symbols
    ref = link.eval_symbols.symbols[: len(sym)]
    edge = int(cfg.rrc_span)
    e = mt.evm(sym[edge:-edge], ref[edge:-edge])
    return spec, mt.MetricsReport(e, aclr, inband, oob, band[1] - band[0])


def single_link_demo(cfg: ScenarioConfig, draw: int = 0) -> DemoResult:
    """Same link without and with learned DPD at the intended receiver.

    With ``dpd_mode = off`` only the first entries of the pairs are set.
    """
    M = cfg.sweep[0]
    filt = rrc_filter(cfg)
    band = intended_band(cfg)
    link = build_link(cfg, M, draw, filt)
    rx = transmit(link, None, link.channel.gains[None, :])[0]
    spec0, rep0 = _report(cfg, link, rx, band, filt)
    if cfg.dpd_mode == "off":
        return DemoResult((spec0, None), (rep0, None), None, band)
    res = learn_link(cfg, link)
    rx = transmit(link, res.coefficients, link.channel.gains[None, :])[0]
    spec1, rep1 = _report(cfg, link, rx, band, filt)
    return DemoResult((spec0, spec1), (rep0, rep1), res, band)


# --------------------------------------------------------------------------
# scenario A

@dataclass(frozen=True)
class VictimPair:
    M: int
    trial: int
    victim: int
    without_db: float
    with_db: float


@dataclass
class TrialA:
    M: int
    trial: int
    excluded: str | None = None
    # rows: receiver 0 is the intended one, 1.. are victims
    inband_off: np.ndarray | None = None
    oob_off: np.ndarray | None = None
    inband_on: np.ndarray | None = None
    oob_on: np.ndarray | None = None
    trace: dpd.LearnTrace | None = None


def _trial_a(cfg: ScenarioConfig, M: int, t: int, band) -> TrialA:
    link = build_link(cfg, M, t)
    rng = np.random.default_rng(derive_seed(cfg, _TAG_VICTIM, M, t))
    victims = (rng.standard_normal((cfg.n_victims, M)) + 1j * rng.standard_normal((cfg.n_victims, M))) / np.sqrt(2)
    receivers = np.vstack([link.channel.gains[None, :], victims])
    out = TrialA(M, t)
    out.inband_off, out.oob_off = _powers(cfg, transmit(link, None, receivers), band)
    if cfg.dpd_mode == "off":
        return out
    try:
        res = learn_link(cfg, link)
    except DivergenceError as exc:
        out.excluded = str(exc)
        out.trace = exc.trace
        return out
    out.trace = res.trace
    out.inband_on, out.oob_on = _powers(cfg, transmit(link, res.coefficients, receivers), band)
    return out


def _run_trials(fn, jobs, workers: int):
    if workers is None or workers <= 1 or len(jobs) <= 1:
        return [fn(*j) for j in jobs]
    from joblib import Parallel, delayed
    return Parallel(n_jobs=workers)(delayed(fn)(*j) for j in jobs)


@dataclass
class ScenarioAResult:
    cfg: ScenarioConfig
    trials: list
    sweep: list = field(default_factory=list)
    reference_db: float = 0.0

    @property
    def excluded(self) -> list:
        return [(t.M, t.trial, t.excluded) for t in self.trials if t.excluded]

    def kept(self, M: int) -> list:
        return [t for t in self.trials if t.M == M and not t.excluded]

    def victim_pairs(self, M: int | None = None) -> list[VictimPair]:
        pairs = []
        for t in self.trials:
            if t.excluded or t.oob_on is None or (M is not None and t.M != M):
                continue
            for v in range(1, len(t.oob_off)):
                pairs.append(VictimPair(t.M, t.trial, v - 1, float(t.oob_off[v]), float(t.oob_on[v])))
        return pairs

    def aclr_distribution(self, M: int, receiver: str, with_dpd: bool) -> DistributionSummary:
        vals = []
        for t in self.kept(M):
            inband = t.inband_on if with_dpd else t.inband_off
            oob = t.oob_on if with_dpd else t.oob_off
            if inband is None:
                continue
            a = inband - oob
            vals.extend(a[:1] if receiver == "intended" else a[1:])
        return DistributionSummary.from_samples(vals)

    def suppression_db(self, M: int, receiver: str) -> float:
        """Mean OOB power without DPD minus with DPD."""
        row_off = self._row(M, "off")
        row_on = self._row(M, self.cfg.dpd_mode)
        key = f"{receiver}_oob_db"
        return row_off[key] - row_on[key]

    def _row(self, M, mode):
        for r in self.sweep:
            if r["M"] == M and r["mode"] == mode:
                return r
        raise KeyError((M, mode))


def run_scenario_a(cfg: ScenarioConfig, workers: int = 1) -> ScenarioAResult:
    band = intended_band(cfg)
    jobs = [(cfg, M, t, band) for M in cfg.sweep for t in range(cfg.n_intended_draws)]
    trials = _run_trials(_trial_a, jobs, workers)
    result = ScenarioAResult(cfg, trials)
    if result.excluded:
        log.warning("scenario A: %d trial(s) excluded after learning divergence", len(result.excluded))
    rows = []
    modes = ["off"] if cfg.dpd_mode == "off" else ["off", cfg.dpd_mode]
    for M in cfg.sweep:
        kept = result.kept(M)
        n_excl = sum(1 for t in trials if t.M == M and t.excluded)
        for mode in modes:
            on = mode != "off"
            ib = [t.inband_on if on else t.inband_off for t in kept]
            ob = [t.oob_on if on else t.oob_off for t in kept]
            rows.append({
                "M": M, "mode": mode,
                "intended_inband_db": _db_mean([x[0] for x in ib]),
                "intended_oob_db": _db_mean([x[0] for x in ob]),
                "victim_inband_db": _db_mean(np.concatenate([x[1:] for x in ib]) if ib else []),
                "victim_oob_db": _db_mean(np.concatenate([x[1:] for x in ob]) if ob else []),
                "n_trials": len(kept), "n_excluded": n_excl,
            })
    # in-band power of the smallest array without DPD is the 0 dB reference
    ref = rows[0]["intended_inband_db"]
    for r in rows:
        for k in ("intended_inband_db", "intended_oob_db", "victim_inband_db", "victim_oob_db"):
            r[k] -= ref
    result.sweep = rows
    result.reference_db = ref
    return result


@dataclass
class NeverWorseResult:
    passed: bool
    violators: list
    n_checked: int

    def __bool__(self) -> bool:
        return self.passed


def never_worse_check(pairs, tol_db: float = 0.5) -> NeverWorseResult:
    """Every victim's with-DPD adjacent-channel power is at most ``tol_db`` above its no-DPD power.

    ``pairs`` holds :class:`VictimPair` items or ``(without_db, with_db)`` tuples.
    """
    items = list(pairs)
    if not items:
        warnings.warn("never_worse_check: no victim pairs given, passing vacuously", stacklevel=2)
        return NeverWorseResult(True, [], 0)
    bad = []
    for i, p in enumerate(items):
        if isinstance(p, VictimPair):
            off, on = p.without_db, p.with_db
        else:
            try:
                off, on = p
            except (TypeError, ValueError):
                raise InputError(f"entry {i} is not a (without, with) pair: {p!r}") from None
        if off is None or on is None or not (np.isfinite(off) and np.isfinite(on)):
            raise InputError(f"entry {i} is unpaired or non-finite: {p!r}")
        if on > off + tol_db:
            bad.append(p)
    return NeverWorseResult(not bad, bad, len(items))


def write_scenario_a(result: ScenarioAResult, out_dir) -> list[Path]:
    out = Path(out_dir)
    cols = ["M", "mode", "intended_inband_db", "intended_oob_db", "victim_inband_db", "victim_oob_db",
            "n_trials", "n_excluded"]
    paths = [out / "sweep.csv", out / "dist_intended.csv", out / "dist_victim.csv", out / "trace.csv"]
    with open(paths[0], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in result.sweep:
            w.writerow([r["M"], r["mode"]] + [f"{r[c]:.6f}" for c in cols[2:6]] + [r["n_trials"], r["n_excluded"]])
    mode_on = result.cfg.dpd_mode
    with open(paths[1], "w", newline="") as fh, open(paths[2], "w", newline="") as fv:
        wi = csv.writer(fh, lineterminator="\n")
        wv = csv.writer(fv, lineterminator="\n")
        wi.writerow(["M", "trial", "mode", "aclr_db"])
        wv.writerow(["M", "trial", "victim", "mode", "aclr_db"])
        for t in result.trials:
            if t.excluded:
                continue
            for mode, ib, ob in (("off", t.inband_off, t.oob_off), (mode_on, t.inband_on, t.oob_on)):
                if ib is None:
                    continue
                a = ib - ob
                wi.writerow([t.M, t.trial, mode, f"{a[0]:.6f}"])
                for v in range(1, len(a)):
                    wv.writerow([t.M, t.trial, v - 1, mode, f"{a[v]:.6f}"])
    with open(paths[3], "w", newline="") as fh:
        first = True
        for t in result.trials:
            if t.trace is None:
                continue
            t.trace.write_csv(fh, {"M": t.M, "trial": t.trial}, header=first)
            first = False
    return paths


# --------------------------------------------------------------------------
# scenario B

@dataclass
class ScenarioBResult:
    without: DistributionSummary
    with_dpd: DistributionSummary
    # per initial draw: (draw, aclr without, aclr with) arrays over redraws
    per_draw: list
    excluded: list

    @property
    def median_gain_db(self) -> float:
        return self.with_dpd.p50 - self.without.p50

    @property
    def max_within_draw_spread(self) -> float:
        spreads = [DistributionSummary.from_samples(on).spread for _, _, on in self.per_draw]
        return float(max(spreads)) if spreads else float("nan")


def _trial_b(cfg: ScenarioConfig, M: int, i: int, band):
    # one transmitter, learning block and test waveform for the whole
    # campaign: draws differ only in the intended channel
    ref = build_link(cfg, M, 0)
    h = ch.draw_rayleigh_channel(M, derive_seed(cfg, _TAG_CHANNEL, M, i)) if i else ref.channel
    link = replace(ref, draw=i, channel=h, precoder=ch.mf_phase_precoder(h))
    try:
        res = learn_link(cfg, link)
    except DivergenceError as exc:
        return i, None, None, str(exc)
    off, on = [], []
    for j in range(cfg.n_redraws):
        # redraw 0 is the channel the DPD was learned on
        h = link.channel if j == 0 else ch.draw_rayleigh_channel(M, derive_seed(cfg, _TAG_REDRAW, M, i, j))
        w = ch.mf_phase_precoder(h)
        rx = np.stack([transmit(link, c, h.gains[None, :], w)[0] for c in (None, res.coefficients)])
        inband, oob = _powers(cfg, rx, band)
        off.append(inband[0] - oob[0])
        on.append(inband[1] - oob[1])
    return i, np.array(off), np.array(on), None


def run_scenario_b(cfg: ScenarioConfig, workers: int = 1) -> ScenarioBResult:
    if cfg.dpd_mode == "off":
        raise ConfigurationError("dpd_mode: scenario B needs a learning mode (full or reduced)")
    M = cfg.sweep[0]
    band = intended_band(cfg)
    jobs = [(cfg, M, i, band) for i in range(cfg.n_initial_draws)]
    out = _run_trials(_trial_b, jobs, workers)
    per_draw = [(i, off, on) for i, off, on, err in out if err is None]
    excluded = [(i, err) for i, _, _, err in out if err is not None]
    if excluded:
        log.warning("scenario B: %d initial draw(s) excluded after learning divergence", len(excluded))
    all_off = np.concatenate([d[1] for d in per_draw]) if per_draw else np.zeros(0)
    all_on = np.concatenate([d[2] for d in per_draw]) if per_draw else np.zeros(0)
    return ScenarioBResult(DistributionSummary.from_samples(all_off), DistributionSummary.from_samples(all_on),
                           per_draw, excluded)


def write_scenario_b(result: ScenarioBResult, out_dir) -> list[Path]:
    path = Path(out_dir) / "dist_intended.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["initial_draw", "redraw", "mode", "aclr_db"])
        for i, off, on in result.per_draw:
            for j, v in enumerate(off):
                w.writerow([i, j, "off", f"{v:.6f}"])
            for j, v in enumerate(on):
                w.writerow([i, j, "dpd", f"{v:.6f}"])
    return [path]
