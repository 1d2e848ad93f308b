"""Command-line entry point.

Every command writes its CSV artifacts plus ``manifest.txt`` into
``--out``.  The manifest is itself a valid ``--config`` file: rerunning a
command with ``--config <out>/manifest.txt`` reproduces the artifacts.
"""

from __future__ import annotations

import argparse
import hashlib
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import complexity as cx
from . import scenarios as sc
from .config import DEFAULT_SWEEP, ScenarioConfig, load_config
from .errors import ConfigurationError, DivergenceError, InputError

log = logging.getLogger("arraydpd")

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGENCE = 0, 2, 3


def _parse_sets(items) -> dict:
    pairs = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigurationError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        pairs[k.strip()] = v.strip()
    return pairs


def resolve_config(args) -> ScenarioConfig:
    cfg = load_config(args.config) if args.config else ScenarioConfig()
    pairs = _parse_sets(args.set)
    if args.seed is not None:
        pairs["seed"] = str(args.seed)
    return cfg.with_overrides(pairs) if pairs else cfg


def _prepare_out(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigurationError(f"cannot create output directory {out}: {exc}") from None
    if not os.access(out, os.W_OK):
        raise ConfigurationError(f"output directory {out} is not writable")
    return out


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out: Path, command: str, cfg: ScenarioConfig | None, artifacts, extra=None) -> Path:
    lines = [f"# command = {command}"]
    for k, v in (extra or {}).items():
        lines.append(f"# {k} = {v}")
    if cfg is not None:
        lines += cfg.to_lines()
    for p in artifacts:
        lines.append(f"# sha256 {Path(p).name} {_sha256(Path(p))}")
    path = out / "manifest.txt"
    path.write_text("\n".join(lines) + "\n")
    return path


def _write_metrics(path: Path, demo: sc.DemoResult):
    cols = ["evm_percent", "aclr_db", "inband_power_db", "oob_power_db", "occupied_bw_hz"]
    rows = ["mode," + ",".join(cols)]
    for mode, rep in zip(("off", "dpd"), demo.reports):
        if rep is None:
            continue
        d = rep.as_dict()
        rows.append(mode + "," + ",".join(f"{d[c]:.6f}" for c in cols))
    path.write_text("\n".join(rows) + "\n")


def cmd_demo(args, cfg, out) -> list[Path]:
    demo = sc.single_link_demo(cfg)
    paths = [out / "spectrum_off.csv", out / "metrics.csv"]
    demo.spectra[0].to_csv(paths[0])
    _write_metrics(paths[1], demo)
    off = demo.reports[0]
    print(f"no DPD : ACLR {off.aclr_db:6.2f} dB  EVM {off.evm_percent:5.2f} %")
    if demo.learn is not None:
        demo.spectra[1].to_csv(out / "spectrum_dpd.csv")
        demo.learn.trace.to_csv(out / "trace.csv")
        (out / "coefficients.json").write_text(demo.learn.coefficients.to_json() + "\n")
        paths += [out / "spectrum_dpd.csv", out / "trace.csv", out / "coefficients.json"]
        on = demo.reports[1]
        print(f"DPD    : ACLR {on.aclr_db:6.2f} dB  EVM {on.evm_percent:5.2f} %"
              f"  (final residual correlation {demo.learn.final_residual_corr_max:.2e})")
    return paths


def cmd_learn(args, cfg, out) -> list[Path]:
    link = sc.build_link(cfg, cfg.sweep[0], 0)
    res = sc.learn_link(cfg, link)
    paths = [out / "coefficients.json", out / "trace.csv"]
    paths[0].write_text(res.coefficients.to_json() + "\n")
    res.trace.to_csv(paths[1])
    raw = res.coefficients.to_raw()
    for q, b in zip(raw.orders, raw.beta):
        print(f"beta_{q} = {b.real:+.6e} {b.imag:+.6e}j")
    print(f"final residual correlation {res.final_residual_corr_max:.3e}")
    return paths


def cmd_scenario_a(args, cfg, out) -> list[Path]:
    res = sc.run_scenario_a(cfg, workers=args.workers)
    paths = sc.write_scenario_a(res, out)
    print(f"{'M':>4} {'mode':>8} {'int. in':>8} {'int. OOB':>9} {'vic. in':>8} {'vic. OOB':>9}")
    for r in res.sweep:
        print(f"{r['M']:>4} {r['mode']:>8} {r['intended_inband_db']:8.2f} {r['intended_oob_db']:9.2f} "
              f"{r['victim_inband_db']:8.2f} {r['victim_oob_db']:9.2f}")
    if cfg.dpd_mode != "off":
        for M in cfg.sweep:
            print(f"M={M}: OOB suppression intended {res.suppression_db(M, 'intended'):.2f} dB, "
                  f"victim {res.suppression_db(M, 'victim'):.2f} dB")
        nw = sc.never_worse_check(res.victim_pairs(), cfg.never_worse_tol_db)
        print(f"never-worse check: {'pass' if nw else 'FAIL'} ({nw.n_checked} victims, {len(nw.violators)} violators)")
    print(f"excluded trials: {len(res.excluded)}")
    for M, t, msg in res.excluded:
        print(f"  M={M} trial={t}: {msg}")
    return paths


def cmd_scenario_b(args, cfg, out) -> list[Path]:
    res = sc.run_scenario_b(cfg, workers=args.workers)
    paths = sc.write_scenario_b(res, out)
    for name, d in (("no DPD", res.without), ("DPD", res.with_dpd)):
        print(f"{name:>7}: ACLR p5 {d.p5:.2f}  p50 {d.p50:.2f}  p95 {d.p95:.2f}  spread {d.spread:.2f} dB")
    print(f"median improvement {res.median_gain_db:.2f} dB; excluded initial draws: {len(res.excluded)}")
    return paths


def _flop_params(args) -> cx.FlopParams:
    p = cx.PRESETS[args.preset] if args.preset else cx.FlopParams()
    pairs = _parse_sets(args.set)
    try:
        vals = {k: int(v) for k, v in pairs.items()}
    except ValueError as exc:
        raise ConfigurationError(f"complexity parameters must be integers: {exc}") from None
    for k in vals:
        if k not in ("M", "Q", "K", "N", "U", "L"):
            raise ConfigurationError(f"unknown complexity parameter {k!r}")
    return replace(p, **vals)


def cmd_complexity(args, out) -> tuple[list[Path], cx.FlopParams]:
    p = _flop_params(args)
    reports = cx.complexity_table(p)
    print(cx.format_table(reports), end="")
    paths = [out / "complexity.csv"]
    paths[0].write_text(cx.table_csv(reports))
    if args.sweep:
        name, _, values = args.sweep.partition("=")
        try:
            vals = [int(v) for v in values.split(",") if v]
        except ValueError:
            raise ConfigurationError(f"--sweep expects NAME=v1,v2,..., got {args.sweep!r}") from None
        rows = cx.complexity_sweep(p, **{name.strip(): vals})
        paths.append(out / "complexity_sweep.csv")
        paths[-1].write_text(cx.sweep_csv(rows))
    return paths, p


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file (a manifest also works)")
    common.add_argument("--seed", type=int, help="base seed (overrides the config)")
    common.add_argument("--out", default="out", help="output directory (created if missing)")
    common.add_argument("--workers", type=int, default=os.cpu_count() or 1,
                        help="parallel trial workers; results do not depend on it")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="config override, repeatable")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="arraydpd", description="Array DPD link simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("demo", parents=[common], help="single link without and with learned DPD")
    sub.add_parser("learn", parents=[common], help="learn DPD coefficients on one link")
    sub.add_parser("scenario-a", parents=[common], help="emission statistics over array sizes and victims")
    sub.add_parser("scenario-b", parents=[common], help="fixed DPD under intended-channel redraws")
    cp = sub.add_parser("complexity", parents=[common], help="FLOP counts per architecture")
    cp.add_argument("--preset", choices=sorted(cx.PRESETS), help="parameter preset")
    cp.add_argument("--sweep", metavar="NAME=v1,v2,...", help="sweep one parameter")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        out = _prepare_out(args.out)
        if args.command == "complexity":
            paths, p = cmd_complexity(args, out)
            extra = {k: getattr(p, k) for k in ("M", "Q", "K", "N", "U", "L")}
            write_manifest(out, "complexity", None, paths, extra)
            return EXIT_OK
        cfg = resolve_config(args)
        if args.command == "scenario-a" and "M" not in cfg.explicit:
            cfg = cfg.with_overrides({"M": DEFAULT_SWEEP})
        handler = {"demo": cmd_demo, "learn": cmd_learn,
                   "scenario-a": cmd_scenario_a, "scenario-b": cmd_scenario_b}[args.command]
        paths = handler(args, cfg, out)
        write_manifest(out, args.command, cfg, paths)
        return EXIT_OK
    except (ConfigurationError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"error: learning diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE


if __name__ == "__main__":
    sys.exit(main())
