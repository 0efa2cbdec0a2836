"""Command-line entry point.

Subcommands: gen, certify, reconstruct, table1, impair, constants.  Every
subcommand accepts --config (key=value file), --seed, and --out-dir;
flags override the config file.  Outputs are CSV (or topology text for
``gen``) named ``<subcommand>-<seed>.<ext>`` in the output directory.
Exit codes: 0 ok, 1 compute error, 2 usage error.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from . import experiments as xp
from . import reconstruction as rc
from . import simulate as sim
from . import stability as st
from . import topology as tp
from .sensing import jaffard_norm


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dsrslab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("gen", "emit a scenario topology file"),
        ("certify", "stability certificate CSV"),
        ("reconstruct", "single reconstruction run: iteration log + amplitudes"),
        ("table1", "error sweep over iterations and patch radii"),
        ("impair", "robustness run with failed agents and clogged links"),
        ("constants", "convergence constants report"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--seed", type=int, help="override the run seed")
        p.add_argument("--out-dir", default=".", help="output directory")
        p.add_argument("--scenario", choices=("cycle", "prism"))
        p.add_argument("--R", type=int)
        p.add_argument("--N", type=int)
        p.add_argument("--N0", type=int)
        p.add_argument("--alpha", type=float)
        p.add_argument("--delta", type=float)
        p.add_argument("--trials", type=int)
        p.add_argument("--eps", type=float)
        p.add_argument("--K", type=int)
    return parser


def _config_from(args) -> xp.ExperimentConfig:
    config = xp.read_config(args.config) if args.config else xp.ExperimentConfig()
    overrides = {
        k: getattr(args, k)
        for k in ("scenario", "R", "N", "N0", "alpha", "delta", "trials", "seed", "eps", "K")
        if getattr(args, k, None) is not None
    }
    if args.command == "impair" and (config.scenario != "prism" or not overrides.get("scenario")):
        overrides.setdefault("scenario", "prism")
        if "R" not in overrides and config.R < 100:
            overrides["R"] = 160
    return dataclasses.replace(config, **overrides)


def _out(args, name: str) -> Path:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir / name


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _config_from(args)
        if args.command == "gen":
            t, _, _ = xp.build_scenario(config)
            path = _out(args, f"gen-{config.seed}.txt")
            tp.write_topology(t, path)
        elif args.command == "certify":
            _, _, m = xp.build_scenario(config)
            cert = st.local_certificate(m, max(config.N0, 3))
            path = _out(args, f"certify-{config.seed}.csv")
            path.write_text(cert.to_csv(), encoding="utf-8")
        elif args.command == "reconstruct":
            t, c, d_hat, log = xp.run_reconstruction(config)
            _out(args, f"reconstruct-{config.seed}.csv").write_text(log.to_csv(), encoding="utf-8")
            _out(args, f"amplitudes-{config.seed}.txt").write_text(
                rc.amplitudes_text(t, d_hat), encoding="utf-8"
            )
            path = _out(args, f"reconstruct-{config.seed}.csv")
        elif args.command == "table1":
            result = xp.run_table1(config)
            path = _out(args, f"table1-{config.seed}.csv")
            path.write_text(result.to_csv(), encoding="utf-8")
        elif args.command == "impair":
            path = _run_impair(args, config)
        elif args.command == "constants":
            _, _, m = xp.build_scenario(config)
            report = rc.constants_report(m, config.N)
            path = _out(args, f"constants-{config.seed}.csv")
            path.write_text(report.to_csv(), encoding="utf-8")
        else:  # pragma: no cover - argparse guards this
            parser.error(f"unknown command {args.command!r}")
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(path)
    return 0


def _run_impair(args, config) -> Path:
    t, c, m = xp.build_scenario(config)
    z = xp.sample_with_noise(m, c, config.delta, config.seed)
    r = rc.build_patch_operator(m, config.N, **xp.patch_settings(config.scenario))
    system = sim.provision(m, r, z, config.N, m.bandwidth)
    failed = config.failed_agents or xp.default_impairments(config.R)[0]
    clogged = config.clogged_links or xp.default_impairments(config.R)[1]
    impaired = sim.impair(system, failed, clogged)
    _, stats, history, trace = sim.run_rounds(impaired, config.eps, config.K)
    d_hat = sim.estimate_amplitudes(impaired)
    err = xp.error_metric(d_hat, c, stats.rounds)
    path = _out(args, f"impair-{config.seed}.csv")
    lines = [stats.to_csv(), f"final_error,{err}", f"noise_level,{config.delta}", ""]
    path.write_text("\n".join(lines), encoding="utf-8")
    return path


if __name__ == "__main__":
    raise SystemExit(main())
