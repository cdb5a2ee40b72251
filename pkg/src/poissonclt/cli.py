"""Command line front end.

Subcommands: simulate, gamma, localize, clt, oracle.  Global flags:
--config <path>, --seed <u64>, --threads <n>, --out <dir>.
Exit codes: 0 ok, 2 config error, 3 numerical diagnostic, 4 IO failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from poissonclt import experiments, geometry, oracle
from poissonclt.errors import ConfigError, DiagnosticError, InputError
from poissonclt.process import sample_poisson
from poissonclt.rng import RandomStream


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="poissonclt",
        description="Monte Carlo studies of normal approximation for Poisson functionals",
    )
    p.add_argument("--config", type=Path, help="JSON experiment config")
    p.add_argument("--seed", type=int, default=None, help="override config seed")
    p.add_argument("--threads", type=int, default=None, help="worker count")
    p.add_argument("--out", type=Path, default=None, help="output directory")
    p.add_argument(
        "command",
        choices=["simulate", "gamma", "localize", "clt", "oracle"],
        help="study to run",
    )
    return p


def _load(args) -> experiments.ExperimentConfig:
    if args.config is None:
        raise ConfigError("--config is required for this command")
    try:
        data = json.loads(args.config.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {args.config}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if args.seed is not None:
        data["seed"] = args.seed
    if args.threads is not None:
        data["threads"] = args.threads
    if args.out is not None:
        data["out_dir"] = str(args.out)
    return experiments.load_config(data)


def _cmd_simulate(cfg: experiments.ExperimentConfig) -> None:
    lam = cfg.lambda_grid[0]
    domain, family = experiments.build_model(cfg.model, cfg.space, lam)
    config = sample_poisson(domain, RandomStream(cfg.seed))
    h = family.total(config)
    payload = {
        "lambda": lam,
        "points": len(config),
        "H": h,
        "config": cfg.raw,
    }
    out = cfg.out_dir / "simulate.json"
    experiments.write_json(payload, out)
    print(f"H = {h:g} on {len(config)} points -> {out}")


def _cmd_clt(cfg: experiments.ExperimentConfig) -> None:
    result = experiments.run_clt_study(cfg)
    out_json = cfg.out_dir / "clt.json"
    out_csv = cfg.out_dir / "clt.csv"
    experiments.write_json(result.as_dict(), out_json)
    experiments.emit_plot_data(result, out_csv)
    for w in result.warnings:
        print(f"warning: {w}")
    print(
        f"fitted rate slope {result.slope:.3f} "
        f"(CI {result.slope_ci[0]:.3f}..{result.slope_ci[1]:.3f}) -> {out_json}"
    )


def _cmd_gamma(cfg: experiments.ExperimentConfig) -> None:
    payload = experiments.run_gamma_study(cfg)
    out = cfg.out_dir / "gamma.json"
    experiments.write_json(payload, out)
    print(f"d_K bound {payload['bounds']['d_k']:.4g} -> {out}")


def _cmd_localize(cfg: experiments.ExperimentConfig) -> None:
    payload = experiments.run_localization_study(cfg)
    out = cfg.out_dir / "localize.json"
    experiments.write_json(payload, out)
    print(f"CK {payload['CK']:.4g}, CW {payload['CW']:.4g} -> {out}")


def _cmd_oracle(cfg: experiments.ExperimentConfig) -> None:
    """Cross-validate the fast paths against the brute-force oracles."""
    from poissonclt.growth import simulate_acceptance
    from poissonclt.laguerre import LaguerreConfig, boundary_scan_oracle_1d, is_retained

    rng = RandomStream(cfg.seed)
    gen = rng.generator()
    reports = []
    space = geometry.flat_torus(2, 10.0)
    for trial in range(20):
        n = int(gen.integers(5, 60))
        locs = gen.uniform(0, 10, size=(n, 2))
        times = gen.uniform(0, 5, size=n)
        speeds = 0.1 + gen.exponential(1.0, size=n)
        flags = simulate_acceptance(space, locs, times, speeds)
        naive = oracle.naive_birth_growth(space, locs, times, speeds)
        reports.append(
            oracle.OracleReport(
                f"birth-growth n={n} trial={trial}",
                float(np.sum(flags)), float(np.sum(naive)), 0.0,
            )
        )
    lcfg = LaguerreConfig(t=0.5, beta=0.0, dim=1, h_max=5.0)
    for trial in range(20):
        n = int(gen.integers(2, 40))
        xs = gen.uniform(-10, 10, size=(n, 1))
        hs = gen.uniform(0, 5, size=n)
        x, h = float(gen.uniform(-10, 10)), float(gen.uniform(0, 5))
        primary = is_retained(np.array([x]), h, xs, hs, lcfg)
        scan = boundary_scan_oracle_1d(x, h, xs[:, 0], hs, lcfg)
        reports.append(
            oracle.OracleReport(
                f"laguerre n={n} trial={trial}", float(primary), float(scan), 0.0
            )
        )
    out = cfg.out_dir / "oracle.jsonl"
    with out.open("w") as fh:
        for rep in reports:
            fh.write(json.dumps(rep.as_dict()) + "\n")
    bad = [r for r in reports if not r.agree]
    print(f"{len(reports) - len(bad)}/{len(reports)} oracle checks agree -> {out}")
    if bad:
        raise DiagnosticError(f"{len(bad)} oracle disagreements")


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    handlers = {
        "simulate": _cmd_simulate,
        "clt": _cmd_clt,
        "gamma": _cmd_gamma,
        "localize": _cmd_localize,
        "oracle": _cmd_oracle,
    }
    try:
        cfg = _load(args)
        cfg.out_dir.mkdir(parents=True, exist_ok=True)
        handlers[args.command](cfg)
    except (ConfigError, InputError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DiagnosticError as exc:
        print(f"numerical diagnostic: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
