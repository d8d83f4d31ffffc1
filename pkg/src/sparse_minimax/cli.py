"""Command-line front end.

    sparse-minimax bound   --config cfg.yaml [--out DIR]
    sparse-minimax pack    --config cfg.yaml [--seed N] [--out DIR]
    sparse-minimax risk    --config cfg.yaml [--seed N] [--threads N] [--out DIR]
    sparse-minimax kl-check [--config cfg.yaml] [--out DIR]

Exit status: 0 success, 1 verification failure, 2 config error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .bounds import channel_rates, corollary_bound, upper_bound_rate
from .channels import (GaussianChannel, LaplaceChannel, OneBitChannel, PoissonChannel,
                       kl_grid_check, logistic, probit)
from .config import ConfigError, ExperimentConfig, load_config
from .core import ModelClassParams, random_factor_pair
from .estimators import make_estimator
from .packing import InfeasibleGeometry, build_packing, export_packing, verify_tsybakov
from .sim import TooManyFailures, monte_carlo_risk, trial_rng

EXIT_OK = 0
EXIT_VERIFY = 1
EXIT_CONFIG = 2

BOUND_COLUMNS = ("m", "lower_bound", "regime", "large_sample_rate", "small_sample_rate",
                 "upper_bound_rate")
RISK_COLUMNS = ("m", "estimator", "risk_mean", "risk_stderr", "failures", "lower_bound",
                "upper_rate")
KL_COLUMNS = ("channel", "lo", "hi", "points", "worst_slack", "violations")


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row[c]) for c in columns])
    return buf.getvalue()


def _write_table(out: Path, name: str, columns, rows, sidecar: dict) -> str:
    out.mkdir(parents=True, exist_ok=True)
    text = _csv_text(columns, rows)
    (out / f"{name}.csv").write_text(text)
    (out / f"{name}.json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    return text


def _sidecar(command: str, cfg: Optional[ExperimentConfig], columns, **extra) -> dict:
    side = {"command": command, "columns": list(columns)}
    if cfg is not None:
        side["config"] = cfg.echo()
        side["channel"] = cfg.channel.to_spec()
        side["constants"] = cfg.constants.to_dict()
    side.update(extra)
    return side


# -- subcommands -----------------------------------------------------------------

def cmd_bound(cfg: ExperimentConfig, out: Path) -> int:
    rows = []
    for m in cfg.m_sweep:
        rep = corollary_bound(cfg.channel, cfg.params, m, cfg.constants)
        large, small = channel_rates(cfg.channel, cfg.params, m)
        rows.append({"m": m, "lower_bound": rep.value, "regime": rep.active_regime,
                     "large_sample_rate": large, "small_sample_rate": small,
                     "upper_bound_rate": upper_bound_rate(cfg.channel, cfg.params, m)})
    text = _write_table(out, "bound", BOUND_COLUMNS, rows,
                        _sidecar("bound", cfg, BOUND_COLUMNS))
    sys.stdout.write(text)
    return EXIT_OK


def cmd_pack(cfg: ExperimentConfig, out: Path) -> int:
    mu = None
    if not isinstance(cfg.channel, PoissonChannel):
        mu = cfg.channel.mu_d(cfg.params)
    summary = []
    failed = False
    for idx, kind in enumerate(cfg.pack_kinds):
        rng = trial_rng(cfg.master_seed, idx)
        ps = build_packing(kind, cfg.params, cfg.pack_m, mu, cfg.constants, rng)
        cert = verify_tsybakov(ps, cfg.channel, cfg.params, cfg.pack_m, cfg.constants.alpha)
        members_ok = all(mb.ok for mb in ps.membership())
        export_packing(ps, out / "pack" / kind, cert)
        flags = {"separation_ok": cert.separation_ok, "kl_budget_ok": cert.kl_budget_ok,
                 "normalized_separation_ok": ps.normalized_separation_ok,
                 "membership_ok": members_ok}
        failed |= not all(flags.values())
        summary.append({"kind": kind, **flags, "certificate": cert.to_dict()})
        print(f"{kind}: cardinality={ps.cardinality} "
              + " ".join(f"{k}={v}" for k, v in flags.items()))
    side = _sidecar("pack", cfg, (), m=cfg.pack_m, packings=summary)
    side.pop("columns")
    (out / "pack.json").write_text(json.dumps(side, indent=2, sort_keys=True) + "\n")
    return EXIT_VERIFY if failed else EXIT_OK


def _generator(cfg: ExperimentConfig):
    if cfg.truth == "fixed":
        # own stream, disjoint from the per-trial ones
        rng = np.random.default_rng(np.random.SeedSequence(cfg.master_seed, spawn_key=(1,)))
        xstar = random_factor_pair(cfg.params, rng)
        fixed = xstar.d @ xstar.a
        return lambda rng: fixed
    return lambda rng: (lambda fp: fp.d @ fp.a)(random_factor_pair(cfg.params, rng))


def cmd_risk(cfg: ExperimentConfig, out: Path, threads: int) -> int:
    gen = _generator(cfg)
    rows = []
    for m in cfg.m_sweep:
        lower = corollary_bound(cfg.channel, cfg.params, m, cfg.constants).value
        upper = upper_bound_rate(cfg.channel, cfg.params, m)
        for name in cfg.estimators:
            est = make_estimator(name, cfg.params, cfg.channel, cfg.estimator)
            res = monte_carlo_risk(gen, est, cfg.channel, cfg.params, m, cfg.trials,
                                   cfg.master_seed, threads=threads)
            rows.append({"m": m, "estimator": name, "risk_mean": res.mean,
                         "risk_stderr": res.std_error, "failures": res.failures,
                         "lower_bound": lower, "upper_rate": upper})
    text = _write_table(out, "risk", RISK_COLUMNS, rows,
                        _sidecar("risk", cfg, RISK_COLUMNS, trials=cfg.trials))
    sys.stdout.write(text)
    return EXIT_OK


def default_kl_suite():
    """Channel grid checks on ``[-2, 2]`` (``[0.25, 2]`` for Poisson)."""
    params = ModelClassParams(n1=8, n2=8, r=2, k=8, a_max=1.0)
    half = params.x_max
    return [
        (GaussianChannel(1.0), -half, half, params),
        (LaplaceChannel(1.0), -half, half, params),
        (OneBitChannel(logistic(1.0), half), -half, half, params),
        (OneBitChannel(probit(1.0), half), -half, half, params),
        (PoissonChannel(0.25), 0.25, half, params),
    ]


def cmd_kl_check(cfg: Optional[ExperimentConfig], out: Optional[Path]) -> int:
    if cfg is None:
        suite = default_kl_suite()
    else:
        p = cfg.params
        lo = cfg.channel.x_min if isinstance(cfg.channel, PoissonChannel) else -p.x_max
        suite = [(cfg.channel, lo, p.x_max, p)]
    rows = []
    for channel, lo, hi, params in suite:
        res = kl_grid_check(channel, lo, hi, 51, params)
        res["channel"] = channel.tag
        if isinstance(channel, OneBitChannel):
            res["channel"] = f"onebit-{channel.link.name}"
        rows.append(res)
    text = _csv_text(KL_COLUMNS, rows)
    if out is not None:
        _write_table(out, "kl_check", KL_COLUMNS, rows, _sidecar("kl-check", cfg, KL_COLUMNS))
    sys.stdout.write(text)
    worst = min(r["worst_slack"] for r in rows)
    print(f"worst-case slack: {worst!r}")
    return EXIT_VERIFY if any(r["violations"] for r in rows) else EXIT_OK


# -- entry point -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sparse-minimax",
                                 description="Minimax lower bounds for sparse factor "
                                             "matrix completion.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("bound", "pack", "risk", "kl-check"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, required=name != "kl-check")
        sp.add_argument("--seed", type=int, help="override master_seed")
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--out", type=Path, help="override output_dir")
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be positive", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config) if args.config is not None else None
        if cfg is not None and args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be nonnegative")
            cfg = replace(cfg, master_seed=args.seed)
        out = args.out
        if out is None and cfg is not None:
            out = cfg.output_dir

        if args.command == "bound":
            return cmd_bound(cfg, out)
        if args.command == "pack":
            return cmd_pack(cfg, out)
        if args.command == "risk":
            return cmd_risk(cfg, out, args.threads)
        return cmd_kl_check(cfg, out)
    except (ConfigError, InfeasibleGeometry) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TooManyFailures as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except ValueError as exc:
        # remaining ValueErrors come from parameter checks in the library
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
