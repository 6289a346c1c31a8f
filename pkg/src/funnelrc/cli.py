"""Command-line interface.

Subcommands: ``run`` (closed-loop scenario), ``synth-offline`` (whole-horizon
synthesis), ``check-iqc`` (certificate check on a checkpoint), ``verify``
(re-run the invariant suites against a recorded run directory).

Exit codes: 0 success and no flags raised, 1 a check failed or flags were
raised, 2 bad arguments or rejected configuration.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import microgrid, ren, runner, synthesis
from .errors import ConfigError, FunnelrcError


def _cmd_run(args) -> int:
    try:
        config = runner.RunConfig.from_yaml(args.config)
    except (ConfigError, OSError) as exc:
        print(f"config rejected: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        config.seed = args.seed
    if args.out is not None:
        config.out_dir = args.out
    if args.epochs is not None:
        config.num_epochs = args.epochs
    trace, metrics = runner.run(config)
    print(f"steps={metrics['steps']} mean_synth_ms={metrics['mean_synth_ms']:.1f} "
          f"mean_train_ms={metrics['mean_train_ms']:.1f} "
          f"final_voltage_band={metrics['final_voltage_band']:.4g} "
          f"certified={metrics['certified']}")
    flags = metrics["flags_raised"]
    if flags:
        print(f"flags raised: {flags}", file=sys.stderr)
        return 1
    return 0


def _cmd_synth_offline(args) -> int:
    try:
        config = runner.RunConfig.from_yaml(args.config)
    except (ConfigError, OSError) as exc:
        print(f"config rejected: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        config.seed = args.seed
    spec, model, _scenario = runner._build_plant_and_scenario(config)
    N = args.horizon or spec.epoch_steps
    plan = microgrid.nominal_trajectory(model, np.asarray(config.x_start, float),
                                        np.zeros(model.n), N)
    data = synthesis.HorizonData.from_plant(model, plan)
    weights = config.synth.weights
    sol = synthesis.solve_offline(
        data, weights, config.synth.gamma2, config.synth.alpha,
        np.eye(model.n), config.synth.p_f_scale * np.eye(model.n),
        config.synth.r0, config.synth.r_f,
        synthesis.SynthesisOptions(eps_psd=config.synth.eps_psd),
        delta_inf=config.synth.delta_prior)
    print(f"status={sol.status} wall_ms={sol.wall_ms:.1f}")
    if not sol.ok:
        if sol.infeasible_class:
            print(f"first violated constraint class: {sol.infeasible_class}",
                  file=sys.stderr)
        return 1
    k_max = max(sol.k)
    print(f"k_max={k_max:.4f} inv_r={sol.inv_r[0]:.4g} "
          f"gain_consistency={sol.gain_consistency():.2e}")
    if args.out:
        np.savez(args.out, P=np.stack(sol.P), Y=np.stack(sol.Y), K=np.stack(sol.K),
                 nu=np.asarray(sol.nu), inv_r=np.asarray(sol.inv_r), k=np.asarray(sol.k))
        print(f"solution written to {args.out}")
    return 0


def _cmd_check_iqc(args) -> int:
    try:
        params, spec = ren.load_checkpoint(args.checkpoint)
    except (FunnelrcError, OSError, KeyError) as exc:
        print(f"checkpoint rejected: {exc}", file=sys.stderr)
        return 2
    report = ren.check_iqc(params, spec)
    print(f"certified={report.certified} min_eig={report.min_eig:.3e} "
          f"min_eig_F={report.min_eig_F:.3e}")
    return 0 if report.certified else 1


def _cmd_verify(args) -> int:
    try:
        report = runner.verify(args.run_dir)
    except (OSError, KeyError, FunnelrcError) as exc:
        print(f"cannot verify: {exc}", file=sys.stderr)
        return 2
    for name, ok in sorted(report.checks.items()):
        extra = report.details.get(name, "")
        print(f"[{'PASS' if ok else 'FAIL'}] {name}" + (f" ({extra})" if extra else ""))
    if report.flags_raised:
        print(f"flags raised in trace: {report.flags_raised}")
    print(json.dumps({"ok": report.ok}))
    return 0 if report.ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="funnelrc",
                                description="Funnel-based online recovery control")
    sub = p.add_subparsers(dest="command", required=True)

    pr = sub.add_parser("run", help="run the closed-loop scenario from a config file")
    pr.add_argument("config")
    pr.add_argument("--seed", type=int, default=None)
    pr.add_argument("--out", default=None)
    pr.add_argument("--epochs", type=int, default=None)
    pr.set_defaults(fn=_cmd_run)

    po = sub.add_parser("synth-offline", help="whole-horizon synthesis from a config file")
    po.add_argument("config")
    po.add_argument("--seed", type=int, default=None)
    po.add_argument("--horizon", type=int, default=None)
    po.add_argument("--out", default=None)
    po.set_defaults(fn=_cmd_synth_offline)

    pc = sub.add_parser("check-iqc", help="certificate check on a REN checkpoint")
    pc.add_argument("checkpoint")
    pc.set_defaults(fn=_cmd_check_iqc)

    pv = sub.add_parser("verify", help="re-run invariant suites against a run directory")
    pv.add_argument("run_dir")
    pv.set_defaults(fn=_cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
