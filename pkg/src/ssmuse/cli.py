"""Command-line interface.

Subcommands cover the pipeline stages individually (simulate, basis,
train, recon, fit-t1, eval) and end to end (run).  All stages are driven
by the same INI config; artifacts are exchanged through the output
directory under fixed file names.

Exit codes: 0 on success, 1 on configuration errors, 2 on runtime errors.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import experiment
from .config import METHODS, load_config
from .energy import load_checkpoint, save_checkpoint
from .errors import ConfigError
from .io import load_array, save_array, write_csv, write_pgm
from .quant import fit_t1_dictionary
from .solver import SolverTrace

WEIGHTS_FILE = "energy_weights.ssma"
ARCH_FILE = "energy_arch.txt"


def _load(args):
    cfg = load_config(args.config)
    if args.seed:
        cfg = cfg.with_seed_offset(args.seed)
    os.makedirs(args.out, exist_ok=True)
    return cfg


def _cmd_simulate(args):
    cfg = _load(args)
    assets = experiment.build_assets(cfg)
    save_array(os.path.join(args.out, "phantom_t1.ssma"), assets.phantom.t1_map)
    save_array(os.path.join(args.out, "phantom_pd.ssma"),
               assets.phantom.proton_density)
    save_array(os.path.join(args.out, "trajectory.ssma"),
               assets.trajectory.stack())
    save_array(os.path.join(args.out, "coil_maps.ssma"), assets.coils.maps)
    save_array(os.path.join(args.out, "kspace.ssma"), assets.kspace.samples)
    write_pgm(os.path.join(args.out, "phantom_t1.pgm"),
              experiment.mid_slice(assets.phantom.t1_map))
    print(f"simulated {assets.kspace.samples.shape} k-space samples -> {args.out}")


def _cmd_basis(args):
    cfg = _load(args)
    assets = experiment.build_assets(cfg)
    save_array(os.path.join(args.out, "dictionary.ssma"),
               assets.dictionary.signals)
    save_array(os.path.join(args.out, "t1_grid.ssma"), assets.dictionary.t1_grid)
    save_array(os.path.join(args.out, "basis.ssma"), assets.basis.v)
    save_array(os.path.join(args.out, "singular_values.ssma"),
               assets.basis.singular_values)
    frac = assets.basis.captured_energy_fraction()
    print(f"rank-{assets.basis.rank} basis captures {frac:.6f} of signal energy")


def _cmd_train(args):
    cfg = _load(args)
    assets = experiment.build_assets(cfg)
    params, history = experiment.train_energy_model(cfg, assets.basis)
    save_checkpoint(params, os.path.join(args.out, WEIGHTS_FILE),
                    os.path.join(args.out, ARCH_FILE))
    write_csv(os.path.join(args.out, "train_history.csv"),
              ("epoch", "mean_loss", "wall_seconds"),
              [(h["epoch"], repr(h["mean_loss"]), f"{h['wall_seconds']:.3f}")
               for h in history])
    last = history[-1]["mean_loss"] if history else float("nan")
    print(f"trained {cfg.train.epochs} epochs, final loss {last:.6e}")


def _saved_energy_params(out_dir):
    weights = os.path.join(out_dir, WEIGHTS_FILE)
    arch = os.path.join(out_dir, ARCH_FILE)
    if os.path.exists(weights) and os.path.exists(arch):
        return load_checkpoint(weights, arch)
    return None


def _cmd_recon(args):
    cfg = _load(args)
    assets = experiment.build_assets(cfg)
    params = _saved_energy_params(args.out) if args.method == "ssmuse" else None
    result = experiment.reconstruct(assets, args.method, energy_params=params)
    save_array(os.path.join(args.out, f"u_{args.method}.ssma"), result.u)
    if result.trace is not None:
        write_csv(os.path.join(args.out, f"trace_{args.method}.csv"),
                  SolverTrace.CSV_HEADER, result.trace.csv_rows())
    print(f"{args.method} reconstruction done in {result.wall_seconds:.1f} s")


def _cmd_fit_t1(args):
    cfg = _load(args)
    assets = experiment.build_assets(cfg)
    u_path = os.path.join(args.out, f"u_{args.method}.ssma")
    if not os.path.exists(u_path):
        raise ConfigError(f"missing {u_path}; run 'recon --method {args.method}' first")
    u = load_array(u_path)
    t1 = fit_t1_dictionary(u, assets.basis, assets.dictionary,
                           assets.phantom.support_mask)
    save_array(os.path.join(args.out, f"t1_{args.method}.ssma"), t1.t1)
    write_pgm(os.path.join(args.out, f"t1_{args.method}.pgm"),
              experiment.mid_slice(t1.t1), lo=0.0,
              hi=float(assets.phantom.t1_map.max()))
    mask = assets.phantom.support_mask
    err = float(np.mean(np.abs(t1.t1[mask] - assets.phantom.t1_map[mask])))
    print(f"t1_{args.method}.ssma written, mean |T1 error| {err:.4f} s")


def _cmd_eval(args):
    cfg = _load(args)
    assets = experiment.build_assets(cfg)
    results = []
    for method in METHODS:
        u_path = os.path.join(args.out, f"u_{method}.ssma")
        if not os.path.exists(u_path):
            continue
        u = load_array(u_path)
        t1 = fit_t1_dictionary(u, assets.basis, assets.dictionary,
                               assets.phantom.support_mask)
        result = experiment.MethodResult(method=method, u=u, t1=t1,
                                         wall_seconds=0.0)
        experiment.evaluate(result, assets)
        results.append(result)
    if not results:
        raise ConfigError(f"no u_<method>.ssma files found in {args.out}")
    experiment.write_metrics(os.path.join(args.out, "metrics.csv"), results, cfg)
    for result in results:
        print(f"{result.method}: t1 psnr {result.metrics['psnr_t1_db']:.2f} dB")


def _cmd_run(args):
    cfg = _load(args)
    methods = tuple(args.methods) if args.methods else (cfg.method,)
    _, results = experiment.run_experiment(cfg, out_dir=args.out,
                                           methods=methods)
    for result in results:
        print(f"{result.method}: t1 psnr {result.metrics['psnr_t1_db']:.2f} dB, "
              f"{result.wall_seconds:.1f} s")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ssmuse",
        description="Subspace multi-contrast reconstruction with a learned "
                    "multi-scale energy prior, on synthetic data.")
    parser.add_argument("--config", default=None, help="INI config file")
    parser.add_argument("--seed", type=int, default=0,
                        help="offset added to every configured seed")
    parser.add_argument("--out", default="out", help="output directory")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", help="write the synthetic acquisition").set_defaults(
        func=_cmd_simulate)
    sub.add_parser("basis", help="write the signal dictionary and basis").set_defaults(
        func=_cmd_basis)
    sub.add_parser("train", help="train the energy prior").set_defaults(
        func=_cmd_train)
    recon = sub.add_parser("recon", help="reconstruct the subspace factor")
    recon.add_argument("--method", choices=METHODS, default="ssmuse")
    recon.set_defaults(func=_cmd_recon)
    fit = sub.add_parser("fit-t1", help="fit T1 from a saved reconstruction")
    fit.add_argument("--method", choices=METHODS, default="ssmuse")
    fit.set_defaults(func=_cmd_fit_t1)
    sub.add_parser("eval", help="metrics for all saved reconstructions").set_defaults(
        func=_cmd_eval)
    run = sub.add_parser("run", help="full pipeline end to end")
    run.add_argument("--methods", nargs="*", choices=METHODS, default=None)
    run.set_defaults(func=_cmd_run)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
