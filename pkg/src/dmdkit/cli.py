"""Command-line pipeline: generate datasets, fit models, forecast, report.

Exit codes: 0 success, 1 usage error, 2 data/parse error, 3 convergence
failure (too few accepted bagging trials). All randomness is controlled by
explicit ``--seed`` flags; identical argv produces byte-identical outputs.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import __version__
from .bop import BagConfig, bop_dmd
from .core import exact_dmd, reconstruct
from .datagen import ToySpec, oscillator_surrogate, toy_dataset
from .errors import DmdError, TooFewAcceptedTrials
from .fileio import (
    ModelArchive,
    format_float,
    load_archive,
    load_csv,
    save_archive,
    save_csv,
)
from .forecast import Forecast, forecast
from .varpro import SolverConfig, optimized_dmd


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that signals usage problems instead of exiting with code 2."""

    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dmdkit",
                     description="DMD fitting, bagged ensembles, and forecasting")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="synthetic datasets")
    gen_sub = gen.add_subparsers(dest="generator", required=True)

    toy = gen_sub.add_parser("toy", help="three-mode benchmark field")
    toy.add_argument("--sigma", type=float, default=0.0)
    toy.add_argument("--n", type=int, default=128)
    toy.add_argument("--m", type=int, default=100)
    toy.add_argument("--seed", type=int, default=0)
    toy.add_argument("--real", action="store_true",
                     help="keep only the real part (rank grows to 4)")
    toy.add_argument("--out", required=True, help="data CSV path")
    toy.add_argument("--truth", help="noise-free CSV path")
    toy.add_argument("--omegas-out",
                     help="true-eigenvalue JSON (default: omegas.json next to --out)")

    osc = gen_sub.add_parser("oscillator", help="2-D oscillating bump field")
    osc.add_argument("--freqs", required=True, help="comma-separated frequencies")
    osc.add_argument("--decays", required=True, help="comma-separated decay rates")
    osc.add_argument("--nx", type=int, default=32)
    osc.add_argument("--ny", type=int, default=16)
    osc.add_argument("--m", type=int, default=100)
    osc.add_argument("--sigma", type=float, default=0.0)
    osc.add_argument("--seed", type=int, default=0)
    osc.add_argument("--t-start", type=float, default=0.0)
    osc.add_argument("--t-end", type=float, default=1.0)
    osc.add_argument("--out", required=True)
    osc.add_argument("--truth")
    osc.add_argument("--omegas-out")

    fit = sub.add_parser("fit", help="fit a model to a snapshot CSV")
    fit.add_argument("--method", choices=["exact", "opt", "bop"], required=True)
    fit.add_argument("--rank", type=int, required=True)
    fit.add_argument("--in", dest="input", required=True, metavar="CSV")
    fit.add_argument("--out", required=True, help="model archive JSON path")
    fit.add_argument("--p", type=int, help="snapshots per bag (default: m/5)")
    fit.add_argument("--k", type=int, default=100, help="bagging trials")
    fit.add_argument("--seed", type=int, help="required for --method bop")
    fit.add_argument("--freeze-seed", action="store_true",
                     help="seed every trial from the base model")
    fit.add_argument("--max-redraws", type=int, default=3)
    fit.add_argument("--threads", type=int, default=1,
                     help=">1 runs trials in parallel and implies --freeze-seed")
    fit.add_argument("--max-iters", type=int)
    fit.add_argument("--grad-tol", type=float)
    fit.add_argument("--real-cap", type=float,
                     help="growth-rate cap marking a solve as diverged")
    fit.add_argument("--conjugate-pairs", action="store_true")
    fit.add_argument("--eigen-stats-out",
                     help="default: eigen_stats.csv next to --out (bop only)")
    fit.add_argument("--mode-variance-out",
                     help="default: mode_variance.csv next to --out (bop only)")

    fc = sub.add_parser("forecast", help="Monte-Carlo forecast from an archive")
    fc.add_argument("--model", required=True)
    fc.add_argument("--t-start", type=float, required=True)
    fc.add_argument("--t-end", type=float, required=True)
    fc.add_argument("--steps", type=int, required=True)
    fc.add_argument("--draws", type=int, default=100)
    fc.add_argument("--seed", type=int)
    fc.add_argument("--out", required=True, help="mean-trajectory CSV")
    fc.add_argument("--var-out", help="pointwise-variance CSV")

    rep = sub.add_parser("report", help="eigenvalue errors against known truth")
    rep.add_argument("--model", required=True)
    rep.add_argument("--truth-omegas", required=True)
    rep.add_argument("--out", help="default: print to stdout")

    return parser


def _sibling(path: str, name: str) -> str:
    return os.path.join(os.path.dirname(os.path.abspath(path)), name)


def _write_json(payload, path) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_omegas(omegas, path) -> None:
    _write_json({"omegas": [[w.real, w.imag] for w in omegas]}, path)


def _load_omegas(path) -> np.ndarray:
    with open(path) as fh:
        pairs = json.load(fh)["omegas"]
    return np.asarray([complex(re, im) for re, im in pairs])


def _parse_float_list(text: str, flag: str):
    try:
        return [float(part) for part in text.split(",")]
    except ValueError:
        raise _UsageError(f"{flag} expects comma-separated numbers, got {text!r}") from None


def _cmd_generate(args) -> int:
    if args.generator == "toy":
        spec = ToySpec(n=args.n, m=args.m, sigma=args.sigma, seed=args.seed)
        data, truth, omegas = toy_dataset(spec, real=args.real)
    else:
        freqs = _parse_float_list(args.freqs, "--freqs")
        decays = _parse_float_list(args.decays, "--decays")
        if len(freqs) != len(decays):
            raise _UsageError("--freqs and --decays must have the same length")
        data, truth, omegas = oscillator_surrogate(
            args.nx, args.ny, args.m, freqs, decays, args.sigma, args.seed,
            t_range=(args.t_start, args.t_end))
    save_csv(data.values, data.times, args.out)
    if args.truth:
        save_csv(truth.values, truth.times, args.truth)
    omegas_out = args.omegas_out or _sibling(args.out, "omegas.json")
    _write_omegas(omegas, omegas_out)
    return 0


def _solver_from_args(args) -> SolverConfig:
    overrides = {}
    if args.max_iters is not None:
        overrides["max_iterations"] = args.max_iters
    if args.grad_tol is not None:
        overrides["gradient_tolerance"] = args.grad_tol
    if args.real_cap is not None:
        overrides["eigenvalue_real_cap"] = args.real_cap
    if args.conjugate_pairs:
        overrides["enforce_conjugate_pairs"] = True
    return SolverConfig(**overrides)


def _write_eigen_stats(stats, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("mode,mean_real,mean_imag,variance_real,variance_imag\n")
        for j in range(stats.rank):
            fh.write(",".join([
                str(j),
                format_float(stats.eigenvalue_mean[j].real),
                format_float(stats.eigenvalue_mean[j].imag),
                format_float(stats.eigenvalue_variance_real[j]),
                format_float(stats.eigenvalue_variance_imag[j]),
            ]) + "\n")


def _write_mode_variance(stats, path) -> None:
    total = stats.mode_variance_real + stats.mode_variance_imag
    with open(path, "w", newline="") as fh:
        fh.write("x," + ",".join(f"mode_{j}" for j in range(stats.rank)) + "\n")
        for i, row in enumerate(total):
            fh.write(f"x{i}," + ",".join(format_float(v) for v in row) + "\n")


def _cmd_fit(args) -> int:
    data = load_csv(args.input)
    solver = _solver_from_args(args)
    metadata = {
        "method": args.method,
        "rank": args.rank,
        "time_span": [data.times[0], data.times[-1]],
        "source": args.input,
        "seed": args.seed,
        "solver": dataclasses.asdict(solver),
    }

    if args.method == "exact":
        model, _ = exact_dmd(data, args.rank)
        archive = ModelArchive(kind="exact", metadata=metadata, model=model)
    elif args.method == "opt":
        model, report = optimized_dmd(data, args.rank, config=solver)
        if not report.converged:
            print(f"warning: solver did not converge "
                  f"({report.termination_reason.value}, "
                  f"cost {report.final_cost:.3e})", file=sys.stderr)
        metadata["converged"] = report.converged
        metadata["iterations"] = report.iterations
        archive = ModelArchive(kind="optimized", metadata=metadata, model=model)
    else:
        if args.seed is None:
            raise _UsageError("--method bop requires --seed")
        p = args.p if args.p is not None else max(2, data.m // 5)
        freeze = args.freeze_seed or args.threads > 1
        bag = BagConfig(p=p, trials=args.k, base_seed=args.seed,
                        max_redraws=args.max_redraws, freeze_seed=freeze)
        stats, _ = bop_dmd(data, args.rank, bag, solver, threads=args.threads)
        metadata["bag"] = {"p": p, "trials": args.k, "freeze_seed": freeze,
                           "max_redraws": args.max_redraws,
                           "accepted": stats.accepted_trials,
                           "rejected": stats.rejected_trials}
        archive = ModelArchive(kind="bop_ensemble", metadata=metadata,
                               statistics=stats)
        _write_eigen_stats(stats, args.eigen_stats_out
                           or _sibling(args.out, "eigen_stats.csv"))
        _write_mode_variance(stats, args.mode_variance_out
                             or _sibling(args.out, "mode_variance.csv"))

    save_archive(archive, args.out)
    return 0


def _cmd_forecast(args) -> int:
    if args.seed is None:
        raise _UsageError("forecast requires --seed")
    archive = load_archive(args.model)
    times = np.linspace(args.t_start, args.t_end, args.steps)
    if archive.statistics is not None:
        fc = forecast(archive.statistics, times, args.draws, args.seed)
    else:
        mean = reconstruct(archive.model, times)
        zeros = np.zeros(mean.shape, dtype=float)
        fc = Forecast(times, mean, zeros, zeros.copy(), args.draws)
    save_csv(fc.mean, fc.times, args.out)
    if args.var_out:
        save_csv(fc.variance, fc.times, args.var_out)
    return 0


def _cmd_report(args) -> int:
    archive = load_archive(args.model)
    truth = _load_omegas(args.truth_omegas)
    if archive.statistics is not None:
        estimates = archive.statistics.eigenvalue_mean
        var_re = archive.statistics.eigenvalue_variance_real
        var_im = archive.statistics.eigenvalue_variance_imag
    else:
        estimates = archive.model.eigenvalues
        var_re = var_im = None

    cost = np.abs(estimates[:, None] - truth[None, :])
    rows, cols = linear_sum_assignment(cost)
    entries = []
    for i, j in zip(rows, cols):
        entry = {
            "truth": [truth[j].real, truth[j].imag],
            "estimate": [estimates[i].real, estimates[i].imag],
            "abs_error": float(abs(estimates[i] - truth[j])),
        }
        if var_re is not None:
            entry["z_real"] = (
                None if var_re[i] == 0
                else float((truth[j].real - estimates[i].real) / np.sqrt(var_re[i])))
            entry["z_imag"] = (
                None if var_im[i] == 0
                else float((truth[j].imag - estimates[i].imag) / np.sqrt(var_im[i])))
        entries.append(entry)
    entries.sort(key=lambda e: (e["truth"][0], e["truth"][1]))

    payload = {
        "kind": archive.kind,
        "eigenvalues": entries,
        "max_abs_error": max(e["abs_error"] for e in entries),
        "unmatched_estimates": int(estimates.size - rows.size),
        "unmatched_truths": int(truth.size - cols.size),
    }
    if args.out:
        _write_json(payload, args.out)
    else:
        print(json.dumps(payload, indent=2, sort_keys=True))
    return 0


_HANDLERS = {
    "generate": _cmd_generate,
    "fit": _cmd_fit,
    "forecast": _cmd_forecast,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _HANDLERS[args.command](args)
    except _UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except SystemExit as exc:  # argparse --help / --version
        code = exc.code
        return int(code) if code is not None else 0
    except TooFewAcceptedTrials as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (DmdError, ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
