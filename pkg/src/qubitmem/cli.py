"""Command-line front end.

    qubitmem [--config PATH] [--out DIR] [--seed N] [--exact] COMMAND

Commands: spectrum, storage, qpt, sweep. Exit codes: 0 ok, 2 configuration
error, 3 numerical failure, 4 MLE non-convergence.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import export
from .config import ConfigError, RunConfig, load_config
from .eit_medium import EitError, fwhm, storage_timetrace, transmission_spectrum
from .measurement_sim import PoissonStream, dataset_to_csv, tomography_dataset
from .memory_channel import NoSignalError
from .process_rep import chi_to_dict
from .tomography import MleConvergenceError, fidelity_vs_time, mle_fit

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_NONCONVERGENCE = 4


class CommandError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    # SUPPRESS lets the flags appear before or after the subcommand
    common.add_argument("--config", default=argparse.SUPPRESS, help="INI run configuration")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="PRNG seed (u64)")
    common.add_argument(
        "--exact", action="store_true", default=argparse.SUPPRESS, help="exact probabilities, no sampling"
    )
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    parser = argparse.ArgumentParser(
        prog="qubitmem",
        description="Dual-rail EIT polarization memory: spectra, storage traces, process tomography.",
        parents=[common],
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrum", parents=[common], help="EIT transmission spectrum and FWHM")
    p.add_argument("--span", type=float, default=900e3, help="half-width of the detuning grid, Hz")
    p.add_argument("--points", type=int, default=4001, help="number of grid points")

    sub.add_parser("storage", parents=[common], help="storage/retrieval intensity trace")

    p = sub.add_parser("qpt", parents=[common], help="synthetic dataset and MLE reconstruction")
    p.add_argument("--time", type=float, default=7e-6, help="storage time, s")

    sub.add_parser("sweep", parents=[common], help="process fidelity versus storage time")
    return parser


def _prepare(args: argparse.Namespace) -> tuple[RunConfig, Path]:
    cfg = load_config(getattr(args, "config", None))
    if hasattr(args, "seed"):
        if not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        cfg.counting = replace(cfg.counting, seed=args.seed)
    out = Path(getattr(args, "out", cfg.output_dir))
    return cfg, out


def _mkdir(out: Path) -> None:
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from None


def cmd_spectrum(args, cfg: RunConfig, out: Path) -> int:
    cfg.require("eit")
    if args.points < 3 or args.span <= 0:
        raise ConfigError("--points must be >= 3 and --span positive")
    grid = np.linspace(-args.span, args.span, args.points)
    spectrum = transmission_spectrum(cfg.eit, grid)
    width = fwhm(spectrum)
    _mkdir(out)
    export.write_atomic(out / "spectrum.csv", export.spectrum_csv(spectrum, cfg.precision))
    print(f"fwhm_hz={export.fmt(width, cfg.precision)}")
    return EXIT_OK


def cmd_storage(args, cfg: RunConfig, out: Path) -> int:
    cfg.require("eit")
    try:
        timing = cfg.timing()
    except EitError as exc:
        raise ConfigError(str(exc)) from None
    s = cfg.storage
    trace = storage_timetrace(cfg.eit, s.eta0, s.leak_fraction, timing, s.grid_step)
    _mkdir(out)
    export.write_atomic(out / "storage_trace.csv", export.trace_csv(trace, cfg.precision))
    print(f"leaked_fraction={export.fmt(trace.leaked_fraction, cfg.precision)}")
    print(f"retrieved_fraction={export.fmt(trace.retrieved_fraction, cfg.precision)}")
    print(f"gated_fraction={export.fmt(trace.gated_fraction, cfg.precision)}")
    return EXIT_OK


def cmd_qpt(args, cfg: RunConfig, out: Path) -> int:
    cfg.require("memory", "counting", "mle")
    exact = getattr(args, "exact", False)
    if args.time < 0:
        raise ConfigError("--time must be >= 0")
    stream = None if exact else PoissonStream(cfg.counting.seed)
    records = tomography_dataset(cfg.memory, args.time, cfg.counting, exact=exact, stream=stream)
    _mkdir(out)
    export.write_atomic(out / "qpt_dataset.csv", dataset_to_csv(records))
    try:
        result = mle_fit(records, cfg.mle)
    except MleConvergenceError as exc:
        data = chi_to_dict(exc.last_chi)
        data.update(converged=False, nll_history=exc.nll_history)
        export.write_atomic(out / "qpt_chi.json", export.to_json(data))
        raise CommandError(str(exc), EXIT_NONCONVERGENCE) from None
    data = export.reconstruction_dict(result)
    data.update(storage_time_s=args.time, exact=exact, iterations=result.iterations)
    export.write_atomic(out / "qpt_chi.json", export.to_json(data))
    print(f"fidelity_to_identity={export.fmt(result.fidelity_to_identity, cfg.precision)}")
    return EXIT_OK


def cmd_sweep(args, cfg: RunConfig, out: Path) -> int:
    cfg.require("memory", "counting", "mle", "sweep")
    exact = getattr(args, "exact", False)
    try:
        curve = fidelity_vs_time(cfg.memory, cfg.counting, cfg.times, cfg.mle, exact=exact)
    except MleConvergenceError as exc:
        raise CommandError(str(exc), EXIT_NONCONVERGENCE) from None
    _mkdir(out)
    export.write_atomic(out / "fidelity_curve.csv", export.curve_csv(curve, cfg.precision))
    print(f"min_fidelity={export.fmt(curve.fidelities.min(), cfg.precision)}")
    return EXIT_OK


COMMANDS = {"spectrum": cmd_spectrum, "storage": cmd_storage, "qpt": cmd_qpt, "sweep": cmd_sweep}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg, out = _prepare(args)
        return COMMANDS[args.command](args, cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CommandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (EitError, NoSignalError, ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
