"""Command-line interface for the tomography toolkit."""

import argparse
import sys

from .pipeline import PROTOCOL_CHOICES, RunConfig, TomographyPipeline
from .validators import ConvergenceError, TomographyNumericalError

EXIT_INPUT_ERROR = 1
EXIT_INCOMPLETE = 2
EXIT_NUMERICAL_ERROR = 3


class TomographyArgumentParser(argparse.ArgumentParser):
    """Argument parser whose usage errors exit with the input-error code."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT_ERROR, f"{self.prog}: error: {message}\n")


def _rank(value: str):
    if value == "auto":
        return value
    try:
        return int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"rank must be 'auto' or an integer, got '{value}'")


def _add_protocol_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--protocol", choices=PROTOCOL_CHOICES, default="pauli6", help="Protocol family or 'file'")
    parser.add_argument("--protocol-file", help="Protocol JSON file (with --protocol file)")
    parser.add_argument("--modes", type=int, default=4, help="Mode count N of optical protocols (default: 4)")
    parser.add_argument("--trials", type=float, default=1000, help="Trials per group (default: 1000)")
    parser.add_argument("--output", help="Output file (counts CSV for simulate, result JSON otherwise)")


def _add_fit_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--counts", required=True, help="Counts CSV file (row_index,count,trials)")
    parser.add_argument("--rank", type=_rank, default="auto", help="Reconstruction rank or 'auto' (default: auto)")
    parser.add_argument("--significance", type=float, default=0.05, help="Chi-square significance (default: 0.05)")
    parser.add_argument("--max-iterations", type=int, default=10_000, help="Iteration limit (default: 10000)")


def build_parser() -> argparse.ArgumentParser:
    parser = TomographyArgumentParser(
        prog="tomography-toolkit",
        description="Design, audit, simulate and evaluate quantum state and process tomography protocols",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    check = subparsers.add_parser("check", help="Completeness verdict of a protocol")
    _add_protocol_arguments(check)

    simulate = subparsers.add_parser("simulate", help="Simulate counts with a ground-truth sidecar")
    _add_protocol_arguments(simulate)
    simulate.add_argument("--seed", type=int, help="Random seed (required)")
    simulate.add_argument("--fixture", help="State fixture, gate fixture, unitary-network or noisy-network")
    simulate.add_argument("--reference", help="Ground truth from a reference JSON file instead of a fixture")
    simulate.add_argument("--epsilon", type=float, default=0.05, help="Noise weight of noisy fixtures (default: 0.05)")
    simulate.add_argument(
        "--noise-model", choices=("depolarizing", "phase"), default="phase", help="Noise of noisy-network"
    )
    simulate.add_argument("--mode", choices=("sampled", "noiseless"), default="sampled", help="Count generation mode")
    simulate.add_argument(
        "--ungrouped", choices=("poisson", "binomial"), default="poisson", help="Sampling of ungrouped rows"
    )

    for name, description in (
        ("reconstruct", "Maximum-likelihood estimate"),
        ("adequacy", "Chi-square adequacy of the fitted model"),
        ("fidelity", "Plain and adjusted fidelity against a reference"),
        ("loss", "Loss-of-fidelity distribution and confidence bound"),
    ):
        command = subparsers.add_parser(name, help=description)
        _add_protocol_arguments(command)
        _add_fit_arguments(command)
        if name == "fidelity":
            command.add_argument("--reference", required=True, help="Reference state or process JSON file")
        if name == "loss":
            command.add_argument("--seed", type=int, help="Monte-Carlo seed (required)")
            command.add_argument("--confidence", type=float, default=0.95, help="Confidence level (default: 0.95)")

    return parser


def main():
    """Main CLI entry point."""
    args = build_parser().parse_args()
    options = {key: value for key, value in vars(args).items() if value is not None}
    options.pop("command")

    try:
        config = RunConfig(command=args.command, **options)
        pipeline = TomographyPipeline(config)

        if args.command == "check":
            report, _ = pipeline.check()
            if not report.is_complete:
                sys.exit(EXIT_INCOMPLETE)
        elif args.command == "simulate":
            pipeline.simulate()
        else:
            getattr(pipeline, args.command)()

        print("🎉 Done")

    except TomographyNumericalError as e:
        print(str(e), file=sys.stderr)
        if isinstance(e, ConvergenceError):
            print(f"   └── iterations: {e.iterations}, residual: {e.residual:.3e}", file=sys.stderr)
        sys.exit(EXIT_NUMERICAL_ERROR)
    except (ValueError, OSError, KeyError) as e:
        print(str(e), file=sys.stderr)
        sys.exit(EXIT_INPUT_ERROR)
