import sys
import json
from argparse import ArgumentParser
from typing import List, Optional

from eblc.client import EBLC, HarnessConfig
from eblc.utils.exceptions import _BaseError

SUBCOMMANDS = ('gen-corpus', 'augment', 'calibrate', 'classify', 'metrics', 'run', 'evaluate')


def build_parser() -> ArgumentParser:
    """
    Argument parser with one subparser per subcommand. Options shared by all
    subcommands are accepted after the subcommand name.
    """
    common = ArgumentParser(add_help=False)
    common.add_argument(
        "--config",
        "-c",
        type=str,
        default=None,
        help="Configuration in .json format, either a file path or an inline JSON string."
    )
    common.add_argument(
        "--output",
        "-o",
        type=str,
        required=True,
        help="Folder where results are written. Nothing is written outside of it."
    )
    common.add_argument(
        "--seed",
        type=int,
        default=None,
        help="Seed of every random draw; overrides the seed of the configuration."
    )
    common.add_argument(
        "--fps",
        type=float,
        default=None,
        help="Frame rate used for bitrates; overrides the configuration (default 10)."
    )
    common.add_argument(
        "--verbose",
        "-v",
        action="store_true",
        help="Prints additional information and full tracebacks."
    )
    common.add_argument(
        "--quiet",
        "-q",
        action="store_true",
        help="Suppresses all output except for errors. Overrides --verbose."
    )

    parser = ArgumentParser(
        prog="eblc",
        description="\nEnvironment-aware lossy compression of pedestrian-detection video streams.\n"
    )
    subparsers = parser.add_subparsers(dest="command", metavar="{" + ",".join(SUBCOMMANDS) + "}")
    subparsers.required = True

    _parser = subparsers.add_parser('gen-corpus', parents=[common], help="Generate an annotated synthetic corpus.")
    _parser.add_argument("--frames", type=int, default=None, help="Number of frames (default from config).")
    _parser.add_argument(
        "--schedule", type=str, default=None,
        help='Weather schedule, e.g. "normal:150,heavy_rain:150", or a JSON file of frame ranges.'
    )

    _parser = subparsers.add_parser('augment', parents=[common], help="Synthesise a corpus to one condition.")
    _parser.add_argument("--input", "-i", type=str, required=True, help="Corpus or frame folder.")
    _parser.add_argument("--condition", type=str, required=True, help="Target condition, e.g. medium_dark.")

    _parser = subparsers.add_parser(
        'calibrate', parents=[common], help="Build the reference table and fit the classifier."
    )
    _parser.add_argument(
        "--input", "-i", type=str, default=None,
        help="Annotated clear corpus; generated from the seed when omitted."
    )

    _parser = subparsers.add_parser('classify', parents=[common], help="Predict the condition of every frame.")
    _parser.add_argument("--input", "-i", type=str, required=True, help="Corpus or frame folder.")
    _parser.add_argument("--classifier", type=str, required=True, help="Classifier thresholds (.json).")

    _parser = subparsers.add_parser('metrics', parents=[common], help="PSNR, RMSE and SSIM of two frame folders.")
    _parser.add_argument("--reference", type=str, required=True, help="Reference frame folder.")
    _parser.add_argument("--degraded", type=str, required=True, help="Degraded frame folder.")

    _parser = subparsers.add_parser('run', parents=[common], help="Stream a corpus through the controller.")
    _parser.add_argument("--input", "-i", type=str, required=True, help="Corpus or frame folder.")
    _parser.add_argument("--table", type=str, default=None, help="Reference table (.json).")
    _parser.add_argument("--classifier", type=str, default=None, help="Classifier thresholds (.json).")
    _parser.add_argument("--schedule", type=str, default=None, help="Weather schedule applied to the corpus.")
    _parser.add_argument(
        "--static-crf", type=int, default=None,
        help="Send every frame at this CRF with classification disabled."
    )

    _parser = subparsers.add_parser('evaluate', parents=[common], help="Summarise a report stream.")
    _parser.add_argument("--reports", type=str, required=True, help="Step reports (.jsonl).")
    _parser.add_argument(
        "--fixture", type=str, default=None,
        help="Published bitrate table (.tsv) whose reduction factors are recomputed."
    )
    return parser


def dispatch(client: EBLC, args) -> object:
    if args.command == 'gen-corpus':
        return client.gen_corpus(args.frames, args.schedule)
    if args.command == 'augment':
        return client.augment(args.input, args.condition)
    if args.command == 'calibrate':
        return client.calibrate(args.input)
    if args.command == 'classify':
        return client.classify(args.input, args.classifier)
    if args.command == 'metrics':
        return client.metrics(args.reference, args.degraded)
    if args.command == 'run':
        return client.run(args.input, args.table, args.classifier, args.schedule, args.static_crf)
    return client.evaluate(args.reports, args.fixture)


def main(argv: Optional[List[str]] = None) -> int:
    """
    Main function of the application, which parses the arguments and runs
    the requested subcommand.

    :return: 0 on success, 1 on a domain error, 2 on a usage error
    :rtype: int
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    # Full tracebacks are printed only in verbose mode
    if not args.verbose:
        sys.tracebacklimit = 0

    verbosity = 1
    if args.verbose:
        verbosity = 2
    if args.quiet:
        verbosity = 0

    try:
        config = HarnessConfig.load(args.config, seed=args.seed, fps=args.fps)
        client = EBLC(config, outfolder=args.output, verbosity=verbosity)
        result = dispatch(client, args)
    except _BaseError as exc:
        print(f"eblc: error: {exc.describe()}", file=sys.stderr)
        return 1
    except (FileNotFoundError, json.JSONDecodeError, ValueError) as exc:
        print(f"eblc: error: {args.command}: {exc}", file=sys.stderr)
        return 1

    if args.command in ('run', 'evaluate', 'metrics') and verbosity > 0:
        print(json.dumps(result, indent=4, sort_keys=True, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
