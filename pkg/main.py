import argparse
import logging
import sys

from src.config import load_config
from src.errors import ConfigError, ShapeCompletionError
from src import pipeline

COMMANDS = ["gen-corpus", "gen-dataset", "train-classifier", "train-epn", "build-index", "complete", "mesh", "bench"]


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _str_list(text):
    return [v.strip() for v in text.split(",") if v.strip()]


def build_parser():
    parser = argparse.ArgumentParser(description="Shape completion pipeline: scan, complete, synthesize, mesh.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("paths", nargs="*", help="complete: input TSDF [output dir]; mesh: grid [output mesh]")
    parser.add_argument("--config", help="YAML configuration file")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--force", action="store_true", help="overwrite a non-empty output directory")
    parser.add_argument("--no-synth", action="store_true", help="stop after the 32³ prediction")
    parser.add_argument("--synth-only", action="store_true", help="run synthesis directly on the scan")
    parser.add_argument("--iso", type=float, help="iso level for mesh extraction")
    parser.add_argument("--k", type=int, help="number of retrieved neighbours")
    parser.add_argument("--views", type=_int_list, help="view counts per trajectory, e.g. 1,2,4")
    parser.add_argument("--retrieval-source", choices=["prediction", "partial"])
    parser.add_argument("--variants", type=_str_list, help="train-epn: comma-separated variants")
    parser.add_argument("--methods", type=_str_list, help="bench: comma-separated methods")
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--verbose", action="store_true")
    return parser


def setup_logging(verbose=False):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )


def run(args):
    config = load_config(args.config, {
        "seed": args.seed,
        "mesh.iso": args.iso,
        "synthesis.k": args.k,
        "scan.view_counts": args.views,
        "synthesis.retrieval_source": args.retrieval_source,
    })
    command = args.command
    if command == "gen-corpus":
        pipeline.cmd_gen_corpus(config, args.force)
    elif command == "gen-dataset":
        pipeline.cmd_gen_dataset(config, args.force)
    elif command == "train-classifier":
        pipeline.cmd_train_classifier(config, args.epochs)
    elif command == "train-epn":
        pipeline.cmd_train_epn(config, args.variants, args.epochs)
    elif command == "build-index":
        pipeline.cmd_build_index(config)
    elif command == "complete":
        if not args.paths:
            raise ConfigError("complete needs an input grid path")
        pipeline.cmd_complete(config, args.paths[0], args.paths[1] if len(args.paths) > 1 else None,
                              synth=not args.no_synth, synth_only=args.synth_only)
    elif command == "mesh":
        if not args.paths:
            raise ConfigError("mesh needs a grid path")
        pipeline.cmd_mesh(config, args.paths[0], args.paths[1] if len(args.paths) > 1 else None)
    elif command == "bench":
        pipeline.cmd_bench(config, args.methods)


def main(argv=None):
    args = build_parser().parse_args(argv)
    setup_logging(args.verbose)
    try:
        run(args)
    except ShapeCompletionError as err:
        logging.getLogger("main").error("%s failed: %s", args.command, err)
        return err.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
