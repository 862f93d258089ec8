import argparse
import sys
import traceback
from pathlib import Path

from loguru import logger
from PySide6.QtCore import QCoreApplication, Qt

from .checkpoint import load_model
from .config import SyntheticSpec, TrainConfig, load_config, load_synthetic_spec
from .corpus import (
    Dataset,
    generate_synthetic_corpus,
    load_corpus,
    load_embeddings,
    load_seed_lexicon,
    load_stopwords,
    write_synthetic_corpus,
)
from .evaluation import (
    evaluate_model,
    export_vectors,
    predict_lines,
    run_ablation,
    write_predictions,
)
from .exceptions import ConfigError, DataError, DomainError, TrainingError
from .worker import TrainingWorker

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
LOG_FORMAT = "[{time:HH:mm:ss}] {level}: {message}"


class UsageError(Exception):
    pass


class ArgumentParser(argparse.ArgumentParser):
    """argparse parser that raises UsageError instead of exiting."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def configure_logging(verbose=False, quiet=False):
    logger.remove()
    level = "DEBUG" if verbose else "WARNING" if quiet else "INFO"
    logger.add(sys.stderr, format=LOG_FORMAT, level=level)


def _stopwords(args, model=None):
    """The --stopwords file if given, else the stopwords saved with ``model``."""
    if args.stopwords:
        return load_stopwords(args.stopwords)
    return model.stopwords if model is not None else None


def run_training_worker(config, dataset, lexicon, vocab, table, out_dir, stopwords=None):
    """
    Run a TrainingWorker and block until it finishes.

    Ctrl+C asks the worker to stop after its current mini-batch.

    Returns:
        TrainResult: The worker's result

    Raises:
        Exception: Whatever the training run raised
    """
    app = QCoreApplication.instance() or QCoreApplication([])
    worker = TrainingWorker(
        config, dataset, lexicon, vocab, table, out_dir=out_dir, stopwords=stopwords
    )
    worker.progress.connect(logger.info, Qt.ConnectionType.DirectConnection)
    worker.error.connect(logger.debug, Qt.ConnectionType.DirectConnection)
    worker.start()
    try:
        while not worker.wait(200):
            pass
    except KeyboardInterrupt:
        worker.stop()
        worker.wait()
    if worker.exception is not None:
        raise worker.exception
    return worker.result


def cmd_train(args):
    config = load_config(args.config) if args.config else TrainConfig()
    vocab, table = load_embeddings(args.embeddings)
    stopwords = _stopwords(args)
    lexicon = load_seed_lexicon(args.seeds, vocab)
    # training labels are never read, so they are not resolved either
    dataset = Dataset(
        train=load_corpus(args.corpus, vocab, stopwords=stopwords),
        valid=load_corpus(args.valid, vocab, lexicon, stopwords) if args.valid else [],
    )
    result = run_training_worker(
        config, dataset, lexicon, vocab, table, args.out, stopwords
    )
    if result is None or result.cancelled:
        logger.warning("Training did not complete; nothing was written")
        return EXIT_USAGE
    return EXIT_OK


def cmd_eval(args):
    model = load_model(args.model)
    segments = load_corpus(
        args.labeled_corpus, model.vocab, model.lexicon, _stopwords(args, model)
    )
    report = evaluate_model(model, segments, exclude_general=args.exclude_general)
    for line in report.lines(per_aspect=args.per_aspect):
        print(line)
    if args.confusion:
        report.write_confusion(args.confusion)
    return EXIT_OK


def cmd_predict(args):
    model = load_model(args.model)
    if args.input == "-":
        lines = sys.stdin.read().splitlines()
    else:
        try:
            lines = Path(args.input).read_text(encoding="utf-8").splitlines()
        except OSError as e:
            raise DataError(f"Cannot read {args.input}: {e}") from e
    records = predict_lines(model, lines, _stopwords(args, model))
    write_predictions(records, model.lexicon.aspect_names, sys.stdout, args.format)
    return EXIT_OK


def cmd_export(args):
    model = load_model(args.model)
    segments = load_corpus(
        args.corpus, model.vocab, model.lexicon, _stopwords(args, model)
    )
    export_vectors(model, segments, args.out)
    logger.info(f"Exported {len(segments)} segment vectors to {args.out}")
    return EXIT_OK


def cmd_synth(args):
    spec = load_synthetic_spec(args.spec) if args.spec else SyntheticSpec()
    vocab, table, lexicon, dataset = generate_synthetic_corpus(spec, args.seed)
    paths = write_synthetic_corpus(args.out, vocab, table, lexicon, dataset)
    logger.info(
        f"Wrote {len(dataset.train)}/{len(dataset.valid)}/{len(dataset.test)} "
        f"train/valid/test segments to {paths['train'].parent}"
    )
    return EXIT_OK


def cmd_ablate(args):
    spec = load_synthetic_spec(args.spec) if args.spec else SyntheticSpec()
    config = load_config(args.config) if args.config else TrainConfig()
    seeds = [config.seed + i for i in range(args.seeds)]
    result = run_ablation(spec, config, seeds, progress=logger.info)
    for name, value in result.means().items():
        print(f"{name} {value:.4f}")
    for name in result.scores:
        if name not in ("full", "teacher"):
            logger.info(f"full >= {name} on {result.wins(name)} of {len(seeds)} seeds")
    return EXIT_OK


def build_parser():
    parser = ArgumentParser(
        prog="hyperaspect",
        description="Weakly supervised aspect extraction with hyperbolic disentangled seeds.",
    )
    noise = parser.add_mutually_exclusive_group()
    noise.add_argument("--verbose", action="store_true", help="Log debug messages")
    noise.add_argument("--quiet", action="store_true", help="Log warnings and errors only")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="Train a model")
    p.add_argument("--config", help="key=value training config")
    p.add_argument("--corpus", required=True, help="Training segments, one per line")
    p.add_argument("--embeddings", required=True, help="Text word embeddings")
    p.add_argument("--seeds", required=True, help="Seed lexicon (aspect<TAB>seeds)")
    p.add_argument("--valid", help="Labelled validation segments")
    p.add_argument("--stopwords", help="Stopword list, one per line")
    p.add_argument("--out", required=True, help="Output directory")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("eval", help="Score a model on labelled segments")
    p.add_argument("--model", required=True)
    p.add_argument("--labeled-corpus", required=True)
    p.add_argument("--per-aspect", action="store_true")
    p.add_argument("--exclude-general", action="store_true")
    p.add_argument("--confusion", help="Write the confusion matrix CSV here")
    p.add_argument("--stopwords")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("predict", help="Predict aspects of segments")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True, help="Segment file or - for stdin")
    p.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    p.add_argument("--stopwords")
    p.set_defaults(handler=cmd_predict)

    p = sub.add_parser("export", help="Export segment vectors as CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--stopwords")
    p.set_defaults(handler=cmd_export)

    p = sub.add_parser("synth", help="Generate a synthetic corpus")
    p.add_argument("--spec", help="key=value synthetic corpus parameters")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("ablate", help="Compare model variants on synthetic corpora")
    p.add_argument("--spec", help="key=value synthetic corpus parameters")
    p.add_argument("--config", help="key=value base training config")
    p.add_argument("--seeds", type=int, default=5, help="Number of seeds")
    p.set_defaults(handler=cmd_ablate)
    return parser


def main(argv=None):
    """
    Entry point of the ``hyperaspect`` command.

    Returns:
        int: 0 on success, 1 on a usage error or unexpected failure, 2 on a
            data, config, domain or training error
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:  # --help
        return e.code or EXIT_OK

    configure_logging(args.verbose, args.quiet)
    try:
        return args.handler(args)
    except (DataError, ConfigError, DomainError, TrainingError) as e:
        logger.error(str(e))
        return EXIT_DATA
    except Exception as e:
        logger.critical(f"Critical error: {e}")
        traceback.print_exc()
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
