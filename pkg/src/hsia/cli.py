"""Command-line harness.

Subcommands::

    hsia generate --config CFG [--out DIR] [--seed N]   synthesize the scene
    hsia train    --config CFG [--out DIR] [--seed N]   fit the patch classifier
    hsia attack   --config CFG [--out DIR] [--seed N]   run the configured attacks
    hsia report   --config CFG [--out DIR] [--seed N]   aggregate metrics to CSV
    hsia verify   [--seed N]                            run the self-check suite

Exit codes: 0 success, 1 validation error (bad config, missing inputs),
2 runtime error (divergence, degenerate data, corrupt artifacts), 3 self-
verification failure.
"""

import argparse
import logging
import sys

from . import pipeline, verify
from .config import config_hash, load_config
from .errors import ConfigError, FormatError, HsiaError

log = logging.getLogger("hsia")


def _parser():
    parser = argparse.ArgumentParser(
        prog="hsia", description="Adversarial attack testbed for hyperspectral patch classifiers")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (
            ("generate", "synthesize the scene cube and truth map"),
            ("train", "train the patch classifier on the generated scene"),
            ("attack", "run every configured attack and write metrics"),
            ("report", "aggregate attack metrics into results.csv")):
        cmd = sub.add_parser(name, help=text)
        cmd.add_argument("--config", required=True, help="YAML experiment config")
        cmd.add_argument("--out", default=None, help="output directory (overrides config)")
        cmd.add_argument("--seed", type=int, default=None, help="experiment seed override")
    ver = sub.add_parser("verify", help="run the built-in numeric self-checks")
    ver.add_argument("--seed", type=int, default=0, help="seed for the check suite")
    return parser


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s")

    if args.command == "verify":
        ok = verify.run_verification(seed=args.seed)
        if not ok:
            log.error("self-verification failed")
            return 3
        return 0

    try:
        cfg = load_config(args.config, out_override=args.out, seed_override=args.seed)
    except ConfigError as exc:
        log.error("invalid configuration: %s", exc)
        return 1

    log.info("config %s (hash %s), output %s", args.config, config_hash(cfg), cfg.output_dir)
    try:
        if args.command == "generate":
            scene = pipeline.cmd_generate(cfg)
            log.info("wrote %s (%dx%dx%d, %d classes)", pipeline.SCENE_FILE,
                     *scene.cube.shape, scene.num_classes)
        elif args.command == "train":
            _, history = pipeline.cmd_train(cfg)
            log.info("trained %d epochs, final loss %.6f", len(history), history[-1])
        elif args.command == "attack":
            results = pipeline.cmd_attack(cfg)
            for name, (result, report) in results.items():
                log.info("attack %-10s lesion accuracy %.4f (oa %.4f, %d patches)",
                         name, report.lesion_accuracy, report.oa,
                         result.attacked_indices.size)
        elif args.command == "report":
            path = pipeline.cmd_report(cfg)
            log.info("wrote %s", path)
    except (ConfigError, FileNotFoundError) as exc:
        log.error("validation error: %s", exc)
        return 1
    except (FormatError, HsiaError, OSError) as exc:
        log.error("runtime error: %s", exc)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
