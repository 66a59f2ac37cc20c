"""CLI entrypoint for mtc_tensor."""

from __future__ import annotations

import argparse
import logging
import sys

from mtc_tensor.logging_config import setup_logging

logger = logging.getLogger(__name__)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="tensor-mtc",
        description="Multiresolution coupled tensor completion experiments.",
    )
    parser.add_argument("--config", required=True, help="flat key = value experiment file")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--quiet", action="store_true", help="only log warnings and errors")
    args = parser.parse_args(argv)

    setup_logging("WARNING" if args.quiet else None)

    from mtc_tensor.ingest import parse_config_file
    from mtc_tensor.pipeline import run

    try:
        cfg = parse_config_file(args.config, seed=args.seed)
    except (OSError, ValueError) as e:
        logger.error("Invalid config %s: %s", args.config, e)
        print(f"error: {e}", file=sys.stderr)
        return 2
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
