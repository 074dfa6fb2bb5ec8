"""Write a procedural image corpus and its manifest."""
import logging
import sys
from argparse import Namespace

from dnres_forge.synthetic import write_corpus
from dnres_forge.utility import EXIT_OK, Args, get_args, guarded, write_config

logger = logging.getLogger(__name__)

ARGS = (
    Args.CONFIG,
    Args.SEED,
    Args.OUT_DIR,
    Args.COUNT,
    Args.TEST_COUNT,
    Args.SIDE,
)


@guarded
def main(args: Namespace) -> int:
    manifest = write_corpus(args.out_dir, args.count, args.seed, args.side, args.test_count)
    write_config(args, manifest.parent)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main(get_args(*ARGS)))
