"""PSNR / SSIM of a network on a manifest's test split, as CSV."""
import logging
import sys
from argparse import Namespace

from dnres_forge.checkpoint import load_checkpoint
from dnres_forge.patches import DatasetManifest, read_manifest
from dnres_forge.training.evaluation import evaluate
from dnres_forge.utility import EXIT_OK, Args, get_args, guarded, write_config

logger = logging.getLogger(__name__)

ARGS = (
    Args.CONFIG,
    Args.SEED,
    Args.CHECKPOINT,
    Args.MANIFEST,
    Args.DEGRADED_DIR,
    Args.NOISE,
    Args.OUT_DIR,
    Args.OUTFILE,
    Args.BORDER,
    Args.TILE,
)

METRICS_NAME = "metrics.csv"


@guarded
def main(args: Namespace) -> int:
    net = load_checkpoint(args.checkpoint)
    manifest = DatasetManifest(
        read_manifest(args.manifest), list(args.noise), args.degraded_dir, args.seed
    )
    table = evaluate(net, manifest, border=args.border, tile=args.tile)

    outfile = args.outfile or args.out_dir / METRICS_NAME
    outfile.parent.mkdir(parents=True, exist_ok=True)
    table.write_csv(outfile)
    write_config(args, outfile.parent)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main(get_args(*ARGS)))
