"""Denoise images with a trained network."""
import logging
import sys
from argparse import Namespace

from dnres_forge.checkpoint import load_checkpoint
from dnres_forge.images import list_images, load_image, write_image
from dnres_forge.training.inference import denoise_image
from dnres_forge.utility import EXIT_OK, Args, get_args, guarded, write_config

logger = logging.getLogger(__name__)

ARGS = (
    Args.CONFIG,
    Args.CHECKPOINT,
    Args.INFILE,
    Args.OUTFILE,
    Args.BORDER,
    Args.TILE,
)


@guarded
def main(args: Namespace) -> int:
    net = load_checkpoint(args.checkpoint)

    if args.infile.is_dir():
        outdir = args.outfile or args.infile.parent / f"{args.infile.name}_denoised"
        outdir.mkdir(parents=True, exist_ok=True)
        pairs = [(path, outdir / path.name) for path in list_images(args.infile)]
    else:
        outfile = args.outfile or args.infile.with_name(
            f"{args.infile.stem}_denoised{args.infile.suffix}"
        )
        pairs = [(args.infile, outfile)]

    for src, dst in pairs:
        write_image(dst, denoise_image(net, load_image(src), args.border, args.tile))
    if pairs:
        write_config(args, pairs[0][1].parent)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main(get_args(*ARGS)))
