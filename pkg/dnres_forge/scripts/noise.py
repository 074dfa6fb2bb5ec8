"""Degrade images with Gaussian, Poisson or Poisson-Gaussian noise."""
import logging
import sys
from argparse import Namespace
from pathlib import Path
from typing import List, Optional, Tuple

from dnres_forge.images import list_images, load_image, write_image
from dnres_forge.noise import (
    MIN_VALIDATION_SAMPLES,
    Gaussian,
    NoiseKind,
    NoiseModel,
    Poisson,
    PoissonGaussian,
    RngStream,
    poisson_goodness_of_fit,
    validate_noise_statistics,
)
from dnres_forge.utility import EXIT_FAILURE, EXIT_OK, Args, get_args, guarded, write_config

logger = logging.getLogger(__name__)

ARGS = (
    Args.CONFIG,
    Args.SEED,
    Args.INFILE_OPTIONAL,
    Args.OUTFILE,
    Args.MODEL,
    Args.SIGMA,
    Args.PEAK,
    Args.VALIDATE,
    Args.SAMPLES,
)

# Poisson means checked against the exact pmf by --validate.
GOODNESS_OF_FIT_LAMBDAS = (0.5, 1.0, 4.0, 8.0)
GOODNESS_OF_FIT_P = 1e-3

VALIDATION_STREAM = 30
IMAGE_STREAM = 31


def model_from_args(args: Namespace) -> NoiseModel:
    if args.model is NoiseKind.GAUSSIAN:
        return Gaussian(args.sigma)
    if args.model is NoiseKind.POISSON:
        if args.peak is None:
            raise ValueError("--model poisson needs --peak")
        return Poisson(args.peak)
    return PoissonGaussian(args.sigma, args.peak)


def validate(model: NoiseModel, args: Namespace) -> bool:
    n = args.samples or MIN_VALIDATION_SAMPLES * 10
    rng = RngStream(args.seed, (VALIDATION_STREAM,)).generator()
    report = validate_noise_statistics(model, n, rng)
    for line in report.lines():
        logger.info(line)
    passed = report.passed

    if model.kind is not NoiseKind.GAUSSIAN:
        for lam in GOODNESS_OF_FIT_LAMBDAS:
            p = poisson_goodness_of_fit(lam, n, rng)
            verdict = "PASS" if p > GOODNESS_OF_FIT_P else "FAIL"
            logger.info(f"Poisson pmf chi-square at lambda={lam:g}: p={p:.4f} {verdict}")
            passed = passed and p > GOODNESS_OF_FIT_P
    return passed


def io_pairs(infile: Path, outfile: Optional[Path]) -> List[Tuple[Path, Path]]:
    if infile.is_dir():
        outdir = outfile or infile.parent / f"{infile.name}_noisy"
        outdir.mkdir(parents=True, exist_ok=True)
        return [(path, outdir / path.name) for path in list_images(infile)]
    return [(infile, outfile or infile.with_name(f"{infile.stem}_noisy{infile.suffix}"))]


@guarded
def main(args: Namespace) -> int:
    model = model_from_args(args)
    logger.info(f"Noise model {model.label}")
    status = EXIT_OK

    if args.validate and not validate(model, args):
        status = EXIT_FAILURE

    if args.infile is not None:
        pairs = io_pairs(args.infile, args.outfile)
        for index, (src, dst) in enumerate(pairs):
            rng = RngStream(args.seed, (IMAGE_STREAM, index)).generator()
            write_image(dst, model.degrade(load_image(src), rng))
        if pairs:
            write_config(args, pairs[0][1].parent)
    elif not args.validate:
        raise ValueError("Nothing to do: give --in and/or --validate")
    return status


if __name__ == "__main__":
    sys.exit(main(get_args(*ARGS)))
