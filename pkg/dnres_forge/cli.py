"""``dnres`` command: one subcommand per script module."""
import sys
from argparse import ArgumentParser
from types import ModuleType
from typing import Dict, List, Optional, Sequence, Tuple

from dnres_forge.scripts import count, denoise, evaluate, evolve, gradcheck, noise, synth, train
from dnres_forge.utility import add_args, expand_config, setup_logging

COMMANDS: Dict[str, ModuleType] = {
    "noise": noise,
    "train": train,
    "evolve": evolve,
    "denoise": denoise,
    "eval": evaluate,
    "count": count,
    "gradcheck": gradcheck,
    "synth": synth,
}


def build_parser() -> Tuple[ArgumentParser, Dict[str, ArgumentParser]]:
    parser = ArgumentParser(prog="dnres", description="DN-ResNet denoising toolkit")
    subparsers = parser.add_subparsers(dest="command", required=True)
    subs = {}
    for name, module in COMMANDS.items():
        summary = (module.__doc__ or "").strip().splitlines()[0]
        sub = subparsers.add_parser(name, help=summary, description=summary)
        add_args(sub, *module.ARGS)
        sub.set_defaults(func=module.main)
        subs[name] = sub
    return parser, subs


def main(argv: Optional[Sequence[str]] = None) -> int:
    setup_logging()
    parser, subs = build_parser()
    tokens: List[str] = list(sys.argv[1:] if argv is None else argv)
    if tokens and tokens[0] in COMMANDS:
        tokens = expand_config(subs[tokens[0]], tokens, start=1)
    args = parser.parse_args(tokens)
    return args.func(args)


def run():
    sys.exit(main())


if __name__ == "__main__":
    run()
