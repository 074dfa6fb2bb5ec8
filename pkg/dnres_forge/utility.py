import functools
import logging
import sys
from argparse import (
    Action,
    ArgumentParser,
    ArgumentTypeError,
    BooleanOptionalAction,
    Namespace,
)
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Type

from dnres_forge.errors import ForgeError
from dnres_forge.losses import LossKind
from dnres_forge.net.counting import MacMode
from dnres_forge.net.topology import LayerKind
from dnres_forge.noise import NoiseKind, NoiseModel
from dnres_forge.nn.optim import DEFAULT_LEARNING_RATE, OptimizerKind
from dnres_forge.training.inference import BorderMode

logger = logging.getLogger(__name__)

ROOT_DIR = Path(__file__).resolve().parent.parent
CONFIG_NAME = "config.txt"
LOG_NAME = "dnres.log"
FILE_LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

EXIT_OK = 0
EXIT_FAILURE = 1


class Args(Enum):
    CONFIG = "config"
    SEED = "seed"
    OUT_DIR = "out_dir"
    INFILE = "infile"
    INFILE_OPTIONAL = "infile_optional"
    OUTFILE = "outfile"
    MANIFEST = "manifest"
    DEGRADED_DIR = "degraded_dir"
    CHECKPOINT = "checkpoint"
    CHECKPOINT_OPTIONAL = "checkpoint_optional"
    MODEL = "model"
    SIGMA = "sigma"
    PEAK = "peak"
    VALIDATE = "validate"
    SAMPLES = "samples"
    NOISE = "noise"
    BLIND = "blind"
    BLOCKS = "blocks"
    BLOCK_KIND = "block_kind"
    ONE_SHOT = "one_shot"
    LOSS = "loss"
    W = "w"
    THRESHOLD = "threshold"
    EPOCH_CAP = "epoch_cap"
    FINE_TUNE_EPOCHS = "fine_tune_epochs"
    BATCH_SIZE = "batch_size"
    OPTIMIZER = "optimizer"
    LEARNING_RATE = "learning_rate"
    STRIDE = "stride"
    JITTER = "jitter"
    BORDER = "border"
    TILE = "tile"
    SIZE = "size"
    MAC_MODE = "mac_mode"
    TOLERANCE = "tolerance"
    COUNT = "count"
    TEST_COUNT = "test_count"
    SIDE = "side"


def enum_type(cls: Type[Enum]) -> Callable[[str], Enum]:
    """argparse ``type=`` converter from an enum value to its member."""

    def convert(value: str) -> Enum:
        try:
            return cls(value)
        except ValueError as e:
            choices = ", ".join(member.value for member in cls)
            raise ArgumentTypeError(f"invalid choice {value!r} (choose from {choices})") from e

    convert.__name__ = cls.__name__
    return convert


def enum_metavar(cls: Type[Enum]) -> str:
    return "{" + ",".join(member.value for member in cls) + "}"


def noise_model(value: str) -> NoiseModel:
    try:
        return NoiseModel.parse(value)
    except ValueError as e:
        raise ArgumentTypeError(str(e)) from e


def image_size(value: str) -> Tuple[int, int]:
    """"640x480" (width x height) to (height, width)."""
    try:
        width, height = (int(v) for v in value.lower().split("x"))
    except ValueError as e:
        raise ArgumentTypeError(f"expected WIDTHxHEIGHT, not {value!r}") from e
    if width < 1 or height < 1:
        raise ArgumentTypeError(f"image size must be positive, not {value!r}")
    return height, width


def resolved_path(s: str) -> Path:
    return Path(s).expanduser().resolve()


class OutDirAction(Action):
    def __call__(self, parser, namespace, value, option_string=None):
        value.mkdir(parents=True, exist_ok=True)
        setattr(namespace, self.dest, value)


class NoiseAction(Action):
    """Repeatable ``--noise kind:param[:peak]``; the first use replaces the default."""

    def __call__(self, parser, namespace, value, option_string=None):
        current = getattr(namespace, self.dest, None)
        if current is None or current is self.default:
            current = []
        setattr(namespace, self.dest, current + [value])


def add_infile(parser: ArgumentParser, required: bool):
    return parser.add_argument(
        "-i",
        "--in",
        "--infile",
        dest="infile",
        type=resolved_path,
        required=required,
        default=None,
        help="input image, or a directory of images",
    )


def add_checkpoint(parser: ArgumentParser, required: bool):
    return parser.add_argument(
        "-c",
        "--checkpoint",
        type=resolved_path,
        required=required,
        default=None,
        help="network checkpoint" + ("" if required else "; default builds a fresh network"),
    )


arg_adders: Dict[Args, Callable[[ArgumentParser], Any]] = {
    Args.CONFIG: lambda parser: parser.add_argument(
        "--config",
        type=resolved_path,
        help="plain key=value file of flag defaults; explicit flags win",
    ),
    Args.SEED: lambda parser: parser.add_argument(
        "--seed",
        type=int,
        default=0,
        help="seed every random substream derives from",
    ),
    Args.OUT_DIR: lambda parser: parser.add_argument(
        "-d",
        "--out-dir",
        type=resolved_path,
        default=ROOT_DIR / "work",
        help="directory where outputs will be created",
        action=OutDirAction,
    ),
    Args.INFILE: lambda parser: add_infile(parser, required=True),
    Args.INFILE_OPTIONAL: lambda parser: add_infile(parser, required=False),
    Args.OUTFILE: lambda parser: parser.add_argument(
        "-o",
        "--out",
        "--outfile",
        dest="outfile",
        type=resolved_path,
        default=None,
        help="output file (or directory); default varies by script",
    ),
    Args.MANIFEST: lambda parser: parser.add_argument(
        "-m",
        "--manifest",
        type=resolved_path,
        required=True,
        help="dataset manifest: one 'image-path<TAB>train|test' per line",
    ),
    Args.DEGRADED_DIR: lambda parser: parser.add_argument(
        "--degraded-dir",
        type=resolved_path,
        default=None,
        help="read pre-degraded images of the same names from here instead of adding noise",
    ),
    Args.CHECKPOINT: lambda parser: add_checkpoint(parser, required=True),
    Args.CHECKPOINT_OPTIONAL: lambda parser: add_checkpoint(parser, required=False),
    Args.MODEL: lambda parser: parser.add_argument(
        "--model",
        type=enum_type(NoiseKind),
        metavar=enum_metavar(NoiseKind),
        default=NoiseKind.GAUSSIAN,
        help="degradation model",
    ),
    Args.SIGMA: lambda parser: parser.add_argument(
        "--sigma",
        type=float,
        default=25.0,
        help="Gaussian sigma (0-255 scale for gaussian, photon scale for poisson-gaussian)",
    ),
    Args.PEAK: lambda parser: parser.add_argument(
        "--peak",
        type=float,
        default=None,
        help="Poisson peak; poisson-gaussian defaults to 10 x sigma",
    ),
    Args.VALIDATE: lambda parser: parser.add_argument(
        "--validate",
        action=BooleanOptionalAction,
        default=False,
        help="check the model's sample moments (and Poisson pmf fit) and report",
    ),
    Args.SAMPLES: lambda parser: parser.add_argument(
        "--samples",
        type=int,
        default=None,
        help="sample count for statistical checks; default varies by script",
    ),
    Args.NOISE: lambda parser: parser.add_argument(
        "-n",
        "--noise",
        type=noise_model,
        default=[NoiseModel.parse("gaussian:25")],
        help="noise model such as gaussian:25, poisson:4, poisson-gaussian:1[:10]; repeatable",
        action=NoiseAction,
    ),
    Args.BLIND: lambda parser: parser.add_argument(
        "--blind",
        action=BooleanOptionalAction,
        default=False,
        help="train one network on all noise models mixed, instead of one per model",
    ),
    Args.BLOCKS: lambda parser: parser.add_argument(
        "-b",
        "--blocks",
        type=int,
        default=5,
        help="number of residual blocks",
    ),
    Args.BLOCK_KIND: lambda parser: parser.add_argument(
        "--block-kind",
        type=enum_type(LayerKind),
        metavar="{resblock,ds_resblock}",
        default=LayerKind.RESBLOCK,
        help="block inserted at each cascade stage",
    ),
    Args.ONE_SHOT: lambda parser: parser.add_argument(
        "--one-shot",
        action=BooleanOptionalAction,
        default=False,
        help="build or convert the whole network at once and train a single stage",
    ),
    Args.LOSS: lambda parser: parser.add_argument(
        "--loss",
        type=enum_type(LossKind),
        metavar=enum_metavar(LossKind),
        default=LossKind.MSE,
        help="training loss",
    ),
    Args.W: lambda parser: parser.add_argument(
        "--w",
        type=float,
        default=None,
        help="edge-term weight; default 0.025 for edge-a, 4 for edge-b",
    ),
    Args.THRESHOLD: lambda parser: parser.add_argument(
        "--threshold",
        type=float,
        default=150.0,
        help="edge-b Sobel threshold on the 0-255 scale",
    ),
    Args.EPOCH_CAP: lambda parser: parser.add_argument(
        "--epoch-cap",
        type=int,
        default=100,
        help="maximum epochs per stage",
    ),
    Args.FINE_TUNE_EPOCHS: lambda parser: parser.add_argument(
        "--fine-tune-epochs",
        type=int,
        default=10,
        help="fine-tuning epochs after each block replacement",
    ),
    Args.BATCH_SIZE: lambda parser: parser.add_argument(
        "--batch-size",
        type=int,
        default=64,
        help="patch pairs per batch",
    ),
    Args.OPTIMIZER: lambda parser: parser.add_argument(
        "--optimizer",
        type=enum_type(OptimizerKind),
        metavar=enum_metavar(OptimizerKind),
        default=OptimizerKind.ADAM,
        help="optimizer",
    ),
    Args.LEARNING_RATE: lambda parser: parser.add_argument(
        "--learning-rate",
        type=float,
        default=DEFAULT_LEARNING_RATE,
        help="fixed learning rate",
    ),
    Args.STRIDE: lambda parser: parser.add_argument(
        "--stride",
        type=int,
        default=17,
        help="patch extraction stride",
    ),
    Args.JITTER: lambda parser: parser.add_argument(
        "--jitter",
        type=int,
        default=0,
        help="random offset of each patch window, at most this many pixels",
    ),
    Args.BORDER: lambda parser: parser.add_argument(
        "--border",
        type=enum_type(BorderMode),
        metavar=enum_metavar(BorderMode),
        default=BorderMode.REPLICATE,
        help="padding rule at the image border",
    ),
    Args.TILE: lambda parser: parser.add_argument(
        "--tile",
        type=int,
        default=None,
        help="denoise in tiles of this size to bound memory",
    ),
    Args.SIZE: lambda parser: parser.add_argument(
        "-s",
        "--size",
        type=image_size,
        default=(480, 640),
        help="image size WIDTHxHEIGHT for MAC counts",
    ),
    Args.MAC_MODE: lambda parser: parser.add_argument(
        "--mac-mode",
        type=enum_type(MacMode),
        metavar=enum_metavar(MacMode),
        default=MacMode.FULL_AREA,
        help="full-area: every layer at the full image area; exact: valid output sizes",
    ),
    Args.TOLERANCE: lambda parser: parser.add_argument(
        "--tolerance",
        type=float,
        default=1e-5,
        help="maximum relative gradient error",
    ),
    Args.COUNT: lambda parser: parser.add_argument(
        "--count",
        type=int,
        default=24,
        help="number of images",
    ),
    Args.TEST_COUNT: lambda parser: parser.add_argument(
        "--test-count",
        type=int,
        default=4,
        help="how many of the images form the test split",
    ),
    Args.SIDE: lambda parser: parser.add_argument(
        "--side",
        type=int,
        default=64,
        help="side length of the square images",
    ),
}


def add_args(parser: ArgumentParser, *to_add: Args) -> ArgumentParser:
    for arg in to_add:
        arg_adders[arg](parser)
    return parser


def setup_logging(level: int = logging.INFO):
    # Redirect logs to stdout for CLI scripts.
    root = logging.getLogger()
    root.setLevel(level)
    if not any(getattr(h, "dnres_stdout", False) for h in root.handlers):
        handler = logging.StreamHandler(sys.stdout)
        handler.setLevel(level)
        handler.dnres_stdout = True  # type: ignore[attr-defined]
        root.addHandler(handler)


def log_to_file(directory: Path) -> logging.Handler:
    """Also log (with timestamps) to ``dnres.log`` in ``directory``; remove the
    returned handler when done."""
    handler = logging.FileHandler(directory / LOG_NAME, encoding="utf-8")
    handler.setLevel(logging.DEBUG)
    handler.setFormatter(logging.Formatter(FILE_LOG_FORMAT))
    root = logging.getLogger()
    root.setLevel(min(root.level, logging.DEBUG) or logging.DEBUG)
    root.addHandler(handler)
    return handler


def read_config(path: Path) -> List[Tuple[str, str]]:
    """``key=value`` pairs of a config overlay, ignoring blanks and ``#`` comments."""
    pairs = []
    with open(path, encoding="utf-8") as file:
        for number, line in enumerate(file, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep or not key.strip():
                raise ValueError(f"{path}:{number}: expected key=value")
            pairs.append((key.strip(), value.strip()))
    return pairs


def config_tokens(pairs: Iterable[Tuple[str, str]], skip: Iterable[str] = ()) -> List[str]:
    """Flag tokens equivalent to a config overlay, leaving out the keys in ``skip``."""
    skip = set(skip)
    tokens = []
    for key, value in pairs:
        if key in skip:
            continue
        flag = "--" + key.replace("_", "-")
        if value.lower() == "true":
            tokens.append(flag)
        elif value.lower() == "false":
            tokens.append("--no-" + key.replace("_", "-"))
        elif key == Args.NOISE.value:
            for spec in value.split(","):
                tokens += [flag, spec.strip()]
        else:
            tokens += [flag, value]
    return tokens


def find_config(argv: Sequence[str]) -> Optional[str]:
    for i, token in enumerate(argv):
        if token == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if token.startswith("--config="):
            return token.partition("=")[2]
    return None


def expand_config(parser: ArgumentParser, argv: Sequence[str], start: int = 0) -> List[str]:
    """Insert the overlay named by ``--config`` before ``argv[start:]`` so that
    flags given explicitly are parsed later and win."""
    argv = list(argv)
    path = find_config(argv[start:])
    if path is None:
        return argv
    # Keys given on the command line are dropped from the overlay so that
    # repeatable flags are replaced, not extended.
    explicit = {
        parser._option_string_actions[token.partition("=")[0]].dest
        for token in argv[start:]
        if token.partition("=")[0] in parser._option_string_actions
    }
    try:
        tokens = config_tokens(read_config(resolved_path(path)), explicit)
    except (OSError, ValueError) as e:
        parser.error(f"bad --config: {e}")
    return argv[:start] + tokens + argv[start:]


def get_args(*to_add: Args, argv: Optional[Sequence[str]] = None) -> Namespace:
    setup_logging()
    parser = add_args(ArgumentParser(), *to_add)
    argv = sys.argv[1:] if argv is None else argv
    return parser.parse_args(expand_config(parser, argv))


def config_value(value: Any) -> Optional[str]:
    if value is None:
        return None
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, NoiseModel):
        return value.label
    if isinstance(value, (list, tuple)) and value and isinstance(value[0], NoiseModel):
        return ",".join(model.label for model in value)
    if isinstance(value, tuple) and len(value) == 2:
        height, width = value
        return f"{width}x{height}"
    return str(value)


def write_config(args: Namespace, directory: Path) -> Path:
    """Write the fully resolved flags as a sorted overlay, ``config.txt``."""
    path = directory / CONFIG_NAME
    lines = []
    for key, value in sorted(vars(args).items()):
        if key in ("config", "func", "command") or key.startswith("_"):
            continue
        text = config_value(value)
        if text is not None:
            lines.append(f"{key}={text}\n")
    with open(path, "w", encoding="utf-8") as file:
        file.writelines(lines)
    logger.info(f"Wrote file: {path}")
    return path


def guarded(main: Callable[[Namespace], int]) -> Callable[[Namespace], int]:
    """Turn runtime failures into exit code 1 after logging them."""

    @functools.wraps(main)
    def wrapper(args: Namespace) -> int:
        try:
            return main(args)
        except (ForgeError, OSError, ValueError) as e:
            logger.exception(f"{main.__module__.rsplit('.', 1)[-1]} failed: {e}")
            return EXIT_FAILURE

    return wrapper


def slug(label: str) -> str:
    """File-system-safe form of a noise label, "gaussian:25" -> "gaussian-25"."""
    return label.replace(":", "-").replace(".", "p")
