"""Command-line entry point: ``cdl-saliency {train,detect,fuse,eval}``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 sparse-coding convergence failure. Progress goes to stderr; paths and
reports go to stdout.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import dictlearn, fusion, metrics, patches, saliency
from .config import RunConfig, load_config, parse_overrides, render_config
from .errors import CDLError, ConfigError, ConvergenceError, DatasetError

log = logging.getLogger("cdl_saliency")

SALIENT_FILE = "salient.cdld"
NON_SALIENT_FILE = "nonsalient.cdld"
CONFIG_FILE = "run.cfg"

EXIT_USAGE, EXIT_DATA, EXIT_CONVERGENCE = 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_config_flags(p, only=None):
    p.add_argument("--config", type=Path, help="key = value configuration file")
    for f in fields(RunConfig):
        if only is not None and f.name not in only:
            continue
        flag = "--" + f.name.replace("_", "-")
        if f.type == "bool":
            p.add_argument(flag, dest=f.name, action="store_const", const="true",
                           default=argparse.SUPPRESS)
        else:
            p.add_argument(flag, dest=f.name, metavar=f.name.upper(), default=argparse.SUPPRESS)


def resolve_config(args, base=None) -> RunConfig:
    """Config file (or ``base``) first, then command-line flags on top."""
    if getattr(args, "config", None) is not None:
        config = load_config(args.config)
    else:
        config = base or RunConfig()
    names = {f.name for f in fields(RunConfig)}
    flags = {k: v for k, v in vars(args).items() if k in names}
    return config.replace(**parse_overrides(flags)) if flags else config


def _split_labels(pairs, config, label, count, seed):
    found = patches.sample_dataset_patches(
        pairs, config.sample_patch, count, label, config.pos_cover, config.neg_cover, seed)
    return [patches.downsample_patch(p, config.train_patch) for p in found]


def prepare_training_data(root, config):
    """Sample, downsample and split training patches for both classes.

    Returns ``{"salient": (train, val), "non-salient": (train, val)}`` with
    each element an ``(X, W)`` pair (``val`` is None without a holdout).
    """
    pairs = [(patches.load_image(i), patches.load_mask(m)) for _, i, m in patches.list_pairs(root)]
    n_val = int(round(config.holdout * config.patches_per_class))
    seeds = np.random.SeedSequence(config.seed).generate_state(2)
    out = {}
    for kind, label, seed in ((dictlearn.SALIENT, patches.POSITIVE, seeds[0]),
                              (dictlearn.NON_SALIENT, patches.NEGATIVE, seeds[1])):
        found = _split_labels(pairs, config, label, config.patches_per_class + n_val, int(seed))
        train = patches.stack_patches(found[:config.patches_per_class])
        val = patches.stack_patches(found[config.patches_per_class:]) if n_val else None
        out[kind] = (train, val)
    return out


def cmd_train(args) -> int:
    config = resolve_config(args)
    data = prepare_training_data(args.dataset, config)
    m = data[dictlearn.SALIENT][0][0].shape[1]
    if config.iterations is None:
        config = config.replace(iterations=10 * m)
    log.info("training on %d patches per class, %d iterations, k=%d",
             m, config.iterations, config.k)
    validation = {kind: val for kind, (_, val) in data.items() if val is not None}
    pos, neg = dictlearn.train(data[dictlearn.SALIENT][0], data[dictlearn.NON_SALIENT][0],
                               config, validation)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dictlearn.save_dictionary(pos.dictionary, out / SALIENT_FILE)
    dictlearn.save_dictionary(neg.dictionary, out / NON_SALIENT_FILE)
    (out / CONFIG_FILE).write_text(render_config(config))
    for name in (SALIENT_FILE, NON_SALIENT_FILE, CONFIG_FILE):
        print(out / name)
    return 0


def _load_pair(args):
    model = Path(args.model) if args.model else None
    sal = args.salient or (model / SALIENT_FILE if model else None)
    non = args.nonsalient or (model / NON_SALIENT_FILE if model else None)
    if sal is None or non is None:
        raise ConfigError("give a model directory or both --salient and --nonsalient")
    DP, DN = dictlearn.load_dictionary(sal), dictlearn.load_dictionary(non)
    if DP.kind != dictlearn.SALIENT or DN.kind != dictlearn.NON_SALIENT:
        raise ConfigError(f"dictionary kinds are {DP.kind!r} and {DN.kind!r}; "
                          "expected salient and non-salient")
    return DP, DN


def _detect_config(args):
    base = None
    if args.model and (Path(args.model) / CONFIG_FILE).exists() and args.config is None:
        base = load_config(Path(args.model) / CONFIG_FILE)
    return resolve_config(args, base)


def detect_image(image, DP, DN, config) -> dict:
    """Maps for one luminance image, keyed by output suffix, per the config's switches."""
    coef, recon = saliency.generate_maps(
        image, DP, DN, patch_side=config.train_patch, stride=config.stride,
        lambda1=config.lambda1, eta_a=config.eta_a, eta_r=config.eta_r,
        tol=config.tol, max_iter=config.max_iter, single_dict=config.single_dict)
    if config.measure == "coefficient":
        return {"coefficient": coef}
    if config.measure == "reconstruction":
        return {"reconstruction": recon}
    if config.fusion == "equal_weight":
        fused = fusion.fuse_equal_weights([coef, recon])
    else:
        fused = fusion.fuse([coef, recon], config.phi, config.bins)
    return {"coefficient": coef, "reconstruction": recon, "fused": fused}


def write_map(base: Path, m) -> list[Path]:
    png, raw = base.with_name(base.name + ".png"), base.with_name(base.name + ".cdls")
    saliency.save_map_png(png, m)
    saliency.save_raw(raw, m)
    return [png, raw]


def _images(path: Path):
    if path.is_dir():
        found = sorted(p for p in path.iterdir() if p.suffix.lower() in patches.IMAGE_SUFFIXES)
        if not found:
            raise DatasetError(f"no images found in {path} (0 files)")
        return found
    return [path]


def cmd_detect(args) -> int:
    config = _detect_config(args)
    DP, DN = _load_pair(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for path in _images(Path(args.input)):
        log.info("detecting %s", path.name)
        maps = detect_image(patches.load_image(path), DP, DN, config)
        for suffix, m in maps.items():
            for written in write_map(out / f"{path.stem}_{suffix}", m):
                print(written)
    return 0


def cmd_fuse(args) -> int:
    config = resolve_config(args)
    maps = [saliency.load_map(p) for p in args.maps]
    if config.fusion == "equal_weight":
        fused = fusion.fuse_equal_weights(maps)
    else:
        fused = fusion.fuse(maps, config.phi, config.bins)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    for written in write_map(out.with_suffix("") if out.suffix in (".png", ".cdls") else out, fused):
        print(written)
    return 0


def cmd_eval(args) -> int:
    report = metrics.evaluate_dataset(args.maps, args.masks, args.suffix)
    if args.curves:
        report.write_curves(args.curves)
        log.info("curves written to %s", args.curves)
    if args.report:
        Path(args.report).write_text(report.to_json() + "\n")
        print(args.report)
    else:
        print(report.to_json())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cdl-saliency", description=__doc__.splitlines()[0])
    parser.add_argument("-q", "--quiet", action="store_true", help="only report errors")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="learn salient and non-salient dictionaries")
    p.add_argument("dataset", type=Path, help="directory with images/ and masks/")
    p.add_argument("--out", type=Path, required=True, help="output model directory")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("detect", help="compute saliency maps for images")
    p.add_argument("input", type=Path, help="image file or directory of images")
    p.add_argument("--model", type=Path, help="directory written by train")
    p.add_argument("--salient", type=Path)
    p.add_argument("--nonsalient", type=Path)
    p.add_argument("--out", type=Path, required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("fuse", help="fuse existing maps (.png or .cdls)")
    p.add_argument("maps", nargs="+", type=Path)
    p.add_argument("--out", type=Path, required=True, help="output path without extension")
    _add_config_flags(p, only={"phi", "bins", "fusion"})
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("eval", help="score maps against ground-truth masks")
    p.add_argument("maps", type=Path)
    p.add_argument("masks", type=Path)
    p.add_argument("--suffix", default="_fused", help="map name suffix (default: _fused)")
    p.add_argument("--report", type=Path, help="write JSON here instead of stdout")
    p.add_argument("--curves", type=Path, help="write PR/F curves CSV here")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"cdl-saliency: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConvergenceError as exc:
        print(f"cdl-saliency: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (CDLError, OSError, ValueError) as exc:
        print(f"cdl-saliency: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
