"""Command-line entry points.

Every pipeline stage runs in isolation over file-based inputs so stages
can be golden-tested independently:

    project      .bin scans          -> <stem>.proj.npz range-image archives
    normals      .proj.npz           -> <stem>.norm.npz with normal channels
    infer        .norm.npz + weights -> <stem>.pred.npz label images
    postprocess  .pred.npz           -> <stem>.label prediction files
    eval         predicted .label dir vs ground-truth tree -> IoU report
    benchmark    .bin dir + weights  -> throughput/efficiency report
    count-ops    config              -> parameters, MACs, GOPs
    quantize     .bin dir + weights  -> weights rewritten with exponents

Exit codes: 0 success, 1 usage error, 2 data error, 3 config/weights error.
"""

import argparse
import dataclasses
import json
import os
import sys

from .errors import ConfigurationError, InputError, MalformedFileError, RangesegError


class _Parser(argparse.ArgumentParser):
    # usage problems exit with 1; argparse's default would be 2
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _positive_float(text):
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError("must be a positive number")
    return value


def _odd_int(text):
    value = int(text)
    if value < 1 or value % 2 == 0:
        raise argparse.ArgumentTypeError("must be an odd integer >= 1")
    return value


def build_parser():
    parser = _Parser(prog="rangeseg",
                     description="Range-view LiDAR semantic segmentation")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    def command(name, help_text, handler, input_help=None, output_help=None,
                weights=False, power=False, split=False, k=False,
                quantized=False, pgm=False):
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", required=True,
                       help="pipeline config JSON file")
        if input_help:
            p.add_argument("--input", required=True, help=input_help)
        if output_help:
            p.add_argument("--output", help=output_help)
        if weights:
            p.add_argument("--weights",
                           help="weight file (overrides config paths.weights)")
        if power:
            p.add_argument("--power-watts", type=_positive_float,
                           dest="power_watts",
                           help="power draw for GOP/W reporting")
        if split:
            p.add_argument("--split-cores", type=int, choices=(1, 2),
                           dest="split_cores",
                           help="evaluate the network as 1 or 2 width halves")
        if k:
            p.add_argument("--k", type=_odd_int,
                           help="patch side for label assignment (odd)")
        if quantized:
            p.add_argument("--quantized", action="store_true", default=False,
                           help="run int8-emulated inference")
        if pgm:
            p.add_argument("--pgm", action="store_true", default=False,
                           help="also dump range channels as PGM images")
        p.set_defaults(handler=handler)

    command("project", "project scans into range-image archives",
            _cmd_project, input_help=".bin file or directory",
            output_help="output directory", pgm=True)
    command("normals", "fill surface normal channels",
            _cmd_normals, input_help=".proj.npz file or directory",
            output_help="output directory")
    command("infer", "run the network and write label images",
            _cmd_infer, input_help=".norm.npz file or directory",
            output_help="output directory", weights=True, split=True,
            quantized=True)
    command("postprocess", "lift label images to per-point .label files",
            _cmd_postprocess, input_help=".pred.npz file or directory",
            output_help="output directory", k=True)
    command("eval", "score predicted labels against ground truth",
            _cmd_eval, input_help="directory of predicted .label files",
            output_help="also write the report as JSON to this file")
    command("benchmark", "time the full pipeline over frames",
            _cmd_benchmark, input_help=".bin file or directory",
            output_help="also write the report as JSON to this file",
            weights=True, power=True, split=True, quantized=True)
    command("count-ops", "print parameter, MAC, and GOP counts",
            _cmd_count_ops, weights=False)
    command("quantize", "calibrate quantization and rewrite the weights",
            _cmd_quantize, input_help="calibration .bin file or directory",
            output_help="output weight file (default: rewrite in place)",
            weights=True)
    return parser


def _load_cfg(args):
    from .pipeline import load_config

    cfg = load_config(args.config)
    updates = {}
    if getattr(args, "weights", None):
        updates["weights"] = args.weights
    if getattr(args, "power_watts", None) is not None:
        updates["power_watts"] = args.power_watts
    if getattr(args, "split_cores", None) is not None:
        updates["split_cores"] = args.split_cores
    if getattr(args, "quantized", False):
        updates["quantized"] = True
    if updates:
        cfg = dataclasses.replace(cfg, **updates)
    if getattr(args, "k", None) is not None:
        cfg = dataclasses.replace(
            cfg, patch=dataclasses.replace(cfg.patch, k=args.k))
    return cfg


def _collect(path, suffix):
    """Resolve an --input that may be one file or a directory tree."""
    from .kitti_io import iter_relative_files

    if os.path.isfile(path):
        name = os.path.basename(path)
        if not name.endswith(suffix):
            raise InputError(f"{path}: expected a {suffix} file")
        return os.path.dirname(path) or ".", [name]
    if os.path.isdir(path):
        rels = iter_relative_files(path, suffix)
        if not rels:
            raise InputError(f"no {suffix} files under {path}")
        return path, rels
    raise InputError(f"input path {path} does not exist")


def _out_dir(args, cfg):
    out = getattr(args, "output", None) or cfg.output_dir
    if not out:
        raise ConfigurationError(
            "an output directory is required (--output or config "
            "paths.output_dir)")
    return out


def _out_path(out_dir, rel, old_suffix, new_suffix):
    full = os.path.join(out_dir, rel[: -len(old_suffix)] + new_suffix)
    parent = os.path.dirname(full)
    if parent:
        os.makedirs(parent, exist_ok=True)
    return full


def _load_model(cfg):
    from .weights import load_weights

    if not cfg.weights:
        raise ConfigurationError(
            "a weight file is required (--weights or config paths.weights)")
    model, quant = load_weights(cfg.weights)
    if cfg.network_explicit and model.config != cfg.network:
        raise ConfigurationError(
            "the config's network section does not match the weight file")
    return model, quant


def _cmd_project(args):
    from .kitti_io import read_point_cloud
    from .projection import save_projection, spherical_project, write_range_pgm

    cfg = _load_cfg(args)
    root, rels = _collect(args.input, ".bin")
    out_dir = _out_dir(args, cfg)
    for rel in rels:
        scan = read_point_cloud(os.path.join(root, rel))
        image, pmap = spherical_project(scan, cfg.projection)
        save_projection(_out_path(out_dir, rel, ".bin", ".proj.npz"),
                        image, pmap)
        if args.pgm:
            write_range_pgm(image, _out_path(out_dir, rel, ".bin", ".pgm"))
    return 0


def _cmd_normals(args):
    from .normals import compute_normals
    from .projection import load_projection, save_projection

    cfg = _load_cfg(args)
    root, rels = _collect(args.input, ".proj.npz")
    out_dir = _out_dir(args, cfg)
    for rel in rels:
        image, pmap = load_projection(os.path.join(root, rel))
        compute_normals(image)
        save_projection(_out_path(out_dir, rel, ".proj.npz", ".norm.npz"),
                        image, pmap)
    return 0


def _cmd_infer(args):
    import numpy as np

    from .pipeline import infer_image, split_halo
    from .projection import CH_RANGE, load_projection

    cfg = _load_cfg(args)
    model, quant = _load_model(cfg)
    root, rels = _collect(args.input, ".norm.npz")
    out_dir = _out_dir(args, cfg)
    halo = split_halo(model.config) if cfg.split_cores == 2 else None
    for rel in rels:
        image, pmap = load_projection(os.path.join(root, rel))
        label_image = infer_image(model, image.channels, cfg, quant, halo)
        np.savez(_out_path(out_dir, rel, ".norm.npz", ".pred.npz"),
                 label_image=label_image,
                 range_image=image.channels[CH_RANGE],
                 rows=pmap.rows, cols=pmap.cols, ranges=pmap.ranges)
    return 0


def _cmd_postprocess(args):
    import numpy as np

    from .kitti_io import write_labels
    from .postprocess import nla
    from .projection import PointPixelMap

    cfg = _load_cfg(args)
    root, rels = _collect(args.input, ".pred.npz")
    out_dir = _out_dir(args, cfg)
    needed = ("label_image", "range_image", "rows", "cols", "ranges")
    for rel in rels:
        path = os.path.join(root, rel)
        try:
            data = np.load(path)
        except (OSError, ValueError) as exc:
            raise MalformedFileError(f"cannot load {path}: {exc}") from exc
        missing = [key for key in needed if key not in data]
        if missing:
            raise MalformedFileError(
                f"{path}: missing arrays {', '.join(missing)}")
        pmap = PointPixelMap(rows=data["rows"], cols=data["cols"],
                             ranges=data["ranges"])
        labels = nla(data["range_image"], data["label_image"], pmap,
                     cfg.patch)
        write_labels(_out_path(out_dir, rel, ".pred.npz", ".label"), labels)
    return 0


def _cmd_eval(args):
    from .kitti_io import iter_relative_files, read_labels
    from .metrics import ConfusionMatrix, accumulate, format_report, report_dict

    cfg = _load_cfg(args)
    if not cfg.dataset_root:
        raise ConfigurationError(
            "eval needs the ground-truth root (config paths.dataset_root)")
    if not os.path.isdir(args.input):
        raise InputError(f"prediction path {args.input} is not a directory")
    rels = iter_relative_files(args.input, ".label")
    if not rels:
        raise InputError(f"no .label files under {args.input}")
    cm = ConfusionMatrix()
    for rel in rels:
        gt_path = os.path.join(cfg.dataset_root, rel)
        if not os.path.isfile(gt_path):
            raise InputError(f"no ground truth for {rel}")
        pred, _ = read_labels(os.path.join(args.input, rel))
        gt, _ = read_labels(gt_path)
        if len(pred) != len(gt):
            raise InputError(
                f"{rel}: {len(pred)} predictions vs {len(gt)} ground truth")
        accumulate(cm, pred, gt)
    print(format_report(cm))
    if getattr(args, "output", None):
        with open(args.output, "w", encoding="utf-8") as fh:
            json.dump(report_dict(cm), fh, indent=2)
    return 0


def _cmd_benchmark(args):
    from .kitti_io import read_point_cloud
    from .pipeline import benchmark

    cfg = _load_cfg(args)
    model, quant = _load_model(cfg)
    root, rels = _collect(args.input, ".bin")
    scans = [read_point_cloud(os.path.join(root, rel)) for rel in rels]
    report = benchmark(model, scans, cfg, quant=quant)
    text = json.dumps(report.to_dict(), indent=2)
    print(text)
    if getattr(args, "output", None):
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    return 0


def _cmd_count_ops(args):
    from .network import build_network, count_macs, count_parameters

    cfg = _load_cfg(args)
    model = build_network(cfg.network)
    macs, gops = count_macs(model, cfg.projection.height,
                            cfg.projection.width)
    print(f"parameters: {count_parameters(model)}")
    print(f"macs_per_frame: {macs}")
    print(f"gops_per_frame: {gops:.6f}")
    return 0


def _cmd_quantize(args):
    from .kitti_io import read_point_cloud
    from .normals import compute_normals
    from .projection import spherical_project
    from .quantize import calibrate
    from .weights import save_weights

    cfg = _load_cfg(args)
    model, _old = _load_model(cfg)
    root, rels = _collect(args.input, ".bin")
    inputs = []
    for rel in rels:
        scan = read_point_cloud(os.path.join(root, rel))
        image, _pmap = spherical_project(scan, cfg.projection)
        compute_normals(image)
        inputs.append(image.channels)
    params = calibrate(model, inputs)
    out = getattr(args, "output", None) or cfg.weights
    save_weights(model, out, quant=params)
    print(f"calibrated {len(params.weights)} weight tensors and "
          f"{len(params.activations)} activation edges -> {out}")
    return 0


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except RangesegError as exc:
        print(f"rangeseg: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"rangeseg: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
