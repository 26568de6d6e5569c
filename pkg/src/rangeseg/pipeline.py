"""End-to-end frame processing, the 2-core split emulation, and benchmarking.

A frame runs project -> normals -> forward -> argmax -> nearest-range
assignment.  With split_cores=2 the 8-channel image is cut into two width
halves before the network; each half carries a halo of columns copied from
the other side, wide enough (and aligned to the total horizontal stride)
that after discarding the halo outputs the stitched result is bit-identical
to the unsplit run.
"""

import dataclasses
import json
import statistics
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, InputError, StageError
from .network import (NetworkConfig, argmax_labels, config_from_dict,
                      count_macs, forward)
from .normals import compute_normals
from .postprocess import PatchConfig, nla
from .projection import CH_RANGE, ProjectionConfig, spherical_project
from .quantize import fake_quantized_forward


@dataclass
class PipelineConfig:
    projection: ProjectionConfig = field(default_factory=ProjectionConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    patch: PatchConfig = field(default_factory=PatchConfig)
    dataset_root: str = None
    weights: str = None
    output_dir: str = None
    split_cores: int = 1
    power_watts: float = None
    quantized: bool = False
    # set when the config file spelled out a network section, so it can be
    # cross-checked against the config embedded in a weight file
    network_explicit: bool = False

    def __post_init__(self):
        if self.split_cores not in (1, 2):
            raise ConfigurationError("split_cores must be 1 or 2")
        if self.power_watts is not None and not self.power_watts > 0:
            raise ConfigurationError("power_watts must be positive")


def _section(cls, data, name):
    if not isinstance(data, dict):
        raise ConfigurationError(f"config section {name!r} must be an object")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigurationError(f"config section {name!r}: {exc}") from exc


def load_config(path):
    """Parse the JSON pipeline config; unknown keys are rejected."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigurationError(f"config {path} must be a JSON object")
    known = {"projection", "network", "patch", "paths", "split_cores",
             "power_watts", "quantized"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigurationError(
            f"config {path}: unknown keys {sorted(unknown)}")
    paths = raw.get("paths", {})
    if not isinstance(paths, dict):
        raise ConfigurationError("config section 'paths' must be an object")
    unknown = set(paths) - {"dataset_root", "weights", "output_dir"}
    if unknown:
        raise ConfigurationError(
            f"config paths: unknown keys {sorted(unknown)}")
    return PipelineConfig(
        projection=_section(ProjectionConfig, raw.get("projection", {}),
                            "projection"),
        network=config_from_dict(raw.get("network", {})),
        patch=_section(PatchConfig, raw.get("patch", {}), "patch"),
        dataset_root=paths.get("dataset_root"),
        weights=paths.get("weights"),
        output_dir=paths.get("output_dir"),
        split_cores=raw.get("split_cores", 1),
        power_watts=raw.get("power_watts"),
        quantized=bool(raw.get("quantized", False)),
        network_explicit="network" in raw,
    )


def receptive_field_of_convs(specs):
    """(vertical, horizontal) input-pixel radii of a conv sequence."""
    rv = rh = 0
    jv = jh = 1
    for spec in specs:
        rv += spec.dilation[0] * (spec.kernel[0] - 1) // 2 * jv
        rh += spec.dilation[1] * (spec.kernel[1] - 1) // 2 * jh
        jv *= spec.stride[0]
        jh *= spec.stride[1]
    return rv, rh, jv, jh


def compute_receptive_field(cfg):
    """Radii of the full network: max over the concatenated branches.

    Each stage branch passes through a bilinear resize back to input
    resolution, which can reach one extra source sample in each direction,
    i.e. the branch's accumulated stride in input pixels.  The 1x1 head
    adds nothing.
    """
    from .network import main_path_specs

    stem, stages = main_path_specs(cfg)
    rv = rh = 0
    jv = jh = 1

    def absorb(spec):
        nonlocal rv, rh, jv, jh
        rv += spec.dilation[0] * (spec.kernel[0] - 1) // 2 * jv
        rh += spec.dilation[1] * (spec.kernel[1] - 1) // 2 * jh
        jv *= spec.stride[0]
        jh *= spec.stride[1]

    for spec in stem:
        absorb(spec)
    best_v, best_h = rv, rh
    for specs in stages:
        for spec in specs:
            absorb(spec)
        best_v = max(best_v, rv + jv)
        best_h = max(best_h, rh + jh)
    return best_v, best_h


def horizontal_stride(cfg):
    total = 1
    for s in cfg.stage_strides:
        total *= s
    return total


def split_halo(cfg):
    """Halo width: horizontal radius rounded up to the total stride.

    Alignment to the stride keeps every conv sampling grid and bilinear
    resize grid of a padded half identical to the corresponding windows of
    the unsplit image, which is what makes the split bit-exact.
    """
    _rv, rh = compute_receptive_field(cfg)
    stride = horizontal_stride(cfg)
    return ((rh + stride - 1) // stride) * stride


def forward_split(model, x, halo, forward_fn=None):
    """Run the network on two width halves with halo exchange."""
    fn = forward_fn if forward_fn is not None else \
        (lambda t: forward(model, t))
    _c, _h, w = x.shape
    stride = horizontal_stride(model.config)
    if w % 2 != 0:
        raise ConfigurationError("split inference needs an even image width")
    seam = w // 2
    if seam % stride != 0:
        raise ConfigurationError(
            f"half width {seam} must be a multiple of the total stride "
            f"{stride} for split inference")
    if halo % stride != 0:
        raise ConfigurationError(
            f"halo {halo} must be a multiple of the total stride {stride}")
    halo = min(halo, seam)
    left = np.ascontiguousarray(x[:, :, :seam + halo])
    right = np.ascontiguousarray(x[:, :, seam - halo:])
    out_left = fn(left)
    out_right = fn(right)
    return np.concatenate((out_left[:, :, :seam], out_right[:, :, halo:]),
                          axis=2)


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except Exception as exc:
        raise StageError(name, exc) from exc


def infer_image(model, channels, cfg, quant=None, halo=None):
    """Logits -> argmax label image for one projected 8-channel image."""
    if cfg.quantized and quant is None:
        raise ConfigurationError(
            "quantized inference requested but the weights carry no "
            "quantization parameters")
    if cfg.quantized:
        base = lambda t: fake_quantized_forward(model, quant, t)
    else:
        base = lambda t: forward(model, t)
    if cfg.split_cores == 2:
        if halo is None:
            halo = split_halo(model.config)
        logits = forward_split(model, channels, halo, base)
    else:
        logits = base(channels)
    return argmax_labels(logits)


def run_frame_timed(model, scan, cfg, quant=None, halo=None):
    """Run one frame; returns (per-point labels, stage seconds)."""
    times = {}
    clock = time.perf_counter

    t0 = clock()
    image, pmap = _stage("project", spherical_project, scan, cfg.projection)
    times["project"] = clock() - t0

    t0 = clock()
    _stage("normals", compute_normals, image)
    times["normals"] = clock() - t0

    t0 = clock()
    label_image = _stage("forward", infer_image, model, image.channels,
                         cfg, quant, halo)
    times["forward"] = clock() - t0

    t0 = clock()
    labels = _stage("nla", nla, image.channels[CH_RANGE], label_image,
                    pmap, cfg.patch)
    times["nla"] = clock() - t0
    return labels, times


def run_frame(model, scan, cfg, quant=None):
    """project -> normals -> forward -> argmax -> nearest-range labels."""
    labels, _times = run_frame_timed(model, scan, cfg, quant=quant)
    return labels


def run_frame_split(model, scan, cfg, quant=None, halo=None):
    """run_frame with the network evaluated as two haloed width halves."""
    split_cfg = dataclasses.replace(cfg, split_cores=2)
    labels, _times = run_frame_timed(model, scan, split_cfg, quant=quant,
                                     halo=halo)
    return labels


@dataclass
class BenchmarkReport:
    frames: int
    wall_seconds: float
    fps: float
    gops_per_frame: float
    gops_per_second: float
    gop_per_watt: float = None
    stage_seconds: dict = field(default_factory=dict)

    def to_dict(self):
        out = {
            "frames": self.frames,
            "wall_seconds": self.wall_seconds,
            "fps": self.fps,
            "gops_per_frame": self.gops_per_frame,
            "gops_per_second": self.gops_per_second,
            "stage_seconds": dict(self.stage_seconds),
        }
        if self.gop_per_watt is not None:
            out["gop_per_watt"] = self.gop_per_watt
        return out


def benchmark(model, scans, cfg, quant=None):
    """Time run_frame over the scans after one uncounted warm-up frame.

    Per-stage latencies are medians over the timed frames; throughput uses
    a single wall-clock interval around the whole loop.
    """
    scans = list(scans)
    if not scans:
        raise InputError("benchmark needs at least one frame")
    halo = split_halo(model.config) if cfg.split_cores == 2 else None
    run_frame_timed(model, scans[0], cfg, quant=quant, halo=halo)

    per_stage = {}
    t0 = time.perf_counter()
    for scan in scans:
        _labels, times = run_frame_timed(model, scan, cfg, quant=quant,
                                         halo=halo)
        for name, dt in times.items():
            per_stage.setdefault(name, []).append(dt)
    wall = time.perf_counter() - t0

    fps = len(scans) / wall
    _macs, gops = count_macs(model, cfg.projection.height,
                             cfg.projection.width)
    gops_per_second = gops * fps
    gop_per_watt = None
    if cfg.power_watts is not None:
        gop_per_watt = gops_per_second / cfg.power_watts
    return BenchmarkReport(
        frames=len(scans),
        wall_seconds=wall,
        fps=fps,
        gops_per_frame=gops,
        gops_per_second=gops_per_second,
        gop_per_watt=gop_per_watt,
        stage_seconds={k: statistics.median(v) for k, v in per_stage.items()},
    )
