"""From-scratch CNN inference engine and the segmentation network.

The network is a slim ResNet-34-shaped backbone over the 8-channel range
image: a three-conv stem at full resolution, four stages of basic residual
blocks (the last three downsample by 2 and dilate their 3x3 convs by 2),
bilinear upsampling of every stage output back to input resolution, channel
concatenation with the stem output, and a head of three 1x1 convolutions
producing 20-class logits.

Everything runs on float32 numpy arrays shaped (channels, height, width),
one image at a time.  The conv kernel itself is dispatched through
`kernels` so it can run either as compiled numba loops or as an
im2col/matmul fallback.
"""

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ConfigurationError, DataError, InputError, WeightFormatError


def _pair(v):
    if isinstance(v, (tuple, list)):
        return int(v[0]), int(v[1])
    return int(v), int(v)


@dataclass(frozen=True)
class ConvSpec:
    in_channels: int
    out_channels: int
    kernel: tuple = (3, 3)
    stride: tuple = (1, 1)
    dilation: tuple = (1, 1)
    padding: tuple = (1, 1)
    has_bias: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kernel", _pair(self.kernel))
        object.__setattr__(self, "stride", _pair(self.stride))
        object.__setattr__(self, "dilation", _pair(self.dilation))
        object.__setattr__(self, "padding", _pair(self.padding))
        if self.in_channels < 1 or self.out_channels < 1:
            raise ConfigurationError("channel counts must be >= 1")
        for name in ("kernel", "stride", "dilation"):
            if min(getattr(self, name)) < 1:
                raise ConfigurationError(f"{name} entries must be >= 1")
        if min(self.padding) < 0:
            raise ConfigurationError("padding must be >= 0")

    def out_shape(self, h, w):
        kh, kw = self.kernel
        sh, sw = self.stride
        dh, dw = self.dilation
        ph, pw = self.padding
        oh = (h + 2 * ph - dh * (kh - 1) - 1) // sh + 1
        ow = (w + 2 * pw - dw * (kw - 1) - 1) // sw + 1
        return oh, ow


@dataclass(frozen=True)
class NetworkConfig:
    input_channels: int = 8
    stem_widths: tuple = (16, 16, 16)
    stage_blocks: tuple = (3, 4, 6, 3)
    stage_widths: tuple = (16, 32, 64, 128)
    stage_strides: tuple = (1, 2, 2, 2)
    stage_dilations: tuple = (1, 2, 2, 2)
    head_widths: tuple = (64, 32)
    num_classes: int = 20

    def __post_init__(self):
        for name in ("stem_widths", "stage_blocks", "stage_widths",
                     "stage_strides", "stage_dilations", "head_widths"):
            object.__setattr__(self, name,
                               tuple(int(v) for v in getattr(self, name)))
        if self.num_classes != 20:
            raise ConfigurationError("num_classes is fixed at 20")
        if self.input_channels < 1:
            raise ConfigurationError("input_channels must be >= 1")
        for name in ("stage_blocks", "stage_widths", "stage_strides",
                     "stage_dilations"):
            if len(getattr(self, name)) != 4:
                raise ConfigurationError(f"{name} must list 4 stages")
        if len(self.head_widths) != 2:
            raise ConfigurationError("head_widths must list 2 widths")
        if not self.stem_widths:
            raise ConfigurationError("stem needs at least one conv")
        for name in ("stem_widths", "stage_blocks", "stage_widths",
                     "stage_strides", "stage_dilations", "head_widths"):
            if min(getattr(self, name)) < 1:
                raise ConfigurationError(f"{name} entries must be >= 1")


def config_to_dict(cfg):
    return dataclasses.asdict(cfg)


def config_from_dict(d):
    try:
        return NetworkConfig(**d)
    except TypeError as exc:
        raise ConfigurationError(f"bad network config: {exc}") from exc


@dataclass
class ConvLayer:
    spec: ConvSpec
    weight: np.ndarray
    bias: np.ndarray = None


@dataclass
class BatchNorm:
    gamma: np.ndarray
    beta: np.ndarray
    mean: np.ndarray
    var: np.ndarray
    eps: float = 1e-5


@dataclass
class ResidualBlock:
    conv1: ConvLayer
    bn1: BatchNorm
    conv2: ConvLayer
    bn2: BatchNorm
    down_conv: ConvLayer = None
    down_bn: BatchNorm = None


@dataclass
class Model:
    config: NetworkConfig
    stem: list = field(default_factory=list)
    stages: list = field(default_factory=list)
    head: list = field(default_factory=list)


def conv2d(x, spec, weight, bias=None):
    """Zero-padded direct convolution with stride and dilation."""
    x = np.ascontiguousarray(x, np.float32)
    if x.ndim != 3 or x.shape[0] != spec.in_channels:
        raise ConfigurationError(
            f"conv expects ({spec.in_channels}, H, W) input, got {x.shape}")
    expected = (spec.out_channels, spec.in_channels) + spec.kernel
    if tuple(weight.shape) != expected:
        raise ConfigurationError(
            f"weight shape {weight.shape} does not match spec {expected}")
    oh, ow = spec.out_shape(x.shape[1], x.shape[2])
    if oh < 1 or ow < 1:
        raise ConfigurationError("conv output would be empty")
    ph, pw = spec.padding
    xp = np.pad(x, ((0, 0), (ph, ph), (pw, pw)))
    if bias is None:
        bias = np.zeros(spec.out_channels, np.float32)
    return kernels.conv2d(xp, np.ascontiguousarray(weight, np.float32),
                          np.ascontiguousarray(bias, np.float32),
                          spec.stride[0], spec.stride[1],
                          spec.dilation[0], spec.dilation[1], oh, ow)


def batchnorm(x, gamma, beta, mean, var, eps=1e-5):
    """Per-channel y = gamma * (x - mean) / sqrt(var + eps) + beta."""
    denom = var.astype(np.float32) + np.float32(eps)
    if np.any(denom <= 0):
        raise ConfigurationError("batchnorm requires var + eps > 0")
    scale = (gamma / np.sqrt(denom)).astype(np.float32)
    shift = (beta - mean * scale).astype(np.float32)
    return x * scale[:, None, None] + shift[:, None, None]


def fold_batchnorm(weight, bias, bn):
    """Fold a batchnorm into the preceding conv; returns (weight, bias)."""
    denom = bn.var.astype(np.float32) + np.float32(bn.eps)
    if np.any(denom <= 0):
        raise ConfigurationError("batchnorm requires var + eps > 0")
    scale = (bn.gamma / np.sqrt(denom)).astype(np.float32)
    if bias is None:
        bias = np.zeros(weight.shape[0], np.float32)
    folded_w = (weight * scale[:, None, None, None]).astype(np.float32)
    folded_b = ((bias - bn.mean) * scale + bn.beta).astype(np.float32)
    return folded_w, folded_b


def relu(x):
    return np.maximum(x, np.float32(0.0))


def bilinear_resize(x, out_h, out_w):
    """Separable bilinear resample with half-pixel source alignment.

    Source coordinate for output index d is (d + 0.5) * Din/Dout - 0.5,
    clamped into [0, Din - 1]; a same-size resize returns an exact copy.
    """
    if out_h < 1 or out_w < 1:
        raise ConfigurationError("resize target must be >= 1 per axis")
    _, in_h, in_w = x.shape
    if in_h == out_h and in_w == out_w:
        return x.copy()

    def axis_coords(n_in, n_out):
        s = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
        s = np.clip(s, 0.0, n_in - 1)
        i0 = np.floor(s).astype(np.int64)
        i1 = np.minimum(i0 + 1, n_in - 1)
        frac = (s - i0).astype(np.float32)
        return i0, i1, frac

    out = x
    if in_h != out_h:
        i0, i1, f = axis_coords(in_h, out_h)
        out = (out[:, i0, :] * (1.0 - f)[None, :, None]
               + out[:, i1, :] * f[None, :, None])
    if in_w != out_w:
        j0, j1, f = axis_coords(in_w, out_w)
        out = (out[:, :, j0] * (1.0 - f)[None, None, :]
               + out[:, :, j1] * f[None, None, :])
    return np.ascontiguousarray(out, np.float32)


def _apply_conv(name, conv, x, edge_hook, weight_hook):
    w, b = conv.weight, conv.bias
    if weight_hook is not None:
        w = weight_hook(f"{name}.weight", w)
        if b is not None:
            b = weight_hook(f"{name}.bias", b)
    out = conv2d(x, conv.spec, w, b)
    return _edge(edge_hook, name, out)


def _edge(edge_hook, name, t):
    return t if edge_hook is None else edge_hook(name, t)


def _block_forward(prefix, block, x, edge_hook=None, weight_hook=None):
    out = _apply_conv(f"{prefix}.conv1", block.conv1, x, edge_hook, weight_hook)
    out = batchnorm(out, block.bn1.gamma, block.bn1.beta,
                    block.bn1.mean, block.bn1.var, block.bn1.eps)
    out = _edge(edge_hook, f"{prefix}.bn1", out)
    out = relu(out)
    out = _edge(edge_hook, f"{prefix}.relu1", out)
    out = _apply_conv(f"{prefix}.conv2", block.conv2, out, edge_hook, weight_hook)
    out = batchnorm(out, block.bn2.gamma, block.bn2.beta,
                    block.bn2.mean, block.bn2.var, block.bn2.eps)
    out = _edge(edge_hook, f"{prefix}.bn2", out)
    if block.down_conv is not None:
        sc = _apply_conv(f"{prefix}.down", block.down_conv, x,
                         edge_hook, weight_hook)
        sc = batchnorm(sc, block.down_bn.gamma, block.down_bn.beta,
                       block.down_bn.mean, block.down_bn.var, block.down_bn.eps)
        sc = _edge(edge_hook, f"{prefix}.down_bn", sc)
    else:
        sc = x
    out = out + sc
    out = _edge(edge_hook, f"{prefix}.add", out)
    out = relu(out)
    return _edge(edge_hook, f"{prefix}.relu2", out)


def residual_block(x, block):
    """Basic block: conv-bn-relu-conv-bn plus shortcut, then relu."""
    return _block_forward("block", block, x)


def _init_conv(rng, spec):
    fan_in = spec.in_channels * spec.kernel[0] * spec.kernel[1]
    w = rng.normal(0.0, np.sqrt(2.0 / fan_in),
                   (spec.out_channels, spec.in_channels) + spec.kernel)
    b = np.zeros(spec.out_channels, np.float32) if spec.has_bias else None
    return ConvLayer(spec=spec, weight=w.astype(np.float32), bias=b)


def _init_bn(channels):
    return BatchNorm(gamma=np.ones(channels, np.float32),
                     beta=np.zeros(channels, np.float32),
                     mean=np.zeros(channels, np.float32),
                     var=np.ones(channels, np.float32))


def _structure(cfg):
    """Layer inventory in graph order: (name, kind, spec-or-channels)."""
    layers = []
    in_c = cfg.input_channels
    for i, width in enumerate(cfg.stem_widths, 1):
        spec = ConvSpec(in_c, width, (3, 3), (1, 1), (1, 1), (1, 1), False)
        layers.append((f"stem{i}", "conv", spec))
        layers.append((f"stem{i}.bn", "bn", width))
        in_c = width
    for s in range(4):
        width = cfg.stage_widths[s]
        dil = cfg.stage_dilations[s]
        for b in range(cfg.stage_blocks[s]):
            stride = cfg.stage_strides[s] if b == 0 else 1
            prefix = f"stage{s + 1}.block{b}"
            spec1 = ConvSpec(in_c, width, (3, 3), (stride, stride),
                             (dil, dil), (dil, dil), False)
            spec2 = ConvSpec(width, width, (3, 3), (1, 1),
                             (dil, dil), (dil, dil), False)
            layers.append((f"{prefix}.conv1", "conv", spec1))
            layers.append((f"{prefix}.bn1", "bn", width))
            layers.append((f"{prefix}.conv2", "conv", spec2))
            layers.append((f"{prefix}.bn2", "bn", width))
            if stride != 1 or in_c != width:
                down = ConvSpec(in_c, width, (1, 1), (stride, stride),
                                (1, 1), (0, 0), False)
                layers.append((f"{prefix}.down", "conv", down))
                layers.append((f"{prefix}.down_bn", "bn", width))
            in_c = width
    concat_c = cfg.stem_widths[-1] + sum(cfg.stage_widths)
    head_chain = (concat_c,) + cfg.head_widths + (cfg.num_classes,)
    for i in range(3):
        spec = ConvSpec(head_chain[i], head_chain[i + 1], (1, 1), (1, 1),
                        (1, 1), (0, 0), True)
        layers.append((f"head{i + 1}", "conv", spec))
    return layers


def main_path_specs(cfg):
    """ConvSpecs along the stem and each stage's main path (no shortcuts).

    Returns (stem_specs, [stage1_specs, ..., stage4_specs]); downsample
    1x1 convs are parallel to conv1 and add no spatial extent.
    """
    stem = []
    stages = [[], [], [], []]
    for name, kind, info in _structure(cfg):
        if kind != "conv":
            continue
        if name.startswith("stem"):
            stem.append(info)
        elif name.startswith("stage") and (name.endswith(".conv1")
                                           or name.endswith(".conv2")):
            stages[int(name[5]) - 1].append(info)
    return stem, stages


def _take_tensor(tensors, name, shape):
    if name not in tensors:
        raise WeightFormatError(f"weights are missing tensor {name}")
    arr = tensors.pop(name)
    if tuple(arr.shape) != tuple(shape):
        raise WeightFormatError(
            f"tensor {name} has shape {arr.shape}, expected {tuple(shape)}")
    return np.ascontiguousarray(arr, np.float32)


def build_network(cfg, seed=0, tensors=None):
    """Construct the Model, randomly initialized or from named tensors."""
    rng = np.random.default_rng(seed)
    remaining = dict(tensors) if tensors is not None else None

    def make_conv(name, spec):
        if remaining is None:
            return _init_conv(rng, spec)
        w = _take_tensor(remaining, f"{name}.weight",
                         (spec.out_channels, spec.in_channels) + spec.kernel)
        b = None
        if spec.has_bias:
            b = _take_tensor(remaining, f"{name}.bias", (spec.out_channels,))
        return ConvLayer(spec=spec, weight=w, bias=b)

    def make_bn(name, channels):
        if remaining is None:
            return _init_bn(channels)
        return BatchNorm(
            gamma=_take_tensor(remaining, f"{name}.gamma", (channels,)),
            beta=_take_tensor(remaining, f"{name}.beta", (channels,)),
            mean=_take_tensor(remaining, f"{name}.mean", (channels,)),
            var=_take_tensor(remaining, f"{name}.var", (channels,)))

    built = {}
    for name, kind, info in _structure(cfg):
        built[name] = make_conv(name, info) if kind == "conv" \
            else make_bn(name, info)

    model = Model(config=cfg)
    for i in range(1, len(cfg.stem_widths) + 1):
        model.stem.append((built[f"stem{i}"], built[f"stem{i}.bn"]))
    for s in range(1, 5):
        blocks = []
        for b in range(cfg.stage_blocks[s - 1]):
            prefix = f"stage{s}.block{b}"
            blocks.append(ResidualBlock(
                conv1=built[f"{prefix}.conv1"],
                bn1=built[f"{prefix}.bn1"],
                conv2=built[f"{prefix}.conv2"],
                bn2=built[f"{prefix}.bn2"],
                down_conv=built.get(f"{prefix}.down"),
                down_bn=built.get(f"{prefix}.down_bn")))
        model.stages.append(blocks)
    model.head = [built[f"head{i}"] for i in (1, 2, 3)]
    if remaining:
        raise WeightFormatError(
            f"weights contain unexpected tensors: {sorted(remaining)[:3]}")
    return model


def iter_tensors(model):
    """Yield every (name, array) parameter in a stable graph order."""
    for i, (conv, bn) in enumerate(model.stem, 1):
        yield f"stem{i}.weight", conv.weight
        yield from _bn_tensors(f"stem{i}.bn", bn)
    for s, blocks in enumerate(model.stages, 1):
        for b, block in enumerate(blocks):
            prefix = f"stage{s}.block{b}"
            yield f"{prefix}.conv1.weight", block.conv1.weight
            yield from _bn_tensors(f"{prefix}.bn1", block.bn1)
            yield f"{prefix}.conv2.weight", block.conv2.weight
            yield from _bn_tensors(f"{prefix}.bn2", block.bn2)
            if block.down_conv is not None:
                yield f"{prefix}.down.weight", block.down_conv.weight
                yield from _bn_tensors(f"{prefix}.down_bn", block.down_bn)
    for i, conv in enumerate(model.head, 1):
        yield f"head{i}.weight", conv.weight
        yield f"head{i}.bias", conv.bias


def _bn_tensors(prefix, bn):
    yield f"{prefix}.gamma", bn.gamma
    yield f"{prefix}.beta", bn.beta
    yield f"{prefix}.mean", bn.mean
    yield f"{prefix}.var", bn.var


def iter_conv_layers(model):
    """Yield (name, ConvLayer) for every conv in graph order."""
    for i, (conv, _bn) in enumerate(model.stem, 1):
        yield f"stem{i}", conv
    for s, blocks in enumerate(model.stages, 1):
        for b, block in enumerate(blocks):
            prefix = f"stage{s}.block{b}"
            yield f"{prefix}.conv1", block.conv1
            yield f"{prefix}.conv2", block.conv2
            if block.down_conv is not None:
                yield f"{prefix}.down", block.down_conv
    for i, conv in enumerate(model.head, 1):
        yield f"head{i}", conv


def forward(model, x, edge_hook=None, weight_hook=None):
    """Run the network on an input image; returns (num_classes, H, W) logits.

    edge_hook(name, tensor) -> tensor is applied to the input and to every
    intermediate activation; weight_hook(name, tensor) -> tensor to every
    conv weight and bias before use.  Both default to pass-through.
    """
    cfg = model.config
    x = np.asarray(x, np.float32)
    if x.ndim != 3 or x.shape[0] != cfg.input_channels:
        raise InputError(
            f"forward expects ({cfg.input_channels}, H, W) input, "
            f"got {x.shape}")
    h, w = x.shape[1], x.shape[2]
    t = _edge(edge_hook, "input", x)
    for i, (conv, bn) in enumerate(model.stem, 1):
        t = _apply_conv(f"stem{i}", conv, t, edge_hook, weight_hook)
        t = batchnorm(t, bn.gamma, bn.beta, bn.mean, bn.var, bn.eps)
        t = _edge(edge_hook, f"stem{i}.bn", t)
        t = relu(t)
        t = _edge(edge_hook, f"stem{i}.relu", t)
    feats = [t]
    for s, blocks in enumerate(model.stages, 1):
        for b, block in enumerate(blocks):
            t = _block_forward(f"stage{s}.block{b}", block, t,
                               edge_hook, weight_hook)
        feats.append(t)
    parts = [feats[0]]
    for i, feat in enumerate(feats[1:], 1):
        r = bilinear_resize(feat, h, w)
        r = _edge(edge_hook, f"resize{i}", r)
        parts.append(r)
    t = np.concatenate(parts, axis=0)
    t = _edge(edge_hook, "concat", t)
    last = len(model.head)
    for i, conv in enumerate(model.head, 1):
        t = _apply_conv(f"head{i}", conv, t, edge_hook, weight_hook)
        if i < last:
            t = relu(t)
            t = _edge(edge_hook, f"head{i}.relu", t)
    if not np.all(np.isfinite(t)):
        raise DataError("forward produced non-finite logits")
    return t


def argmax_labels(logits):
    """Per-pixel predicted class over channels 1..C-1 (0 is ignore)."""
    return (np.argmax(logits[1:], axis=0) + 1).astype(np.int32)


def conv_plan(model, height, width):
    """Trace conv output shapes: list of (name, spec, out_h, out_w)."""
    plan = []
    h, w = height, width
    for i, (conv, _bn) in enumerate(model.stem, 1):
        h, w = conv.spec.out_shape(h, w)
        plan.append((f"stem{i}", conv.spec, h, w))
    for s, blocks in enumerate(model.stages, 1):
        for b, block in enumerate(blocks):
            prefix = f"stage{s}.block{b}"
            h1, w1 = block.conv1.spec.out_shape(h, w)
            plan.append((f"{prefix}.conv1", block.conv1.spec, h1, w1))
            h2, w2 = block.conv2.spec.out_shape(h1, w1)
            plan.append((f"{prefix}.conv2", block.conv2.spec, h2, w2))
            if block.down_conv is not None:
                dh, dw = block.down_conv.spec.out_shape(h, w)
                if (dh, dw) != (h2, w2):
                    raise ConfigurationError(
                        f"{prefix}: shortcut shape {(dh, dw)} does not match "
                        f"main path {(h2, w2)}")
                plan.append((f"{prefix}.down", block.down_conv.spec, dh, dw))
            h, w = h2, w2
    for i, conv in enumerate(model.head, 1):
        oh, ow = conv.spec.out_shape(height, width)
        plan.append((f"head{i}", conv.spec, oh, ow))
    return plan


def count_parameters(model):
    """Conv weights + biases + batchnorm affine terms (gamma, beta)."""
    total = 0
    for name, arr in iter_tensors(model):
        if name.endswith(".mean") or name.endswith(".var"):
            continue
        total += arr.size
    return total


def count_macs(model, height, width):
    """(total MACs, GOPs) for one forward at the given input size."""
    macs = 0
    for _name, spec, oh, ow in conv_plan(model, height, width):
        macs += (spec.out_channels * oh * ow
                 * spec.in_channels * spec.kernel[0] * spec.kernel[1])
    return macs, 2.0 * macs / 1e9
