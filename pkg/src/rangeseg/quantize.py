"""Emulated 8-bit post-training quantization.

The deployment target uses symmetric per-tensor power-of-two scales, so
calibration only picks an exponent e per tensor: the smallest integer with
127 * 2^e >= max|value|.  Inference stays in float32 but every conv weight,
conv bias, and activation edge is rounded onto its int8 grid first (fake
quantization), which reproduces the accuracy effects without integer
kernels.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CalibrationError, ConfigurationError
from .network import forward, iter_conv_layers

QMIN = -128
QMAX = 127
# exponent used when a tensor is identically zero and maxabs gives no signal
DEFAULT_EXPONENT = -7


@dataclass
class QuantParams:
    bitwidth: int = 8
    weights: dict = field(default_factory=dict)       # tensor name -> exponent
    activations: dict = field(default_factory=dict)   # edge name -> exponent


def scale_exponent(maxabs):
    """Smallest integer e with 127 * 2^e >= maxabs."""
    if not math.isfinite(maxabs) or maxabs < 0:
        raise CalibrationError(f"invalid calibration maximum {maxabs!r}")
    if maxabs == 0:
        return DEFAULT_EXPONENT
    e = math.ceil(math.log2(maxabs / QMAX))
    # log2 can land one off at exact powers; nudge to the true minimum
    while math.ldexp(QMAX, e) < maxabs:
        e += 1
    while math.ldexp(QMAX, e - 1) >= maxabs:
        e -= 1
    return e


def scale_from_exponent(e):
    return math.ldexp(1.0, e)


def quantize(x, scale):
    """Round to the int8 grid: clamp(round-half-away-from-zero(x/scale))."""
    if not scale > 0:
        raise ConfigurationError("quantization scale must be positive")
    v = np.asarray(x, np.float64) / scale
    q = np.copysign(np.floor(np.abs(v) + 0.5), v)
    return np.clip(q, QMIN, QMAX).astype(np.int8)


def dequantize(q, scale):
    return np.asarray(q, np.float32) * np.float32(scale)


def fake_quant(x, exponent):
    scale = scale_from_exponent(exponent)
    return dequantize(quantize(x, scale), scale)


def calibrate(model, calib_inputs):
    """Pick exponents for every weight tensor and every activation edge.

    Weights calibrate against their own values; activations against the
    running max|value| observed while running the calibration inputs.
    """
    inputs = list(calib_inputs)
    if not inputs:
        raise CalibrationError("calibration set is empty")
    params = QuantParams()
    for name, conv in iter_conv_layers(model):
        params.weights[f"{name}.weight"] = scale_exponent(
            float(np.max(np.abs(conv.weight))))
        if conv.bias is not None:
            maxabs = float(np.max(np.abs(conv.bias))) if conv.bias.size else 0.0
            params.weights[f"{name}.bias"] = scale_exponent(maxabs)

    maxima = {}

    def observer(name, t):
        m = float(np.max(np.abs(t))) if t.size else 0.0
        if name in maxima:
            maxima[name] = max(maxima[name], m)
        else:
            maxima[name] = m
        return t

    for x in inputs:
        forward(model, x, edge_hook=observer)
    params.activations = {k: scale_exponent(v) for k, v in maxima.items()}
    return params


def fake_quantized_forward(model, params, x, bypass=False):
    """forward() with every weight and activation edge fake-quantized.

    With bypass=True the hooks are dropped entirely and the result is
    bit-identical to the float forward.
    """
    if bypass:
        return forward(model, x)

    def weight_hook(name, t):
        if name not in params.weights:
            raise ConfigurationError(f"no quantization exponent for {name}")
        return fake_quant(t, params.weights[name])

    def edge_hook(name, t):
        if name not in params.activations:
            raise ConfigurationError(
                f"no quantization exponent for activation edge {name}")
        return fake_quant(t, params.activations[name])

    return forward(model, x, edge_hook=edge_hook, weight_hook=weight_hook)
