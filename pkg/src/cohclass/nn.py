"""Minimal deterministic CNN engine on numpy arrays.

Four layer kinds cover both networks in the pipeline: 3x3 zero-padded
convolutions (full and depthwise-separable), non-overlapping 3x3 max
pooling, and nearest-neighbor 3x upsampling. Tensors are (batch, channels,
height, width) at the API; internally activations are kept channel-major
(channels, batch, h, w) so convolutions reduce to single matrix products.
Training runs in float32; passing float64 parameters and inputs switches
the whole computation to float64, which the finite difference tests rely
on.
"""

import struct
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import (
    FormatError,
    ParameterError,
    ShapeError,
    TruncationError,
)

LAYER_KINDS = ("conv", "separable_conv", "maxpool3", "upsample3")
ACTIVATIONS = ("none", "relu", "sigmoid")

BCE_EPSILON = 1e-7
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPSILON = 1e-8

WEIGHTS_MAGIC = b"CNNW"
_CODEC_VERSION = 1
_KIND_CODES = {kind: i for i, kind in enumerate(LAYER_KINDS)}
_ACT_CODES = {act: i for i, act in enumerate(ACTIVATIONS)}
_WEIGHT_KEYS = {
    "conv": ("weight", "bias"),
    "separable_conv": ("depthwise", "pointwise", "bias"),
    "maxpool3": (),
    "upsample3": (),
}


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    in_channels: int = 0
    out_channels: int = 0
    activation: str = "none"

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ParameterError(f"unknown layer kind {self.kind!r}")
        if self.activation not in ACTIVATIONS:
            raise ParameterError(f"unknown activation {self.activation!r}")
        if self.kind in ("conv", "separable_conv"):
            if self.in_channels < 1 or self.out_channels < 1:
                raise ParameterError(f"{self.kind} needs positive channel counts")
        else:
            if self.in_channels != self.out_channels:
                raise ParameterError(f"{self.kind} preserves its channel count")
            if self.activation != "none":
                raise ParameterError(f"{self.kind} carries no activation")


def validate_spec(layers) -> tuple:
    layers = tuple(layers)
    if not layers:
        raise ParameterError("network needs at least one layer")
    for prev, cur in zip(layers, layers[1:]):
        if cur.in_channels != prev.out_channels:
            raise ParameterError(
                f"channel chain broken: {prev.out_channels} -> {cur.in_channels}"
            )
    return layers


def infer_shape(layers, in_shape):
    """Output (channels, height, width) implied by the layer list alone."""
    c, h, w = in_shape
    for spec in validate_spec(layers):
        if spec.in_channels != c:
            raise ShapeError(f"expected {spec.in_channels} channels, got {c}")
        if spec.kind == "maxpool3":
            if h % 3 or w % 3:
                raise ShapeError(f"maxpool3 needs dimensions divisible by 3, got {h}x{w}")
            h, w = h // 3, w // 3
        elif spec.kind == "upsample3":
            h, w = h * 3, w * 3
        c = spec.out_channels
    return c, h, w


@dataclass
class NetworkParams:
    """Per-layer weights plus Adam moment state and the step counter."""

    layers: tuple
    weights: list
    adam_m: list
    adam_v: list
    step: int = 0
    learning_rate: float = 1e-3

    def astype(self, dtype):
        cast = lambda group: [
            {k: v.astype(dtype) for k, v in layer.items()} for layer in group
        ]
        return NetworkParams(
            self.layers,
            cast(self.weights),
            cast(self.adam_m),
            cast(self.adam_v),
            self.step,
            self.learning_rate,
        )

    def num_parameters(self) -> int:
        return sum(v.size for layer in self.weights for v in layer.values())


def _weight_shapes(spec: LayerSpec) -> dict:
    if spec.kind == "conv":
        return {
            "weight": (spec.out_channels, spec.in_channels, 3, 3),
            "bias": (spec.out_channels,),
        }
    if spec.kind == "separable_conv":
        return {
            "depthwise": (spec.in_channels, 3, 3),
            "pointwise": (spec.out_channels, spec.in_channels),
            "bias": (spec.out_channels,),
        }
    return {}


def xavier_init(layers, seed, dtype=np.float32, learning_rate=1e-3) -> NetworkParams:
    """Uniform Xavier weights (+-sqrt(6/(fan_in+fan_out))), zero biases.

    Deterministic for a fixed seed. Depthwise kernels see a single channel,
    so their fans are the 9 kernel taps.
    """
    layers = validate_spec(layers)
    rng = np.random.default_rng(seed)
    weights = []
    for spec in layers:
        layer = {}
        if spec.kind == "conv":
            fan_in = spec.in_channels * 9
            fan_out = spec.out_channels * 9
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            layer["weight"] = rng.uniform(
                -bound, bound, (spec.out_channels, spec.in_channels, 3, 3)
            ).astype(dtype)
            layer["bias"] = np.zeros(spec.out_channels, dtype=dtype)
        elif spec.kind == "separable_conv":
            bound_dw = np.sqrt(6.0 / 18.0)
            layer["depthwise"] = rng.uniform(
                -bound_dw, bound_dw, (spec.in_channels, 3, 3)
            ).astype(dtype)
            bound_pw = np.sqrt(6.0 / (spec.in_channels + spec.out_channels))
            layer["pointwise"] = rng.uniform(
                -bound_pw, bound_pw, (spec.out_channels, spec.in_channels)
            ).astype(dtype)
            layer["bias"] = np.zeros(spec.out_channels, dtype=dtype)
        weights.append(layer)
    zeros = lambda: [
        {k: np.zeros_like(v) for k, v in layer.items()} for layer in weights
    ]
    return NetworkParams(layers, weights, zeros(), zeros(), 0, learning_rate)


# ---------------------------------------------------------------------------
# layer math (channel-major: arrays are (channels, batch, h, w))
# ---------------------------------------------------------------------------


def _to_cm(x):
    return np.ascontiguousarray(np.transpose(x, (1, 0, 2, 3)))


def _pad1(x):
    return np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))


def _relu(z):
    return np.maximum(z, 0.0)


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _activate(z, activation):
    if activation == "relu":
        return _relu(z)
    if activation == "sigmoid":
        return _sigmoid(z)
    return z


def _activation_grad(g, y, activation):
    if activation == "relu":
        return g * (y > 0)
    if activation == "sigmoid":
        return g * y * (1.0 - y)
    return g


def _conv_forward(x, layer):
    cin, n, h, w = x.shape
    weight, bias = layer["weight"], layer["bias"]
    xp = _pad1(x)
    out = np.empty((weight.shape[0], n, h, w), dtype=np.result_type(x, weight))
    _kernels.conv3x3_forward(xp, weight, bias, out)
    return out, xp


def _conv_backward(g, xp, in_shape, layer):
    cin, n, h, w = in_shape
    weight = layer["weight"]
    g = np.ascontiguousarray(g)
    dtype = np.result_type(g, weight)
    grad_w = np.empty(weight.shape, dtype=dtype)
    grad_b = np.empty(weight.shape[0], dtype=dtype)
    _kernels.conv3x3_weight_grad(g, xp, grad_w, grad_b)
    gxp = np.zeros((cin, n, h + 2, w + 2), dtype=dtype)
    _kernels.conv3x3_input_grad(g, weight, gxp)
    gx = np.ascontiguousarray(gxp[:, :, 1 : h + 1, 1 : w + 1])
    return {"weight": grad_w, "bias": grad_b}, gx


def _separable_forward(x, layer):
    cin, n, h, w = x.shape
    xp = _pad1(x)
    dw = layer["depthwise"]
    mid = np.empty((cin, n, h, w), dtype=np.result_type(x, dw))
    _kernels.depthwise3x3_forward(xp, dw, mid)
    y = layer["pointwise"] @ mid.reshape(cin, -1)
    y += layer["bias"][:, None]
    return y.reshape(-1, n, h, w), mid, xp


def _separable_backward(g, xp, mid, in_shape, layer):
    cin, n, h, w = in_shape
    cout = g.shape[0]
    g_flat = g.reshape(cout, -1)
    grad_b = g_flat.sum(axis=1)
    grad_pw = g_flat @ mid.reshape(cin, -1).T
    g_mid = np.ascontiguousarray(
        (layer["pointwise"].T @ g_flat).reshape(cin, n, h, w)
    )
    dw = layer["depthwise"]
    dtype = np.result_type(g, dw)
    grad_dw = np.empty(dw.shape, dtype=dtype)
    _kernels.depthwise3x3_weight_grad(g_mid, xp, grad_dw)
    gxp = np.zeros_like(xp, dtype=dtype)
    _kernels.depthwise3x3_input_grad(g_mid, dw, gxp)
    gx = np.ascontiguousarray(gxp[:, :, 1 : h + 1, 1 : w + 1])
    return {"depthwise": grad_dw, "pointwise": grad_pw, "bias": grad_b}, gx


def _maxpool_forward(x):
    c, n, h, w = x.shape
    if h % 3 or w % 3:
        raise ShapeError(f"maxpool3 needs dimensions divisible by 3, got {h}x{w}")
    blocks = (
        x.reshape(c, n, h // 3, 3, w // 3, 3)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(c, n, h // 3, w // 3, 9)
    )
    arg = blocks.argmax(axis=-1)  # first occurrence wins ties (block scan order)
    y = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]
    return y, arg


def _maxpool_backward(g, arg, in_shape):
    c, n, h, w = in_shape
    gb = np.zeros((c, n, h // 3, w // 3, 9), dtype=g.dtype)
    np.put_along_axis(gb, arg[..., None], g[..., None], axis=-1)
    return (
        gb.reshape(c, n, h // 3, w // 3, 3, 3)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(c, n, h, w)
    )


def _upsample_forward(x):
    return x.repeat(3, axis=2).repeat(3, axis=3)


def _upsample_backward(g):
    c, n, h, w = g.shape
    return g.reshape(c, n, h // 3, 3, w // 3, 3).sum(axis=(3, 5))


def forward(params: NetworkParams, x: np.ndarray, train: bool = True):
    """Run the network on a (batch, channels, h, w) tensor.

    Returns (output, caches). With train=False no caches are retained
    (caches is None), which keeps whole-image inference lean.
    """
    x = np.asarray(x)
    if x.ndim != 4:
        raise ShapeError(f"expected (batch, channels, h, w), got shape {x.shape}")
    layers = validate_spec(params.layers)
    if x.shape[1] != layers[0].in_channels:
        raise ShapeError(
            f"input has {x.shape[1]} channels, network expects {layers[0].in_channels}"
        )
    cur = _to_cm(x)
    caches = [] if train else None
    for spec, layer in zip(layers, params.weights):
        cache = {"in_shape": cur.shape}
        if spec.kind == "conv":
            y, xp = _conv_forward(cur, layer)
            y = _activate(y, spec.activation)
            cache["xp"] = xp
        elif spec.kind == "separable_conv":
            y, mid, xp = _separable_forward(cur, layer)
            y = _activate(y, spec.activation)
            cache["mid"] = mid
            cache["xp"] = xp
        elif spec.kind == "maxpool3":
            y, arg = _maxpool_forward(cur)
            cache["arg"] = arg
        else:
            y = _upsample_forward(cur)
        if train:
            cache["y"] = y
            caches.append(cache)
        cur = y
    return np.transpose(cur, (1, 0, 2, 3)).copy(), caches


def backward(params: NetworkParams, caches, grad_out: np.ndarray):
    """Backpropagate d(loss)/d(output); returns (per-layer grads, input grad)."""
    layers = validate_spec(params.layers)
    if caches is None or len(caches) != len(layers):
        raise ParameterError("caches do not match the network they came from")
    g = np.asarray(grad_out)
    expected = caches[-1]["y"].shape
    if g.shape != (expected[1], expected[0], expected[2], expected[3]):
        raise ShapeError(f"gradient shape {g.shape} does not match the cached output")
    g = _to_cm(g)
    grads = [None] * len(layers)
    for i in range(len(layers) - 1, -1, -1):
        spec, layer, cache = layers[i], params.weights[i], caches[i]
        if spec.kind == "conv":
            gz = _activation_grad(g, cache["y"], spec.activation)
            grads[i], g = _conv_backward(gz, cache["xp"], cache["in_shape"], layer)
        elif spec.kind == "separable_conv":
            gz = _activation_grad(g, cache["y"], spec.activation)
            grads[i], g = _separable_backward(
                gz, cache["xp"], cache["mid"], cache["in_shape"], layer
            )
        elif spec.kind == "maxpool3":
            grads[i] = {}
            g = _maxpool_backward(g, cache["arg"], cache["in_shape"])
        else:
            grads[i] = {}
            g = _upsample_backward(g)
    return grads, np.transpose(g, (1, 0, 2, 3)).copy()


def predict(params: NetworkParams, x: np.ndarray) -> np.ndarray:
    """Forward pass without retaining backward caches."""
    return forward(params, x, train=False)[0]


def loss(kind: str, y, target) -> float:
    """Mean loss over all elements: "mse" or "bce" (targets in {0, 1})."""
    y = np.asarray(y)
    t = np.asarray(target)
    if y.shape != t.shape:
        raise ShapeError(f"shape mismatch: {y.shape} vs {t.shape}")
    if kind == "mse":
        return float(np.mean((y - t) ** 2))
    if kind == "bce":
        if not np.isin(t, (0, 1)).all():
            raise ParameterError("bce targets must be 0 or 1")
        yc = np.clip(y, BCE_EPSILON, 1.0 - BCE_EPSILON)
        return float(np.mean(-(t * np.log(yc) + (1.0 - t) * np.log1p(-yc))))
    raise ParameterError(f"unknown loss kind {kind!r}")


def loss_grad(kind: str, y, target) -> np.ndarray:
    """d(loss)/dy for the mean-reduced losses in loss()."""
    y = np.asarray(y)
    t = np.asarray(target)
    if y.shape != t.shape:
        raise ShapeError(f"shape mismatch: {y.shape} vs {t.shape}")
    m = y.size
    if kind == "mse":
        return (2.0 / m) * (y - t)
    if kind == "bce":
        yc = np.clip(y, BCE_EPSILON, 1.0 - BCE_EPSILON)
        g = (-(t / yc) + (1.0 - t) / (1.0 - yc)) / m
        # the clamp is flat outside (eps, 1-eps)
        return g * ((y > BCE_EPSILON) & (y < 1.0 - BCE_EPSILON))
    raise ParameterError(f"unknown loss kind {kind!r}")


def adam_step(params: NetworkParams, grads, lr: float) -> NetworkParams:
    """One Adam update in place; increments the shared step counter."""
    if len(grads) != len(params.weights):
        raise ParameterError("gradient list does not match the network")
    params.step += 1
    t = params.step
    corr1 = 1.0 - ADAM_BETA1**t
    corr2 = 1.0 - ADAM_BETA2**t
    for layer, g_layer, m_layer, v_layer in zip(
        params.weights, grads, params.adam_m, params.adam_v
    ):
        for key, w in layer.items():
            g = g_layer[key]
            if g.shape != w.shape:
                raise ShapeError(f"gradient shape {g.shape} vs weight {w.shape}")
            m = m_layer[key]
            v = v_layer[key]
            m *= ADAM_BETA1
            m += (1.0 - ADAM_BETA1) * g
            v *= ADAM_BETA2
            v += (1.0 - ADAM_BETA2) * g * g
            w -= lr * (m / corr1) / (np.sqrt(v / corr2) + ADAM_EPSILON)
    params.learning_rate = lr
    return params


def save_weights(params: NetworkParams, include_adam: bool = True) -> bytes:
    """Serialize parameters to the "CNNW" byte layout (f32, little endian)."""
    layers = validate_spec(params.layers)
    out = [
        WEIGHTS_MAGIC,
        struct.pack(
            "<BBHQf",
            _CODEC_VERSION,
            1 if include_adam else 0,
            len(layers),
            params.step,
            params.learning_rate,
        ),
    ]
    for spec in layers:
        out.append(
            struct.pack(
                "<BBII",
                _KIND_CODES[spec.kind],
                _ACT_CODES[spec.activation],
                spec.in_channels,
                spec.out_channels,
            )
        )
    for i, spec in enumerate(layers):
        groups = [params.weights]
        if include_adam:
            groups += [params.adam_m, params.adam_v]
        for group in groups:
            for key in _WEIGHT_KEYS[spec.kind]:
                out.append(group[i][key].astype("<f4").tobytes())
    return b"".join(out)


def load_weights(data: bytes, expected_layers=None) -> NetworkParams:
    """Parse "CNNW" bytes; optionally verify against an expected layer list."""
    if len(data) < 4 or data[:4] != WEIGHTS_MAGIC:
        raise FormatError("not a CNNW weights file")
    head = struct.Struct("<BBHQf")
    if len(data) < 4 + head.size:
        raise TruncationError("header truncated")
    version, adam_flag, n_layers, step, lr = head.unpack_from(data, 4)
    if version != _CODEC_VERSION:
        raise FormatError(f"unsupported version {version}")
    offset = 4 + head.size

    entry = struct.Struct("<BBII")
    kinds = {v: k for k, v in _KIND_CODES.items()}
    acts = {v: k for k, v in _ACT_CODES.items()}
    layers = []
    for i in range(n_layers):
        if offset + entry.size > len(data):
            raise TruncationError(f"layer table truncated at entry {i}")
        kind_c, act_c, cin, cout = entry.unpack_from(data, offset)
        offset += entry.size
        if kind_c not in kinds or act_c not in acts:
            raise FormatError(f"layer {i}: unknown kind/activation codes")
        layers.append(LayerSpec(kinds[kind_c], cin, cout, acts[act_c]))
    layers = validate_spec(layers)
    if expected_layers is not None and tuple(expected_layers) != layers:
        raise FormatError("stored layer table does not match the expected network")

    def read_arrays(i, spec):
        nonlocal offset
        arrays = {}
        for key, shape in _weight_shapes(spec).items():
            count = int(np.prod(shape))
            nbytes = count * 4
            if offset + nbytes > len(data):
                raise TruncationError(f"layer {i}: {key} array truncated")
            arrays[key] = (
                np.frombuffer(data, dtype="<f4", count=count, offset=offset)
                .astype(np.float32)
                .reshape(shape)
            )
            offset += nbytes
        return arrays

    weights, adam_m, adam_v = [], [], []
    for i, spec in enumerate(layers):
        weights.append(read_arrays(i, spec))
        if adam_flag:
            adam_m.append(read_arrays(i, spec))
            adam_v.append(read_arrays(i, spec))
        else:
            adam_m.append({k: np.zeros_like(v) for k, v in weights[-1].items()})
            adam_v.append({k: np.zeros_like(v) for k, v in weights[-1].items()})
    if offset != len(data):
        raise FormatError(f"{len(data) - offset} unexpected trailing bytes")
    return NetworkParams(layers, weights, adam_m, adam_v, step, float(lr))
