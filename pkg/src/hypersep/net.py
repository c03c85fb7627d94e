"""A small time-domain vocal separation network.

The model is a mirror-symmetric 1D convolutional encoder/decoder. Each
encoder level applies a same-padded conv, LeakyReLU(0.3), then keeps every
second sample; a bottleneck conv sits at the coarsest resolution; each
decoder level doubles the time axis by linear interpolation, concatenates
the matching encoder activation, and applies another conv + LeakyReLU.
A final kernel-1 conv with tanh produces the vocal estimate in [-1, 1],
and the accompaniment estimate is the input mixture minus the vocals, so
the two always sum back to the mixture sample-for-sample.

Forward and backward passes are written directly in numpy. Convolutions
are evaluated as one matrix product per layer over an unrolled-window
view, and the backward pass returns exact gradients of any scalar loss
given its derivative with respect to the vocal output.
"""

import json
import struct
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .energy import FilterBank
from .errors import (
    CorruptHeader,
    IncompatibleShape,
    InvalidConfig,
    MissingCache,
    ShapeMismatch,
)

LEAKY_SLOPE = 0.3

GROWTH_MODES = ("double", "add_base")

_MAGIC = b"HSEP1"


@dataclass(frozen=True)
class NetConfig:
    """Architecture hyperparameters.

    growth controls how channel counts increase with depth: "double"
    doubles per level, "add_base" adds base_features per level. The
    bottleneck conv continues the progression one step past the last
    encoder level. input_len must be divisible by 2**depth so every
    decimation is exact.
    """

    depth: int = 4
    down_kernel: int = 15
    up_kernel: int = 5
    base_features: int = 24
    growth: str = "double"
    input_len: int = 16384
    sample_rate: int = 8000
    seed: int = 0
    bottleneck_own_layer: bool = False

    def validate(self) -> None:
        if self.depth < 1:
            raise InvalidConfig(f"depth must be >= 1, got {self.depth}")
        for name, k in (("down_kernel", self.down_kernel), ("up_kernel", self.up_kernel)):
            if k < 1 or k % 2 == 0:
                raise InvalidConfig(f"{name} must be odd and positive, got {k}")
        if self.base_features < 1:
            raise InvalidConfig(f"base_features must be >= 1, got {self.base_features}")
        if self.growth not in GROWTH_MODES:
            raise InvalidConfig(f"growth must be one of {GROWTH_MODES}, got {self.growth!r}")
        if self.input_len < 1 or self.input_len % (2**self.depth) != 0:
            raise InvalidConfig(
                f"input_len must be a positive multiple of 2**depth = {2**self.depth}, got {self.input_len}"
            )
        if self.sample_rate < 1:
            raise InvalidConfig(f"sample_rate must be positive, got {self.sample_rate}")
        if self.seed < 0:
            raise InvalidConfig(f"seed must be non-negative, got {self.seed}")

    def feature_counts(self) -> list[int]:
        """Output channels of encoder levels 1..depth."""
        if self.growth == "double":
            return [self.base_features * 2**lvl for lvl in range(self.depth)]
        return [self.base_features * (lvl + 1) for lvl in range(self.depth)]

    def bottleneck_features(self) -> int:
        if self.growth == "double":
            return self.base_features * 2**self.depth
        return self.base_features * (self.depth + 1)


@dataclass
class ConvLayer:
    """One convolution with its role in the network.

    role is "down", "bottleneck", "up", or "output"; level is the 1-based
    resolution level for down/up layers and 0 otherwise. weights has shape
    (out_channels, in_channels, kernel).
    """

    role: str
    level: int
    weights: np.ndarray
    bias: np.ndarray


@dataclass
class SepNet:
    config: NetConfig
    layers: list[ConvLayer]

    def parameters(self) -> list[np.ndarray]:
        """Live weight/bias arrays, interleaved in layer order."""
        out = []
        for layer in self.layers:
            out.append(layer.weights)
            out.append(layer.bias)
        return out

    def clone(self) -> "SepNet":
        return SepNet(
            self.config,
            [ConvLayer(l.role, l.level, l.weights.copy(), l.bias.copy()) for l in self.layers],
        )

    def parameter_count(self) -> int:
        return sum(p.size for p in self.parameters())


@dataclass
class SepOutput:
    """Separated sources for one mixture window.

    cache holds forward intermediates needed by backward(); it is None for
    outputs that were reconstructed rather than produced by forward().
    """

    vocals: np.ndarray
    accompaniment: np.ndarray
    cache: "ForwardCache | None" = None


@dataclass
class ForwardCache:
    mixtures: np.ndarray
    conv_inputs: list[np.ndarray]
    pre_activations: list[np.ndarray]
    vocals: np.ndarray


def _layer_plan(config: NetConfig) -> list[tuple[str, int, int, int, int]]:
    """(role, level, in_channels, out_channels, kernel) for every conv, in order."""
    features = config.feature_counts()
    plan = []
    prev = 1
    for lvl, f in enumerate(features, start=1):
        plan.append(("down", lvl, prev, f, config.down_kernel))
        prev = f
    plan.append(("bottleneck", 0, features[-1], config.bottleneck_features(), config.down_kernel))
    prev = config.bottleneck_features()
    for lvl in range(config.depth, 0, -1):
        f = features[lvl - 1]
        plan.append(("up", lvl, prev + f, f, config.up_kernel))
        prev = f
    plan.append(("output", 0, features[0], 1, 1))
    return plan


def init_net(config: NetConfig) -> SepNet:
    """Build a network with uniform Glorot weights and zero biases.

    Draw order follows the layer plan, so a given (config, seed) always
    produces bit-identical parameters.
    """
    config.validate()
    rng = np.random.default_rng(config.seed)
    layers = []
    for role, level, c_in, c_out, kernel in _layer_plan(config):
        fan_in = c_in * kernel
        fan_out = c_out * kernel
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights = rng.uniform(-bound, bound, size=(c_out, c_in, kernel))
        layers.append(ConvLayer(role, level, weights, np.zeros(c_out)))
    return SepNet(config, layers)


def _conv_forward(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Same-padded 1D convolution: (B, C_in, T) -> (B, C_out, T)."""
    batch, _, t = x.shape
    c_out, c_in, kernel = weights.shape
    pad = (kernel - 1) // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad))) if pad else x
    windows = np.lib.stride_tricks.sliding_window_view(xp, kernel, axis=2)
    cols = windows.transpose(0, 2, 1, 3).reshape(batch * t, c_in * kernel)
    y = cols @ weights.reshape(c_out, -1).T
    return y.reshape(batch, t, c_out).transpose(0, 2, 1) + bias[:, None]


def _conv_backward(
    x: np.ndarray, weights: np.ndarray, d_out: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of a same-padded conv: returns (d_weights, d_bias, d_input)."""
    batch, _, t = x.shape
    c_out, c_in, kernel = weights.shape
    pad = (kernel - 1) // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad))) if pad else x
    windows = np.lib.stride_tricks.sliding_window_view(xp, kernel, axis=2)
    cols = windows.transpose(0, 2, 1, 3).reshape(batch * t, c_in * kernel)
    d_flat = d_out.transpose(0, 2, 1).reshape(batch * t, c_out)
    d_weights = (d_flat.T @ cols).reshape(c_out, c_in, kernel)
    d_bias = d_out.sum(axis=(0, 2))
    # d_input is the same conv applied to d_out with channels swapped and
    # taps reversed; same padding keeps this exact for odd kernels.
    flipped = np.ascontiguousarray(weights[:, :, ::-1].transpose(1, 0, 2))
    d_input = _conv_forward(d_out, flipped, np.zeros(c_in))
    return d_weights, d_bias, d_input


def _leaky(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, x, LEAKY_SLOPE * x)


def _leaky_grad(pre: np.ndarray) -> np.ndarray:
    return np.where(pre > 0, 1.0, LEAKY_SLOPE)


def _upsample(x: np.ndarray) -> np.ndarray:
    """Double the time axis: kept samples at even slots, midpoints between
    neighbours at odd slots, last slot repeats the final sample."""
    b, c, t = x.shape
    y = np.empty((b, c, 2 * t))
    y[..., 0::2] = x
    y[..., 1:-1:2] = 0.5 * (x[..., :-1] + x[..., 1:])
    y[..., -1] = x[..., -1]
    return y


def _upsample_backward(d_out: np.ndarray) -> np.ndarray:
    d_odd = d_out[..., 1::2]
    dx = d_out[..., 0::2].copy()
    dx[..., :-1] += 0.5 * d_odd[..., :-1]
    dx[..., 1:] += 0.5 * d_odd[..., :-1]
    dx[..., -1] += d_odd[..., -1]
    return dx


def forward_batch(net: SepNet, mixtures: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    """Run a (B, input_len) batch; returns vocal estimates and the cache."""
    mixtures = np.asarray(mixtures, dtype=np.float64)
    if mixtures.ndim != 2 or mixtures.shape[1] != net.config.input_len:
        raise ShapeMismatch(
            f"expected batch shape (B, {net.config.input_len}), got {mixtures.shape}"
        )
    conv_inputs: list[np.ndarray] = []
    pre_activations: list[np.ndarray] = []
    skips: dict[int, np.ndarray] = {}
    x = mixtures[:, None, :]
    for layer in net.layers:
        if layer.role == "down":
            conv_inputs.append(x)
            pre = _conv_forward(x, layer.weights, layer.bias)
            pre_activations.append(pre)
            act = _leaky(pre)
            skips[layer.level] = act
            x = act[:, :, ::2]
        elif layer.role == "bottleneck":
            conv_inputs.append(x)
            pre = _conv_forward(x, layer.weights, layer.bias)
            pre_activations.append(pre)
            x = _leaky(pre)
        elif layer.role == "up":
            upped = _upsample(x)
            cat = np.concatenate([upped, skips[layer.level]], axis=1)
            conv_inputs.append(cat)
            pre = _conv_forward(cat, layer.weights, layer.bias)
            pre_activations.append(pre)
            x = _leaky(pre)
        else:  # output
            conv_inputs.append(x)
            pre = _conv_forward(x, layer.weights, layer.bias)
            pre_activations.append(pre)
            x = np.tanh(pre)
    vocals = x[:, 0, :]
    cache = ForwardCache(mixtures, conv_inputs, pre_activations, vocals)
    return vocals, cache


def backward_batch(net: SepNet, cache: ForwardCache, d_vocals: np.ndarray) -> list[np.ndarray]:
    """Exact parameter gradients given d(loss)/d(vocals) for the cached batch.

    Returns arrays interleaved as [d_weights, d_bias, ...] matching
    net.parameters() order.
    """
    d_vocals = np.asarray(d_vocals, dtype=np.float64)
    if d_vocals.shape != cache.vocals.shape:
        raise ShapeMismatch(
            f"d_vocals shape {d_vocals.shape} does not match cached vocals {cache.vocals.shape}"
        )
    grads: list[np.ndarray | None] = [None] * (2 * len(net.layers))
    d_skips: dict[int, np.ndarray] = {}
    d_cur = np.empty(0)
    for idx in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[idx]
        if layer.role == "output":
            d_pre = (d_vocals * (1.0 - cache.vocals**2))[:, None, :]
        elif layer.role == "down":
            d_act = np.zeros_like(cache.pre_activations[idx])
            d_act[:, :, ::2] = d_cur
            d_act += d_skips.pop(layer.level)
            d_pre = d_act * _leaky_grad(cache.pre_activations[idx])
        else:
            d_pre = d_cur * _leaky_grad(cache.pre_activations[idx])
        d_w, d_b, d_in = _conv_backward(cache.conv_inputs[idx], layer.weights, d_pre)
        grads[2 * idx] = d_w
        grads[2 * idx + 1] = d_b
        if layer.role == "up":
            # The concat input was [upsampled_below, skip]; the skip half has
            # as many channels as this layer emits.
            below = layer.weights.shape[1] - layer.weights.shape[0]
            d_skips[layer.level] = d_in[:, below:]
            d_cur = _upsample_backward(d_in[:, :below])
        else:
            d_cur = d_in
    return grads  # type: ignore[return-value]


def forward(net: SepNet, mixture: np.ndarray) -> SepOutput:
    """Separate one mixture window of exactly config.input_len samples."""
    mixture = np.asarray(mixture, dtype=np.float64)
    if mixture.ndim != 1:
        raise ShapeMismatch(f"mixture must be 1-D, got shape {mixture.shape}")
    vocals, cache = forward_batch(net, mixture[None, :])
    v = vocals[0]
    return SepOutput(v, mixture - v, cache)


def backward(net: SepNet, output: SepOutput, d_vocals: np.ndarray) -> list[np.ndarray]:
    """Parameter gradients for a forward() output. Raises MissingCache if the
    output carries no forward cache."""
    if output.cache is None:
        raise MissingCache("output has no forward cache; rerun forward() to get one")
    d_vocals = np.asarray(d_vocals, dtype=np.float64)
    if d_vocals.ndim == 1:
        d_vocals = d_vocals[None, :]
    return backward_batch(net, output.cache, d_vocals)


def collect_filter_banks(net: SepNet, include_output: bool = False) -> list[FilterBank]:
    """Hidden-layer conv weights flattened to (out_channels, in_channels * kernel).

    Down and up convs always count as hidden; the bottleneck conv counts
    only when the config marks it as its own layer; the kernel-1 output
    conv is included only on request. Each bank's layer_id is the conv's
    index in net.layers, and its weights are a reshape view of the live
    parameter array.
    """
    banks = []
    for idx, layer in enumerate(net.layers):
        if layer.role in ("down", "up"):
            wanted = True
        elif layer.role == "bottleneck":
            wanted = net.config.bottleneck_own_layer
        else:
            wanted = include_output
        if wanted:
            c_out = layer.weights.shape[0]
            banks.append(FilterBank(layer.weights.reshape(c_out, -1), layer_id=idx))
    return banks


def hidden_layer_count(net: SepNet) -> int:
    """Number of banks the energy penalty sees by default."""
    return len(collect_filter_banks(net, include_output=False))


def separate_signal(
    net: SepNet, mixture: np.ndarray, batch_size: int = 8
) -> tuple[np.ndarray, np.ndarray]:
    """Separate an arbitrary-length mono signal window by window.

    The signal is processed in consecutive config.input_len windows, the
    tail zero-padded and cropped back. Accompaniment is mixture - vocals
    over the whole signal.
    """
    mixture = np.asarray(mixture, dtype=np.float64)
    if mixture.ndim != 1 or mixture.size == 0:
        raise ShapeMismatch(f"mixture must be a non-empty 1-D signal, got shape {mixture.shape}")
    win = net.config.input_len
    total = mixture.size
    padded_len = ((total + win - 1) // win) * win
    padded = np.zeros(padded_len)
    padded[:total] = mixture
    windows = padded.reshape(-1, win)
    voc_parts = []
    for start in range(0, windows.shape[0], batch_size):
        vocals, _ = forward_batch(net, windows[start : start + batch_size])
        voc_parts.append(vocals)
    vocals_full = np.concatenate(voc_parts, axis=0).reshape(-1)[:total]
    return vocals_full, mixture - vocals_full


def save_checkpoint(net: SepNet, path) -> None:
    """Write config plus float64 parameters; loading restores them bit-exactly."""
    header = {
        "format_version": 1,
        "config": asdict(net.config),
        "layers": [
            {
                "role": l.role,
                "level": l.level,
                "out_channels": int(l.weights.shape[0]),
                "in_channels": int(l.weights.shape[1]),
                "kernel": int(l.weights.shape[2]),
            }
            for l in net.layers
        ],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for layer in net.layers:
            fh.write(np.ascontiguousarray(layer.weights, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(layer.bias, dtype="<f8").tobytes())


def load_checkpoint(path) -> SepNet:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < len(_MAGIC) + 4 or data[: len(_MAGIC)] != _MAGIC:
        raise CorruptHeader(f"{path}: not a checkpoint (bad magic)")
    offset = len(_MAGIC)
    (header_len,) = struct.unpack_from("<I", data, offset)
    offset += 4
    if offset + header_len > len(data):
        raise CorruptHeader(f"{path}: truncated header")
    try:
        header = json.loads(data[offset : offset + header_len].decode("utf-8"))
        config = NetConfig(**header["config"])
        stored = header["layers"]
    except (ValueError, KeyError, TypeError) as exc:
        raise CorruptHeader(f"{path}: unreadable header ({exc})") from exc
    offset += header_len
    config.validate()
    plan = _layer_plan(config)
    if len(stored) != len(plan):
        raise IncompatibleShape(
            f"{path}: header lists {len(stored)} layers, config implies {len(plan)}"
        )
    layers = []
    for meta, (role, level, c_in, c_out, kernel) in zip(stored, plan):
        shape = (meta.get("out_channels"), meta.get("in_channels"), meta.get("kernel"))
        if meta.get("role") != role or shape != (c_out, c_in, kernel):
            raise IncompatibleShape(f"{path}: stored layer {meta} does not match plan {role}/{shape}")
        w_bytes = c_out * c_in * kernel * 8
        if offset + w_bytes + c_out * 8 > len(data):
            raise CorruptHeader(f"{path}: parameter block truncated")
        weights = np.frombuffer(data, dtype="<f8", count=c_out * c_in * kernel, offset=offset)
        offset += w_bytes
        bias = np.frombuffer(data, dtype="<f8", count=c_out, offset=offset)
        offset += c_out * 8
        layers.append(ConvLayer(role, level, weights.reshape(c_out, c_in, kernel).copy(), bias.copy()))
    if offset != len(data):
        raise CorruptHeader(f"{path}: {len(data) - offset} trailing bytes after parameters")
    return SepNet(config, layers)
