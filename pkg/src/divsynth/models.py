"""Differentiable unit models: Gabor-based toy cells and small conv stacks.

Every unit exposes the same surface: a batched ``evaluate`` mapping images
[B,C,H,W] to (activations [B], diversity features [B,D]).  Toy cells use
pixel space as their feature space; conv-stack units use the activations of
the layer preceding the selected one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Union

import numpy as np

from . import tensor as T
from .tensor import Tensor


@dataclass(frozen=True)
class GaborParams:
    """Parameters of a 2-D Gabor filter.

    orientation: modulation direction, degrees counter-clockwise from +x.
    frequency:   cycles per pixel, in (0, 0.5].
    phase:       carrier phase, degrees.
    sigma:       Gaussian envelope standard deviation, pixels.
    center:      (x, y) in pixels; None centres the filter on the patch.
    size:        square patch side, pixels.
    """

    orientation: float = 0.0
    frequency: float = 0.2
    phase: float = 0.0
    sigma: float = 6.0
    center: tuple[float, float] | None = None
    size: int = 24

    def resolved_center(self) -> tuple[float, float]:
        if self.center is not None:
            return self.center
        half = (self.size - 1) / 2.0
        return (half, half)


def gabor(params: GaborParams) -> np.ndarray:
    """Cosine grating under a Gaussian envelope, L2-normalized to unit norm."""
    if not (0.0 < params.frequency <= 0.5):
        raise ValueError(f"gabor frequency must be in (0, 0.5], got {params.frequency}")
    if params.sigma <= 0:
        raise ValueError(f"gabor sigma must be positive, got {params.sigma}")
    cx, cy = params.resolved_center()
    ys, xs = np.mgrid[0 : params.size, 0 : params.size]
    dx = xs - cx
    dy = ys - cy
    theta = math.radians(params.orientation)
    u = dx * math.cos(theta) + dy * math.sin(theta)
    carrier = np.cos(2.0 * np.pi * params.frequency * u + math.radians(params.phase))
    envelope = np.exp(-(dx * dx + dy * dy) / (2.0 * params.sigma**2))
    filt = carrier * envelope
    norm = np.sqrt(np.sum(filt * filt))
    if norm == 0.0:
        raise ValueError("gabor filter vanished; check parameters")
    return filt / norm


@dataclass
class UnitModel:
    """A differentiable scalar-output unit with a declared diversity feature space."""

    kind: str
    input_shape: tuple[int, int, int]  # (C, H, W)
    rf: int
    evaluate: Callable[[Tensor], tuple[Tensor, Tensor]]
    name: str = ""
    meta: dict = field(default_factory=dict)

    def _check_batch(self, xs: Tensor) -> None:
        if xs.ndim != 4 or tuple(xs.shape[1:]) != self.input_shape:
            raise ValueError(
                f"{self.name or self.kind}: expected images [B,{','.join(map(str, self.input_shape))}],"
                f" got shape {tuple(xs.shape)}"
            )

    def activations(self, xs: Tensor) -> Tensor:
        """Activations for a batch of images, shape [B]."""
        return self.evaluate(xs)[0]

    def activation(self, x: Tensor) -> Tensor:
        """Scalar activation of a single image [C,H,W]."""
        xs = T.reshape(x, (1,) + self.input_shape)
        return T.slice_tensor(self.activations(xs), 0)

    def features(self, x: Tensor) -> Tensor:
        """Diversity feature vector of a single image [C,H,W]."""
        xs = T.reshape(x, (1,) + self.input_shape)
        return T.slice_tensor(self.evaluate(xs)[1], 0)

    @property
    def act_threshold(self) -> float:
        """Activation threshold fraction used for optimal-lambda selection."""
        return 0.9 if self.kind == "cnn-unit" else 0.8


def _toy_unit(kind: str, name: str, size: int,
              combine: Callable[[Tensor], tuple[Tensor, Tensor]], meta: dict) -> UnitModel:
    """Build a single-channel toy unit from a flat-image stage function.

    ``combine`` maps flattened images [B, H*W] to (activations [B],
    diversity features [B, D]).
    """
    shape = (1, size, size)
    dim = size * size

    def evaluate(xs: Tensor) -> tuple[Tensor, Tensor]:
        unit._check_batch(xs)
        flat = T.reshape(xs, (xs.shape[0], dim))
        return combine(flat)

    unit = UnitModel(kind=kind, input_shape=shape, rf=size, evaluate=evaluate,
                     name=name, meta=meta)
    return unit


def simple_cell(g: GaborParams) -> UnitModel:
    """Linear Gabor filter followed by a ReLU.

    Diversity features are the preceding stage's output: the single linear
    filter response (before the threshold, so inactive images still carry a
    usable coordinate).
    """
    w = Tensor(gabor(g).ravel())

    def combine(flat: Tensor) -> tuple[Tensor, Tensor]:
        c = T.matvec(flat, w)
        return T.relu(c), T.colstack([c])

    return _toy_unit("simple", "simple-cell", g.size, combine, {"gabor": g})


def energy_cell(g: GaborParams) -> UnitModel:
    """Sum of squared responses of a quadrature (90 degree shifted) Gabor pair.

    The diversity feature space is the preceding stage: the two linear
    quadrature filter responses, in which phase shifts trace a circle and
    off-manifold noise is invisible.
    """
    w0 = Tensor(gabor(g).ravel())
    w90 = Tensor(gabor(replace(g, phase=g.phase + 90.0)).ravel())

    def combine(flat: Tensor) -> tuple[Tensor, Tensor]:
        c0 = T.matvec(flat, w0)
        c90 = T.matvec(flat, w90)
        acts = T.add(T.square(c0), T.square(c90))
        return acts, T.colstack([c0, c90])

    return _toy_unit("energy", "energy-cell", g.size, combine, {"gabor": g})


def hubel_wiesel_cell(g: GaborParams, k: int = 32, jitter: float = 0.08,
                      seed: int = 1) -> UnitModel:
    """Pool of K rectified simple cells with uniformly spaced phase preferences.

    Pooling weights are (1 + jitter * eps_k) / K where eps is a smooth
    random-phase modulation, eps_k = sqrt(2) * cos(phi_k - U) with seeded
    uniform U.  Any jitter > 0 gives a single preferred phase; the smooth
    profile keeps the tuning curve free of secondary local maxima so that
    plain activation maximization reliably finds the best phase.  Defaults
    keep the curve above 80% of its maximum at every phase.  Diversity
    features are the K rectified subunit responses (the preceding stage).
    """
    if k < 2:
        raise ValueError(f"hubel_wiesel_cell needs at least 2 subunits, got {k}")
    rng = np.random.default_rng(seed)
    offset = rng.uniform(0.0, 2.0 * np.pi)
    subunit_phases = 2.0 * np.pi * np.arange(k) / k
    eps = np.sqrt(2.0) * np.cos(subunit_phases - offset)
    # pooling gain 0.1: puts the diversity/activation trade-off knee of the
    # default sweep grid near lambda ~ 2 (the subunit feature space fixes the
    # distance scale, so the pooling gain is the remaining free scale)
    weights = 0.1 * (1.0 + jitter * eps)
    if np.any(weights <= 0):
        raise ValueError(f"jitter {jitter} too large: pooling weights must stay positive")
    filters = [Tensor(gabor(replace(g, phase=g.phase + 360.0 * i / k)).ravel())
               for i in range(k)]

    def combine(flat: Tensor) -> tuple[Tensor, Tensor]:
        subunits = [T.relu(T.matvec(flat, w)) for w in filters]
        acts = T.add_n([T.scale(s, a) for s, a in zip(subunits, weights)])
        return acts, T.colstack(subunits)

    meta = {"gabor": g, "k": k, "jitter": jitter, "seed": seed,
            "pool_weights": weights, "preferred_phase": float(np.degrees(offset) % 360.0)}
    return _toy_unit("hubel-wiesel", "hubel-wiesel-cell", g.size, combine, meta)


CORNER_SIZE = 24
CORNER_H_CENTER = (12.0, 7.0)  # horizontal edge, upper part of the patch
CORNER_V_CENTER = (7.0, 12.0)  # vertical edge, left part of the patch


def corner_toy(frequency: float = 0.25, sigma: float = 2.5) -> UnitModel:
    """Top-left corner detector: sum of two localized complex-cell energies.

    One energy pair detects a horizontal edge in the upper part of the patch,
    the other a vertical edge on the left; geometry is fixed for test
    stability.  Diversity features are the four linear filter responses.
    """
    gh = GaborParams(orientation=90.0, frequency=frequency, sigma=sigma,
                     center=CORNER_H_CENTER, size=CORNER_SIZE)
    gv = GaborParams(orientation=0.0, frequency=frequency, sigma=sigma,
                     center=CORNER_V_CENTER, size=CORNER_SIZE)
    filters = []
    for base in (gh, gv):
        filters.append(Tensor(gabor(base).ravel()))
        filters.append(Tensor(gabor(replace(base, phase=90.0)).ravel()))

    def combine(flat: Tensor) -> tuple[Tensor, Tensor]:
        responses = [T.matvec(flat, w) for w in filters]
        acts = T.add_n([T.square(c) for c in responses])
        return acts, T.colstack(responses)

    meta = {"horizontal": gh, "vertical": gv}
    return _toy_unit("corner-toy", "corner-toy", CORNER_SIZE, combine, meta)


# ---------------------------------------------------------------------------
# Small feedforward conv stacks


ACTIVATIONS = ("relu", "linear", "square")
POOL_KINDS = ("max", "avg")


@dataclass(frozen=True)
class ConvLayer:
    out_channels: int
    kernel: tuple[int, int]
    stride: int = 1
    padding: int = 0
    activation: str = "relu"


@dataclass(frozen=True)
class PoolLayer:
    kind: str = "max"
    size: int = 2
    stride: int | None = None

    @property
    def effective_stride(self) -> int:
        return self.size if self.stride is None else self.stride


Layer = Union[ConvLayer, PoolLayer]


@dataclass
class NetworkSpec:
    """Ordered conv/pool layer list with optional per-layer weights."""

    input_channels: int
    layers: list[Layer]
    weights: list[tuple[np.ndarray, np.ndarray] | None] | None = None

    def validate(self) -> None:
        if self.input_channels < 1:
            raise ValueError("input_channels must be >= 1")
        channels = self.input_channels
        for i, layer in enumerate(self.layers):
            if isinstance(layer, ConvLayer):
                if layer.activation not in ACTIVATIONS:
                    raise ValueError(f"layer {i}: unknown activation {layer.activation!r}")
                if self.weights is not None:
                    pair = self.weights[i]
                    if pair is None:
                        raise ValueError(f"layer {i}: conv layer has no weights")
                    w, b = pair
                    expect = (layer.out_channels, channels, *layer.kernel)
                    if w.shape != expect:
                        raise ValueError(
                            f"layer {i}: weight shape {w.shape} does not match {expect}"
                        )
                    if b.shape != (layer.out_channels,):
                        raise ValueError(
                            f"layer {i}: bias shape {b.shape} does not match "
                            f"({layer.out_channels},)"
                        )
                channels = layer.out_channels
            elif isinstance(layer, PoolLayer):
                if layer.kind not in POOL_KINDS:
                    raise ValueError(f"layer {i}: unknown pool kind {layer.kind!r}")
            else:
                raise ValueError(f"layer {i}: unsupported layer type {type(layer)!r}")


def forward(net: NetworkSpec, xs: Tensor, upto: int | None = None) -> list[Tensor]:
    """Run the stack, returning the post-activation output of every layer."""
    if net.weights is None:
        raise ValueError("network has no weights; use random_network or load_network")
    out = xs
    outputs = []
    last = len(net.layers) - 1 if upto is None else upto
    for i, layer in enumerate(net.layers[: last + 1]):
        if isinstance(layer, ConvLayer):
            w, b = net.weights[i]
            out = T.conv2d(out, Tensor(w), Tensor(b), stride=layer.stride,
                           padding=layer.padding)
            if layer.activation == "relu":
                out = T.relu(out)
            elif layer.activation == "square":
                out = T.square(out)
        else:
            if layer.kind == "max":
                out = T.max_pool2d(out, layer.size, layer.effective_stride)
            else:
                out = T.avg_pool2d(out, layer.size, layer.effective_stride)
        outputs.append(out)
    return outputs


def input_size_for(net: NetworkSpec, layer: int) -> int:
    """Square input side length that makes the given layer's output 1x1."""
    size = 1
    for lyr in reversed(net.layers[: layer + 1]):
        if isinstance(lyr, ConvLayer):
            size = (size - 1) * lyr.stride + lyr.kernel[0] - 2 * lyr.padding
        else:
            size = (size - 1) * lyr.effective_stride + lyr.size
        if size < 1:
            raise ValueError("padding exceeds receptive field; no valid input size")
    return size


def random_network(spec: NetworkSpec, seed: int = 0, init_scale: float = 1.0) -> NetworkSpec:
    """Fill a spec with zero-mean Gaussian weights, std init_scale/sqrt(fan-in)."""
    rng = np.random.default_rng(seed)
    weights: list[tuple[np.ndarray, np.ndarray] | None] = []
    channels = spec.input_channels
    for layer in spec.layers:
        if isinstance(layer, ConvLayer):
            fan_in = channels * layer.kernel[0] * layer.kernel[1]
            std = init_scale / math.sqrt(fan_in)
            w = rng.standard_normal((layer.out_channels, channels, *layer.kernel)) * std
            b = np.zeros(layer.out_channels)
            weights.append((w, b))
            channels = layer.out_channels
        else:
            weights.append(None)
    net = NetworkSpec(spec.input_channels, list(spec.layers), weights)
    net.validate()
    return net


def cnn_unit(net: NetworkSpec, layer: int, channel: int) -> UnitModel:
    """One channel of one layer as a scalar unit; input sized so its map is 1x1.

    The diversity feature space is the preceding layer's activations flattened
    over space and channels (pixel space when the first layer is selected).
    """
    net.validate()
    if not (0 <= layer < len(net.layers)):
        raise ValueError(f"layer index {layer} out of range for {len(net.layers)} layers")
    channels = net.input_channels
    for lyr in net.layers[: layer + 1]:
        if isinstance(lyr, ConvLayer):
            channels = lyr.out_channels
    if not (0 <= channel < channels):
        raise ValueError(f"channel index {channel} out of range for {channels} channels")
    size = input_size_for(net, layer)
    shape = (net.input_channels, size, size)

    def evaluate(xs: Tensor) -> tuple[Tensor, Tensor]:
        unit._check_batch(xs)
        outs = forward(net, xs, upto=layer)
        top = outs[layer]
        if top.shape[2] != 1 or top.shape[3] != 1:
            raise ValueError(f"selected layer output is {top.shape[2]}x{top.shape[3]}, not 1x1")
        acts = T.slice_tensor(top, (slice(None), channel, 0, 0))
        prev = outs[layer - 1] if layer > 0 else xs
        feats = T.reshape(prev, (prev.shape[0], int(np.prod(prev.shape[1:]))))
        return acts, feats

    unit = UnitModel(kind="cnn-unit", input_shape=shape, rf=size, evaluate=evaluate,
                     name=f"cnn-l{layer}-c{channel}", meta={"layer": layer, "channel": channel})
    return unit


# ---------------------------------------------------------------------------
# Hand-wired conv units used as metric references


def _quadrature_kernels(orientations, kernel: int, frequency: float, sigma: float):
    banks = []
    for ori in orientations:
        for phase in (0.0, 90.0):
            g = GaborParams(orientation=ori, frequency=frequency, phase=phase,
                            sigma=sigma, size=kernel)
            banks.append(gabor(g))
    return np.stack(banks)[:, None, :, :]  # [2*len(orientations), 1, k, k]


def gap_energy_unit(rf: int = 16, kernel: int = 7, frequency: float = 0.25,
                    sigma: float = 1.7) -> UnitModel:
    """Perfectly shift-invariant unit: global average of a local energy map."""
    map_size = rf - kernel + 1
    spec = NetworkSpec(1, [
        ConvLayer(2, (kernel, kernel), activation="square"),
        ConvLayer(1, (1, 1), activation="linear"),
        PoolLayer("avg", map_size),
    ])
    kernels = _quadrature_kernels([0.0], kernel, frequency, sigma)
    weights = [
        (kernels, np.zeros(2)),
        (np.ones((1, 2, 1, 1)), np.zeros(1)),
        None,
    ]
    net = NetworkSpec(1, spec.layers, weights)
    unit = cnn_unit(net, 2, 0)
    unit.name = "gap-energy"
    unit.meta.update({"network": net, "frequency": frequency, "sigma": sigma,
                      "kernel": kernel})
    return unit


TEXTURE_ORIENTATIONS = (0.0, 45.0, 90.0, 135.0)


def texture_unit(rf: int = 16, kernel: int = 7, frequency: float = 0.25,
                 sigma: float = 1.7) -> UnitModel:
    """Shift-invariant texture detector selective against superpositions.

    Local quadrature energy is computed at four orientations; each is
    inhibited by the sum of the others (relu(E_i - sum E_j)) before global
    average pooling.  A clean single-orientation texture drives it fully
    while any mixture of orientations cancels, so averaged template pairs
    stop activating it.
    """
    map_size = rf - kernel + 1
    n_ori = len(TEXTURE_ORIENTATIONS)
    layers = [
        ConvLayer(2 * n_ori, (kernel, kernel), activation="square"),
        ConvLayer(n_ori, (1, 1), activation="linear"),
        ConvLayer(n_ori, (1, 1), activation="relu"),
        ConvLayer(1, (1, 1), activation="linear"),
        PoolLayer("avg", map_size),
    ]
    kernels = _quadrature_kernels(TEXTURE_ORIENTATIONS, kernel, frequency, sigma)
    pair_sum = np.zeros((n_ori, 2 * n_ori))
    for i in range(n_ori):
        pair_sum[i, 2 * i : 2 * i + 2] = 1.0
    inhibit = 2.0 * np.eye(n_ori) - 1.0  # E_i minus the energies of all other orientations
    weights = [
        (kernels, np.zeros(2 * n_ori)),
        (pair_sum[:, :, None, None], np.zeros(n_ori)),
        (inhibit[:, :, None, None], np.zeros(n_ori)),
        (np.ones((1, n_ori, 1, 1)), np.zeros(1)),
        None,
    ]
    net = NetworkSpec(1, layers, weights)
    unit = cnn_unit(net, 4, 0)
    unit.name = "texture-opponent"
    unit.meta.update({"network": net, "frequency": frequency, "sigma": sigma,
                      "kernel": kernel})
    return unit


def gap_energy_architecture(rf: int = 16, kernel: int = 7) -> NetworkSpec:
    """The gap_energy_unit architecture without weights (for random controls)."""
    map_size = rf - kernel + 1
    return NetworkSpec(1, [
        ConvLayer(2, (kernel, kernel), activation="square"),
        ConvLayer(1, (1, 1), activation="linear"),
        PoolLayer("avg", map_size),
    ])


def gap_energy_control_unit(seed: int = 0, rf: int = 16, kernel: int = 7) -> UnitModel:
    """Random-filter control with the gap_energy_unit architecture.

    The 7x7 filter bank is randomized; the structural energy-pooling merge
    (fixed positive 1x1 sum) is kept so the unit stays a valid non-negative
    detector, mirroring the trained-vs-random comparison.
    """
    net = random_network(gap_energy_architecture(rf, kernel), seed=seed)
    net.weights[1] = (np.ones((1, 2, 1, 1)), np.zeros(1))
    unit = cnn_unit(net, 2, 0)
    unit.name = f"gap-energy-random-{seed}"
    unit.meta.update({"network": net, "seed": seed})
    return unit
