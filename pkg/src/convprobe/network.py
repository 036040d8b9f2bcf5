"""Configurable 1-D ConvNet for multichannel time series.

Architecture (all convolutions valid, stride 1)::

    TemporalConv  per-channel filter bank over time -> (filters, channels, time)
    SpatialConv   spans all channels and first-layer filters -> (filters, time)
    [Elu, MaxPool, TemporalConv] ...                 standard 1-D convolutions
    Classifier    conv to n_classes, logits averaged over positions, softmax

The first two layers are linear with no nonlinearity between them, so they
are evaluated as one convolution with effective weights
``W[g, c, k] = sum_f spatial[g, f, c] * temporal[f, k]``; gradients are
chained back to both factors.

Analysis layers 1..4 are the convolutions followed by an ELU (the spatial
conv and the three later temporal convs). Taps return post-ELU activations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Union

import numpy as np

from . import kernels


class SpecError(ValueError):
    """Invalid network geometry or layer sequence."""


@dataclass(frozen=True)
class TemporalConv:
    kernel: int
    filters: int


@dataclass(frozen=True)
class SpatialConv:
    filters: int


@dataclass(frozen=True)
class Elu:
    pass


@dataclass(frozen=True)
class MaxPool:
    size: int
    stride: int


@dataclass(frozen=True)
class Classifier:
    n_classes: int
    kernel: int | None = None  # None: span the remaining time length


Layer = Union[TemporalConv, SpatialConv, Elu, MaxPool, Classifier]

_LAYER_TYPES = {
    "temporal_conv": TemporalConv,
    "spatial_conv": SpatialConv,
    "elu": Elu,
    "max_pool": MaxPool,
    "classifier": Classifier,
}
_TYPE_NAMES = {v: k for k, v in _LAYER_TYPES.items()}


def layer_to_dict(layer: Layer) -> dict:
    d = {"type": _TYPE_NAMES[type(layer)]}
    d.update(layer.__dict__)
    return d


def layer_from_dict(d: dict) -> Layer:
    d = dict(d)
    try:
        cls = _LAYER_TYPES[d.pop("type")]
    except KeyError as exc:
        raise SpecError(f"unknown layer type in {d}") from exc
    return cls(**d)


@dataclass(frozen=True)
class _Op:
    kind: str  # fused | conv | elu | pool | classifier
    index: int  # position in spec.layers (first layer for fused)
    name: str = ""  # parameter prefix for conv-like ops
    tap: int | None = None  # analysis layer id for elu ops
    in_len: int = 0
    out_len: int = 0


@dataclass
class ReceptiveField:
    start: int  # inclusive input sample
    end: int  # exclusive

    @property
    def width(self) -> int:
        return self.end - self.start


@dataclass
class NetworkSpec:
    channels: int
    window: int
    layers: list

    def __post_init__(self) -> None:
        self.layers = [layer_from_dict(l) if isinstance(l, dict) else l for l in self.layers]
        self._plan = self._compile()

    # -- validation / compilation -------------------------------------------------
    def _compile(self) -> list[_Op]:
        L = self.layers
        if self.channels < 1 or self.window < 1:
            raise SpecError("channels and window must be >= 1")
        if len(L) < 3 or not isinstance(L[0], TemporalConv) or not isinstance(L[1], SpatialConv):
            raise SpecError("layers must start with TemporalConv followed directly by SpatialConv")
        if not isinstance(L[-1], Classifier):
            raise SpecError("last layer must be a Classifier")
        n_conv = sum(isinstance(l, (TemporalConv, SpatialConv)) for l in L)
        if n_conv != 5:
            raise SpecError(f"expected exactly 5 convolutional layers before the classifier, found {n_conv}")
        for i, l in enumerate(L):
            if isinstance(l, SpatialConv) and i != 1:
                raise SpecError(f"layer {i} (SpatialConv): only allowed as the second layer")
            if isinstance(l, Classifier) and i != len(L) - 1:
                raise SpecError(f"layer {i} (Classifier): must be last")

        plan: list[_Op] = []
        T = self.window
        conv_no = 0
        tap_no = 0
        last_conv = False
        i = 0
        while i < len(L):
            l = L[i]
            where = f"layer {i} ({type(l).__name__})"
            if i == 0:
                k = L[0].kernel
                if k < 1 or L[0].filters < 1 or L[1].filters < 1:
                    raise SpecError(f"{where}: kernel and filters must be >= 1")
                out = T - k + 1
                if out < 1:
                    raise SpecError(f"{where}: kernel {k} longer than input length {T}")
                plan.append(_Op("fused", 0, "conv1+conv2", in_len=T, out_len=out))
                T = out
                conv_no = 2
                last_conv = True
                i = 2
                continue
            if isinstance(l, TemporalConv):
                if l.kernel < 1 or l.filters < 1:
                    raise SpecError(f"{where}: kernel and filters must be >= 1")
                out = T - l.kernel + 1
                if out < 1:
                    raise SpecError(f"{where}: kernel {l.kernel} longer than input length {T}")
                conv_no += 1
                plan.append(_Op("conv", i, f"conv{conv_no}", in_len=T, out_len=out))
                last_conv = True
            elif isinstance(l, Elu):
                tap = None
                if last_conv:
                    tap_no += 1
                    tap = tap_no
                plan.append(_Op("elu", i, tap=tap, in_len=T, out_len=T))
                last_conv = False
                out = T
            elif isinstance(l, MaxPool):
                if l.size < 1 or l.stride < 1:
                    raise SpecError(f"{where}: size and stride must be >= 1")
                if l.size > T:
                    raise SpecError(f"{where}: pool size {l.size} exceeds input length {T}")
                out = (T - l.size) // l.stride + 1
                plan.append(_Op("pool", i, in_len=T, out_len=out))
                last_conv = False
            elif isinstance(l, Classifier):
                if l.n_classes < 1:
                    raise SpecError(f"{where}: n_classes must be >= 1")
                k = T if l.kernel is None else l.kernel
                out = T - k + 1
                if k < 1 or out < 1:
                    raise SpecError(f"{where}: kernel {k} incompatible with input length {T}")
                plan.append(_Op("classifier", i, "classifier", in_len=T, out_len=out))
            else:  # pragma: no cover - guarded by layer_from_dict
                raise SpecError(f"{where}: unsupported layer")
            T = out
            i += 1
        if tap_no != 4:
            raise SpecError(f"expected 4 ELU-followed analysis layers, found {tap_no}")
        return plan

    # -- geometry -------------------------------------------------------------------
    @property
    def n_classes(self) -> int:
        return self.layers[-1].n_classes

    @property
    def analysis_layers(self) -> tuple[int, ...]:
        return tuple(op.tap for op in self._plan if op.tap is not None)

    def layer_lengths(self) -> list[tuple[str, int]]:
        """Output length after every spec layer, in order."""
        out = []
        for op in self._plan:
            if op.kind == "fused":
                out.append(("TemporalConv", op.out_len))
                out.append(("SpatialConv", op.out_len))
            else:
                out.append((type(self.layers[op.index]).__name__, op.out_len))
        return out

    def n_units(self, layer: int) -> int:
        return self._tap_op(layer).out_len

    def n_filters(self, layer: int) -> int:
        conv = self._conv_for_tap(layer)
        return conv.filters

    def _tap_op(self, layer: int) -> _Op:
        for op in self._plan:
            if op.tap == layer:
                return op
        raise ValueError(f"unknown analysis layer {layer!r}; valid: {self.analysis_layers}")

    def _conv_for_tap(self, layer: int):
        op = self._tap_op(layer)
        for j in range(op.index - 1, -1, -1):
            if isinstance(self.layers[j], (TemporalConv, SpatialConv)):
                return self.layers[j]
        raise AssertionError("analysis layer without convolution")

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        shapes: dict[str, tuple[int, ...]] = {}
        L = self.layers
        shapes["conv1.weight"] = (L[0].filters, L[0].kernel)
        shapes["conv1.bias"] = (L[0].filters,)
        shapes["conv2.weight"] = (L[1].filters, L[0].filters, self.channels)
        shapes["conv2.bias"] = (L[1].filters,)
        prev = L[1].filters
        for op in self._plan:
            if op.kind == "conv":
                l = L[op.index]
                shapes[f"{op.name}.weight"] = (l.filters, prev, l.kernel)
                shapes[f"{op.name}.bias"] = (l.filters,)
                prev = l.filters
            elif op.kind == "classifier":
                l = L[op.index]
                k = op.in_len if l.kernel is None else l.kernel
                shapes["classifier.weight"] = (l.n_classes, prev, k)
                shapes["classifier.bias"] = (l.n_classes,)
        return shapes

    def fan_in(self, name: str) -> int:
        shape = self.param_shapes()[name.replace(".bias", ".weight")]
        if name.startswith("conv1."):
            return shape[1]
        return int(np.prod(shape[1:]))

    def receptive_field(self, layer, unit: int) -> ReceptiveField:
        """Input interval that can influence ``unit`` of ``layer``.

        ``layer`` is an analysis layer id (1..4) or a conv name ("conv1" ..
        "conv5", "classifier"). Composition: each conv of kernel k widens the
        field by (k-1)*jump, each pool of size s and stride r widens it by
        (s-1)*jump and multiplies the jump by r.
        """
        target = self._resolve_layer_index(layer)
        size, jump = 1, 1
        for l in(self.layers[: target + 1]):
            if isinstance(l, TemporalConv):
                size += (l.kernel - 1) * jump
            elif isinstance(l, MaxPool):
                size += (l.size - 1) * jump
                jump *= l.stride
            elif isinstance(l, Classifier):
                k = self._classifier_kernel()
                size += (k - 1) * jump
        n_out = self._length_after(target)
        if not 0 <= int(unit) < n_out:
            raise ValueError(f"unit {unit} out of range for layer {layer!r} with {n_out} units")
        start = int(unit) * jump
        return ReceptiveField(start, start + size)

    def _classifier_kernel(self) -> int:
        op = self._plan[-1]
        l = self.layers[-1]
        return op.in_len if l.kernel is None else l.kernel

    def _length_after(self, index: int) -> int:
        return self.layer_lengths()[index][1]

    def _resolve_layer_index(self, layer) -> int:
        if isinstance(layer, (int, np.integer)) and not isinstance(layer, bool):
            op = self._tap_op(int(layer))
            # the conv feeding this ELU determines geometry; ELU keeps length
            return op.index - 1
        if layer == "classifier":
            return len(self.layers) - 1
        if isinstance(layer, str) and layer.startswith("conv"):
            want = int(layer[4:])
            seen = 0
            for i, l in enumerate(self.layers):
                if isinstance(l, (TemporalConv, SpatialConv)):
                    seen += 1
                    if seen == want:
                        return i
        raise ValueError(f"unknown layer {layer!r}")

    # -- serialization ----------------------------------------------------------------
    def to_dict(self) -> dict:
        return {"channels": self.channels, "window": self.window, "layers": [layer_to_dict(l) for l in self.layers]}

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        return cls(int(d["channels"]), int(d["window"]), [layer_from_dict(l) for l in d["layers"]])

    def __eq__(self, other) -> bool:
        return isinstance(other, NetworkSpec) and self.to_dict() == other.to_dict()


def default_spec(
    channels: int = 8,
    window: int = 522,
    n_classes: int = 2,
    kernel: int = 10,
    filters: tuple[int, int, int, int, int] = (25, 25, 50, 100, 200),
    pool: tuple[int, int] = (3, 3),
) -> NetworkSpec:
    f1, f2, f3, f4, f5 = filters
    layers: list = [TemporalConv(kernel, f1), SpatialConv(f2), Elu(), MaxPool(*pool)]
    for f in (f3, f4, f5):
        layers += [TemporalConv(kernel, f), Elu(), MaxPool(*pool)]
    layers.append(Classifier(n_classes))
    return NetworkSpec(channels, window, layers)


def elu(x: np.ndarray) -> np.ndarray:
    return np.where(x >= 0, x, np.expm1(np.minimum(x, 0)))


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


class Network:
    """Parameters plus forward/backward passes for a :class:`NetworkSpec`."""

    def __init__(self, spec: NetworkSpec, params: dict[str, np.ndarray]):
        self.spec = spec
        shapes = spec.param_shapes()
        if set(params) != set(shapes):
            raise SpecError(f"parameter names {sorted(params)} do not match spec {sorted(shapes)}")
        for name, shape in shapes.items():
            if tuple(params[name].shape) != shape:
                raise SpecError(f"{name}: shape {params[name].shape}, spec requires {shape}")
            if not np.all(np.isfinite(params[name])):
                raise SpecError(f"{name}: non-finite values")
        dtypes = {p.dtype for p in params.values()}
        if len(dtypes) != 1:
            raise SpecError("all parameters must share one dtype")
        self.params = {k: np.ascontiguousarray(v) for k, v in params.items()}

    @property
    def dtype(self) -> np.dtype:
        return next(iter(self.params.values())).dtype

    @property
    def analysis_layers(self) -> tuple[int, ...]:
        return self.spec.analysis_layers

    @property
    def window(self) -> int:
        return self.spec.window

    @property
    def channels(self) -> int:
        return self.spec.channels

    def n_units(self, layer: int) -> int:
        return self.spec.n_units(layer)

    def n_filters(self, layer: int) -> int:
        return self.spec.n_filters(layer)

    def receptive_field(self, layer, unit: int) -> ReceptiveField:
        return self.spec.receptive_field(layer, unit)

    def copy(self) -> "Network":
        return Network(self.spec, {k: v.copy() for k, v in self.params.items()})

    def astype(self, dtype) -> "Network":
        return Network(self.spec, {k: v.astype(dtype) for k, v in self.params.items()})

    # -- forward ------------------------------------------------------------------------
    def _prepare(self, x) -> np.ndarray:
        x = np.asarray(x)
        if x.ndim == 2:
            x = x[None]
        if x.ndim != 3 or x.shape[1:] != (self.spec.channels, self.spec.window):
            raise ValueError(
                f"input shape {x.shape} does not match network input (channels={self.spec.channels}, window={self.spec.window})"
            )
        return np.ascontiguousarray(x, dtype=self.dtype)

    def _effective_first(self):
        P = self.params
        wt, bt, ws, bs = P["conv1.weight"], P["conv1.bias"], P["conv2.weight"], P["conv2.bias"]
        weff = np.einsum("gfc,fk->gck", ws, wt)
        beff = bs + np.einsum("gfc,f->g", ws, bt)
        return weff, beff

    def _run(self, x: np.ndarray, taps: set, stop_after_taps: bool, cache: list | None):
        P = self.params
        acts: dict[int, np.ndarray] = {}
        h = x
        last_tap = max(taps) if taps else 0
        for op in self.spec._plan:
            if op.kind == "fused":
                weff, beff = self._effective_first()
                if cache is not None:
                    cache.append((op, h, weff))
                h = kernels.conv1d_forward(h, weff, beff)
            elif op.kind == "conv":
                if cache is not None:
                    cache.append((op, h, None))
                h = kernels.conv1d_forward(h, P[f"{op.name}.weight"], P[f"{op.name}.bias"])
            elif op.kind == "elu":
                pre = h
                h = elu(pre)
                if cache is not None:
                    cache.append((op, pre, h))
                if op.tap in taps:
                    acts[op.tap] = h
                    if stop_after_taps and op.tap == last_tap:
                        return None, acts
            elif op.kind == "pool":
                l = self.spec.layers[op.index]
                T_in = h.shape[2]
                h, idx = kernels.maxpool1d_forward(h, l.size, l.stride)
                if cache is not None:
                    cache.append((op, idx, T_in))
            elif op.kind == "classifier":
                if cache is not None:
                    cache.append((op, h, None))
                out = kernels.conv1d_forward(h, P["classifier.weight"], P["classifier.bias"])
                h = out.mean(axis=2)
        return h, acts

    def forward(self, x, taps: Iterable[int] = ()) -> tuple[np.ndarray, dict[int, np.ndarray]]:
        """Class probabilities (batch, n_classes) and tapped activations.

        ``x`` is one crop (channels, window) or a batch (batch, channels,
        window). Tapped maps are (batch, filters, units).
        """
        taps = set(taps)
        bad = taps - set(self.analysis_layers)
        if bad:
            raise ValueError(f"unknown analysis layers {sorted(bad)}")
        logits, acts = self._run(self._prepare(x), taps, False, None)
        return _softmax(logits.astype(np.float64)), acts

    def logits(self, x) -> np.ndarray:
        return self._run(self._prepare(x), set(), False, None)[0]

    def activations(self, x, layers: Iterable[int]) -> dict[int, np.ndarray]:
        """Post-ELU activations only; stops after the deepest requested layer."""
        layers = set(layers)
        bad = layers - set(self.analysis_layers)
        if bad:
            raise ValueError(f"unknown analysis layers {sorted(bad)}")
        return self._run(self._prepare(x), layers, True, None)[1]

    # -- backward -----------------------------------------------------------------------
    def loss_and_grads(self, x, labels, input_grad: bool = False):
        """Mean cross-entropy over the batch and its gradient for every parameter.

        Returns ``(loss, grads, probs)``; with ``input_grad`` the gradient with
        respect to the input is stored under ``"input"``.
        """
        x = self._prepare(x)
        labels = np.asarray(labels, dtype=np.int64)
        cache: list = []
        logits, _ = self._run(x, set(), False, cache)
        B = x.shape[0]
        probs = _softmax(logits.astype(np.float64))
        loss = float(-np.mean(np.log(np.maximum(probs[np.arange(B), labels], 1e-300))))
        g = probs.copy()
        g[np.arange(B), labels] -= 1.0
        g = (g / B).astype(self.dtype)
        return loss, self._backward(g, cache, input_grad), probs

    def _backward(self, g_logits: np.ndarray, cache: list, input_grad: bool) -> dict[str, np.ndarray]:
        P = self.params
        grads: dict[str, np.ndarray] = {}
        g = g_logits
        for op, a, b in reversed(cache):
            if op.kind == "classifier":
                W = P["classifier.weight"]
                n_pos = op.out_len
                g_out = np.repeat(g[:, :, None] / n_pos, n_pos, axis=2).astype(self.dtype)
                gw, gb = kernels.conv1d_backward_weight(g_out, a, W.shape[2])
                grads["classifier.weight"], grads["classifier.bias"] = gw, gb
                g = kernels.conv1d_backward_input(g_out, W, a.shape[2])
            elif op.kind == "pool":
                g = kernels.maxpool1d_backward(g, a, b)
            elif op.kind == "elu":
                pre, post = a, b
                g = g * np.where(pre >= 0, 1.0, post + 1.0).astype(self.dtype)
            elif op.kind == "conv":
                W = P[f"{op.name}.weight"]
                gw, gb = kernels.conv1d_backward_weight(g, a, W.shape[2])
                grads[f"{op.name}.weight"], grads[f"{op.name}.bias"] = gw, gb
                g = kernels.conv1d_backward_input(g, W, a.shape[2])
            elif op.kind == "fused":
                weff = b
                wt, ws = P["conv1.weight"], P["conv2.weight"]
                gweff, gbeff = kernels.conv1d_backward_weight(g, a, wt.shape[1])
                grads["conv1.weight"] = np.einsum("gck,gfc->fk", gweff, ws)
                # beff also depends on ws through the first-layer bias
                grads["conv2.weight"] = (np.einsum("gck,fk->gfc", gweff, wt)
                                         + np.einsum("g,f->gf", gbeff, P["conv1.bias"])[:, :, None])
                grads["conv2.bias"] = gbeff
                grads["conv1.bias"] = np.einsum("g,gfc->f", gbeff, ws)
                if input_grad:
                    grads["input"] = kernels.conv1d_backward_input(g, weff, a.shape[2])
        return grads


def build_network(spec: NetworkSpec, init_seed: int, dtype=np.float32) -> Network:
    """Weights ~ U(-sqrt(6/fan_in), +sqrt(6/fan_in)), biases zero.

    Parameters are drawn in :meth:`NetworkSpec.param_shapes` order from
    ``PCG64(init_seed)``.
    """
    rng = np.random.Generator(np.random.PCG64(int(init_seed)))
    params = {}
    for name, shape in spec.param_shapes().items():
        if name.endswith(".bias"):
            params[name] = np.zeros(shape, dtype=dtype)
        else:
            bound = math.sqrt(6.0 / spec.fan_in(name))
            params[name] = rng.uniform(-bound, bound, size=shape).astype(dtype)
    return Network(spec, params)


def zero_network(spec: NetworkSpec, dtype=np.float64) -> Network:
    return Network(spec, {k: np.zeros(s, dtype=dtype) for k, s in spec.param_shapes().items()})
