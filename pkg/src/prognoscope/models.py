"""Declarative construction of the candidate network architectures.

Four video classifiers (time-distributed 2D conv stacks with LSTM or
global-average-pooling aggregation, and 3D conv stacks with flatten or GAP),
a tabular MLP branch, and fused video+tabular variants.

Public video tensors use the (N, T, H, W, C) layout that the per-layer
dimension tables use; everything internal is channels-first.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .nn.layers import (
    BatchNorm, Concat, Conv2d, Conv3d, Dense, Dropout, Flatten,
    GlobalAveragePool, Layer, LSTM, MaxPool2d, MaxPool3d, ReLU, Sigmoid,
    _check_mode,
)
from .nn.tensor import Tensor, as_array, checked

VIDEO_ARCHITECTURES = ("cnn2d_lstm", "cnn2d_gap", "cnn3d", "cnn3d_gap")
ARCHITECTURES = VIDEO_ARCHITECTURES + ("ehr_mlp",)

# per-block (in_channels, out_channels); each block is conv -> bn -> relu ->
# conv -> bn -> relu -> pool, with the first conv changing the width
CHANNEL_PLAN_2D = ((1, 4), (4, 8), (8, 16), (16, 16))
CHANNEL_PLAN_3D = ((1, 4), (4, 8), (8, 16))

EHR_HIDDEN = 10
EHR_DEPTH = 3
EHR_DROPOUT = 0.5

DEFAULT_VIDEO_DIMS = (60, 109, 150, 1)
FULL_EHR_WIDTH = 158
LIMITED_EHR_WIDTH = 10


def parse_architecture_id(arch_id: str) -> tuple[str, str | None]:
    """Split an architecture id into (base, fused video arch or None)."""
    arch_id = arch_id.strip().lower()
    if arch_id.startswith("fused:"):
        video = arch_id.split(":", 1)[1]
        if video not in VIDEO_ARCHITECTURES:
            raise ConfigError(f"unknown fused video architecture {video!r}")
        return "fused", video
    if arch_id not in ARCHITECTURES:
        raise ConfigError(f"unknown architecture {arch_id!r}")
    return arch_id, None


@dataclass
class ModelSpec:
    """Architecture id plus the input widths that fix every layer shape."""

    architecture: str = "cnn3d"
    video_dims: tuple = DEFAULT_VIDEO_DIMS  # (T, H, W, C)
    ehr_width: int = FULL_EHR_WIDTH
    dropout_rate: float = EHR_DROPOUT

    def __post_init__(self):
        base, video = parse_architecture_id(self.architecture)
        self.architecture = self.architecture.strip().lower()
        self._base = base
        self._video_arch = video if base == "fused" else (base if base != "ehr_mlp" else None)
        if self.uses_video:
            t, h, w, c = self.video_dims
            if c != 1:
                raise ConfigError("video input must be single-channel")
            if min(t, h, w) < 1:
                raise ConfigError(f"bad video dims {self.video_dims}")
        if self.uses_ehr and self.ehr_width < 1:
            raise ConfigError("ehr width must be positive")

    @property
    def uses_video(self) -> bool:
        return self._base != "ehr_mlp"

    @property
    def uses_ehr(self) -> bool:
        return self._base in ("ehr_mlp", "fused")

    @property
    def video_architecture(self) -> str | None:
        return self._video_arch


# ---------------------------------------------------------------------------
# structural adapters (no parameters)

class _VideoIngest(Layer):
    """(N, T, H, W, C) -> channels-first grid; 2D variants fold T into batch."""

    kind = "ingest"

    def __init__(self, dims: int, video_dims: tuple):
        super().__init__()
        self.dims = dims
        self.video_dims = tuple(video_dims)

    def output_shape(self, shape):
        if len(shape) != 5 or tuple(shape[1:]) != self.video_dims:
            raise ShapeError(f"video input {shape} does not match the configured dims {self.video_dims}")
        n = shape[0]
        t, h, w, c = self.video_dims
        if self.dims == 3:
            return (n, c, t, h, w)
        return (n * t, c, h, w)

    def forward(self, x: Tensor, mode: str = "infer", rng=None) -> Tensor:
        x = as_array(x)
        out_shape = self.output_shape(x.shape)
        self._cache = x.shape
        if self.dims == 3:
            y = np.ascontiguousarray(x.transpose(0, 4, 1, 2, 3))
        else:
            n, t, h, w, c = x.shape
            y = np.ascontiguousarray(x.reshape(n * t, h, w, c).transpose(0, 3, 1, 2))
        return checked(y.reshape(out_shape))

    def backward(self, grad: Tensor, need_input_grad: bool = True):
        in_shape = self._take_cache()
        if not need_input_grad:
            return None
        dy = as_array(grad)
        if self.dims == 3:
            dx = dy.transpose(0, 2, 3, 4, 1)
        else:
            n, t, h, w, c = in_shape
            dx = dy.transpose(0, 2, 3, 1).reshape(in_shape)
        return checked(np.ascontiguousarray(dx.reshape(in_shape)))


class _TimeDistributedFlatten(Layer):
    """(N*T, C, H, W) -> (N, T, C*H*W) sequences for the LSTM stack."""

    kind = "flatten"

    def __init__(self, frames: int):
        super().__init__()
        self.frames = frames

    def output_shape(self, shape):
        nt, c, h, w = shape
        if nt % self.frames:
            raise ShapeError(f"time-distributed flatten: {nt} rows not divisible by T={self.frames}")
        return (nt // self.frames, self.frames, c * h * w)

    def forward(self, x: Tensor, mode: str = "infer", rng=None) -> Tensor:
        x = as_array(x)
        out_shape = self.output_shape(x.shape)
        self._cache = x.shape
        return checked(np.ascontiguousarray(x.reshape(out_shape)))

    def backward(self, grad: Tensor, need_input_grad: bool = True):
        in_shape = self._take_cache()
        if not need_input_grad:
            return None
        return checked(np.ascontiguousarray(as_array(grad).reshape(in_shape)))


class _TimeGAP(Layer):
    """(N*T, C, H, W) -> (N, C): global average over frames and space."""

    kind = "gap"

    def __init__(self, frames: int):
        super().__init__()
        self.frames = frames

    def output_shape(self, shape):
        nt, c, h, w = shape
        if nt % self.frames:
            raise ShapeError(f"time gap: {nt} rows not divisible by T={self.frames}")
        return (nt // self.frames, c)

    def forward(self, x: Tensor, mode: str = "infer", rng=None) -> Tensor:
        x = as_array(x)
        n, c = self.output_shape(x.shape)
        self._cache = x.shape
        y = x.reshape(n, self.frames, c, x.shape[2], x.shape[3]).mean(axis=(1, 3, 4))
        return checked(y.astype(x.dtype, copy=False))

    def backward(self, grad: Tensor, need_input_grad: bool = True):
        in_shape = self._take_cache()
        if not need_input_grad:
            return None
        nt, c, h, w = in_shape
        n = nt // self.frames
        m = self.frames * h * w
        dy = as_array(grad) / m
        dx = np.broadcast_to(dy.reshape(n, 1, c, 1, 1), (n, self.frames, c, h, w))
        return checked(np.ascontiguousarray(dx).reshape(in_shape))


class _Squeeze(Layer):
    """(N, 1) -> (N,) probability vector."""

    kind = "squeeze"

    def output_shape(self, shape):
        if len(shape) != 2 or shape[1] != 1:
            raise ShapeError(f"squeeze expects (N, 1), got {shape}")
        return (shape[0],)

    def forward(self, x: Tensor, mode: str = "infer", rng=None) -> Tensor:
        x = as_array(x)
        self.output_shape(x.shape)
        self._cache = True
        return checked(x.reshape(-1))

    def backward(self, grad: Tensor, need_input_grad: bool = True):
        self._take_cache()
        if not need_input_grad:
            return None
        return checked(as_array(grad).reshape(-1, 1))


# ---------------------------------------------------------------------------


def _pooled(n: int) -> int:
    return n // 3


def _conv_block(cin, cout, dims, rng, dtype, pool=True):
    layers = [
        ("conv_a", (Conv2d if dims == 2 else Conv3d)(cin, cout, rng=rng, dtype=dtype)),
        ("bn_a", BatchNorm(cout, dtype=dtype)),
        ("relu_a", ReLU()),
        ("conv_b", (Conv2d if dims == 2 else Conv3d)(cout, cout, rng=rng, dtype=dtype)),
        ("bn_b", BatchNorm(cout, dtype=dtype)),
        ("relu_b", ReLU()),
    ]
    if pool:
        layers.append(("pool", MaxPool2d() if dims == 2 else MaxPool3d()))
    return layers


class Model:
    """A built network: video branch, optional tabular branch, fused head."""

    def __init__(self, spec: ModelSpec, seed: int, dtype=np.float32):
        self.spec = spec
        self.seed = seed
        self.dtype = dtype
        rng = np.random.default_rng(seed)
        self.video_layers: list[Layer] = []
        self.ehr_layers: list[Layer] = []
        self.head_layers: list[Layer] = []
        self.concat: Concat | None = None
        self._trace: list[tuple[str, tuple]] = []
        self._rows: list[tuple[str, tuple, int]] = []
        self.last_input_grads: dict[str, np.ndarray] = {}
        if spec.uses_video:
            feature_width = self._build_video(rng, dtype)
        if spec.uses_ehr:
            ehr_width = self._build_ehr(rng, dtype)
        if spec._base == "fused":
            self.concat = Concat()
            self.concat.label = "head.concat"
            self._trace.append(("concat", (feature_width, EHR_HIDDEN)))
            self._rows.append(("concat", (feature_width, EHR_HIDDEN), 0))
            head_in = feature_width + EHR_HIDDEN
        elif spec._base == "ehr_mlp":
            head_in = EHR_HIDDEN
        else:
            head_in = feature_width
        dense = Dense(head_in, 1, rng=rng, dtype=dtype)
        self.head_layers = [dense, Sigmoid(), _Squeeze()]
        for i, lay in enumerate(self.head_layers):
            lay.label = f"head.{lay.kind}_{i}"
        self._trace.append(("dense", (head_in,)))
        self._rows.append(("dense", (head_in,), dense.param_count()))
        self._trace.append(("output", (1,)))

    @property
    def architecture_id(self) -> str:
        return self.spec.architecture

    # -- construction ---------------------------------------------------

    def _build_video(self, rng, dtype) -> int:
        arch = self.spec.video_architecture
        t, h, w, c = self.spec.video_dims
        dims = 2 if arch.startswith("cnn2d") else 3
        plan = CHANNEL_PLAN_2D if dims == 2 else CHANNEL_PLAN_3D
        gap_variant = arch.endswith("_gap")
        ingest = _VideoIngest(dims, self.spec.video_dims)
        ingest.label = "video.ingest"
        self.video_layers.append(ingest)
        cur = (t, h, w, c)
        for i, (cin, cout) in enumerate(plan, start=1):
            last = i == len(plan)
            pool = not (gap_variant and last)
            self._trace.append((f"conv_block_{i}", cur))
            block = _conv_block(cin, cout, dims, rng, dtype, pool=pool)
            count = sum(lay.param_count() for _, lay in block)
            self._rows.append((f"conv_block_{i}", cur, count))
            for name, lay in block:
                lay.label = f"video.block{i}.{name}"
                self.video_layers.append(lay)
            ct, ch, cw = cur[0], cur[1], cur[2]
            if pool:
                if min(ch, cw) < 3 or (dims == 3 and ct < 3):
                    raise ConfigError(
                        f"video dims {self.spec.video_dims} collapse below the pooling "
                        f"window at block {i} ({cur})")
                ch, cw = _pooled(ch), _pooled(cw)
                if dims == 3:
                    ct = _pooled(ct)
            cur = (ct, ch, cw, cout)
        if arch == "cnn2d_lstm":
            td = _TimeDistributedFlatten(t)
            td.label = "video.td_flatten"
            self.video_layers.append(td)
            width = cur[1] * cur[2] * cur[3]
            self._trace.append(("time_distributed_flatten", cur))
            self._rows.append(("time_distributed_flatten", cur, 0))
            lstm1 = LSTM(width, 8, return_sequences=True, rng=rng, dtype=dtype)
            lstm1.label = "video.lstm_1"
            lstm2 = LSTM(8, 4, return_sequences=False, rng=rng, dtype=dtype)
            lstm2.label = "video.lstm_2"
            self.video_layers += [lstm1, lstm2]
            self._trace.append(("lstm_1", (t, width)))
            self._rows.append(("lstm_1", (t, width), lstm1.param_count()))
            self._trace.append(("lstm_2", (t, 8)))
            self._rows.append(("lstm_2", (t, 8), lstm2.param_count()))
            return 4
        if arch == "cnn2d_gap":
            gap = _TimeGAP(t)
            gap.label = "video.gap"
            self.video_layers.append(gap)
            self._trace.append(("gap", cur))
            self._rows.append(("gap", cur, 0))
            return cur[3]
        if arch == "cnn3d":
            flat = Flatten()
            flat.label = "video.flatten"
            self.video_layers.append(flat)
            self._trace.append(("flatten", cur))
            self._rows.append(("flatten", cur, 0))
            return cur[0] * cur[1] * cur[2] * cur[3]
        # cnn3d_gap
        gap = GlobalAveragePool()
        gap.label = "video.gap"
        self.video_layers.append(gap)
        self._trace.append(("gap", cur))
        self._rows.append(("gap", cur, 0))
        return cur[3]

    def _build_ehr(self, rng, dtype) -> int:
        width = self.spec.ehr_width
        cur = width
        for i in range(EHR_DEPTH):
            dense = Dense(cur, EHR_HIDDEN, rng=rng, dtype=dtype)
            dense.label = f"ehr.dense_{i + 1}"
            sig = Sigmoid()
            sig.label = f"ehr.sigmoid_{i + 1}"
            self.ehr_layers += [dense, sig]
            self._trace.append((f"ehr_dense_{i + 1}", (cur,)))
            self._rows.append((f"ehr_dense_{i + 1}", (cur,), dense.param_count()))
            cur = EHR_HIDDEN
        drop = Dropout(self.spec.dropout_rate)
        drop.label = "ehr.dropout"
        self.ehr_layers.append(drop)
        self._trace.append(("ehr_dropout", (cur,)))
        self._rows.append(("ehr_dropout", (cur,), 0))
        return cur

    # -- inspection ------------------------------------------------------

    def shape_trace(self) -> list[tuple[str, tuple]]:
        """Ordered (layer row, input dims) pairs in (T, H, W, C) table layout."""
        return list(self._trace)

    def count_parameters(self) -> tuple[int, list[tuple[str, tuple, int]]]:
        """Total parameter count and the per-row breakdown.

        Counts include the batch-norm moving statistics: each batch-norm
        contributes four per-channel vectors.
        """
        rows = list(self._rows)
        return sum(r[2] for r in rows), rows

    def all_layers(self) -> list[Layer]:
        return self.video_layers + self.ehr_layers + (
            [self.concat] if self.concat is not None else []) + self.head_layers

    def parameters(self, include_stats: bool = False):
        """Yield (layer, name, tensor) triples in construction order."""
        for layer in self.all_layers():
            names = layer.params.keys() if include_stats else layer.trainable()
            for name in names:
                yield layer, name, layer.params[name]

    # -- execution -------------------------------------------------------

    def forward(self, video, ehr=None, mode: str = "infer", rng=None) -> Tensor:
        """Probability of the positive class per sample, strictly in (0, 1)."""
        _check_mode(mode)
        if self.spec.uses_video and video is None:
            raise ConfigError(f"{self.architecture_id}: video input required")
        if self.spec.uses_ehr and ehr is None:
            raise ConfigError(f"{self.architecture_id}: ehr input required")
        if not self.spec.uses_ehr and ehr is not None:
            raise ConfigError(f"{self.architecture_id}: unexpected ehr input")
        if not self.spec.uses_video and video is not None:
            raise ConfigError(f"{self.architecture_id}: unexpected video input")
        if self.spec.uses_ehr:
            eshape = as_array(ehr).shape
            if len(eshape) != 2 or eshape[1] != self.spec.ehr_width:
                raise ShapeError(
                    f"ehr input shape {eshape} does not match width {self.spec.ehr_width}")
        feat = None
        if self.spec.uses_video:
            x = video
            for layer in self.video_layers:
                x = layer.forward(x, mode=mode, rng=rng)
            feat = x
        ehr_feat = None
        if self.spec.uses_ehr:
            e = ehr
            for layer in self.ehr_layers:
                e = layer.forward(e, mode=mode, rng=rng)
            ehr_feat = e
        if self.concat is not None:
            h = self.concat.forward([feat, ehr_feat], mode=mode)
        else:
            h = feat if feat is not None else ehr_feat
        for layer in self.head_layers:
            h = layer.forward(h, mode=mode, rng=rng)
        self._last_prob = as_array(h)
        return h

    def backward_from(self, dprob, need_input_grads: bool = False) -> None:
        """Backpropagate an upstream gradient on the output probabilities."""
        g = Tensor(np.asarray(dprob, dtype=self._last_prob.dtype))
        for layer in reversed(self.head_layers):
            g = layer.backward(g)
        if self.concat is not None:
            g_video, g_ehr = self.concat.backward(g)
        elif self.spec.uses_video:
            g_video, g_ehr = g, None
        else:
            g_video, g_ehr = None, g
        self.last_input_grads = {}
        if self.spec.uses_ehr:
            ge = g_ehr
            for idx in range(len(self.ehr_layers) - 1, -1, -1):
                ge = self.ehr_layers[idx].backward(
                    ge, need_input_grad=need_input_grads or idx > 0)
                if ge is None:
                    break
            if need_input_grads:
                self.last_input_grads["ehr"] = as_array(ge)
        if self.spec.uses_video:
            gv = g_video
            # layer 0 is the ingest adapter, layer 1 the first conv; during
            # training nothing consumes the conv's input gradient, so skip it
            for idx in range(len(self.video_layers) - 1, -1, -1):
                gv = self.video_layers[idx].backward(
                    gv, need_input_grad=need_input_grads or idx > 1)
                if gv is None:
                    break
            if need_input_grads:
                self.last_input_grads["video"] = as_array(gv)

    def backward_bce(self, labels, class_weights, need_input_grads: bool = False) -> None:
        """Backpropagate the class-weighted binary cross-entropy loss."""
        from .training import bce_gradient

        dprob = bce_gradient(self._last_prob, labels, class_weights)
        self.backward_from(dprob, need_input_grads=need_input_grads)

    # -- weight snapshots (early stopping, checkpoint restore) -----------

    def snapshot(self) -> dict[str, np.ndarray]:
        return {f"{layer.label}.{name}": tensor.data.copy()
                for layer, name, tensor in self.parameters(include_stats=True)}

    def restore(self, snap: dict[str, np.ndarray]) -> None:
        for layer, name, tensor in self.parameters(include_stats=True):
            layer.params[name] = Tensor._wrap(snap[f"{layer.label}.{name}"].copy())
            if layer.kind == "batchnorm":
                layer.initialized = True


def build_model(spec: ModelSpec, seed: int = 0, dtype=np.float32) -> Model:
    """Build a seed-deterministic model; fails if the pooling chain collapses."""
    return Model(spec, seed, dtype=dtype)
