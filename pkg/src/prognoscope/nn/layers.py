"""Layer forward/backward implementations.

Conventions:
  * channels-first activations: video tensors are (N, C, T, H, W), frame
    tensors (N, C, H, W), feature vectors (N, F), sequences (N, T, F);
  * every forward caches what its backward needs; backward before forward
    raises;
  * convolution kernels are 3 per axis, stride 1, zero "same" padding;
    max pooling is window 3, stride 3, floor truncation;
  * float32 is the training precision, float64 the verification precision.
"""
from __future__ import annotations

import numpy as np

from ..errors import ConfigError, ShapeError
from . import kernels
from .tensor import DEFAULT_DTYPE, Tensor, as_array, checked

BN_EPSILON = 1e-5
BN_MOMENTUM = 0.9

MODES = ("train", "infer")


def _check_mode(mode: str) -> None:
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")


def glorot_uniform(rng: np.random.Generator, shape, fan_in, fan_out, dtype):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Layer:
    """Base layer: named parameters, cached activations, mirrored gradients."""

    kind = "layer"

    def __init__(self):
        self.params: dict[str, Tensor] = {}
        self.grads: dict[str, np.ndarray] = {}
        self._cache = None

    # trainable parameter names; BatchNorm overrides to exclude moving stats
    def trainable(self):
        return list(self.params.keys())

    def param_count(self) -> int:
        return sum(t.size for t in self.params.values())

    def forward(self, x: Tensor, mode: str = "infer", rng=None) -> Tensor:
        raise NotImplementedError

    def backward(self, grad: Tensor, need_input_grad: bool = True):
        raise NotImplementedError

    def output_shape(self, shape):
        raise NotImplementedError

    def _take_cache(self):
        if self._cache is None:
            raise ConfigError(f"{self.kind}: backward called before forward")
        cache = self._cache
        return cache

    def set_param(self, name: str, value) -> None:
        arr = as_array(value, dtype=self.params[name].dtype)
        if arr.shape != self.params[name].shape:
            raise ShapeError(
                f"{self.kind}.{name}: expected shape {self.params[name].shape}, got {arr.shape}"
            )
        self.params[name] = Tensor(arr)

    def __repr__(self):
        return f"{type(self).__name__}(kind={self.kind})"


class Conv(Layer):
    """Shared 2D/3D convolution: kernel 3 per axis, stride 1, same padding."""

    def __init__(self, in_channels: int, out_channels: int, dims: int,
                 rng: np.random.Generator = None, dtype=DEFAULT_DTYPE):
        super().__init__()
        if dims not in (2, 3):
            raise ConfigError("conv dims must be 2 or 3")
        if in_channels <= 0 or out_channels <= 0:
            raise ShapeError("conv channel counts must be positive")
        self.dims = dims
        self.in_channels = in_channels
        self.out_channels = out_channels
        kshape = (out_channels, in_channels) + (3,) * dims
        taps = 3 ** dims
        if rng is None:
            w = np.zeros(kshape, dtype=dtype)
        else:
            w = glorot_uniform(rng, kshape, in_channels * taps, out_channels * taps, dtype)
        self.params = {
            "weight": Tensor._wrap(w),
            "bias": Tensor._wrap(np.zeros(out_channels, dtype=dtype)),
        }

    @property
    def kind(self):
        return f"conv{self.dims}d"

    def output_shape(self, shape):
        want = self.dims + 2
        if len(shape) != want:
            raise ShapeError(f"{self.kind}: expected {want}-d input, got {shape}")
        if shape[1] != self.in_channels:
            raise ShapeError(
                f"{self.kind}: input has {shape[1]} channels, kernels expect {self.in_channels}"
            )
        if any(s <= 0 for s in shape):
            raise ShapeError(f"{self.kind}: non-positive dimension in {shape}")
        return (shape[0], self.out_channels) + tuple(shape[2:])

    def _pad(self, x: np.ndarray) -> np.ndarray:
        # zero only the one-voxel border faces, not the whole buffer
        shape = x.shape[:2] + tuple(s + 2 for s in x.shape[2:])
        xp = np.empty(shape, dtype=x.dtype)
        if self.dims == 2:
            xp[:, :, (0, -1), :] = 0
            xp[:, :, :, (0, -1)] = 0
            xp[:, :, 1:-1, 1:-1] = x
        else:
            xp[:, :, (0, -1), :, :] = 0
            xp[:, :, :, (0, -1), :] = 0
            xp[:, :, :, :, (0, -1)] = 0
            xp[:, :, 1:-1, 1:-1, 1:-1] = x
        return xp

    def forward(self, x: Tensor, mode: str = "infer", rng=None) -> Tensor:
        _check_mode(mode)
        x = as_array(x)
        out_shape = self.output_shape(x.shape)
        xp = self._pad(x)
        w = self.params["weight"].data
        b = self.params["bias"].data
        y = np.empty(out_shape, dtype=x.dtype)
        if self.dims == 2:
            kernels.conv2d_fwd(xp, w, b, y)
        else:
            kernels.conv3d_fwd(xp, w, b, y)
        self._cache = xp
        return checked(y)

    def backward(self, grad: Tensor, need_input_grad: bool = True):
        xp = self._take_cache()
        dy = as_array(grad)
        w = self.params["weight"].data
        dw = np.zeros_like(w)
        db = np.zeros_like(self.params["bias"].data)
        if self.dims == 2:
            kernels.conv2d_wgrad(xp, dy, dw, db)
        elif int(np.prod(dy.shape[2:])) >= 4096:
            kernels.conv3d_wgrad_wide(xp, dy, dw, db)
        else:
            kernels.conv3d_wgrad(xp, dy, dw, db)
        self.grads = {"weight": dw, "bias": db}
        if not need_input_grad:
            return None
        # input gradient is a same-padding convolution of the upstream
        # gradient with the spatially flipped, channel-transposed kernel
        flip = (slice(None), slice(None)) + (slice(None, None, -1),) * self.dims
        wt = np.ascontiguousarray(np.swapaxes(w[flip], 0, 1))
        dyp = self._pad(dy)
        dx = np.empty(xp.shape[:1] + (self.in_channels,) + dy.shape[2:], dtype=dy.dtype)
        zb = np.zeros(self.in_channels, dtype=dy.dtype)
        if self.dims == 2:
            kernels.conv2d_fwd(dyp, wt, zb, dx)
        else:
            kernels.conv3d_fwd(dyp, wt, zb, dx)
        return checked(dx)


class Conv2d(Conv):
    def __init__(self, in_channels, out_channels, rng=None, dtype=DEFAULT_DTYPE):
        super().__init__(in_channels, out_channels, 2, rng, dtype)


class Conv3d(Conv):
    def __init__(self, in_channels, out_channels, rng=None, dtype=DEFAULT_DTYPE):
        super().__init__(in_channels, out_channels, 3, rng, dtype)


class MaxPool(Layer):
    """Max pool, window 3 / stride 3 per pooled axis, remainder truncated."""

    def __init__(self, dims: int):
        super().__init__()
        if dims not in (2, 3):
            raise ConfigError("pool dims must be 2 or 3")
        self.dims = dims

    @property
    def kind(self):
        return f"maxpool{self.dims}d"

    def output_shape(self, shape):
        want = self.dims + 2
        if len(shape) != want:
            raise ShapeError(f"{self.kind}: expected {want}-d input, got {shape}")
        pooled = shape[2:]
        if any(s < 3 for s in pooled):
            raise ShapeError(f"{self.kind}: pooled axis smaller than 3 in {shape}")
        return shape[:2] + tuple(s // 3 for s in pooled)

    def forward(self, x: Tensor, mode: str = "infer", rng=None) -> Tensor:
        _check_mode(mode)
        x = as_array(x)
        out_shape = self.output_shape(x.shape)
        y = np.empty(out_shape, dtype=x.dtype)
        idx = np.empty(out_shape, dtype=np.int64)
        if self.dims == 2:
            kernels.maxpool2d_fwd(x, y, idx)
        else:
            kernels.maxpool3d_fwd(x, y, idx)
        self._cache = (x.shape, x.dtype, idx)
        return checked(y)

    def backward(self, grad: Tensor, need_input_grad: bool = True):
        in_shape, dtype, idx = self._take_cache()
        if not need_input_grad:
            return None
        dy = as_array(grad)
        n, c = in_shape[0], in_shape[1]
        dx = np.zeros((n, c, int(np.prod(in_shape[2:]))), dtype=dtype)
        if self.dims == 2:
            kernels.maxpool2d_bwd(dy, idx, dx)
        else:
            kernels.maxpool3d_bwd(dy, idx, dx)
        return checked(dx.reshape(in_shape))


class MaxPool2d(MaxPool):
    def __init__(self):
        super().__init__(2)


class MaxPool3d(MaxPool):
    def __init__(self):
        super().__init__(3)


class BatchNorm(Layer):
    """Per-channel batch normalization over all non-channel axes.

    Stores exactly four per-channel vectors: gamma, beta, moving mean and
    moving variance. Train mode normalizes with biased batch statistics and
    updates the moving pair; infer mode requires initialized moving stats.
    """

    kind = "batchnorm"

    def __init__(self, channels: int, eps: float = BN_EPSILON,
                 momentum: float = BN_MOMENTUM, dtype=DEFAULT_DTYPE):
        super().__init__()
        if channels <= 0:
            raise ShapeError("batchnorm needs a positive channel count")
        self.channels = channels
        self.eps = eps
        self.momentum = momentum
        self.initialized = False
        self.params = {
            "gamma": Tensor._wrap(np.ones(channels, dtype=dtype)),
            "beta": Tensor._wrap(np.zeros(channels, dtype=dtype)),
            "moving_mean": Tensor._wrap(np.zeros(channels, dtype=dtype)),
            "moving_var": Tensor._wrap(np.ones(channels, dtype=dtype)),
        }

    def trainable(self):
        return ["gamma", "beta"]

    def output_shape(self, shape):
        if len(shape) < 2 or shape[1] != self.channels:
            raise ShapeError(f"batchnorm({self.channels}): bad input shape {shape}")
        return shape

    def _bshape(self, ndim):
        return (1, self.channels) + (1,) * (ndim - 2)

    def forward(self, x: Tensor, mode: str = "infer", rng=None) -> Tensor:
        _check_mode(mode)
        x = np.ascontiguousarray(as_array(x))
        self.output_shape(x.shape)
        n, c = x.shape[0], self.channels
        x3 = x.reshape(n, c, -1)
        m = x.size // c
        if mode == "train":
            sums = np.empty(c, dtype=np.float64)
            sumsq = np.empty(c, dtype=np.float64)
            kernels.bn_reduce(x3, sums, sumsq)
            mean = sums / m
            var = np.maximum(sumsq / m - mean * mean, 0.0)
            mom = self.momentum
            self.params["moving_mean"] = Tensor._wrap(
                (mom * self.params["moving_mean"].data + (1 - mom) * mean).astype(x.dtype))
            self.params["moving_var"] = Tensor._wrap(
                (mom * self.params["moving_var"].data + (1 - mom) * var).astype(x.dtype))
            self.initialized = True
        else:
            if not self.initialized:
                raise ConfigError("batchnorm: infer mode before moving statistics exist")
            mean = self.params["moving_mean"].data.astype(np.float64)
            var = self.params["moving_var"].data.astype(np.float64)
        inv_std = (1.0 / np.sqrt(var + self.eps)).astype(x.dtype)
        y = np.empty_like(x)
        x_hat = np.empty_like(x)
        kernels.bn_normalize(x3, mean.astype(x.dtype), inv_std,
                             self.params["gamma"].data, self.params["beta"].data,
                             y.reshape(n, c, -1), x_hat.reshape(n, c, -1))
        self._cache = (mode, x_hat, inv_std)
        return checked(y)

    def backward(self, grad: Tensor, need_input_grad: bool = True):
        mode, x_hat, inv_std = self._take_cache()
        dy = np.ascontiguousarray(as_array(grad))
        n, c = dy.shape[0], self.channels
        dy3 = dy.reshape(n, c, -1)
        dgamma = np.empty(c, dtype=dy.dtype)
        dbeta = np.empty(c, dtype=dy.dtype)
        kernels.bn_backward_reduce(dy3, x_hat.reshape(n, c, -1), dgamma, dbeta)
        self.grads = {"gamma": dgamma, "beta": dbeta}
        if not need_input_grad:
            return None
        gamma = self.params["gamma"].data
        dx = np.empty_like(dy)
        if mode == "infer":
            zeros = np.zeros(c, dtype=dy.dtype)
            kernels.bn_backward_dx(dy3, x_hat.reshape(n, c, -1),
                                   (gamma * inv_std).astype(dy.dtype),
                                   zeros, zeros, dx.reshape(n, c, -1))
        else:
            m = dy.size // c
            kernels.bn_backward_dx(dy3, x_hat.reshape(n, c, -1),
                                   (gamma * inv_std).astype(dy.dtype),
                                   (dbeta / m).astype(dy.dtype),
                                   (dgamma / m).astype(dy.dtype),
                                   dx.reshape(n, c, -1))
        return checked(dx)


class ReLU(Layer):
    kind = "relu"

    def output_shape(self, shape):
        return shape

    def forward(self, x: Tensor, mode: str = "infer", rng=None) -> Tensor:
        _check_mode(mode)
        x = as_array(x)
        y = np.maximum(x, 0)
        self._cache = y       # y > 0 iff x > 0
        return checked(y)

    def backward(self, grad: Tensor, need_input_grad: bool = True):
        y = self._take_cache()
        if not need_input_grad:
            return None
        dy = as_array(grad)
        return checked((dy * (y > 0)).astype(dy.dtype, copy=False))


class Sigmoid(Layer):
    kind = "sigmoid"

    def output_shape(self, shape):
        return shape

    def forward(self, x: Tensor, mode: str = "infer", rng=None) -> Tensor:
        _check_mode(mode)
        x = as_array(x)
        # split by sign for overflow-free evaluation
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)
        self._cache = out
        return checked(out)

    def backward(self, grad: Tensor, need_input_grad: bool = True):
        s = self._take_cache()
        if not need_input_grad:
            return None
        dy = as_array(grad)
        return checked((dy * s * (1.0 - s)).astype(dy.dtype, copy=False))


class Dropout(Layer):
    """Inverted-scaling dropout; active only in train mode."""

    kind = "dropout"

    def __init__(self, rate: float = 0.5):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate

    def output_shape(self, shape):
        return shape

    def forward(self, x: Tensor, mode: str = "infer", rng=None) -> Tensor:
        _check_mode(mode)
        x = as_array(x)
        if mode == "infer" or self.rate == 0.0:
            self._cache = "identity"
            return checked(x.copy())
        if rng is None:
            raise ConfigError("dropout in train mode needs an rng for its mask")
        mask = (rng.random(x.shape) >= self.rate).astype(x.dtype)
        scale = x.dtype.type(1.0 / (1.0 - self.rate))
        self._cache = (mask, scale)
        return checked(x * mask * scale)

    def backward(self, grad: Tensor, need_input_grad: bool = True):
        cache = self._take_cache()
        if not need_input_grad:
            return None
        dy = as_array(grad)
        if cache == "identity":
            return checked(dy.copy())
        mask, scale = cache
        return checked(dy * mask * scale)


class Dense(Layer):
    """Affine map on feature vectors: y = x W + b."""

    kind = "dense"

    def __init__(self, in_features: int, out_features: int,
                 rng: np.random.Generator = None, dtype=DEFAULT_DTYPE):
        super().__init__()
        if in_features <= 0 or out_features <= 0:
            raise ShapeError("dense feature counts must be positive")
        self.in_features = in_features
        self.out_features = out_features
        if rng is None:
            w = np.zeros((in_features, out_features), dtype=dtype)
        else:
            w = glorot_uniform(rng, (in_features, out_features), in_features, out_features, dtype)
        self.params = {
            "weight": Tensor._wrap(w),
            "bias": Tensor._wrap(np.zeros(out_features, dtype=dtype)),
        }

    def output_shape(self, shape):
        if len(shape) != 2 or shape[1] != self.in_features:
            raise ShapeError(f"dense({self.in_features}->{self.out_features}): bad input {shape}")
        return (shape[0], self.out_features)

    def forward(self, x: Tensor, mode: str = "infer", rng=None) -> Tensor:
        _check_mode(mode)
        x = as_array(x)
        self.output_shape(x.shape)
        self._cache = x
        return checked(x @ self.params["weight"].data + self.params["bias"].data)

    def backward(self, grad: Tensor, need_input_grad: bool = True):
        x = self._take_cache()
        dy = as_array(grad)
        self.grads = {"weight": x.T @ dy, "bias": dy.sum(axis=0)}
        if not need_input_grad:
            return None
        return checked(dy @ self.params["weight"].data.T)


class GlobalAveragePool(Layer):
    """Mean over every non-channel axis: (N, C, ...) -> (N, C)."""

    kind = "gap"

    def output_shape(self, shape):
        if len(shape) < 3:
            raise ShapeError(f"gap: expected spatial axes, got {shape}")
        return (shape[0], shape[1])

    def forward(self, x: Tensor, mode: str = "infer", rng=None) -> Tensor:
        _check_mode(mode)
        x = as_array(x)
        self.output_shape(x.shape)
        self._cache = x.shape
        axes = tuple(range(2, x.ndim))
        return checked(x.mean(axis=axes).astype(x.dtype, copy=False))

    def backward(self, grad: Tensor, need_input_grad: bool = True):
        in_shape = self._take_cache()
        if not need_input_grad:
            return None
        dy = as_array(grad)
        m = int(np.prod(in_shape[2:]))
        dx = np.broadcast_to((dy / m).reshape(dy.shape + (1,) * (len(in_shape) - 2)), in_shape)
        return checked(np.ascontiguousarray(dx))


class Flatten(Layer):
    kind = "flatten"

    def output_shape(self, shape):
        return (shape[0], int(np.prod(shape[1:])))

    def forward(self, x: Tensor, mode: str = "infer", rng=None) -> Tensor:
        _check_mode(mode)
        x = as_array(x)
        self._cache = x.shape
        return checked(x.reshape(x.shape[0], -1))

    def backward(self, grad: Tensor, need_input_grad: bool = True):
        in_shape = self._take_cache()
        if not need_input_grad:
            return None
        return checked(as_array(grad).reshape(in_shape))


class Concat(Layer):
    """Joins feature vectors end-to-end along axis 1."""

    kind = "concat"

    def output_shape(self, shapes):
        n = shapes[0][0]
        if any(len(s) != 2 or s[0] != n for s in shapes):
            raise ShapeError(f"concat: incompatible shapes {shapes}")
        return (n, sum(s[1] for s in shapes))

    def forward(self, xs, mode: str = "infer", rng=None) -> Tensor:
        _check_mode(mode)
        arrs = [as_array(x) for x in xs]
        self.output_shape([a.shape for a in arrs])
        self._cache = [a.shape[1] for a in arrs]
        return checked(np.concatenate(arrs, axis=1))

    def backward(self, grad: Tensor, need_input_grad: bool = True):
        widths = self._take_cache()
        if not need_input_grad:
            return None
        dy = as_array(grad)
        out = []
        start = 0
        for w in widths:
            out.append(checked(np.ascontiguousarray(dy[:, start:start + w])))
            start += w
        return out


class LSTM(Layer):
    """Single LSTM layer over (N, T, I) sequences.

    Gate order in the packed matrices is input, forget, output, candidate.
    Initial hidden and cell states are zero. `return_sequences` controls
    whether all T hidden states or only the last one come back.

    Parameter count is 4H(I + H + 1): w_x (I, 4H), w_h (H, 4H), bias (4H,).
    The forget-gate bias initializes to 1, all other biases to 0.
    """

    kind = "lstm"

    def __init__(self, in_features: int, hidden: int, return_sequences: bool = False,
                 rng: np.random.Generator = None, dtype=DEFAULT_DTYPE):
        super().__init__()
        if in_features <= 0 or hidden <= 0:
            raise ShapeError("lstm sizes must be positive")
        self.in_features = in_features
        self.hidden = hidden
        self.return_sequences = return_sequences
        if rng is None:
            wx = np.zeros((in_features, 4 * hidden), dtype=dtype)
            wh = np.zeros((hidden, 4 * hidden), dtype=dtype)
        else:
            wx = np.concatenate(
                [glorot_uniform(rng, (in_features, hidden), in_features, hidden, dtype)
                 for _ in range(4)], axis=1)
            wh = np.concatenate(
                [glorot_uniform(rng, (hidden, hidden), hidden, hidden, dtype)
                 for _ in range(4)], axis=1)
        b = np.zeros(4 * hidden, dtype=dtype)
        b[hidden:2 * hidden] = 1.0
        self.params = {
            "w_x": Tensor._wrap(wx),
            "w_h": Tensor._wrap(wh),
            "bias": Tensor._wrap(b),
        }

    def output_shape(self, shape):
        if len(shape) != 3 or shape[2] != self.in_features:
            raise ShapeError(f"lstm({self.in_features}->{self.hidden}): bad input {shape}")
        if shape[1] < 1:
            raise ShapeError("lstm: empty sequence")
        if self.return_sequences:
            return (shape[0], shape[1], self.hidden)
        return (shape[0], self.hidden)

    @staticmethod
    def _sigmoid(z):
        out = np.empty_like(z)
        pos = z >= 0
        neg = ~pos
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[neg])
        out[neg] = ez / (1.0 + ez)
        return out

    def forward(self, x: Tensor, mode: str = "infer", rng=None) -> Tensor:
        _check_mode(mode)
        x = as_array(x)
        self.output_shape(x.shape)
        n, t_len, _ = x.shape
        hd = self.hidden
        wx = self.params["w_x"].data
        wh = self.params["w_h"].data
        b = self.params["bias"].data
        h = np.zeros((n, hd), dtype=x.dtype)
        c = np.zeros((n, hd), dtype=x.dtype)
        steps = []
        hs = np.empty((t_len, n, hd), dtype=x.dtype)
        for t in range(t_len):
            xt = x[:, t, :]
            z = xt @ wx + h @ wh + b
            gi = self._sigmoid(z[:, 0 * hd:1 * hd])
            gf = self._sigmoid(z[:, 1 * hd:2 * hd])
            go = self._sigmoid(z[:, 2 * hd:3 * hd])
            gc = np.tanh(z[:, 3 * hd:4 * hd])
            c_prev = c
            h_prev = h
            c = gf * c_prev + gi * gc
            tc = np.tanh(c)
            h = go * tc
            steps.append((xt, h_prev, c_prev, gi, gf, go, gc, tc))
            hs[t] = h
        self._cache = (x.shape, steps)
        if self.return_sequences:
            return checked(np.ascontiguousarray(hs.transpose(1, 0, 2)))
        return checked(h.copy())

    def backward(self, grad: Tensor, need_input_grad: bool = True):
        in_shape, steps = self._take_cache()
        dy = as_array(grad)
        n, t_len, _ = in_shape
        hd = self.hidden
        wx = self.params["w_x"].data
        wh = self.params["w_h"].data
        dwx = np.zeros_like(wx)
        dwh = np.zeros_like(wh)
        db = np.zeros_like(self.params["bias"].data)
        dx = np.zeros(in_shape, dtype=dy.dtype) if need_input_grad else None
        dh_next = np.zeros((n, hd), dtype=dy.dtype)
        dc_next = np.zeros((n, hd), dtype=dy.dtype)
        for t in range(t_len - 1, -1, -1):
            xt, h_prev, c_prev, gi, gf, go, gc, tc = steps[t]
            if self.return_sequences:
                dh = dh_next + dy[:, t, :]
            else:
                dh = dh_next + (dy if t == t_len - 1 else 0.0)
            dc = dc_next + dh * go * (1.0 - tc * tc)
            dz = np.empty((n, 4 * hd), dtype=dy.dtype)
            dz[:, 0 * hd:1 * hd] = dc * gc * gi * (1.0 - gi)
            dz[:, 1 * hd:2 * hd] = dc * c_prev * gf * (1.0 - gf)
            dz[:, 2 * hd:3 * hd] = dh * tc * go * (1.0 - go)
            dz[:, 3 * hd:4 * hd] = dc * gi * (1.0 - gc * gc)
            dwx += xt.T @ dz
            dwh += h_prev.T @ dz
            db += dz.sum(axis=0)
            if need_input_grad:
                dx[:, t, :] = dz @ wx.T
            dh_next = dz @ wh.T
            dc_next = dc * gf
        self.grads = {"w_x": dwx, "w_h": dwh, "bias": db}
        if not need_input_grad:
            return None
        return checked(dx)
