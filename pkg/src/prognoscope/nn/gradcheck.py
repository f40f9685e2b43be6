"""Finite-difference verification of analytic gradients.

Runs in float64 only; the relative-error metric is
|analytic - numeric| / max(|analytic|, |numeric|, 1e-12), maximized over
every parameter element and every input element.
"""
from __future__ import annotations

import numpy as np

from ..errors import ConfigError
from .tensor import Tensor, as_array


def _require_f64(arr: np.ndarray, what: str) -> None:
    if arr.dtype != np.float64:
        raise ConfigError(f"gradient check requires float64 {what}, got {arr.dtype}")


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-12)
    return float(np.max(np.abs(analytic - numeric) / denom))


def numeric_gradient(f, arr: np.ndarray, epsilon: float) -> np.ndarray:
    """Central finite differences of a scalar function over arr, elementwise."""
    grad = np.zeros_like(arr)
    flat = arr.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + epsilon
        fp = f()
        flat[i] = orig - epsilon
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * epsilon)
    return grad


def gradient_check(layer, x, epsilon: float = 1e-5, mode: str = "train",
                   rng_seed: int = 0) -> float:
    """Max relative error between analytic and numeric gradients of a layer.

    The scalar objective is sum(R * layer(x)) for a fixed random weighting R,
    which exercises every output element. Returns the max over all trainable
    parameters and the input.
    """
    if not (1e-7 <= epsilon <= 1e-3):
        raise ConfigError(f"epsilon must lie in [1e-7, 1e-3], got {epsilon}")
    x = as_array(x).astype(np.float64)
    _require_f64(x, "input")
    for name in layer.trainable():
        _require_f64(layer.params[name].data, f"parameter {name}")

    probe_rng = np.random.default_rng(rng_seed)

    def run():
        rng = np.random.default_rng(rng_seed + 1)
        return as_array(layer.forward(Tensor._wrap(x), mode=mode, rng=rng))

    r = probe_rng.standard_normal(run().shape)

    def objective():
        return float(np.sum(run() * r))

    objective()  # populate caches at the unperturbed point
    dx = layer.backward(Tensor._wrap(r.copy()))
    worst = relative_error(as_array(dx), numeric_gradient(objective, x, epsilon))
    for name in layer.trainable():
        analytic = layer.grads[name]
        numeric = numeric_gradient(objective, layer.params[name].data, epsilon)
        worst = max(worst, relative_error(analytic, numeric))
    return worst


# Finite differences cannot resolve gradients this small on an O(1) loss in
# float64: conv biases feeding batch norm have exactly-zero true gradients,
# and their FD estimates are pure rounding residue. When both the analytic
# and numeric values sit below this floor they are treated as agreeing.
FD_RESOLUTION_FLOOR = 3e-7


def model_gradient_check(model, video, ehr, labels, weights, epsilon: float = 1e-7,
                         rng_seed: int = 0, sample_per_tensor: int | None = None,
                         fallback_epsilon: float = 1e-5, tol: float = 1e-4) -> float:
    """End-to-end check of a model under the class-weighted BCE objective.

    With sample_per_tensor set, only that many (seeded) randomly chosen
    elements per parameter/input tensor are differenced, which keeps large
    graphs tractable; tensors at or below the limit are swept exhaustively.

    Each epsilon has a distinct failure mode on deep ReLU/max-pool graphs:
    small steps are rounding-noise limited, large steps can straddle
    activation kinks. An element failing `tol` at the primary epsilon is
    re-differenced at `fallback_epsilon` and the smaller error kept.
    """
    from ..training import weighted_bce

    for eps in (epsilon, fallback_epsilon):
        if not (1e-7 <= eps <= 1e-3):
            raise ConfigError(f"epsilon must lie in [1e-7, 1e-3], got {eps}")
    video = None if video is None else as_array(video).astype(np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    ehr_arr = None if ehr is None else as_array(ehr).astype(np.float64)

    def loss():
        rng = np.random.default_rng(rng_seed)
        p = model.forward(
            None if video is None else Tensor._wrap(video),
            None if ehr_arr is None else Tensor._wrap(ehr_arr),
            mode="train", rng=rng)
        return weighted_bce(as_array(p), labels, weights)

    loss()
    model.backward_bce(labels, weights, need_input_grads=True)
    chooser = np.random.default_rng(rng_seed + 17)
    worst = 0.0

    def fd_at(flat: np.ndarray, i: int, eps: float) -> float:
        orig = flat[i]
        flat[i] = orig + eps
        fp = loss()
        flat[i] = orig - eps
        fm = loss()
        flat[i] = orig
        return (fp - fm) / (2.0 * eps)

    def check_array(analytic: np.ndarray, arr: np.ndarray) -> None:
        nonlocal worst
        if sample_per_tensor is None or arr.size <= sample_per_tensor:
            idx = np.arange(arr.size)
        else:
            idx = chooser.choice(arr.size, size=sample_per_tensor, replace=False)
        flat = arr.ravel()
        aflat = analytic.ravel()
        for i in idx:
            a = float(aflat[i])
            numeric = fd_at(flat, i, epsilon)
            if max(abs(a), abs(numeric)) < FD_RESOLUTION_FLOOR:
                continue
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-12)
            if err > tol and fallback_epsilon != epsilon:
                numeric2 = fd_at(flat, i, fallback_epsilon)
                if max(abs(a), abs(numeric2)) < FD_RESOLUTION_FLOOR:
                    continue
                err = min(err, abs(a - numeric2) / max(abs(a), abs(numeric2), 1e-12))
            worst = max(worst, err)

    for layer, name, tensor in model.parameters():
        check_array(layer.grads[name], tensor.data)
    if video is not None:
        check_array(model.last_input_grads["video"], video)
    if ehr_arr is not None:
        check_array(model.last_input_grads["ehr"], ehr_arr)
    return worst
