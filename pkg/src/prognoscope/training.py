"""Loss, class weighting, optimizers, fold construction, and the training loop.

The training protocol: class-weighted binary cross-entropy, per-epoch
validation loss with best-so-far early stopping (patience 10, cap 1000
epochs), best-validation weights restored before test evaluation, and
5-fold cross-validation with prevalence-preserving train/test splits and a
label-balanced validation set carved from the training portion.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, NumericError
from .nn.tensor import Tensor, as_array

BCE_CLAMP = 1e-7
RMSPROP_LR = 1e-3
RMSPROP_RHO = 0.9
ADAGRAD_LR = 1e-2
OPTIMIZER_EPS = 1e-7


# ---------------------------------------------------------------------------
# loss and class weighting

def class_weights(labels) -> np.ndarray:
    """Per-class weights w_i = N / (2 * n_i), so that w_i * n_i = N/2."""
    labels = np.asarray(labels)
    n = labels.size
    counts = np.array([(labels == 0).sum(), (labels == 1).sum()], dtype=np.int64)
    if counts.min() == 0:
        raise DataError("class weights undefined: a class has zero members")
    return n / (2.0 * counts)


def weighted_bce(predictions, labels, weights) -> float:
    """Mean over samples of -w_y [y log p + (1-y) log(1-p)], p clamped."""
    p = np.asarray(as_array(predictions), dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if p.shape != y.shape:
        raise ConfigError(f"predictions {p.shape} and labels {y.shape} differ in length")
    w = np.asarray(weights, dtype=np.float64)
    pc = np.clip(p, BCE_CLAMP, 1.0 - BCE_CLAMP)
    per = -(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc)) * w[y.astype(np.int64)]
    return float(per.mean())


def bce_gradient(predictions, labels, weights) -> np.ndarray:
    """d(weighted_bce)/d(predictions): w_y (p - y) / (p (1 - p)) / N."""
    p = as_array(predictions)
    y = np.asarray(labels, dtype=p.dtype)
    w = np.asarray(weights, dtype=p.dtype)
    pc = np.clip(p, BCE_CLAMP, 1.0 - BCE_CLAMP)
    return (w[y.astype(np.int64)] * (pc - y) / (pc * (1.0 - pc)) / p.size).astype(p.dtype)


# ---------------------------------------------------------------------------
# optimizers

class _AdaptiveOptimizer:
    """Shared accumulator-based step: param -= lr * g / sqrt(acc + eps)."""

    def __init__(self, model, lr: float, eps: float = OPTIMIZER_EPS):
        self.model = model
        self.lr = lr
        self.eps = eps
        self.state: dict[str, np.ndarray] = {}

    def _acc(self, key: str, like: np.ndarray) -> np.ndarray:
        if key not in self.state:
            self.state[key] = np.zeros_like(like)
        return self.state[key]

    def _update_acc(self, acc: np.ndarray, g: np.ndarray) -> None:
        raise NotImplementedError

    def step(self) -> None:
        for layer, name, tensor in self.model.parameters():
            if name not in layer.grads:
                continue
            g = layer.grads[name]
            if not np.all(np.isfinite(g)):
                raise NumericError(f"NaN/Inf gradient for {layer.label}.{name}")
            acc = self._acc(f"{layer.label}.{name}", g)
            self._update_acc(acc, g)
            tensor.data -= (self.lr * g / np.sqrt(acc + self.eps)).astype(tensor.data.dtype)


class RMSProp(_AdaptiveOptimizer):
    """acc <- rho * acc + (1 - rho) * g^2."""

    def __init__(self, model, lr: float = RMSPROP_LR, rho: float = RMSPROP_RHO,
                 eps: float = OPTIMIZER_EPS):
        super().__init__(model, lr, eps)
        self.rho = rho

    def _update_acc(self, acc, g):
        acc *= self.rho
        acc += (1.0 - self.rho) * g * g


class AdaGrad(_AdaptiveOptimizer):
    """acc <- acc + g^2."""

    def __init__(self, model, lr: float = ADAGRAD_LR, eps: float = OPTIMIZER_EPS):
        super().__init__(model, lr, eps)

    def _update_acc(self, acc, g):
        acc += g * g


def make_optimizer(kind: str, model, lr: float | None = None):
    kind = kind.lower()
    if kind == "auto":
        arch = getattr(model, "architecture_id", "")
        kind = "rmsprop" if "lstm" in arch else "adagrad"
    if kind == "rmsprop":
        return RMSProp(model, lr=RMSPROP_LR if lr is None else lr)
    if kind == "adagrad":
        return AdaGrad(model, lr=ADAGRAD_LR if lr is None else lr)
    raise ConfigError(f"unknown optimizer {kind!r}")


# ---------------------------------------------------------------------------
# folds

@dataclass
class Fold:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray


@dataclass
class FoldPlan:
    folds: list[Fold]
    n: int

    def __post_init__(self):
        cover = np.concatenate([f.test for f in self.folds])
        if len(np.unique(cover)) != self.n or cover.size != self.n:
            raise ConfigError("fold test sets must partition the index set")
        for f in self.folds:
            sets = [set(f.train), set(f.val), set(f.test)]
            if sets[0] & sets[1] or sets[0] & sets[2] or sets[1] & sets[2]:
                raise ConfigError("train/val/test sets overlap within a fold")


def make_folds(labels, k: int = 5, seed: int = 0) -> FoldPlan:
    """Stratified k folds; balanced validation = 10% of each training pool.

    Test sets preserve dataset prevalence and partition the index set. The
    validation set is drawn from (and removed from) the training pool with
    an equal number of each class.
    """
    labels = np.asarray(labels)
    n = labels.size
    rng = np.random.default_rng(seed)
    pos = np.flatnonzero(labels == 1)
    neg = np.flatnonzero(labels == 0)
    if min(pos.size, neg.size) < k:
        raise DataError(f"need at least {k} samples of each class for {k} folds")
    pos = rng.permutation(pos)
    neg = rng.permutation(neg)
    pos_chunks = np.array_split(pos, k)
    neg_chunks = np.array_split(neg, k)
    folds = []
    for i in range(k):
        test = np.sort(np.concatenate([pos_chunks[i], neg_chunks[i]]))
        pool_pos = np.concatenate([pos_chunks[j] for j in range(k) if j != i])
        pool_neg = np.concatenate([neg_chunks[j] for j in range(k) if j != i])
        n_pool = pool_pos.size + pool_neg.size
        # 10% of the training pool, balanced; tiny pools keep one per class
        per_class = max(1, int(round(0.10 * n_pool)) // 2)
        if per_class >= min(pool_pos.size, pool_neg.size):
            raise DataError(
                f"fold {i}: a class is too small to balance the validation set "
                f"({per_class} per class needed)")
        val_pos = rng.permutation(pool_pos)[:per_class]
        val_neg = rng.permutation(pool_neg)[:per_class]
        val = np.sort(np.concatenate([val_pos, val_neg]))
        train = np.sort(np.setdiff1d(np.concatenate([pool_pos, pool_neg]), val))
        folds.append(Fold(train=train, val=val, test=test))
    return FoldPlan(folds=folds, n=n)


# ---------------------------------------------------------------------------
# datasets

@dataclass
class ArrayDataset:
    """In-memory labeled corpus: optional video clips, optional tabular rows."""

    labels: np.ndarray
    video: np.ndarray | None = None   # (n, T, H, W, 1) float32 in [0, 1]
    ehr: np.ndarray | None = None     # (n, width) float32
    ids: list | None = None

    def __post_init__(self):
        self.labels = np.asarray(self.labels)
        n = self.labels.size
        for name in ("video", "ehr"):
            arr = getattr(self, name)
            if arr is not None and arr.shape[0] != n:
                raise DataError(f"{name} row count {arr.shape[0]} != label count {n}")

    def __len__(self):
        return self.labels.size

    def batch(self, idx):
        video = None if self.video is None else self.video[idx]
        ehr = None if self.ehr is None else self.ehr[idx]
        return video, ehr, self.labels[idx]


# ---------------------------------------------------------------------------
# training loop

@dataclass
class TrainConfig:
    optimizer: str = "auto"
    batch_size: int = 16
    max_epochs: int = 1000
    patience: int = 10
    seed: int = 0
    learning_rate: float | None = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch size must be >= 1")
        if not self.patience < self.max_epochs:
            raise ConfigError("patience must be smaller than max epochs")


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    stop_epoch: int = 0
    best_epoch: int = 0


class EarlyStopper:
    """Best-so-far stopping: halt once the loss has not improved for more
    than `patience` consecutive epochs."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = np.inf
        self.best_epoch = 0

    def update(self, epoch: int, loss: float) -> tuple[bool, bool]:
        """Returns (improved, should_stop) for a 1-based epoch index."""
        improved = loss < self.best
        if improved:
            self.best = loss
            self.best_epoch = epoch
        stop = (epoch - self.best_epoch) > self.patience
        return improved, stop


def predict(model, dataset: ArrayDataset, indices, batch_size: int = 64) -> np.ndarray:
    """Batched inference; order-preserving scores in (0, 1)."""
    indices = np.asarray(indices)
    out = np.empty(indices.size, dtype=np.float64)
    for start in range(0, indices.size, batch_size):
        idx = indices[start:start + batch_size]
        video, ehr, _ = dataset.batch(idx)
        p = model.forward(
            None if video is None else Tensor(video),
            None if ehr is None else Tensor(ehr),
            mode="infer")
        out[start:start + idx.size] = as_array(p)
    return out


@dataclass
class FoldResult:
    fold_index: int
    history: TrainHistory
    test_auc: float
    test_scores: np.ndarray
    test_labels: np.ndarray
    model: object = None


def train_fold(model, dataset: ArrayDataset, fold: Fold, config: TrainConfig,
               fold_index: int = 0, log=None) -> FoldResult:
    """Train one fold: weighted BCE, early stopping, best-weight restore."""
    from .stats import roc_auc

    if fold.train.size == 0 or fold.val.size == 0 or fold.test.size == 0:
        raise DataError("empty train/val/test set in fold")
    weights = class_weights(dataset.labels[fold.train])
    balanced = np.array([1.0, 1.0])
    opt = make_optimizer(config.optimizer, model, lr=config.learning_rate)
    rng = np.random.default_rng([config.seed, fold_index, 0xA5])
    stopper = EarlyStopper(config.patience)
    history = TrainHistory()
    best_snap = model.snapshot()
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(fold.train)
        total = 0.0
        for start in range(0, order.size, config.batch_size):
            idx = order[start:start + config.batch_size]
            video, ehr, y = dataset.batch(idx)
            p = model.forward(
                None if video is None else Tensor(video),
                None if ehr is None else Tensor(ehr),
                mode="train", rng=rng)
            total += weighted_bce(p, y, weights) * idx.size
            model.backward_bce(y, weights)
            opt.step()
        history.train_loss.append(total / order.size)
        val_scores = predict(model, dataset, fold.val, config.batch_size)
        # validation sets are label-balanced by construction, so the
        # validation loss is plain (unweighted) binary cross-entropy
        val_loss = weighted_bce(val_scores, dataset.labels[fold.val], balanced)
        history.val_loss.append(val_loss)
        improved, stop = stopper.update(epoch, val_loss)
        if improved:
            best_snap = model.snapshot()
        if log is not None:
            log(fold_index, epoch, history.train_loss[-1], val_loss)
        if stop:
            break
    history.stop_epoch = len(history.val_loss)
    history.best_epoch = stopper.best_epoch
    model.restore(best_snap)
    test_scores = predict(model, dataset, fold.test, config.batch_size)
    test_labels = dataset.labels[fold.test]
    return FoldResult(
        fold_index=fold_index,
        history=history,
        test_auc=roc_auc(test_scores, test_labels),
        test_scores=test_scores,
        test_labels=test_labels,
        model=model,
    )


def fold_seed(base_seed: int, fold_index: int) -> int:
    """Stable per-fold model seed derived from the run seed."""
    return int(np.random.SeedSequence([base_seed, fold_index]).generate_state(1)[0])


def crossval(build, dataset: ArrayDataset, folds: FoldPlan, config: TrainConfig,
             log=None) -> list[FoldResult]:
    """Train every fold independently; `build(seed)` constructs a fresh model."""
    results = []
    for i, fold in enumerate(folds.folds):
        model = build(fold_seed(config.seed, i))
        results.append(train_fold(model, dataset, fold, config, fold_index=i, log=log))
    return results


def learning_curve(build, dataset: ArrayDataset, sizes, holdout, config: TrainConfig,
                   log=None) -> list[tuple[int, float]]:
    """AUC on a fixed holdout as a function of training-set size.

    One stratified shuffle of the non-holdout pool defines nested subsets:
    each requested size takes a prefix of the same ordering. A balanced
    validation pair-count of max(1, round(0.1 * size) // 2) per class is
    carved from each subset for early stopping.
    """
    from .stats import roc_auc

    holdout = np.asarray(holdout)
    sizes = list(sizes)
    if sizes != sorted(sizes):
        raise ConfigError("sizes must be ascending")
    pool = np.setdiff1d(np.arange(len(dataset)), holdout)
    if sizes[-1] > pool.size:
        raise ConfigError(f"size {sizes[-1]} exceeds available pool of {pool.size}")
    rng = np.random.default_rng([config.seed, 0x1C])
    # stratified interleave so small prefixes keep both classes represented:
    # always take from the class whose consumed fraction is lowest
    pos = rng.permutation(pool[dataset.labels[pool] == 1])
    neg = rng.permutation(pool[dataset.labels[pool] == 0])
    order = np.empty(pool.size, dtype=np.int64)
    pi = ni = 0
    for i in range(pool.size):
        if pi < pos.size and (ni >= neg.size or pi * neg.size <= ni * pos.size):
            order[i] = pos[pi]
            pi += 1
        else:
            order[i] = neg[ni]
            ni += 1
    out = []
    for size_i, size in enumerate(sizes):
        subset = order[:size]
        labels = dataset.labels[subset]
        if labels.min() == labels.max():
            raise DataError(f"size {size}: subset contains a single class")
        per_class = max(1, int(round(0.1 * size)) // 2)
        sub_pos = subset[labels == 1]
        sub_neg = subset[labels == 0]
        if per_class >= min(sub_pos.size, sub_neg.size):
            raise DataError(f"size {size}: too few samples to balance validation")
        val = np.sort(np.concatenate([sub_pos[:per_class], sub_neg[:per_class]]))
        train = np.setdiff1d(subset, val)
        fold = Fold(train=train, val=val, test=holdout)
        model = build(fold_seed(config.seed, 1000 + size_i))
        res = train_fold(model, dataset, fold, config, fold_index=size_i, log=log)
        out.append((size, res.test_auc))
    return out
