"""Iterative learners exposed as arms.

One pull is one unit of training and one evaluation is the full validation
loss:

* ridge regression: one SGD step on one training example, step size
  ``0.01 / sqrt(2 + T)`` where ``T`` is the 1-based index of the step;
* kernel SVM: one Pegasos iteration (one sampled example), RBF kernel computed
  on demand against the current support set;
* matrix completion: one SGD step on a fixed-size block of shuffled ratings.

Example order within an arm is a permutation drawn per epoch from
``(seed, arm_id, epoch)``, so an arm's loss sequence depends only on its own
iteration count.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import ArmProcess

__all__ = [
    "Dataset",
    "Ratings",
    "Split",
    "Prepared",
    "HyperparamSpec",
    "make_split",
    "prepare",
    "sample_configs",
    "ridge_example_loss",
    "ridge_example_grad",
    "RidgeSGDArm",
    "PegasosArm",
    "MatrixCompletionArm",
    "ridge_sgd_arm",
    "pegasos_rbf_arm",
    "matcomp_arm",
    "rbf_kernel",
]


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.features = np.atleast_2d(np.asarray(self.features, dtype=float))
        self.labels = np.asarray(self.labels, dtype=float).ravel()
        if self.features.shape[0] != self.labels.shape[0]:
            raise ValueError(f"{self.features.shape[0]} feature rows but "
                             f"{self.labels.shape[0]} labels")

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def dims(self) -> int:
        return self.features.shape[1]


@dataclass
class Ratings:
    """Sparse ``(user, item, rating)`` triples with 0-based ids."""

    users: np.ndarray
    items: np.ndarray
    values: np.ndarray
    n_users: int
    n_items: int

    def __post_init__(self):
        self.users = np.asarray(self.users, dtype=np.int64)
        self.items = np.asarray(self.items, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=float)
        if not (len(self.users) == len(self.items) == len(self.values)):
            raise ValueError("users, items and values must have equal length")
        if len(self.users) and (self.users.min() < 0 or self.users.max() >= self.n_users
                                or self.items.min() < 0 or self.items.max() >= self.n_items):
            raise ValueError("user/item index out of range")

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class Split:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def sizes(self) -> tuple[int, int, int]:
        return len(self.train), len(self.val), len(self.test)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def make_split(data, seed: int, *, test_fraction: float = 0.1,
               val_fraction: float = 0.2) -> Split:
    """Seeded shuffle into test (10%), then val (20% of the rest) and train.

    Sizes are rounded half-up: 100 examples give 72/18/10 and 10 give 7/2/1.
    ``data`` is anything with ``len()`` or an integer count.
    """
    m = data if isinstance(data, (int, np.integer)) else len(data)
    if m < 10:
        raise ValueError(f"need at least 10 examples to split, got {m}")
    perm = np.random.default_rng(seed).permutation(m)
    n_test = _round_half_up(test_fraction * m)
    n_val = _round_half_up(val_fraction * (m - n_test))
    test = np.sort(perm[:n_test])
    val = np.sort(perm[n_test:n_test + n_val])
    train = np.sort(perm[n_test + n_val:])
    return Split(train, val, test)


@dataclass
class Normalization:
    mean: np.ndarray
    scale: np.ndarray

    def apply(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean) / self.scale


def _fit_normalization(X: np.ndarray) -> Normalization:
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    return Normalization(mean, scale)


@dataclass
class Prepared:
    """Train/val/test arrays after normalization with training statistics."""

    X_train: np.ndarray
    y_train: np.ndarray
    X_val: np.ndarray
    y_val: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray
    features: Normalization | None = None
    labels: tuple[float, float] | None = None  # (mean, scale) when labels were normalized


def prepare(dataset: Dataset, split: Split, *, normalize: bool = True,
            normalize_labels: bool = False) -> Prepared:
    X, y = dataset.features, dataset.labels
    Xtr, ytr = X[split.train], y[split.train]
    parts = [(Xtr, ytr), (X[split.val], y[split.val]), (X[split.test], y[split.test])]
    norm = None
    label_stats = None
    if normalize:
        norm = _fit_normalization(Xtr)
        parts = [(norm.apply(a), b) for a, b in parts]
    if normalize_labels:
        mu, sd = float(ytr.mean()), float(ytr.std()) or 1.0
        label_stats = (mu, sd)
        parts = [(a, (b - mu) / sd) for a, b in parts]
    (a, b), (c, d), (e, f) = parts
    return Prepared(a, b, c, d, e, f, norm, label_stats)


# --- hyperparameters -----------------------------------------------------------

@dataclass(frozen=True)
class HyperparamSpec:
    name: str
    lo: float
    hi: float
    scale: str = "log"
    samples: int = 10
    integer: bool = False

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"{self.name}: need lo < hi, got [{self.lo}, {self.hi}]")
        if self.scale not in ("log", "linear"):
            raise ValueError(f"{self.name}: scale must be 'log' or 'linear'")
        if self.scale == "log" and self.lo <= 0:
            raise ValueError(f"{self.name}: log scale needs lo > 0")
        if self.samples < 1:
            raise ValueError(f"{self.name}: samples must be positive")

    def _finish(self, values: np.ndarray) -> list:
        if self.integer:
            return [int(v) for v in np.clip(np.rint(values), self.lo, self.hi)]
        return [float(v) for v in values]

    def draw(self, rng: np.random.Generator, count: int | None = None) -> list:
        k = self.samples if count is None else count
        if self.scale == "log":
            values = np.exp(rng.uniform(math.log(self.lo), math.log(self.hi), size=k))
        else:
            values = rng.uniform(self.lo, self.hi, size=k)
        return self._finish(values)

    def grid(self) -> list:
        if self.samples == 1:
            values = np.array([self.lo])
        elif self.scale == "log":
            values = np.geomspace(self.lo, self.hi, self.samples)
        else:
            values = np.linspace(self.lo, self.hi, self.samples)
        return self._finish(values)


def sample_configs(specs: Sequence[HyperparamSpec], seed: int, *, mode: str = "random",
                   count: int | None = None) -> list[dict]:
    """Hyperparameter configurations.

    ``mode="random"``: each spec draws ``samples`` values and the configs are
    their Cartesian product.  ``mode="grid"``: same, but with evenly spaced
    values.  Passing ``count`` instead draws ``count`` joint random configs.
    """
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise ValueError("hyperparameter names must be unique")
    rng = np.random.default_rng(seed)
    if count is not None:
        columns = [s.draw(rng, count) for s in specs]
        return [dict(zip(names, row)) for row in zip(*columns)]
    if mode == "random":
        axes = [s.draw(rng) for s in specs]
    elif mode == "grid":
        axes = [s.grid() for s in specs]
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return [dict(zip(names, combo)) for combo in itertools.product(*axes)]


# --- learner arms -----------------------------------------------------------------

class _PermutedArm(ArmProcess):
    """Shared bookkeeping for arms that walk training examples in seeded permutations."""

    def __init__(self, arm_id: int, n_examples: int, seed: int):
        super().__init__(arm_id)
        if n_examples < 1:
            raise ValueError("no training examples")
        self.n_examples = n_examples
        self.seed = int(seed)
        self._epoch = -1
        self._perm = None

    def _example(self, t: int) -> int:
        """Index of the training example used at (1-based) step ``t``."""
        epoch, pos = divmod(t - 1, self.n_examples)
        if epoch != self._epoch:
            rng = np.random.default_rng([self.seed, self.arm_id, epoch])
            self._perm = rng.permutation(self.n_examples)
            self._epoch = epoch
        return int(self._perm[pos])

    def _reset(self) -> None:
        self._epoch = -1
        self._perm = None
        self._reset_model()

    def _reset_model(self) -> None:
        raise NotImplementedError


def ridge_example_loss(w: np.ndarray, x: np.ndarray, y: float, lam: float) -> float:
    """``1/2 (y - w.x)^2 + lam/2 ||w||^2`` for one example."""
    r = y - w @ x
    return 0.5 * r * r + 0.5 * lam * (w @ w)


def ridge_example_grad(w: np.ndarray, x: np.ndarray, y: float, lam: float) -> np.ndarray:
    return -(y - w @ x) * x + lam * w


class RidgeSGDArm(_PermutedArm):
    """SGD on the ridge objective; evaluates validation mean-squared error."""

    def __init__(self, data: Prepared, lam: float, *, arm_id: int = 0, seed: int = 0,
                 step0: float = 0.01):
        super().__init__(arm_id, len(data.y_train), seed)
        self.data = data
        self.lam = float(lam)
        self.step0 = step0
        self.w = np.zeros(data.X_train.shape[1])

    def config(self) -> dict:
        return {"lambda": self.lam}

    def step_size(self, t: int) -> float:
        return self.step0 / math.sqrt(2.0 + t)

    def _step(self) -> None:
        i = self._example(self.iteration)
        x, y = self.data.X_train[i], self.data.y_train[i]
        self.w = self.w - self.step_size(self.iteration) * ridge_example_grad(self.w, x, y, self.lam)

    def _mse(self, X, y) -> float:
        with np.errstate(over="ignore", invalid="ignore"):
            r = X @ self.w - y
            return float(np.mean(r * r))

    def _loss(self) -> float:
        return self._mse(self.data.X_val, self.data.y_val)

    def test_loss(self) -> float:
        return self._mse(self.data.X_test, self.data.y_test)

    def _reset_model(self) -> None:
        self.w = np.zeros_like(self.w)

    def pull_cost(self) -> float:
        return float(self.w.size)

    def eval_cost(self) -> float:
        return float(len(self.data.y_val) * self.w.size)


def rbf_kernel(X: np.ndarray, z: np.ndarray, gamma: float) -> np.ndarray:
    """``exp(-gamma ||x - z||^2)`` for each row ``x`` of ``X`` (or a single vector)."""
    diff = np.asarray(X, dtype=float) - np.asarray(z, dtype=float)
    return np.exp(-gamma * np.sum(diff * diff, axis=-1))


class PegasosArm(_PermutedArm):
    """Kernelized Pegasos with an RBF kernel; evaluates validation 0/1 loss.

    The model is ``f(x) = 1/(lam t) sum_j a_j y_j k(x_j, x)`` with ``a_j`` the
    number of margin violations at example ``j``.  Kernel values are computed
    against the current support set each time they are needed.  A zero margin
    counts as a mistake.
    """

    def __init__(self, data: Prepared, lam: float, gamma: float, *, arm_id: int = 0,
                 seed: int = 0):
        super().__init__(arm_id, len(data.y_train), seed)
        if not np.all(np.isin(data.y_train, (-1.0, 1.0))):
            raise ValueError("Pegasos needs labels in {-1, +1}")
        self.data = data
        self.lam = float(lam)
        self.gamma = float(gamma)
        self.alpha = np.zeros(len(data.y_train))
        self._support: list[int] = []

    def config(self) -> dict:
        return {"lambda": self.lam, "gamma": self.gamma}

    def _scores(self, X: np.ndarray) -> np.ndarray:
        if not self._support:
            return np.zeros(len(X))
        sv = np.asarray(self._support)
        Xs = self.data.X_train[sv]
        coef = self.alpha[sv] * self.data.y_train[sv]
        sq = (np.sum(X * X, axis=1)[:, None] + np.sum(Xs * Xs, axis=1)[None, :]
              - 2.0 * X @ Xs.T)
        K = np.exp(-self.gamma * np.maximum(sq, 0.0))
        return K @ coef / (self.lam * max(self.iteration, 1))

    def _step(self) -> None:
        t = self.iteration
        i = self._example(t)
        x, y = self.data.X_train[i], self.data.y_train[i]
        if self._support:
            sv = np.asarray(self._support)
            margin = y * (rbf_kernel(self.data.X_train[sv], x, self.gamma)
                          @ (self.alpha[sv] * self.data.y_train[sv])) / (self.lam * t)
        else:
            margin = 0.0
        if margin < 1.0:
            if self.alpha[i] == 0:
                self._support.append(i)
            self.alpha[i] += 1.0

    def _zero_one(self, X, y) -> float:
        return float(np.mean(y * self._scores(X) <= 0))

    def _loss(self) -> float:
        return self._zero_one(self.data.X_val, self.data.y_val)

    def test_loss(self) -> float:
        return self._zero_one(self.data.X_test, self.data.y_test)

    def _reset_model(self) -> None:
        self.alpha = np.zeros_like(self.alpha)
        self._support = []

    def pull_cost(self) -> float:
        return float((len(self._support) + 1) * self.data.X_train.shape[1])

    def eval_cost(self) -> float:
        return float(len(self.data.y_val) * (len(self._support) + 1) * self.data.X_train.shape[1])


@dataclass
class RatingSplit:
    train: Ratings
    val: Ratings
    test: Ratings


def split_ratings(ratings: Ratings, split: Split) -> RatingSplit:
    def take(idx):
        return Ratings(ratings.users[idx], ratings.items[idx], ratings.values[idx],
                       ratings.n_users, ratings.n_items)
    return RatingSplit(take(split.train), take(split.val), take(split.test))


class MatrixCompletionArm(_PermutedArm):
    """Bi-convex factorization ``R ~ U V^T`` trained by block SGD.

    Objective per rating: ``(r - u.v)^2 + lam (|u|^2 + |v|^2)``.  Factors start
    as ``N(0, sigma^2/d)``.  Step size ``step0 * decay**epoch``, one epoch being
    one pass over the training ratings.
    """

    def __init__(self, data: RatingSplit, d: int, lam: float, sigma: float, *,
                 arm_id: int = 0, seed: int = 0, block: int = 32, step0: float = 0.05,
                 decay: float = 0.95):
        super().__init__(arm_id, len(data.train), seed)
        bound = min(data.train.n_users, data.train.n_items)
        d = int(d)
        if not 1 <= d <= bound:
            raise ValueError(f"rank d={d} must lie in [1, {bound}] (min matrix dimension)")
        self.data = data
        self.d = d
        self.lam = float(lam)
        self.sigma = float(sigma)
        self.block = int(block)
        self.step0 = step0
        self.decay = decay
        self._init_factors()

    def config(self) -> dict:
        return {"d": self.d, "lambda": self.lam, "sigma": self.sigma}

    def _init_factors(self) -> None:
        rng = np.random.default_rng([self.seed, self.arm_id, 1 << 20])
        sd = self.sigma / math.sqrt(self.d)
        self.U = rng.normal(0.0, sd, size=(self.data.train.n_users, self.d))
        self.V = rng.normal(0.0, sd, size=(self.data.train.n_items, self.d))

    def _step(self) -> None:
        t = self.iteration
        start = (t - 1) * self.block
        idx = np.array([self._example(s + 1) for s in range(start, start + self.block)])
        epoch = start // self.n_examples
        eta = self.step0 * self.decay ** epoch
        tr = self.data.train
        u, v, r = tr.users[idx], tr.items[idx], tr.values[idx]
        with np.errstate(over="ignore", invalid="ignore"):
            Uu, Vv = self.U[u], self.V[v]
            err = r - np.sum(Uu * Vv, axis=1)
            gU = -2.0 * err[:, None] * Vv + 2.0 * self.lam * Uu
            gV = -2.0 * err[:, None] * Uu + 2.0 * self.lam * Vv
            np.add.at(self.U, u, -eta * gU / self.block)
            np.add.at(self.V, v, -eta * gV / self.block)

    def _mse(self, part: Ratings) -> float:
        with np.errstate(over="ignore", invalid="ignore"):
            pred = np.sum(self.U[part.users] * self.V[part.items], axis=1)
            return float(np.mean((pred - part.values) ** 2))

    def _loss(self) -> float:
        return self._mse(self.data.val)

    def test_loss(self) -> float:
        return self._mse(self.data.test)

    def _reset_model(self) -> None:
        self._init_factors()

    def pull_cost(self) -> float:
        return float(self.block * self.d)

    def eval_cost(self) -> float:
        return float(len(self.data.val) * self.d)


# --- convenience constructors matching the data-first call style ----------------

def ridge_sgd_arm(dataset: Dataset, split: Split, lam: float, **kwargs) -> RidgeSGDArm:
    return RidgeSGDArm(prepare(dataset, split, normalize_labels=True), lam, **kwargs)


def pegasos_rbf_arm(dataset: Dataset, split: Split, lam: float, gamma: float,
                    **kwargs) -> PegasosArm:
    return PegasosArm(prepare(dataset, split), lam, gamma, **kwargs)


def matcomp_arm(ratings: Ratings, split: Split, d: int, lam: float, sigma: float,
                **kwargs) -> MatrixCompletionArm:
    return MatrixCompletionArm(split_ratings(ratings, split), d, lam, sigma, **kwargs)
