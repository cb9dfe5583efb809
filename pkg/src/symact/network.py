"""From-scratch MLP for binary classification on tabular data.

Two hidden blocks of Dense, BatchNorm, Activation followed by a single-unit
linear head producing a logit.  Everything is plain numpy: forward, exact
backpropagation (including through batch-norm statistics and symbolic
activations), Adam, and a numerically stable from-logits cross-entropy.
Single precision is the working default; double precision exists for
gradient verification.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .expressions import Formula, differentiate, eval_scalar, parse_formula

# Hidden widths per architecture; the output head is always one unit.
ARCH_HIDDEN = {"heavy": (200, 100), "light": (64, 32)}

CHECKPOINT_FORMAT_VERSION = 1

_DTYPES = {"f32": np.float32, "f64": np.float64,
           "float32": np.float32, "float64": np.float64}


def resolve_dtype(dtype) -> np.dtype:
    if isinstance(dtype, str):
        try:
            return np.dtype(_DTYPES[dtype])
        except KeyError:
            raise ValueError(f"unknown precision {dtype!r}; "
                             "use f32 or f64") from None
    return np.dtype(dtype)


@dataclass(frozen=True)
class Activation:
    """Elementwise nonlinearity with its exact derivative.

    ``value`` and ``grad`` map arrays to arrays of the same shape; ``grad``
    is evaluated at the pre-activation input.  Symbolic activations carry
    their source formula and its precomputed derivative formula.
    """

    name: str
    value: Callable
    grad: Callable
    formula: Formula | None = None
    derivative: Formula | None = None


def _relu(x):
    return np.maximum(x, 0.0)


def _relu_grad(x):
    return (x > 0).astype(x.dtype)


_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715


def _gelu(x):
    t = np.tanh(_GELU_C * (x + _GELU_A * x ** 3))
    return 0.5 * x * (1.0 + t)


def _gelu_grad(x):
    t = np.tanh(_GELU_C * (x + _GELU_A * x ** 3))
    return (0.5 * (1.0 + t)
            + 0.5 * x * (1.0 - t * t) * _GELU_C * (1.0 + 3.0 * _GELU_A * x * x))


def _silu(x):
    return x * expit(x)


def _silu_grad(x):
    s = expit(x)
    return s * (1.0 + x * (1.0 - s))


def symbolic_activation(formula: Formula) -> Activation:
    """Compile a variable-only formula into an activation.

    The derivative is differentiated symbolically once, here, so the
    backward pass is a plain evaluation rather than repeated tree rewriting.
    """
    derivative = differentiate(formula)
    return Activation(
        name="symbolic",
        value=lambda x, f=formula: eval_scalar(f, x),
        grad=lambda x, f=derivative: eval_scalar(f, x),
        formula=formula,
        derivative=derivative)


_BUILTIN_ACTIVATIONS = {
    "relu": lambda: Activation("relu", _relu, _relu_grad),
    "gelu": lambda: Activation("gelu", _gelu, _gelu_grad),
    "silu": lambda: Activation("silu", _silu, _silu_grad),
}

BUILTIN_ACTIVATIONS = tuple(sorted(_BUILTIN_ACTIVATIONS))


def make_activation(spec) -> Activation:
    """Build an activation from a name, a formula, or formula text."""
    if isinstance(spec, Activation):
        return spec
    if isinstance(spec, Formula):
        return symbolic_activation(spec)
    if isinstance(spec, str):
        if spec in _BUILTIN_ACTIVATIONS:
            return _BUILTIN_ACTIVATIONS[spec]()
        return symbolic_activation(parse_formula(spec))
    raise ValueError(f"cannot build an activation from {spec!r}")


@dataclass(frozen=True)
class ModelConfig:
    arch: str
    input_dim: int
    activation: object = "relu"

    def __post_init__(self):
        if self.arch not in ARCH_HIDDEN:
            raise ValueError(f"unknown architecture {self.arch!r}; "
                             f"choose from {sorted(ARCH_HIDDEN)}")
        if self.input_dim < 1:
            raise ValueError("input_dim must be at least 1")


class Dense:
    """Fully connected layer y = x W + b."""

    def __init__(self, in_dim: int, out_dim: int, rng, dtype):
        bound = 1.0 / math.sqrt(in_dim)
        self.W = rng.uniform(-bound, bound, (in_dim, out_dim)).astype(dtype)
        self.b = rng.uniform(-bound, bound, out_dim).astype(dtype)

    def forward(self, x):
        return x @ self.W + self.b, x

    def backward(self, dout, x):
        grads = {"W": x.T @ dout, "b": dout.sum(axis=0)}
        return dout @ self.W.T, grads


class BatchNorm:
    """Per-feature normalization applied before each activation.

    Train mode normalizes with the current batch's mean and biased variance
    (denominator n) and folds those statistics into the running estimates
    with momentum 0.1; eval mode is the fixed affine map defined by the
    running estimates.
    """

    def __init__(self, width: int, dtype, momentum: float = 0.1,
                 eps: float = 1e-5):
        self.momentum = momentum
        self.eps = eps
        self.gamma = np.ones(width, dtype=dtype)
        self.beta = np.zeros(width, dtype=dtype)
        self.running_mean = np.zeros(width, dtype=dtype)
        self.running_var = np.ones(width, dtype=dtype)

    def forward(self, x, mode: str):
        if mode == "train":
            if x.shape[0] < 2:
                raise ValueError("train-mode batch normalization needs at "
                                 "least 2 rows for a defined variance")
            mean = x.mean(axis=0)
            var = x.var(axis=0)
            m = self.momentum
            self.running_mean = ((1.0 - m) * self.running_mean
                                 + m * mean).astype(x.dtype)
            self.running_var = ((1.0 - m) * self.running_var
                                + m * var).astype(x.dtype)
        elif mode == "eval":
            mean = self.running_mean
            var = self.running_var
        else:
            raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
        inv_std = 1.0 / np.sqrt(var + self.eps)
        x_hat = (x - mean) * inv_std
        return self.gamma * x_hat + self.beta, (x_hat, inv_std)

    def backward(self, dout, cache):
        x_hat, inv_std = cache
        n = dout.shape[0]
        grads = {"gamma": (dout * x_hat).sum(axis=0),
                 "beta": dout.sum(axis=0)}
        dx_hat = dout * self.gamma
        # The batch mean and variance depend on every row, so the input
        # gradient carries two correction sums beyond the direct term.
        dx = (inv_std / n) * (n * dx_hat
                              - dx_hat.sum(axis=0)
                              - x_hat * (dx_hat * x_hat).sum(axis=0))
        return dx, grads


class ForwardCache(NamedTuple):
    """Intermediate values a train-mode forward pass hands to backward.

    ``pre1``/``pre2`` are the batch-norm outputs fed to the activation; the
    gradient checker also inspects them to spot kink crossings.
    """

    dense1: np.ndarray
    bn1: tuple
    pre1: np.ndarray
    dense2: np.ndarray
    bn2: tuple
    pre2: np.ndarray
    head: np.ndarray


class Network:
    """Dense, BatchNorm, Activation twice, then a one-unit linear head."""

    def __init__(self, input_dim: int, hidden: tuple[int, int],
                 activation: Activation, rng, dtype=np.float32):
        h1, h2 = hidden
        self.input_dim = input_dim
        self.hidden = (h1, h2)
        self.activation = activation
        self.dtype = np.dtype(dtype)
        self.dense1 = Dense(input_dim, h1, rng, self.dtype)
        self.bn1 = BatchNorm(h1, self.dtype)
        self.dense2 = Dense(h1, h2, rng, self.dtype)
        self.bn2 = BatchNorm(h2, self.dtype)
        self.head = Dense(h2, 1, rng, self.dtype)

    def parameters(self) -> dict[str, np.ndarray]:
        """Trainable arrays, keyed by layer and role, in forward order."""
        return {
            "dense1.W": self.dense1.W, "dense1.b": self.dense1.b,
            "bn1.gamma": self.bn1.gamma, "bn1.beta": self.bn1.beta,
            "dense2.W": self.dense2.W, "dense2.b": self.dense2.b,
            "bn2.gamma": self.bn2.gamma, "bn2.beta": self.bn2.beta,
            "head.W": self.head.W, "head.b": self.head.b,
        }

    def running_stats(self) -> dict[str, np.ndarray]:
        """Batch-norm running estimates: persisted but not trainable."""
        return {
            "bn1.running_mean": self.bn1.running_mean,
            "bn1.running_var": self.bn1.running_var,
            "bn2.running_mean": self.bn2.running_mean,
            "bn2.running_var": self.bn2.running_var,
        }

    @property
    def param_count(self) -> int:
        return sum(p.size for p in self.parameters().values())

    def _activate(self, pre):
        return np.asarray(self.activation.value(pre), dtype=self.dtype)

    def forward(self, X, mode: str = "eval"):
        """Run the batch through the network; returns (logits, cache).

        The cache is only produced in train mode and is what ``backward``
        consumes; eval-mode forward returns ``None`` in its place.
        """
        X = np.asarray(X, dtype=self.dtype)
        if X.ndim != 2 or X.shape[1] != self.input_dim:
            raise ValueError(f"expected shape (n, {self.input_dim}), "
                             f"got {X.shape}")
        z1, c_d1 = self.dense1.forward(X)
        b1, c_bn1 = self.bn1.forward(z1, mode)
        a1 = self._activate(b1)
        z2, c_d2 = self.dense2.forward(a1)
        b2, c_bn2 = self.bn2.forward(z2, mode)
        a2 = self._activate(b2)
        logits, c_h = self.head.forward(a2)
        cache = None
        if mode == "train":
            cache = ForwardCache(c_d1, c_bn1, b1, c_d2, c_bn2, b2, c_h)
        return logits.ravel(), cache

    def backward(self, cache, dloss_dlogits) -> dict[str, np.ndarray]:
        """Exact gradients for every trainable, keyed as in parameters()."""
        if cache is None:
            raise ValueError("backward needs the cache from a train-mode "
                             "forward pass")
        c_d1, c_bn1, b1, c_d2, c_bn2, b2, c_h = cache
        dout = np.asarray(dloss_dlogits, dtype=self.dtype).reshape(-1, 1)
        d_a2, g_head = self.head.backward(dout, c_h)
        d_b2 = d_a2 * np.asarray(self.activation.grad(b2), dtype=self.dtype)
        d_z2, g_bn2 = self.bn2.backward(d_b2, c_bn2)
        d_a1, g_d2 = self.dense2.backward(d_z2, c_d2)
        d_b1 = d_a1 * np.asarray(self.activation.grad(b1), dtype=self.dtype)
        d_z1, g_bn1 = self.bn1.backward(d_b1, c_bn1)
        _, g_d1 = self.dense1.backward(d_z1, c_d1)
        return {
            "dense1.W": g_d1["W"], "dense1.b": g_d1["b"],
            "bn1.gamma": g_bn1["gamma"], "bn1.beta": g_bn1["beta"],
            "dense2.W": g_d2["W"], "dense2.b": g_d2["b"],
            "bn2.gamma": g_bn2["gamma"], "bn2.beta": g_bn2["beta"],
            "head.W": g_head["W"], "head.b": g_head["b"],
        }


def build_network(cfg: ModelConfig, rng, dtype=np.float32) -> Network:
    """Construct a network with uniform [-1/sqrt(fan_in), +1/sqrt(fan_in)]
    dense initialization and identity batch-norm."""
    activation = make_activation(cfg.activation)
    return Network(cfg.input_dim, ARCH_HIDDEN[cfg.arch], activation, rng,
                   dtype=resolve_dtype(dtype))


def param_count_formula(arch: str, input_dim: int) -> int:
    """Closed-form trainable count; matches Network.param_count exactly."""
    h1, h2 = ARCH_HIDDEN[arch]
    dense = input_dim * h1 + h1 + h1 * h2 + h2 + h2 * 1 + 1
    batch_norm = 2 * h1 + 2 * h2
    return dense + batch_norm


def bce_loss(logits, labels):
    """Stable binary cross-entropy straight from logits.

    Returns (mean loss, gradient of the mean loss w.r.t. each logit).  The
    max/log1p arrangement never exponentiates a positive argument, so large
    logits cannot overflow.
    """
    z = np.asarray(logits)
    y = np.asarray(labels)
    if z.shape != y.shape:
        raise ValueError(f"logits shape {z.shape} != labels shape {y.shape}")
    if z.size == 0:
        raise ValueError("need at least one logit")
    if not np.isin(y, (0, 1)).all():
        bad = y[~np.isin(y, (0, 1))][0]
        raise ValueError(f"labels must be 0 or 1, found {bad!r}")
    per_row = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
    grad = (expit(z) - y) / z.size
    return float(per_row.mean()), grad


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 1024
    epochs: int = 15
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


class AdamState:
    """First/second moment estimates plus the shared step counter."""

    def __init__(self, params: dict[str, np.ndarray]):
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState, learning_rate: float = 0.001,
              beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> None:
    """One bias-corrected Adam update, applied to the arrays in place."""
    state.t += 1
    t = state.t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} does not match "
                             f"parameter {name} shape {p.shape}")
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1 ** t)
        v_hat = v / (1.0 - beta2 ** t)
        p -= learning_rate * m_hat / (np.sqrt(v_hat) + eps)


def _shuffle_stream(seed: int) -> np.random.Generator:
    key = np.random.SeedSequence(seed & 0xFFFFFFFFFFFFFFFF, spawn_key=(1,))
    return np.random.default_rng(key)


def weight_stream(seed: int) -> np.random.Generator:
    """Substream for weight initialization; shuffling uses a sibling stream
    so changing epochs never perturbs the initial parameters."""
    key = np.random.SeedSequence(seed & 0xFFFFFFFFFFFFFFFF, spawn_key=(0,))
    return np.random.default_rng(key)


def train(net: Network, X, y, cfg: TrainConfig,
          observer=None) -> tuple[Network, list[float]]:
    """Minibatch training loop; returns the network and per-epoch mean loss.

    Each epoch reshuffles with a permutation drawn from a seed-derived
    stream and walks the data in batches of ``cfg.batch_size``, keeping the
    final partial batch.  Expects standardized features (not enforced).
    Aborts with a diagnostic if any step produces a non-finite loss.
    """
    X = np.asarray(X, dtype=net.dtype)
    y = np.asarray(y)
    if X.shape[0] != y.shape[0]:
        raise ValueError(f"{X.shape[0]} rows but {y.shape[0]} labels")
    if np.unique(y).size < 2:
        raise ValueError("training needs both classes present")
    n = X.shape[0]
    params = net.parameters()
    state = AdamState(params)
    rng = _shuffle_stream(cfg.seed)
    history = []
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            logits, cache = net.forward(X[batch], mode="train")
            loss, dlogits = bce_loss(logits, y[batch])
            if not math.isfinite(loss):
                raise FloatingPointError(
                    f"non-finite loss {loss} at epoch {epoch}, "
                    f"batch starting at row {start}")
            grads = net.backward(cache, dlogits)
            adam_step(params, grads, state, cfg.learning_rate,
                      cfg.beta1, cfg.beta2, cfg.eps)
            total += loss * batch.size
        history.append(total / n)
        if observer is not None:
            observer(epoch, history[-1])
    return net, history


def predict_proba(net: Network, X) -> np.ndarray:
    """Eval-mode positive-class probabilities, strictly inside (0, 1)."""
    logits, _ = net.forward(X, mode="eval")
    p = expit(logits.astype(np.float64))
    return np.clip(p, 1e-12, 1.0 - 1e-12)


def save_checkpoint(net: Network, path, arch: str | None = None) -> None:
    """Persist parameters, running stats, and enough metadata to rebuild."""
    act = net.activation
    meta = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "input_dim": net.input_dim,
        "hidden": list(net.hidden),
        "arch": arch,
        "activation": act.name,
        "formula": str(act.formula) if act.formula is not None else None,
        "dtype": net.dtype.name,
    }
    arrays = dict(net.parameters())
    arrays.update(net.running_stats())
    arrays["__meta__"] = np.array(json.dumps(meta))
    np.savez(Path(path), **arrays)


def load_checkpoint(path) -> Network:
    """Rebuild a network from ``save_checkpoint`` output."""
    with np.load(Path(path)) as archive:
        arrays = {k: archive[k] for k in archive.files}
    if "__meta__" not in arrays:
        raise ValueError(f"{path}: not a model checkpoint (missing metadata)")
    meta = json.loads(str(arrays.pop("__meta__")))
    version = meta.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint format version "
                         f"{version!r}")
    if meta["activation"] == "symbolic":
        activation = symbolic_activation(parse_formula(meta["formula"]))
    else:
        activation = make_activation(meta["activation"])
    net = Network(meta["input_dim"], tuple(meta["hidden"]), activation,
                  np.random.default_rng(0), dtype=np.dtype(meta["dtype"]))
    for name, target in {**net.parameters(), **net.running_stats()}.items():
        source = arrays.get(name)
        if source is None:
            raise ValueError(f"{path}: checkpoint is missing array {name!r}")
        if source.shape != target.shape:
            raise ValueError(f"{path}: array {name!r} has shape "
                             f"{source.shape}, expected {target.shape}")
        target[...] = source.astype(target.dtype)
    return net


class MLPBinaryClassifier(BaseEstimator, ClassifierMixin):
    """Scikit-learn style wrapper: build, train, and score in one object.

    ``activation`` accepts a builtin name ("relu", "gelu", "silu"), formula
    text, or a parsed Formula.  Weight initialization and epoch shuffling
    draw from separate substreams of ``seed``.
    """

    def __init__(self, arch: str = "light", activation="relu",
                 learning_rate: float = 0.001, batch_size: int = 1024,
                 epochs: int = 15, seed: int = 0, dtype: str = "f32"):
        self.arch = arch
        self.activation = activation
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.seed = seed
        self.dtype = dtype

    def fit(self, X, y, observer=None):
        X, y = check_X_y(X, y)
        classes = np.unique(y)
        if not np.array_equal(classes, [0, 1]):
            raise ValueError("labels must be 0/1 with both classes present")
        model_cfg = ModelConfig(self.arch, X.shape[1], self.activation)
        net = build_network(model_cfg, weight_stream(self.seed),
                            dtype=resolve_dtype(self.dtype))
        train_cfg = TrainConfig(learning_rate=self.learning_rate,
                                batch_size=self.batch_size,
                                epochs=self.epochs, seed=self.seed)
        _, history = train(net, X, y, train_cfg, observer=observer)
        self.classes_ = classes
        self.network_ = net
        self.history_ = history
        self.n_features_in_ = X.shape[1]
        return self

    @property
    def param_count_(self) -> int:
        check_is_fitted(self, "network_")
        return self.network_.param_count

    def predict_proba(self, X) -> np.ndarray:
        check_is_fitted(self, "network_")
        X = check_array(X)
        p = predict_proba(self.network_, X)
        return np.column_stack([1.0 - p, p])

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(np.int64)

    def decision_function(self, X) -> np.ndarray:
        check_is_fitted(self, "network_")
        X = check_array(X)
        logits, _ = self.network_.forward(X, mode="eval")
        return logits
