"""Finite-difference verification of the network's backpropagation.

Central differences on the training loss are compared against the analytic
gradients for every trainable array.  Two numerical hazards are handled
explicitly.  First, the dense biases feeding a batch-norm layer have exactly
zero gradient (the normalization removes any constant shift), so their
finite-difference estimate is pure rounding noise; the step size is chosen
large enough that this noise stays below tolerance.  Second, ReLU is not
differentiable at zero: whenever a parameter perturbation pushes any
pre-activation across zero, the two loss evaluations straddle a kink and the
difference quotient is meaningless, so such batches are detected exactly and
redrawn from the next substream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import Network, bce_loss, make_activation, resolve_dtype

DEFAULT_STEP = 3e-5
DEFAULT_TOLERANCE = 1e-5
DEFAULT_ACTIVATIONS = ("relu", "gelu", "silu", "mul(cos(x), x)")
_MAX_BATCH_ATTEMPTS = 25


@dataclass(frozen=True)
class GradientReport:
    """Outcome of one activation/seed cell of the verification matrix."""

    activation: str
    input_dim: int
    hidden: tuple[int, int]
    n_rows: int
    seed: int
    step: float
    dtype: str
    batch_attempts: int
    per_parameter: dict[str, float]

    @property
    def max_relative_error(self) -> float:
        return max(self.per_parameter.values())

    def passed(self, tolerance: float = DEFAULT_TOLERANCE) -> bool:
        return self.max_relative_error <= tolerance


def _loss_and_signs(net: Network, X, y):
    logits, cache = net.forward(X, mode="train")
    loss, _ = bce_loss(logits, y)
    return loss, (cache.pre1 > 0, cache.pre2 > 0)


def analytic_gradients(net: Network, X, y) -> dict[str, np.ndarray]:
    logits, cache = net.forward(X, mode="train")
    _, dlogits = bce_loss(logits, y)
    return net.backward(cache, dlogits)


def finite_difference_gradients(net: Network, X, y,
                                step: float) -> tuple[dict, int]:
    """Central-difference loss gradients for every trainable array.

    Returns (gradients, kink_crossings) where the count records how many
    parameter perturbations changed some activation sign pattern between the
    +step and -step evaluations.  Parameters are restored exactly after each
    probe; batch-norm running statistics are restored at the end.
    """
    saved_stats = {k: v.copy() for k, v in net.running_stats().items()}
    grads = {}
    crossings = 0
    for name, param in net.parameters().items():
        flat = param.reshape(-1)
        out = np.zeros(param.size, dtype=np.float64)
        for i in range(flat.size):
            origin = flat[i]
            flat[i] = origin + step
            up, signs_up = _loss_and_signs(net, X, y)
            flat[i] = origin - step
            down, signs_down = _loss_and_signs(net, X, y)
            flat[i] = origin
            if not all(np.array_equal(a, b)
                       for a, b in zip(signs_up, signs_down)):
                crossings += 1
            out[i] = (up - down) / (2.0 * step)
        grads[name] = out.reshape(param.shape)
    for key, value in net.running_stats().items():
        value[...] = saved_stats[key]
    return grads, crossings


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray,
                       floor: float = 1e-6) -> float:
    """Largest elementwise |a - n| / max(|a|, |n|, floor).

    The floor keeps theoretically zero gradients (dense biases absorbed by
    batch norm) from dividing rounding noise by itself.  It must sit above
    the arithmetic's noise level: 1e-6 suits double precision, while single
    precision leaves ~1e-7 of rounding residue on those zero gradients and
    needs a floor of about 1e-3.
    """
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float((np.abs(a - n) / denom).max())


def _double_twin(net: Network) -> Network:
    """Same architecture and parameter values in float64."""
    twin = Network(net.input_dim, net.hidden, net.activation,
                   np.random.default_rng(0), dtype=np.float64)
    for name, value in {**net.parameters(), **net.running_stats()}.items():
        target = {**twin.parameters(), **twin.running_stats()}[name]
        target[...] = value.astype(np.float64)
    return twin


def check_gradients(activation="relu", input_dim: int = 6,
                    hidden: tuple[int, int] = (8, 4), n_rows: int = 32,
                    seed: int = 0, step: float = DEFAULT_STEP,
                    dtype="f64") -> GradientReport:
    """Compare analytic and numeric gradients on one random batch.

    The network and batch are drawn from substreams of ``seed``.  For ReLU
    networks, batches whose finite-difference probes cross an activation
    kink are redrawn deterministically until a kink-free batch is found.
    Single-precision networks get their finite differences from a double
    twin, since f32 loss resolution cannot support a difference quotient.
    """
    dtype = resolve_dtype(dtype)
    act = make_activation(activation)
    label = (str(act.formula) if act.formula is not None else act.name)
    kink_detection = act.name == "relu"
    net_rng = np.random.default_rng(
        np.random.SeedSequence(seed, spawn_key=(0,)))
    net = Network(input_dim, hidden, act, net_rng, dtype=dtype)
    fd_net = net if net.dtype == np.float64 else _double_twin(net)
    for attempt in range(1, _MAX_BATCH_ATTEMPTS + 1):
        batch_rng = np.random.default_rng(
            np.random.SeedSequence(seed, spawn_key=(1, attempt)))
        X = batch_rng.normal(size=(n_rows, input_dim))
        y = batch_rng.integers(0, 2, size=n_rows)
        numeric, crossings = finite_difference_gradients(fd_net, X, y, step)
        if crossings == 0 or not kink_detection:
            break
    else:
        raise RuntimeError(
            f"no kink-free batch found in {_MAX_BATCH_ATTEMPTS} attempts "
            f"(activation {label}, seed {seed})")
    saved_stats = {k: v.copy() for k, v in net.running_stats().items()}
    analytic = analytic_gradients(net, X, y)
    for key, value in net.running_stats().items():
        value[...] = saved_stats[key]
    floor = 1e-6 if net.dtype == np.float64 else 1e-3
    per_parameter = {
        name: max_relative_error(analytic[name], numeric[name], floor)
        for name in analytic}
    return GradientReport(
        activation=label, input_dim=input_dim, hidden=tuple(hidden),
        n_rows=n_rows, seed=seed, step=step, dtype=net.dtype.name,
        batch_attempts=attempt, per_parameter=per_parameter)


def run_suite(activations=DEFAULT_ACTIVATIONS, seeds=(0, 1, 2),
              input_dim: int = 6, hidden: tuple[int, int] = (8, 4),
              n_rows: int = 32, step: float = DEFAULT_STEP,
              dtype="f64") -> list[GradientReport]:
    """Gradient verification matrix over activation families and seeds.

    Both architectures share the same layer structure and differ only in
    hidden widths, so one reduced-width network exercises every backward
    code path; the default (8, 4) keeps the whole suite under a second.
    """
    return [check_gradients(activation, input_dim, hidden, n_rows, seed,
                            step, dtype)
            for activation in activations for seed in seeds]
