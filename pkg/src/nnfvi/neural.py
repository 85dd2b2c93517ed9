"""Two-layer ReLU network: evaluation, exact gradients, and regularized
least-squares training by full-batch gradient descent with restarts.

The network computes ``sum_j w[j] * max(u[j] @ x + u0[j], 0) + w0``.  The
flat parameter vector stacks ``[u (row-major), u0, w, w0]``; the training
loss is mean squared error plus ``beta/2 * y @ y`` over that full stack.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class ReluNet:
    """Immutable two-layer ReLU network."""

    input_weights: np.ndarray  # (J, N1)
    input_biases: np.ndarray   # (J,)
    output_weights: np.ndarray  # (J,)
    output_bias: float

    def __post_init__(self):
        u = np.asarray(self.input_weights, dtype=float)
        if u.ndim != 2 or u.shape[0] < 1:
            raise ValueError("input_weights must be a (J, N1) matrix with J >= 1")
        u0 = np.asarray(self.input_biases, dtype=float)
        w = np.asarray(self.output_weights, dtype=float)
        if u0.shape != (u.shape[0],) or w.shape != (u.shape[0],):
            raise ValueError("bias/output-weight shapes must match the neuron count")
        for arr in (u, u0, w):
            if not np.all(np.isfinite(arr)):
                raise ValueError("network weights must be finite")
        if not np.isfinite(self.output_bias):
            raise ValueError("output bias must be finite")
        object.__setattr__(self, "input_weights", u)
        object.__setattr__(self, "input_biases", u0)
        object.__setattr__(self, "output_weights", w)
        object.__setattr__(self, "output_bias", float(self.output_bias))

    @property
    def neuron_count(self) -> int:
        return self.input_weights.shape[0]

    @property
    def input_dim(self) -> int:
        return self.input_weights.shape[1]

    def forward_many(self, X: np.ndarray) -> np.ndarray:
        """Vectorized forward pass over rows of ``X`` (shape ``(m, N1)``)."""
        X = np.asarray(X, dtype=float)
        pre = X @ self.input_weights.T + self.input_biases
        return np.maximum(pre, 0.0) @ self.output_weights + self.output_bias

    def to_json_dict(self) -> dict:
        return {
            "neurons": self.neuron_count,
            "input_dim": self.input_dim,
            "input_weights": self.input_weights.tolist(),
            "input_biases": self.input_biases.tolist(),
            "output_weights": self.output_weights.tolist(),
            "output_bias": self.output_bias,
        }

    @staticmethod
    def from_json_dict(data: dict) -> "ReluNet":
        net = ReluNet(
            input_weights=np.asarray(data["input_weights"], dtype=float),
            input_biases=np.asarray(data["input_biases"], dtype=float),
            output_weights=np.asarray(data["output_weights"], dtype=float),
            output_bias=float(data["output_bias"]),
        )
        if net.neuron_count != data["neurons"] or net.input_dim != data["input_dim"]:
            raise ValueError("serialized dimensions disagree with weight shapes")
        return net

    def dumps(self) -> str:
        return json.dumps(self.to_json_dict())

    @staticmethod
    def loads(text: str) -> "ReluNet":
        return ReluNet.from_json_dict(json.loads(text))


@dataclass(frozen=True)
class TrainConfig:
    """Knobs for the damped Gauss-Newton trainer.

    None of these values come from the source problem setting; they are
    implementation defaults, exposed because the fit quality depends on them.
    ``max_epochs`` budgets outer Gauss-Newton iterations per restart.
    """

    regularization: float = 0.0
    restarts: int = 5
    max_epochs: int = 200
    damping_init: float = 1e-2
    damping_shrink: float = 0.5
    damping_grow: float = 4.0
    damping_max: float = 1e10
    loss_tolerance: float = 1e-12

    def __post_init__(self):
        if self.regularization < 0:
            raise ValueError("regularization must be >= 0")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")


@dataclass(frozen=True)
class RegressionSet:
    """Training pairs (state, target value)."""

    inputs: np.ndarray   # (S1, N1)
    targets: np.ndarray  # (S1,)

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        y = np.asarray(self.targets, dtype=float).ravel()
        if X.shape[0] == 0:
            raise ValueError("regression set must be non-empty")
        if y.shape != (X.shape[0],):
            raise ValueError("inputs and targets disagree in length")
        object.__setattr__(self, "inputs", X)
        object.__setattr__(self, "targets", y)

    def __len__(self) -> int:
        return self.inputs.shape[0]


def forward(net: ReluNet, x: np.ndarray) -> float:
    """Network output at a single state."""
    x = np.asarray(x, dtype=float)
    if x.shape != (net.input_dim,):
        raise ValueError(f"input has shape {x.shape}, expected ({net.input_dim},)")
    return float(net.forward_many(x[None, :])[0])


def _flatten(net: ReluNet) -> np.ndarray:
    return np.concatenate([
        net.input_weights.ravel(),
        net.input_biases,
        net.output_weights,
        [net.output_bias],
    ])


def _unflatten(y: np.ndarray, J: int, n1: int) -> ReluNet:
    u = y[: J * n1].reshape(J, n1)
    u0 = y[J * n1: J * n1 + J]
    w = y[J * n1 + J: J * n1 + 2 * J]
    return ReluNet(u, u0, w, float(y[-1]))


def loss(net: ReluNet, data: RegressionSet, beta: float) -> float:
    """Mean squared error plus ``beta/2`` times the squared weight norm."""
    resid = net.forward_many(data.inputs) - data.targets
    y = _flatten(net)
    return float(np.mean(resid**2) + 0.5 * beta * y @ y)


def gradient(net: ReluNet, data: RegressionSet, beta: float) -> np.ndarray:
    """Exact gradient of :func:`loss` in the flat parameter layout.

    The ReLU subgradient at a kink is taken as 0, matching the strict
    activation indicator used by the cut construction.
    """
    X = data.inputs
    S = len(data)
    pre = X @ net.input_weights.T + net.input_biases  # (S, J)
    act = np.maximum(pre, 0.0)
    on = (pre > 0.0).astype(float)
    resid = act @ net.output_weights + net.output_bias - data.targets  # (S,)

    scale = 2.0 / S
    # d/dw_j, d/dw0
    g_w = scale * (resid @ act)
    g_w0 = scale * np.sum(resid)
    # d/du_j, d/du0_j: chain through the active indicator
    back = (resid[:, None] * on) * net.output_weights  # (S, J)
    g_u = scale * (back.T @ X)
    g_u0 = scale * np.sum(back, axis=0)

    grad = np.concatenate([g_u.ravel(), g_u0, g_w, [g_w0]])
    return grad + beta * _flatten(net)


def split_neurons(net: ReluNet) -> tuple[list[int], list[int]]:
    """Partition neuron indices by output-weight sign: positives and the rest."""
    positive = [j for j in range(net.neuron_count) if net.output_weights[j] > 0]
    rest = [j for j in range(net.neuron_count) if net.output_weights[j] <= 0]
    return positive, rest


def _constant_fit(data: RegressionSet, beta: float, J: int) -> ReluNet:
    # all-zero weights; the bias minimizing mean((w0-y)^2) + beta/2 w0^2
    w0 = 2.0 * float(np.mean(data.targets)) / (2.0 + beta)
    n1 = data.inputs.shape[1]
    return ReluNet(np.zeros((J, n1)), np.zeros(J), np.zeros(J), w0)


def _initial_net(data: RegressionSet, J: int, rng: np.random.Generator) -> ReluNet:
    # keep neurons initially active: kinks land inside the data's preactivation range
    n1 = data.inputs.shape[1]
    u = rng.normal(size=(J, n1)) / np.sqrt(n1)
    pre = data.inputs @ u.T  # (S, J)
    lo = pre.min(axis=0)
    hi = pre.max(axis=0)
    u0 = rng.uniform(-hi, -lo + 1e-12)
    w = rng.normal(size=J) * 0.5
    w0 = float(np.mean(data.targets))
    return ReluNet(u, u0, w, w0)


def _residuals_jacobian(y: np.ndarray, data: RegressionSet, J: int,
                        n1: int) -> tuple[np.ndarray, np.ndarray]:
    """Residual vector and its Jacobian w.r.t. the flat parameters."""
    X = data.inputs
    S = len(data)
    u = y[: J * n1].reshape(J, n1)
    u0 = y[J * n1: J * n1 + J]
    w = y[J * n1 + J: J * n1 + 2 * J]
    w0 = y[-1]
    pre = X @ u.T + u0
    act = np.maximum(pre, 0.0)
    on = (pre > 0.0).astype(float)
    resid = act @ w + w0 - data.targets

    jac = np.empty((S, y.size))
    back = on * w  # (S, J)
    jac[:, : J * n1] = (back[:, :, None] * X[:, None, :]).reshape(S, J * n1)
    jac[:, J * n1: J * n1 + J] = back
    jac[:, J * n1 + J: J * n1 + 2 * J] = act
    jac[:, -1] = 1.0
    return resid, jac


def _descend(data: RegressionSet, start: ReluNet, config: TrainConfig) -> tuple[ReluNet, float]:
    """Levenberg-Marquardt style damped Gauss-Newton on the regression loss."""
    beta = config.regularization
    J, n1 = start.neuron_count, start.input_dim
    S = len(data)
    y = _flatten(start)
    cur = loss(start, data, beta)
    lam = config.damping_init
    eye = np.eye(y.size)
    for _ in range(config.max_epochs):
        resid, jac = _residuals_jacobian(y, data, J, n1)
        if not (np.all(np.isfinite(resid)) and np.all(np.isfinite(jac))):
            raise FloatingPointError("non-finite residuals during training")
        g = (2.0 / S) * (jac.T @ resid) + beta * y
        H = (2.0 / S) * (jac.T @ jac) + beta * eye
        accepted = False
        while lam <= config.damping_max:
            try:
                step = np.linalg.solve(H + lam * eye, -g)
            except np.linalg.LinAlgError:
                lam *= config.damping_grow
                continue
            cand = y + step
            cand_loss = loss(_unflatten(cand, J, n1), data, beta)
            if np.isfinite(cand_loss) and cand_loss < cur:
                improvement = cur - cand_loss
                y, cur = cand, cand_loss
                lam = max(lam * config.damping_shrink, 1e-12)
                accepted = True
                break
            lam *= config.damping_grow
        if not accepted:
            break
        if improvement < config.loss_tolerance:
            break
    return _unflatten(y, J, n1), cur


def _destandardize(net: ReluNet, x_mean: np.ndarray, x_scale: np.ndarray,
                   y_mean: float, y_scale: float) -> ReluNet:
    # a net trained on (x - m) / s with scaled targets folds exactly back
    # into original coordinates: ReLU commutes with the affine input map
    u = net.input_weights / x_scale
    u0 = net.input_biases - net.input_weights @ (x_mean / x_scale)
    w = net.output_weights * y_scale
    w0 = net.output_bias * y_scale + y_mean
    return ReluNet(u, u0, w, w0)


def fit(data: RegressionSet, J: int, config: TrainConfig,
        rng: np.random.Generator) -> ReluNet:
    """Train a ``J``-neuron network on ``data``; best of ``config.restarts`` runs.

    Descent runs on internally standardized inputs and targets (better
    conditioned), but candidates are compared on the original-coordinates
    loss, and the returned loss never exceeds that of the all-zero network
    with the optimal constant output bias, which is always a candidate.
    Restarts whose training diverges are discarded with a warning.
    """
    if J < 1:
        raise ValueError("neuron count must be >= 1")
    beta = config.regularization
    best = _constant_fit(data, beta, J)
    best_loss = loss(best, data, beta)

    x_mean = data.inputs.mean(axis=0)
    x_scale = data.inputs.std(axis=0)
    x_scale[x_scale < 1e-12] = 1.0
    y_mean = float(data.targets.mean())
    y_scale = float(data.targets.std())
    if y_scale < 1e-12:
        y_scale = 1.0
    scaled = RegressionSet((data.inputs - x_mean) / x_scale,
                           (data.targets - y_mean) / y_scale)

    for r in range(config.restarts):
        start = _initial_net(scaled, J, rng)
        try:
            net, _ = _descend(scaled, start, config)
        except FloatingPointError as err:
            warnings.warn(f"restart {r} discarded: {err}", RuntimeWarning)
            continue
        candidate = _destandardize(net, x_mean, x_scale, y_mean, y_scale)
        net_loss = loss(candidate, data, beta)
        if net_loss < best_loss:
            best, best_loss = candidate, net_loss
    return best
