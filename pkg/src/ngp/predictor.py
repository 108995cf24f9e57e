"""Predictors trained on a feature subset: fit / predict / validation loss.

Two families ship: ``mlp`` (one ReLU hidden layer, SGD with momentum) and
``linear`` (ridge regression in closed form). A further family plugs in via
:func:`register_family` with a fit function returning a parameter dict and
a forward function mapping ``(params, X)`` to raw outputs (logits for
cross-entropy).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, Sequence

import numpy as np

from . import _kernels
from .data import Dataset, restrict

MEAN_SQUARE = "mean_square"
CROSS_ENTROPY = "cross_entropy"
LOSSES = (MEAN_SQUARE, CROSS_ENTROPY)


class TrainingError(RuntimeError):
    """Training diverged (non-finite loss)."""


@dataclass(frozen=True)
class PredictorSpec:
    family: str = "mlp"
    hidden_units: int = 500
    epochs: int = 10
    learning_rate: float = 0.01
    batch_size: int = 32
    weight_decay: float = 1e-4
    loss: str = MEAN_SQUARE
    ridge_lambda: float = 0.0
    momentum: float = 0.9

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ValueError(f"unknown predictor family {self.family!r}")
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.family == "mlp" and self.hidden_units < 1:
            raise ValueError("hidden_units must be >= 1")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.weight_decay < 0 or self.ridge_lambda < 0:
            raise ValueError("regularisation coefficients must be >= 0")

    @classmethod
    def from_dict(cls, d: dict) -> "PredictorSpec":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown predictor fields: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class TrainedPredictor:
    spec: PredictorSpec
    feature_set: tuple
    params: Dict[str, np.ndarray] = field(repr=False)
    training_loss: float
    n_outputs: int

    def to_json(self) -> str:
        """Debug dump (spec + flat parameter arrays); not a stable format."""
        return json.dumps({
            "version": 1,
            "spec": asdict(self.spec),
            "feature_set": list(self.feature_set),
            "n_outputs": self.n_outputs,
            "training_loss": self.training_loss,
            "params": {k: {"shape": list(v.shape), "data": v.ravel().tolist()}
                       for k, v in sorted(self.params.items())},
        })

    @classmethod
    def from_json(cls, text: str) -> "TrainedPredictor":
        d = json.loads(text)
        if d.get("version") != 1:
            raise ValueError(f"unsupported model dump version {d.get('version')}")
        params = {k: np.asarray(v["data"], dtype=np.float64).reshape(v["shape"])
                  for k, v in d["params"].items()}
        return cls(PredictorSpec(**d["spec"]), tuple(d["feature_set"]), params,
                   d["training_loss"], d["n_outputs"])


# ---------------------------------------------------------------------------
# families
# ---------------------------------------------------------------------------


def _glorot(rng, fan_in, fan_out):
    lim = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=(fan_in, fan_out))


def _fit_mlp(spec: PredictorSpec, X, T, rng):
    d, q = X.shape[1], T.shape[1]
    W1 = _glorot(rng, d, spec.hidden_units)
    W2 = _glorot(rng, spec.hidden_units, q)
    b1 = np.zeros(spec.hidden_units)
    b2 = np.zeros(q)
    J = X.shape[0]
    order = np.empty((spec.epochs, J), dtype=np.int64)
    for e in range(spec.epochs):
        order[e] = rng.permutation(J)
    code = _kernels.MSE if spec.loss == MEAN_SQUARE else _kernels.CROSS_ENTROPY
    losses, bad_step = _kernels.train_mlp(
        np.ascontiguousarray(X), np.ascontiguousarray(T), W1, b1, W2, b2, order,
        float(spec.learning_rate), float(spec.momentum), float(spec.weight_decay),
        int(spec.batch_size), code)
    if bad_step >= 0:
        raise TrainingError(f"non-finite training loss at SGD iteration {bad_step}")
    params = {"W1": W1, "b1": b1, "W2": W2, "b2": b2}
    if not all(np.all(np.isfinite(p)) for p in params.values()):
        raise TrainingError("non-finite parameters after training")
    return params, float(losses[-1])


def _forward_mlp(params, X):
    H = np.maximum(X @ params["W1"] + params["b1"], 0.0)
    return H @ params["W2"] + params["b2"]


def _fit_linear(spec: PredictorSpec, X, T, rng):
    if spec.loss != MEAN_SQUARE:
        raise ValueError("linear family supports mean_square loss only")
    J, d = X.shape
    mx, mt = X.mean(axis=0), T.mean(axis=0)
    Xc, Tc = X - mx, T - mt
    if spec.ridge_lambda > 0:
        A = Xc.T @ Xc / J + spec.ridge_lambda * np.eye(d)
        W = np.linalg.solve(A, Xc.T @ Tc / J)
    else:
        W = np.linalg.lstsq(Xc, Tc, rcond=None)[0]
    b = mt - mx @ W
    resid = T - (X @ W + b)
    return {"W": W, "b": b}, float(np.mean(np.sum(resid * resid, axis=1)))


def _forward_linear(params, X):
    return X @ params["W"] + params["b"]


_FAMILIES: Dict[str, tuple] = {
    "mlp": (_fit_mlp, _forward_mlp),
    "linear": (_fit_linear, _forward_linear),
}


def register_family(name: str, fit_fn: Callable, forward_fn: Callable) -> None:
    """Add a predictor family.

    ``fit_fn(spec, X, T, rng) -> (params, training_loss)`` must be
    deterministic given ``rng``; ``forward_fn(params, X)`` returns J x Q raw
    outputs.
    """
    _FAMILIES[name] = (fit_fn, forward_fn)


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------


def _check_targets(loss: str, T: np.ndarray) -> None:
    if loss == CROSS_ENTROPY:
        ok = np.all((T == 0.0) | (T == 1.0)) and np.all(T.sum(axis=1) == 1.0)
        if not ok:
            raise ValueError("cross_entropy loss needs one-hot targets")


def _bias_params(loss: str, T: np.ndarray):
    if loss == MEAN_SQUARE:
        return {"b": T.mean(axis=0)}
    freq = T.mean(axis=0)
    return {"b": np.log(np.maximum(freq, 1e-12))}


def fit(spec: PredictorSpec, train: Dataset, features: Sequence[int] = (),
        seed: int = 0) -> TrainedPredictor:
    """Train ``spec`` on ``train`` restricted to ``features`` (in that order).

    An empty feature set yields the bias-only model: mean target for
    mean_square, log class frequencies for cross_entropy.
    """
    features = tuple(int(i) for i in features)
    _check_targets(spec.loss, train.targets)
    X = restrict(train, features).features
    T = train.targets
    if not features:
        params = _bias_params(spec.loss, T)
        model = TrainedPredictor(spec, features, params, 0.0, T.shape[1])
        return TrainedPredictor(spec, features, params,
                                _mean_loss(spec.loss, _raw(model, X), T), T.shape[1])
    fit_fn, _ = _FAMILIES[spec.family]
    params, train_loss = fit_fn(spec, X, T, np.random.default_rng(seed))
    return TrainedPredictor(spec, features, params, train_loss, T.shape[1])


def _raw(model: TrainedPredictor, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1) if model.feature_set else X.reshape(-1, 0)
    if X.shape[1] != len(model.feature_set):
        raise ValueError(f"model expects {len(model.feature_set)} columns, got {X.shape[1]}")
    if not model.feature_set:
        return np.broadcast_to(model.params["b"], (X.shape[0], model.n_outputs)).copy()
    _, forward = _FAMILIES[model.spec.family]
    return forward(model.params, X)


def _log_softmax(Z):
    m = Z.max(axis=1, keepdims=True)
    return Z - (m + np.log(np.exp(Z - m).sum(axis=1, keepdims=True)))


def _mean_loss(loss: str, raw: np.ndarray, T: np.ndarray) -> float:
    if loss == MEAN_SQUARE:
        diff = raw - T
        return float(np.mean(np.sum(diff * diff, axis=1)))
    return float(np.mean(-np.sum(T * _log_softmax(raw), axis=1)))


def predict(model: TrainedPredictor, inputs) -> np.ndarray:
    """J x Q outputs; probability rows for cross_entropy models."""
    raw = _raw(model, inputs)
    if model.spec.loss == CROSS_ENTROPY:
        return np.exp(_log_softmax(raw))
    return raw


def evaluate_loss(model: TrainedPredictor, data: Dataset) -> float:
    """Mean per-sample loss of ``model`` on ``data`` (columns already restricted)."""
    _check_targets(model.spec.loss, data.targets)
    return _mean_loss(model.spec.loss, _raw(model, data.features), data.targets)


def subset_loss(model: TrainedPredictor, data: Dataset) -> float:
    """evaluate_loss after restricting full-width ``data`` to the model's features."""
    return evaluate_loss(model, restrict(data, model.feature_set))


def constant_baseline_loss(train: Dataset, validation: Dataset,
                           loss: str = MEAN_SQUARE) -> float:
    """Validation loss of the bias-only model fitted on ``train``."""
    if train.n_targets != validation.n_targets:
        raise ValueError("train and validation disagree on Q")
    spec = PredictorSpec(family="linear" if loss == MEAN_SQUARE else "mlp", loss=loss)
    return evaluate_loss(fit(spec, train, ()), restrict(validation, ()))
