"""Feed-forward classifier networks trained by scaled conjugate gradients.

Hidden layers use the logistic sigmoid, the output layer a numerically
stabilized softmax, and training minimizes mean cross-entropy by Moller-style
scaled conjugate gradient iterations: conjugate directions with curvature
estimated from a forward finite difference of the gradient, Levenberg-style
damping adjusted by the achieved-vs-predicted reduction ratio, and a restart
to steepest descent every n-parameters iterations. Validation loss is
evaluated once per epoch (= one SCG iteration) for early stopping, and the
parameters from the best-validation epoch are returned.
"""

from __future__ import annotations

import json
import struct
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .features import Standardizer, apply_standardizer

PROB_CLAMP = 1e-15
GRADIENT_TOLERANCE = 1e-8
_LAMBDA_CAP = 1e64  # keeps the damping finite when no step can be accepted

MODEL_MAGIC = b"SMDL"
MODEL_VERSION = 1


class TrainingFailureError(RuntimeError):
    """Training diverged to a non-finite loss; carries the report so far."""

    def __init__(self, message: str, report: "TrainReport"):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 1000
    split_ratios: tuple[float, float, float] = (0.70, 0.15, 0.15)
    patience: int = 20  # consecutive non-improving validation checks before stopping
    sigma: float = 5e-5  # finite-difference step scale for curvature estimates
    lambda_init: float = 5e-7  # initial Levenberg damping
    seed: int = 0

    def __post_init__(self):
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.sigma <= 0 or self.lambda_init <= 0:
            raise ValueError("sigma and lambda_init must be positive")
        if self.patience < 0:
            raise ValueError("patience must be >= 0")
        if abs(sum(self.split_ratios) - 1.0) > 1e-12:
            raise ValueError("split ratios must sum to 1")


@dataclass
class TrainReport:
    """Per-epoch loss curves and the stopping summary of one training run."""

    train_curve: list[float] = field(default_factory=list)
    val_curve: list[float] = field(default_factory=list)
    accepted: list[bool] = field(default_factory=list)
    stop_reason: str = ""
    best_epoch: int = 0  # 1-based
    epochs_run: int = 0
    best_val_loss: float = float("inf")
    duration_s: float = 0.0

    def summary(self) -> dict:
        """Deterministic summary (no wall-clock) embedded in model files."""
        return {
            "stop_reason": self.stop_reason,
            "best_epoch": self.best_epoch,
            "epochs_run": self.epochs_run,
            "best_val_loss": self.best_val_loss,
            "final_train_loss": self.train_curve[-1] if self.train_curve else None,
        }


@dataclass
class MLPModel:
    """Layer sizes plus per-layer weight matrices (fan_in x fan_out) and biases."""

    layer_sizes: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        expected = list(zip(self.layer_sizes[:-1], self.layer_sizes[1:]))
        got = [w.shape for w in self.weights]
        if got != expected or [b.shape[0] for b in self.biases] != [n for _, n in expected]:
            raise ValueError("weight/bias shapes do not chain with layer_sizes")

    @property
    def n_params(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    def copy(self) -> "MLPModel":
        return MLPModel(
            self.layer_sizes,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
        )


def initialize_model(layer_sizes: tuple[int, ...] | list[int], seed: int) -> MLPModel:
    """Seeded uniform init in [-r, r] with r = 1/sqrt(fan_in) per layer."""
    rng = np.random.default_rng(int(seed))
    sizes = tuple(int(n) for n in layer_sizes)
    if len(sizes) < 2 or any(n < 1 for n in sizes):
        raise ValueError(f"need at least input and output layer sizes, got {sizes}")
    weights, biases = [], []
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        r = 1.0 / np.sqrt(n_in)
        weights.append(rng.uniform(-r, r, size=(n_in, n_out)))
        biases.append(rng.uniform(-r, r, size=n_out))
    return MLPModel(sizes, weights, biases)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax, stabilized by subtracting the max logit."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def forward(model: MLPModel, x: np.ndarray) -> np.ndarray:
    """Class-probability vector(s) for one input vector or a matrix of rows."""
    a = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if a.shape[1] != model.layer_sizes[0]:
        raise ValueError(
            f"input length {a.shape[1]} does not match model input {model.layer_sizes[0]}"
        )
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ w + b
        a = softmax(z) if i == last else expit(z)
    return a[0] if np.ndim(x) == 1 else a


def cross_entropy(probabilities: np.ndarray, targets: np.ndarray) -> float:
    """Mean cross-entropy, with probabilities clamped to [1e-15, 1]."""
    p = np.clip(np.atleast_2d(probabilities), PROB_CLAMP, 1.0)
    t = np.atleast_2d(targets)
    return float(-(t * np.log(p)).sum(axis=1).mean())


def _forward_cached(model: MLPModel, X: np.ndarray) -> list[np.ndarray]:
    activations = [X]
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = activations[-1] @ w + b
        activations.append(softmax(z) if i == last else expit(z))
    return activations


def gradient(
    model: MLPModel, X: np.ndarray, targets: np.ndarray
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Analytic gradients of mean cross-entropy w.r.t. weights and biases.

    Backpropagation with the softmax/cross-entropy output delta p - t and
    sigmoid-derivative a(1-a) through hidden layers.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    T = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    if X.shape[0] == 0:
        raise ValueError("gradient of an empty batch is undefined")
    activations = _forward_cached(model, X)
    n = X.shape[0]
    delta = (activations[-1] - T) / n
    grads_w: list[np.ndarray] = [None] * len(model.weights)
    grads_b: list[np.ndarray] = [None] * len(model.biases)
    for i in range(len(model.weights) - 1, -1, -1):
        grads_w[i] = activations[i].T @ delta
        grads_b[i] = delta.sum(axis=0)
        if i > 0:
            a = activations[i]
            delta = (delta @ model.weights[i].T) * a * (1.0 - a)
    return grads_w, grads_b


def pack_params(model: MLPModel) -> np.ndarray:
    """Flatten all weights and biases into one vector (layer-major, W then b)."""
    parts = []
    for w, b in zip(model.weights, model.biases):
        parts.append(w.ravel())
        parts.append(b)
    return np.concatenate(parts)


def unpack_params(flat: np.ndarray, layer_sizes: tuple[int, ...]) -> MLPModel:
    """Rebuild a model whose arrays are views into ``flat``."""
    weights, biases = [], []
    offset = 0
    for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        weights.append(flat[offset : offset + n_in * n_out].reshape(n_in, n_out))
        offset += n_in * n_out
        biases.append(flat[offset : offset + n_out])
        offset += n_out
    if offset != flat.size:
        raise ValueError("flat parameter vector does not match layer sizes")
    return MLPModel(layer_sizes, weights, biases)


def scg_train(
    model: MLPModel,
    train: tuple[np.ndarray, np.ndarray],
    validation: tuple[np.ndarray, np.ndarray],
    cfg: TrainConfig | None = None,
) -> tuple[MLPModel, TrainReport]:
    """Full-batch scaled-conjugate-gradient training with early stopping.

    One epoch is one SCG iteration. A step is accepted only when the
    comparison parameter is strictly positive, i.e. when it strictly lowers
    the training loss; rejected steps leave the weights in place and raise
    the damping. Stops at ``max_epochs``, after ``patience`` consecutive
    validation checks without improvement, or when the gradient norm falls
    below 1e-8, and returns the parameters of the best-validation epoch.
    """
    cfg = cfg or TrainConfig()
    X, T = (np.asarray(a, dtype=np.float64) for a in train)
    Xv, Tv = (np.asarray(a, dtype=np.float64) for a in validation)
    sizes = model.layer_sizes

    def loss_at(flat: np.ndarray, data: np.ndarray, targets: np.ndarray) -> float:
        return cross_entropy(forward(unpack_params(flat, sizes), data), targets)

    def grad_at(flat: np.ndarray) -> np.ndarray:
        gw, gb = gradient(unpack_params(flat, sizes), X, T)
        return pack_params(MLPModel(sizes, gw, gb))

    report = TrainReport()
    started = time.perf_counter()

    w = pack_params(model)
    n_params = w.size
    loss_w = loss_at(w, X, T)
    r = -grad_at(w)
    p = r.copy()
    raw_delta = 0.0
    lam = cfg.lambda_init
    success = True
    stale_direction = False  # p changed outside the success path; curvature cache invalid

    best_w = w.copy()
    best_val = np.inf
    since_best = 0
    stop_reason = "max-epochs"

    for epoch in range(1, cfg.max_epochs + 1):
        grad_norm = float(np.sqrt(r @ r))
        if grad_norm < GRADIENT_TOLERANCE:
            stop_reason = "gradient-converged"
            break

        mu = float(p @ r)
        if mu <= 0.0:  # direction lost descent; restart on the steepest descent
            p = r.copy()
            mu = float(r @ r)
            stale_direction = True
        norm_p2 = float(p @ p)

        if success or stale_direction:
            sigma_k = cfg.sigma / np.sqrt(norm_p2)
            s = (grad_at(w + sigma_k * p) + r) / sigma_k  # (E'(w + sigma*p) - E'(w)) / sigma
            raw_delta = float(p @ s)
            stale_direction = False

        # damped curvature along p; raise lam until it is positive definite
        delta = raw_delta + lam * norm_p2
        if delta <= 0.0:
            lam = 2.0 * (lam - delta / norm_p2)
            delta = raw_delta + lam * norm_p2

        alpha = mu / delta
        candidate = w + alpha * p
        loss_candidate = loss_at(candidate, X, T)
        comparison = 2.0 * delta * (loss_w - loss_candidate) / (mu * mu)
        if not np.isfinite(loss_candidate) or not np.isfinite(comparison):
            comparison = -np.inf

        accepted = comparison > 0.0
        if accepted:
            w = candidate
            loss_w = loss_candidate
            r_new = -grad_at(w)
            success = True
            if epoch % n_params == 0:
                p = r_new.copy()
            else:
                beta = float((r_new @ r_new - r_new @ r) / mu)
                p = r_new + beta * p
            r = r_new
            if comparison >= 0.75:
                lam *= 0.25
        else:
            success = False
        if comparison < 0.25:
            lam = min(lam + delta * (1.0 - comparison) / norm_p2, _LAMBDA_CAP)

        if not np.isfinite(loss_w):
            report.stop_reason = "diverged"
            report.epochs_run = epoch
            report.duration_s = time.perf_counter() - started
            raise TrainingFailureError("training loss became non-finite", report)

        val_loss = loss_at(w, Xv, Tv)
        report.train_curve.append(loss_w)
        report.val_curve.append(val_loss)
        report.accepted.append(accepted)
        if val_loss < best_val:
            best_val = val_loss
            best_w = w.copy()
            report.best_epoch = epoch
            since_best = 0
        else:
            since_best += 1
        if since_best >= cfg.patience:
            stop_reason = "patience"
            break

    report.stop_reason = stop_reason
    report.epochs_run = len(report.train_curve)
    report.best_val_loss = float(best_val)
    report.duration_s = time.perf_counter() - started
    trained = unpack_params(best_w, sizes)
    return trained.copy(), report


def predict(
    model: MLPModel,
    standardizer,
    raw_vector: np.ndarray,
) -> tuple[int, np.ndarray]:
    """Standardize one raw feature vector and classify it.

    Returns (class index, probability vector); argmax ties break toward the
    lowest class index.
    """
    x = np.asarray(raw_vector, dtype=np.float64)
    if standardizer is not None:
        x = apply_standardizer(standardizer, x)
    probabilities = forward(model, x)
    return int(np.argmax(probabilities)), probabilities


def save_model(
    path,
    model: MLPModel,
    standardizer=None,
    name: str = "",
    class_labels: list[str] | None = None,
    feature_layout: str = "",
    train_summary: dict | None = None,
) -> None:
    """Write a self-describing model container.

    Layout: magic, u16 version, u32 length-prefixed JSON header, then
    row-major little-endian float64 arrays (per layer W then b, then the
    standardizer mean and deviation if present). Contains no wall-clock
    values, so identical training runs produce byte-identical files.
    """
    header = {
        "name": name,
        "class_labels": list(class_labels or []),
        "feature_layout": feature_layout,
        "layer_sizes": list(model.layer_sizes),
        "standardizer_passthrough": (
            None if standardizer is None else int(standardizer.passthrough)
        ),
        "train_summary": train_summary,
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<H", MODEL_VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for w, b in zip(model.weights, model.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())
        if standardizer is not None:
            fh.write(np.ascontiguousarray(standardizer.mean, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(standardizer.std, dtype="<f8").tobytes())


@dataclass(frozen=True)
class LoadedModel:
    model: MLPModel
    standardizer: object
    name: str
    class_labels: tuple[str, ...]
    feature_layout: str
    train_summary: dict | None


def load_model(path) -> LoadedModel:
    """Read a model container written by :func:`save_model`."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MODEL_MAGIC:
            raise ValueError(f"not a model file (magic {magic!r})")
        (version,) = struct.unpack("<H", fh.read(2))
        if version != MODEL_VERSION:
            raise ValueError(f"unsupported model file version {version}")
        (header_len,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        sizes = tuple(header["layer_sizes"])
        weights, biases = [], []
        for n_in, n_out in zip(sizes[:-1], sizes[1:]):
            weights.append(
                np.frombuffer(fh.read(8 * n_in * n_out), dtype="<f8").reshape(n_in, n_out).copy()
            )
            biases.append(np.frombuffer(fh.read(8 * n_out), dtype="<f8").copy())
        standardizer = None
        if header["standardizer_passthrough"] is not None:
            n = sizes[0]
            mean = np.frombuffer(fh.read(8 * n), dtype="<f8").copy()
            std = np.frombuffer(fh.read(8 * n), dtype="<f8").copy()
            standardizer = Standardizer(mean, std, header["standardizer_passthrough"])
    return LoadedModel(
        model=MLPModel(sizes, weights, biases),
        standardizer=standardizer,
        name=header["name"],
        class_labels=tuple(header["class_labels"]),
        feature_layout=header["feature_layout"],
        train_summary=header["train_summary"],
    )
