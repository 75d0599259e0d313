import logging
from typing import List, Tuple

import numpy as np

from app.exceptions import ParameterError
from app.services.datasets.model import LabeledDataset
from app.services.learning.model import ArchKind, ModelArch, ModelParams, TrainConfig

logger = logging.getLogger(__name__)


def init_params(arch: ModelArch, seed: int) -> ModelParams:
    """Logistic regression starts at zero; the perceptron gets U(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights."""
    if arch.kind == ArchKind.logistic:
        return ModelParams(arch=arch, theta=np.zeros(arch.n_params))

    rng = np.random.default_rng(seed)
    d, h, c = arch.n_features, arch.hidden, arch.n_classes
    w1 = rng.uniform(-1.0, 1.0, size=(h, d)) / np.sqrt(d)
    w2 = rng.uniform(-1.0, 1.0, size=(c, h)) / np.sqrt(h)
    theta = np.concatenate([w1.ravel(), np.zeros(h), w2.ravel(), np.zeros(c)])
    return ModelParams(arch=arch, theta=theta)


def unpack(arch: ModelArch, theta: np.ndarray) -> List[np.ndarray]:
    d, c = arch.n_features, arch.n_classes
    if arch.kind == ArchKind.logistic:
        return [theta[: c * d].reshape(c, d), theta[c * d:]]
    h = arch.hidden
    sizes = [h * d, h, c * h, c]
    offsets = np.cumsum([0] + sizes)
    w1, b1, w2, b2 = (theta[offsets[k]:offsets[k + 1]] for k in range(4))
    return [w1.reshape(h, d), b1, w2.reshape(c, h), b2]


def _check_dims(arch: ModelArch, features: np.ndarray) -> None:
    if features.shape[1] != arch.n_features:
        raise ParameterError(f"data has {features.shape[1]} features, model expects {arch.n_features}")


def logits(params: ModelParams, features: np.ndarray) -> np.ndarray:
    _check_dims(params.arch, features)
    blocks = unpack(params.arch, params.theta)
    if params.arch.kind == ArchKind.logistic:
        w, b = blocks
        return features @ w.T + b
    w1, b1, w2, b2 = blocks
    return np.tanh(features @ w1.T + b1) @ w2.T + b2


def loss_and_grad(
    arch: ModelArch,
    theta: np.ndarray,
    features: np.ndarray,
    labels: np.ndarray,
    l2: float = 0.0,
) -> Tuple[float, np.ndarray]:
    """Mean multinomial cross-entropy plus (l2/2)*||theta||^2, and its gradient in theta layout."""
    m = features.shape[0]
    blocks = unpack(arch, theta)
    if arch.kind == ArchKind.logistic:
        w, b = blocks
        z = features @ w.T + b
    else:
        w1, b1, w2, b2 = blocks
        hidden = np.tanh(features @ w1.T + b1)
        z = hidden @ w2.T + b2

    # max-subtracted log-softmax
    shifted = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_norm
    loss = -log_probs[np.arange(m), labels].mean() + 0.5 * l2 * float(theta @ theta)

    dz = np.exp(log_probs)
    dz[np.arange(m), labels] -= 1.0
    dz /= m

    if arch.kind == ArchKind.logistic:
        grad = np.concatenate([(dz.T @ features).ravel(), dz.sum(axis=0)])
    else:
        dw2 = dz.T @ hidden
        db2 = dz.sum(axis=0)
        da = (dz @ w2) * (1.0 - hidden ** 2)
        dw1 = da.T @ features
        db1 = da.sum(axis=0)
        grad = np.concatenate([dw1.ravel(), db1, dw2.ravel(), db2])
    return float(loss), grad + l2 * theta


def mean_loss(params: ModelParams, data: LabeledDataset, l2: float = 0.0) -> float:
    _check_dims(params.arch, data.features)
    loss, _ = loss_and_grad(params.arch, params.theta, data.features, data.labels, l2)
    return loss


def local_update(params: ModelParams, data: LabeledDataset, cfg: TrainConfig, seed: int) -> ModelParams:
    """E epochs of mini-batch SGD on the participant's data (ParticipantUpdate)."""
    _check_dims(params.arch, data.features)
    if data.n_classes != params.arch.n_classes:
        raise ParameterError(f"data has {data.n_classes} classes, model expects {params.arch.n_classes}")
    if data.is_empty or cfg.local_epochs == 0 or cfg.learning_rate == 0.0:
        return params

    rng = np.random.default_rng(seed)
    theta = params.theta.copy()
    m = data.n_samples
    for _ in range(cfg.local_epochs):
        order = rng.permutation(m)
        for start in range(0, m, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            _, grad = loss_and_grad(params.arch, theta, data.features[batch], data.labels[batch], cfg.l2)
            theta -= cfg.learning_rate * grad

    if not np.all(np.isfinite(theta)):
        raise ParameterError("local update diverged; lower the learning rate")
    return params.with_theta(theta)


def predict(params: ModelParams, features: np.ndarray) -> np.ndarray:
    # np.argmax returns the first maximum, i.e. ties go to the lowest class id
    return np.argmax(logits(params, features), axis=1)


def evaluate_accuracy(params: ModelParams, test: LabeledDataset) -> float:
    if test.is_empty:
        raise ParameterError("cannot evaluate accuracy on an empty test set")
    correct = np.count_nonzero(predict(params, test.features) == test.labels)
    return correct / test.n_samples
