"""Surrogate-gradient training: per-pixel cross-entropy plus Adam."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import NonFiniteLossError, NonFiniteValueError, ShapeMismatchError
from .layers import ForwardContext
from .network import SegSNNnet


class Adam:
    def __init__(self, lr=0.02, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1 ** self.t
        bias2 = 1.0 - b2 ** self.t
        for name, p in params.items():
            g = grads[name]
            m = self._m.setdefault(name, np.zeros_like(p))
            v = self._v.setdefault(name, np.zeros_like(p))
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p -= self.lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)


def softmax_cross_entropy(scores: np.ndarray, labels: np.ndarray):
    """Mean per-pixel CE; returns (loss, dscores).

    ``scores`` is (B, C, H, W); ``labels`` is (B, H, W) integer class ids.
    """
    if scores.shape[0] != labels.shape[0] or scores.shape[2:] != labels.shape[1:]:
        raise ShapeMismatchError(f"scores {scores.shape} vs labels {labels.shape}")
    shifted = scores - scores.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    b, c, h, w = scores.shape
    onehot = np.zeros_like(probs)
    bi, yi, xi = np.ogrid[:b, :h, :w]
    onehot[bi, labels, yi, xi] = 1.0
    n = b * h * w
    logp = shifted - np.log(exp.sum(axis=1, keepdims=True))
    loss = -float((logp * onehot).sum()) / n
    return loss, (probs - onehot) / n


def train_step(net: SegSNNnet, optimizer: Adam, batch_x: np.ndarray,
               batch_y: np.ndarray, exact: bool = False) -> float:
    """One optimizer step over a batch; returns the batch loss."""
    net.zero_grad()
    ctx = ForwardContext(train=True, exact=exact, update_stats=True)
    try:
        scores = net.forward(batch_x, ctx)
    except NonFiniteValueError as exc:
        raise NonFiniteLossError(f"diverged in forward pass: {exc}") from None
    loss, dscores = softmax_cross_entropy(scores, batch_y)
    if not np.isfinite(loss):
        raise NonFiniteLossError(f"non-finite training loss {loss}")
    net.backward(dscores)
    optimizer.step(dict(net.named_params()), dict(net.named_grads()))
    return loss


@dataclass
class TrainHistory:
    epoch_losses: list[float] = field(default_factory=list)
    val_miou: list[tuple[int, float]] = field(default_factory=list)


def iterate_minibatches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def train_network(net: SegSNNnet, frames: np.ndarray, labels: np.ndarray,
                  epochs: int, batch_size: int = 4, lr: float = 0.02,
                  seed: int = 0, val_hook=None, log=None) -> TrainHistory:
    """Fit the network on (N, C, H, W) frames with (N, H, W) labels.

    ``val_hook(net, epoch)`` may return a validation score to record.
    Raises NonFiniteLossError (with the offending epoch) on divergence.
    """
    rng = np.random.default_rng(seed)
    optimizer = Adam(lr=lr)
    history = TrainHistory()
    for epoch in range(epochs):
        losses = []
        for idx in iterate_minibatches(len(frames), batch_size, rng):
            try:
                losses.append(train_step(net, optimizer, frames[idx], labels[idx]))
            except NonFiniteLossError as exc:
                raise NonFiniteLossError(str(exc), epoch=epoch) from None
        mean_loss = float(np.mean(losses))
        history.epoch_losses.append(mean_loss)
        if val_hook is not None:
            score = val_hook(net, epoch)
            if score is not None:
                history.val_miou.append((epoch, float(score)))
        if log is not None:
            log(epoch, mean_loss)
    return history
