"""Pure numpy implementations of the hot kernels.

These are the fallback used when the compiled extension is unavailable, and
the reference the compiled versions are tested against.
"""

import numpy as np


def dense_forward(x, w, b):
    """Affine map ``x @ w.T + b`` for a batch ``x`` of shape (n, in)."""
    return x @ w.T + b


def softmax_xent(logits, y):
    """Row-wise cross-entropy and softmax probabilities.

    Returns ``(losses, probs)`` where ``losses[i] = -log softmax(logits[i])[y[i]]``.
    """
    shifted = logits - logits.max(axis=1, keepdims=True)
    expd = np.exp(shifted)
    denom = expd.sum(axis=1)
    probs = expd / denom[:, None]
    losses = np.log(denom) - shifted[np.arange(len(y)), y]
    return losses, probs


def group_center(x, labels, n_groups):
    """Subtract from each row the mean of the rows sharing its label."""
    sums = np.zeros((n_groups, x.shape[1]))
    np.add.at(sums, labels, x)
    counts = np.bincount(labels, minlength=n_groups).astype(np.float64)
    counts[counts == 0] = 1.0
    return x - (sums / counts[:, None])[labels]


def finetune_head(features, y, w0, steps, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """Adam on mean cross-entropy of ``features @ w.T`` starting from ``w0``."""
    w = np.array(w0, dtype=np.float64, copy=True)
    m = np.zeros_like(w)
    v = np.zeros_like(w)
    n = features.shape[0]
    onehot = np.zeros((n, w.shape[0]))
    onehot[np.arange(n), y] = 1.0
    for t in range(1, steps + 1):
        _, probs = softmax_xent(features @ w.T, y)
        grad = (probs - onehot).T @ features / n
        m = beta1 * m + (1.0 - beta1) * grad
        v = beta2 * v + (1.0 - beta2) * grad * grad
        mhat = m / (1.0 - beta1**t)
        vhat = v / (1.0 - beta2**t)
        w = w - lr * mhat / (np.sqrt(vhat) + eps)
    return w
