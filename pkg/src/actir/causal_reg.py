"""Moment-based conditional-independence penalty between two logit blocks.

If ``A`` and ``B`` are independent given a discrete ``D`` then
``E[A * (B - E[B | D])] = 0``. The empirical penalty is the L1 norm of the
sample version of that moment, taken coordinatewise over the logit vectors.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tensor as T
from .tensor import Tensor


@dataclass(frozen=True)
class CondSample:
    a: np.ndarray
    b: np.ndarray
    d: int


def _validate(a: Tensor, b: Tensor, d: np.ndarray) -> None:
    if a.ndim != 2 or a.shape != b.shape:
        raise ValueError(f"a {a.shape} and b {b.shape} must be matching (n, k) blocks")
    if a.shape[0] == 0:
        raise ValueError("conditional-independence penalty of an empty sample")
    if d.shape != (a.shape[0],):
        raise ValueError(f"need one conditioning label per row, got {d.shape}")
    if d.min() < 0:
        raise ValueError("conditioning labels must be non-negative")


def cond_moment(a: Tensor, b: Tensor, d, stop_grad_a: bool = False) -> Tensor:
    """The k-vector ``mean_i a_i * (b_i - mean_{j: d_j = d_i} b_j)``."""
    d = np.asarray(d, dtype=np.int64)
    _validate(a, b, d)
    if stop_grad_a:
        a = T.stop_gradient(a)
    n = a.shape[0]
    centered = T.group_center(b, d, int(d.max()) + 1)
    return T.matmul(T.constant(np.full(n, 1.0 / n)), T.mul(a, centered))


def c_cond_hat(a: Tensor, b: Tensor, d, stop_grad_a: bool = False) -> Tensor:
    """L1 norm of :func:`cond_moment`; subgradient 0 where a coordinate is 0."""
    return T.sum_all(T.absolute(cond_moment(a, b, d, stop_grad_a)))


def c_cond_hat_samples(samples: Sequence[CondSample]) -> float:
    if not samples:
        raise ValueError("conditional-independence penalty of an empty sample")
    lens = {np.size(s.a) for s in samples} | {np.size(s.b) for s in samples}
    if len(lens) != 1:
        raise ValueError("all a and b vectors must share one length")
    a = np.array([np.atleast_1d(s.a) for s in samples], dtype=np.float64)
    b = np.array([np.atleast_1d(s.b) for s in samples], dtype=np.float64)
    d = np.array([s.d for s in samples], dtype=np.int64)
    return c_cond_hat(Tensor(a), Tensor(b), d).item()
