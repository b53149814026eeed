import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from actir import kernels
from actir.kernels import _reference
from actir.objectives import OptimizerState, adam_step

try:
    from actir.kernels import _ckernels
except ImportError:  # pragma: no cover - extension not built
    _ckernels = None

needs_ext = pytest.mark.skipif(_ckernels is None, reason="compiled extension not built")


def _case(seed, n, d, k):
    r = np.random.default_rng(seed)
    return r.normal(size=(n, d)), r.normal(size=(k, d)), r.normal(size=k), r.integers(0, k, size=n)


shapes = st.tuples(st.integers(0, 2**32 - 1), st.integers(1, 40), st.integers(1, 12), st.integers(2, 5))


@needs_ext
@given(shapes)
def test_dense_backends_agree(case):
    x, w, b, _ = _case(*case)
    np.testing.assert_allclose(_ckernels.dense_forward(x, w, b), _reference.dense_forward(x, w, b), rtol=1e-12, atol=1e-12)


@needs_ext
@given(shapes)
def test_xent_backends_agree(case):
    x, w, _, y = _case(*case)
    logits = 10 * x @ w.T
    for got, want in zip(_ckernels.softmax_xent(logits, y), _reference.softmax_xent(logits, y)):
        np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-12)


@needs_ext
@given(shapes)
def test_group_center_backends_agree(case):
    x, _, _, y = _case(*case)
    groups = int(y.max()) + 2  # one empty group
    np.testing.assert_allclose(_ckernels.group_center(x, y, groups), _reference.group_center(x, y, groups), atol=1e-12)


@needs_ext
@settings(max_examples=30)
@given(shapes, st.integers(0, 30))
def test_finetune_backends_agree(case, steps):
    x, w, _, y = _case(*case)
    got = _ckernels.finetune_head(x, y, w, steps, 1e-2)
    want = _reference.finetune_head(x, y, w, steps, 1e-2)
    np.testing.assert_allclose(got, want, rtol=1e-10, atol=1e-12)


@needs_ext
def test_ext_accepts_read_only_inputs():
    x = np.ones((3, 2))
    x.setflags(write=False)
    w = np.ones((2, 2))
    w.setflags(write=False)
    out = _ckernels.dense_forward(x, w, np.zeros(2))
    assert out.tolist() == [[2.0, 2.0]] * 3


@needs_ext
def test_ext_shape_mismatch():
    with pytest.raises(ValueError):
        _ckernels.dense_forward(np.ones((3, 2)), np.ones((2, 3)), np.zeros(2))
    with pytest.raises(ValueError):
        _ckernels.finetune_head(np.ones((3, 2)), np.zeros(3, dtype=np.int64), np.ones((2, 3)), 1, 0.1)


def test_finetune_matches_independent_adam(rng):
    """The fused loop equals Adam driven by the textbook softmax-regression gradient."""
    feats = rng.normal(size=(10, 8))
    y = rng.integers(0, 2, size=10)
    w0 = np.zeros((2, 8))
    w0[:, :2] = np.eye(2)
    w, state = {"w": w0.copy()}, OptimizerState()
    onehot = np.eye(2)[y]
    for _ in range(20):
        z = feats @ w["w"].T
        p = np.exp(z - z.max(1, keepdims=True))
        p /= p.sum(1, keepdims=True)
        w, state = adam_step(state, w, {"w": (p - onehot).T @ feats / len(y)}, 1e-2)
    np.testing.assert_allclose(kernels.finetune_head(feats, y, w0, 20, 1e-2), w["w"], atol=1e-12)


def test_finetune_zero_steps_returns_copy():
    w0 = np.eye(2, 4)
    out = kernels.finetune_head(np.ones((3, 4)), np.array([0, 1, 0]), w0, 0, 0.1)
    assert np.array_equal(out, w0) and out is not w0


def test_backend_flag_is_reported():
    assert kernels.BACKEND in ("cython", "python")


def test_env_var_forces_python_fallback():
    env = dict(os.environ, ACTIR_PURE_PYTHON="1")
    out = subprocess.run(
        [sys.executable, "-c", "import actir.kernels as k; print(k.BACKEND, k.dense_forward.__module__)"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.split() == ["python", "actir.kernels._reference"]
