"""Training objectives and optimizer.

ACTIR replaces the inner arg-min over each domain head with a penalty on the
squared norm of that head's inner gradient. The inner gradient is written out
in closed form (softmax residual outer products plus the conditional-moment
subgradient) so that first-order reverse mode can differentiate through it.

Per-domain risks are batch means throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Optional

import numpy as np

from . import tensor as T
from .causal_reg import c_cond_hat, cond_moment
from .model import ModelParams, ParamTensors
from .tensor import Tape, Tensor


@dataclass(frozen=True)
class ActirHyper:
    gamma: float = 0.5
    lambda_c: float = 1.0
    lambda_g: float = 1.0
    lr: float = 1e-2
    steps: int = 2000
    stop_grad_a: bool = False
    restrict_head: bool = False
    head_update: str = "inner"
    batch_size: Optional[int] = None

    def __post_init__(self):
        if self.head_update not in ("inner", "outer"):
            raise ValueError(f"head_update must be 'inner' or 'outer', got {self.head_update!r}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.lambda_c < 0 or self.lambda_g < 0:
            raise ValueError("lambda_c and lambda_g must be non-negative")
        if self.lr <= 0 or self.steps < 0:
            raise ValueError("lr must be positive and steps non-negative")


@dataclass(frozen=True)
class BaselineHyper:
    lr: float = 1e-2
    steps: int = 2000
    irm_penalty: float = 1e4
    irm_anneal_steps: int = 500
    maml_inner_lr: float = 1e-2
    batch_size: Optional[int] = None


def _onehot(y: np.ndarray, k: int) -> np.ndarray:
    out = np.zeros((len(y), k))
    out[np.arange(len(y)), y] = 1.0
    return out


def _head_mask(pt: ParamTensors) -> np.ndarray:
    mask = np.zeros((pt.split.k, pt.split.width))
    mask[:, pt.split.k :] = 1.0
    return mask


class _DomainTerms:
    """Shared forward quantities for one domain batch."""

    def __init__(self, pt: ParamTensors, w_base: np.ndarray, head: Optional[Tensor], x, y, restrict_head=False):
        self.y = np.asarray(y, dtype=np.int64)
        self.n = len(self.y)
        if self.n == 0:
            raise ValueError("empty batch")
        self.k = pt.split.k
        self.phi = T.forward_mlp(pt.phi, Tensor(x))
        self.a = T.matmul(self.phi, T.constant(w_base.T))
        self.mask = _head_mask(pt) if restrict_head else None
        if head is not None:
            w = T.mul(head, T.constant(self.mask)) if restrict_head else head
            self.b = T.matmul(self.phi, T.transpose(w))
            self.f = T.add(self.a, self.b)

    def inner_grad(self, lambda_c: float, stop_grad_a: bool = False) -> Tensor:
        """Closed-form gradient of the inner loss w.r.t. the domain head."""
        resid = T.sub(T.softmax(self.f), T.constant(_onehot(self.y, self.k)))
        grad = T.scale(T.matmul(T.transpose(resid), self.phi), 1.0 / self.n)
        if lambda_c > 0:
            moment = cond_moment(self.a, self.b, self.y, stop_grad_a)
            a = T.stop_gradient(self.a) if stop_grad_a else self.a
            centered = T.group_center(self.phi, self.y, int(self.y.max()) + 1)
            reg = T.scale(T.matmul(T.transpose(a), centered), lambda_c / self.n)
            grad = T.add(grad, T.scale_rows(reg, np.sign(moment.value)))
        if self.mask is not None:
            grad = T.mul(grad, T.constant(self.mask))
        return grad


# --------------------------------------------------------------------------
# tensor-level losses (usable inside a Tape)


def inner_loss_t(pt: ParamTensors, w_base, domain_id, x, y, lambda_c, stop_grad_a=False, restrict_head=False) -> Tensor:
    terms = _DomainTerms(pt, w_base, pt.w_domain[domain_id], x, y, restrict_head)
    loss = T.softmax_xent(terms.f, terms.y)
    if lambda_c > 0:
        loss = T.add(loss, T.scale(c_cond_hat(terms.a, terms.b, terms.y, stop_grad_a), lambda_c))
    return loss


def inner_grad_t(pt: ParamTensors, w_base, domain_id, x, y, lambda_c, stop_grad_a=False, restrict_head=False) -> Tensor:
    terms = _DomainTerms(pt, w_base, pt.w_domain[domain_id], x, y, restrict_head)
    return terms.inner_grad(lambda_c, stop_grad_a)


def inner_grad_norm_sq_t(pt, w_base, domain_id, x, y, lambda_c, stop_grad_a=False, restrict_head=False) -> Tensor:
    return T.sum_all(T.square(inner_grad_t(pt, w_base, domain_id, x, y, lambda_c, stop_grad_a, restrict_head)))


def actir_loss_t(pt: ParamTensors, w_base, batches: Mapping, hyper: ActirHyper, inner_grads: Optional[dict] = None) -> Tensor:
    """Outer loss. When ``inner_grads`` is a dict it receives each domain's inner head gradient."""
    if not batches:
        raise ValueError("need at least one training domain")
    total = None
    for dom, (x, y) in batches.items():
        if dom not in pt.w_domain:
            raise KeyError(f"no head for training domain {dom!r}")
        terms = _DomainTerms(pt, w_base, pt.w_domain[dom], x, y, hyper.restrict_head)
        parts = []
        if hyper.gamma > 0:
            parts.append(T.scale(T.softmax_xent(terms.f, terms.y), hyper.gamma))
        if hyper.gamma < 1:
            parts.append(T.scale(T.softmax_xent(terms.a, terms.y), 1.0 - hyper.gamma))
        if hyper.lambda_g > 0 or inner_grads is not None:
            g = terms.inner_grad(hyper.lambda_c, hyper.stop_grad_a)
            if inner_grads is not None:
                inner_grads[dom] = g.value
            if hyper.lambda_g > 0:
                parts.append(T.scale(T.sum_all(T.square(g)), hyper.lambda_g))
        for p in parts:
            total = p if total is None else T.add(total, p)
    return total


def erm_loss_t(pt: ParamTensors, w_base, x, y) -> Tensor:
    terms = _DomainTerms(pt, w_base, None, x, y)
    return T.softmax_xent(terms.a, terms.y)


def irm_scale_grad_t(pt: ParamTensors, w_base, x, y) -> Tensor:
    """d/dw of the domain risk of ``w * W_base phi(x)`` at w = 1, in closed form."""
    terms = _DomainTerms(pt, w_base, None, x, y)
    resid = T.sub(T.softmax(terms.a), T.constant(_onehot(terms.y, terms.k)))
    return T.scale(T.sum_all(T.mul(resid, terms.a)), 1.0 / terms.n)


def irm_loss_t(pt: ParamTensors, w_base, batches: Mapping, penalty_weight: float) -> Tensor:
    """Mean over domains of risk plus ``penalty_weight`` times squared scale gradient."""
    if not batches:
        raise ValueError("need at least one training domain")
    total = None
    inv = 1.0 / len(batches)
    for x, y in batches.values():
        terms = _DomainTerms(pt, w_base, None, x, y)
        term = T.scale(T.softmax_xent(terms.a, terms.y), inv)
        if penalty_weight > 0:
            resid = T.sub(T.softmax(terms.a), T.constant(_onehot(terms.y, terms.k)))
            sg = T.scale(T.sum_all(T.mul(resid, terms.a)), 1.0 / terms.n)
            term = T.add(term, T.scale(T.square(sg), penalty_weight * inv))
        total = term if total is None else T.add(total, term)
    return total


# --------------------------------------------------------------------------
# value + gradient wrappers on ModelParams


def _value_and_grads(params: ModelParams, fn):
    pt = params.leaves()
    named = pt.named()
    with Tape() as tape:
        out = fn(pt)
    grads = tape.gradient(out, list(named.values()))
    return out.item(), dict(zip(named, grads))


def inner_loss(params: ModelParams, domain_id, batch, lambda_c, stop_grad_a=False, restrict_head=False) -> float:
    x, y = batch
    return inner_loss_t(params.leaves(), params.w_base, domain_id, x, y, lambda_c, stop_grad_a, restrict_head).item()


def inner_grad_norm_sq(params: ModelParams, domain_id, batch, lambda_c, stop_grad_a=False, restrict_head=False):
    """Squared Frobenius norm of the inner head gradient, with its gradients."""
    x, y = batch
    return _value_and_grads(
        params, lambda pt: inner_grad_norm_sq_t(pt, params.w_base, domain_id, x, y, lambda_c, stop_grad_a, restrict_head)
    )


def actir_objective(params: ModelParams, batches: Mapping, hyper: ActirHyper):
    return _value_and_grads(params, lambda pt: actir_loss_t(pt, params.w_base, batches, hyper))


def erm_objective(params: ModelParams, batch):
    x, y = batch
    value, grads = _value_and_grads(params, lambda pt: erm_loss_t(pt, params.w_base, x, y))
    return value, {n: g for n, g in grads.items() if n.startswith("phi.")}


def irm_objective(params: ModelParams, batches: Mapping, penalty_weight: float):
    value, grads = _value_and_grads(params, lambda pt: irm_loss_t(pt, params.w_base, batches, penalty_weight))
    return value, {n: g for n, g in grads.items() if n.startswith("phi.")}


# --------------------------------------------------------------------------
# optimizer


@dataclass
class OptimizerState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_step(state: OptimizerState, params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray], lr: float):
    """Bias-corrected Adam update; parameters without a gradient are left as-is.

    Returns ``(new_params, new_state)``; inputs are not modified.
    """
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    new_params = dict(params)
    m, v = dict(state.m), dict(state.v)
    for name, g in grads.items():
        p = params[name]
        if np.shape(g) != np.shape(p):
            raise ValueError(f"gradient shape {np.shape(g)} does not match parameter {name} {np.shape(p)}")
        mi = m.get(name, np.zeros_like(p))
        vi = v.get(name, np.zeros_like(p))
        mi = b1 * mi + (1.0 - b1) * g
        vi = b2 * vi + (1.0 - b2) * g * g
        mhat = mi / (1.0 - b1**t)
        vhat = vi / (1.0 - b2**t)
        new_params[name] = p - lr * mhat / (np.sqrt(vhat) + state.eps)
        m[name], v[name] = mi, vi
    return new_params, replace(state, m=m, v=v, step=t)


# --------------------------------------------------------------------------
# MAML baseline


def maml_outer_grads(params: ModelParams, splits: Mapping, inner_lr: float):
    """First-order MAML gradients; the inner step adapts only the last phi layer.

    ``splits`` maps domain id to ``((x_support, y_support), (x_query, y_query))``.
    Returns the mean query loss and gradients for every phi parameter.
    """
    last = len(params.phi) - 1
    names = [f"phi.{last}.w", f"phi.{last}.b"]
    total = 0.0
    acc: dict[str, np.ndarray] = {}
    for (xs, ys), (xq, yq) in splits.values():
        _, g_in = erm_objective(params, (xs, ys))
        adapted = params.replace({n: params.named_trainable()[n] - inner_lr * g_in[n] for n in names})
        loss, g_out = erm_objective(adapted, (xq, yq))
        total += loss
        for n, g in g_out.items():
            acc[n] = acc.get(n, 0.0) + g
    scale = 1.0 / len(splits)
    return total * scale, {n: g * scale for n, g in acc.items()}


def maml_outer_step(params: ModelParams, splits: Mapping, inner_lr: float, outer_lr: float, state: Optional[OptimizerState] = None):
    """One first-order MAML step; Adam when ``state`` is given, else plain SGD."""
    loss, grads = maml_outer_grads(params, splits, inner_lr)
    named = params.named_trainable()
    if state is None:
        return params.replace({n: named[n] - outer_lr * g for n, g in grads.items()}), None, loss
    new, state = adam_step(state, named, grads, outer_lr)
    return params.replace(new), state, loss


# --------------------------------------------------------------------------
# training loops


def _batches(domains: Mapping, batch_size, rng):
    out = {}
    for dom, ds in domains.items():
        if batch_size is None or batch_size >= len(ds):
            out[dom] = (ds.x, ds.y)
        else:
            idx = rng.choice(len(ds), size=batch_size, replace=False)
            out[dom] = (ds.x[idx], ds.y[idx])
    return out


def train_actir(params: ModelParams, domains: Mapping, hyper: ActirHyper, rng=None, log_every=0, logger=None):
    """Adam on phi and every domain head; the base head is never touched.

    With ``head_update="inner"`` each domain head descends its own inner loss
    (tracking the inner arg-min) while phi descends the outer loss. With
    ``"outer"`` the heads also descend the outer loss.
    """
    params = params.copy()
    for dom in domains:
        params.w_domain.setdefault(dom, np.zeros_like(params.w_base))
    state = OptimizerState()
    history = []
    for step in range(hyper.steps):
        batches = _batches(domains, hyper.batch_size, rng)
        if hyper.head_update == "inner":
            inner: dict = {}
            value, grads = _value_and_grads(params, lambda pt: actir_loss_t(pt, params.w_base, batches, hyper, inner))
            grads.update({f"head.{d}": g for d, g in inner.items()})
        else:
            value, grads = actir_objective(params, batches, hyper)
        new, state = adam_step(state, params.named_trainable(), grads, hyper.lr)
        params = params.replace(new)
        history.append(value)
        if logger and log_every and step % log_every == 0:
            logger.debug("actir step %d loss %.6f", step, value)
    return params, history


def train_erm(params: ModelParams, domains: Mapping, hyper: BaselineHyper, rng=None):
    params = params.copy()
    state = OptimizerState()
    history = []
    for _ in range(hyper.steps):
        b = _batches(domains, hyper.batch_size, rng)
        x = np.concatenate([v[0] for v in b.values()])
        y = np.concatenate([v[1] for v in b.values()])
        value, grads = erm_objective(params, (x, y))
        new, state = adam_step(state, params.named_trainable(), grads, hyper.lr)
        params = params.replace(new)
        history.append(value)
    return params, history


def train_irm(params: ModelParams, domains: Mapping, hyper: BaselineHyper, rng=None):
    """IRM with the usual schedule: weight 1 until ``irm_anneal_steps``, then the full
    penalty with the loss rescaled by its inverse; Adam is reset at the switch."""
    params = params.copy()
    state = OptimizerState()
    history = []
    for step in range(hyper.steps):
        weight = hyper.irm_penalty if step >= hyper.irm_anneal_steps else 1.0
        if step == hyper.irm_anneal_steps:
            state = OptimizerState()
        value, grads = irm_objective(params, _batches(domains, hyper.batch_size, rng), weight)
        if weight > 1.0:
            grads = {n: g / weight for n, g in grads.items()}
        new, state = adam_step(state, params.named_trainable(), grads, hyper.lr)
        params = params.replace(new)
        history.append(value)
    return params, history


def train_maml(params: ModelParams, domains: Mapping, hyper: BaselineHyper, rng):
    params = params.copy()
    state = OptimizerState()
    history = []
    for _ in range(hyper.steps):
        splits = {}
        for dom, (x, y) in _batches(domains, hyper.batch_size, rng).items():
            perm = rng.permutation(len(y))
            half = len(y) // 2
            s, q = perm[:half], perm[half:]
            splits[dom] = ((x[s], y[s]), (x[q], y[q]))
        params, state, loss = maml_outer_step(params, splits, hyper.maml_inner_lr, hyper.lr, state)
        history.append(loss)
    return params, history
