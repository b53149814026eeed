"""Invariant evaluation, few-shot head fine-tuning and representation diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from . import kernels
from .datagen import DomainDataset
from .model import ModelParams, init_model, invariant_logits, representation
from .objectives import ActirHyper, train_actir


@dataclass
class AdaptationReport:
    n_support: int
    repeats: int
    mean: float
    stderr: float
    accuracies: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "n_support": self.n_support,
            "repeats": self.repeats,
            "mean": self.mean,
            "stderr": self.stderr,
            "accuracies": list(self.accuracies),
        }


@dataclass
class UnitActivationStats:
    z_values: tuple[int, int]
    means: np.ndarray  # (units, 2): mean activation for z_lo, z_hi
    stds: np.ndarray  # (units, 2)
    scores: np.ndarray  # (units,)
    histograms: list[dict] = field(default_factory=list)

    def histogram_rows(self) -> list[tuple]:
        """Rows ``(unit, z, bin_lo, bin_hi, count)`` for CSV export."""
        rows = []
        for h in self.histograms:
            edges = h["edges"]
            for z, counts in h["counts"].items():
                for b, c in enumerate(counts):
                    rows.append((h["unit"], z, float(edges[b]), float(edges[b + 1]), int(c)))
        return rows


def mean_stderr(values: Sequence[float]) -> tuple[float, float]:
    """Mean and standard error (sample std / sqrt(n)); stderr is 0 for one value."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("no values")
    if arr.size == 1:
        return float(arr[0]), 0.0
    return float(arr.mean()), float(arr.std(ddof=1) / math.sqrt(arr.size))


def evaluate_accuracy(predictor: Callable[[np.ndarray], np.ndarray], dataset: DomainDataset) -> float:
    """Fraction of examples whose argmax logit equals the label (ties -> lowest class)."""
    if len(dataset) == 0:
        raise ValueError(f"cannot evaluate on empty domain {dataset.domain_id!r}")
    logits = np.asarray(predictor(dataset.x))
    return float(np.mean(np.argmax(logits, axis=1) == dataset.y))


def invariant_accuracy(params: ModelParams, dataset: DomainDataset) -> float:
    return evaluate_accuracy(lambda x: invariant_logits(params, x), dataset)


def fine_tune_head(params: ModelParams, support, steps: int, lr: float, features=None) -> np.ndarray:
    """Adapted ``k x (k+m)`` head: Adam from ``W_base`` on the support set.

    ``support`` is a DomainDataset or an ``(x, y)`` pair. ``phi`` and ``W_base``
    are not modified. Precomputed ``features`` skip the representation pass.
    """
    x, y = (support.x, support.y) if isinstance(support, DomainDataset) else support
    y = np.asarray(y, dtype=np.int64)
    if len(y) == 0:
        raise ValueError("empty support set")
    feats = representation(params, x) if features is None else features
    return kernels.finetune_head(feats, y, params.w_base, int(steps), float(lr))


def _repeat_rngs(rng: np.random.Generator, repeats: int) -> list[np.random.Generator]:
    seeds = rng.integers(0, 2**63 - 1, size=repeats)
    return [np.random.Generator(np.random.Philox(int(s))) for s in seeds]


def adaptation_protocol(
    params: ModelParams,
    domain: DomainDataset,
    n_support: int,
    repeats: int,
    steps: int,
    lr: float,
    rng: np.random.Generator,
) -> AdaptationReport:
    """Repeated few-shot adaptation.

    Each repeat draws ``n_support`` examples without replacement, fine-tunes a
    head on them and scores it on the rest of the domain.
    """
    n = len(domain)
    if n_support >= n:
        raise ValueError(f"n_support={n_support} must be smaller than the domain size {n}")
    if n_support < 1 or repeats < 1:
        raise ValueError("n_support and repeats must be positive")
    feats = representation(params, domain.x)
    accs = []
    for r_rng in _repeat_rngs(rng, repeats):
        perm = r_rng.permutation(n)
        sup, rest = perm[:n_support], perm[n_support:]
        head = kernels.finetune_head(feats[sup], domain.y[sup], params.w_base, int(steps), float(lr))
        pred = np.argmax(feats[rest] @ head.T, axis=1)
        accs.append(float(np.mean(pred == domain.y[rest])))
    mean, se = mean_stderr(accs)
    return AdaptationReport(n_support, repeats, mean, se, accs)


def dependence_score(act: np.ndarray, z: np.ndarray, z_lo, z_hi) -> tuple[float, float, float, float, float]:
    lo, hi = act[z == z_lo], act[z == z_hi]
    n_lo, n_hi = len(lo), len(hi)
    var_lo = lo.var(ddof=1) if n_lo > 1 else 0.0
    var_hi = hi.var(ddof=1) if n_hi > 1 else 0.0
    dof = n_lo + n_hi - 2
    pooled = math.sqrt(((n_lo - 1) * var_lo + (n_hi - 1) * var_hi) / dof) if dof > 0 else 0.0
    score = abs(hi.mean() - lo.mean()) / (pooled + 1e-8)
    return lo.mean(), hi.mean(), math.sqrt(var_lo), math.sqrt(var_hi), score


def disentanglement_stats(params: ModelParams, dataset: DomainDataset, bins: int = 20) -> UnitActivationStats:
    """Per-unit activation statistics split by the unstable factor ``z``.

    The dependence score of a unit is ``|mean(z_hi) - mean(z_lo)| / (pooled std + 1e-8)``.
    """
    if dataset.z is None:
        raise ValueError(f"domain {dataset.domain_id!r} does not record the unstable factor")
    zs = np.unique(dataset.z)
    if len(zs) != 2:
        raise ValueError(f"need exactly two observed z values, got {zs.tolist()}")
    z_lo, z_hi = int(zs[0]), int(zs[1])
    acts = representation(params, dataset.x)
    units = acts.shape[1]
    means = np.zeros((units, 2))
    stds = np.zeros((units, 2))
    scores = np.zeros(units)
    hists = []
    for u in range(units):
        a = acts[:, u]
        m_lo, m_hi, s_lo, s_hi, score = dependence_score(a, dataset.z, z_lo, z_hi)
        means[u] = (m_lo, m_hi)
        stds[u] = (s_lo, s_hi)
        scores[u] = score
        lo, hi = float(a.min()), float(a.max())
        if hi <= lo:
            lo, hi = lo - 0.5, hi + 0.5
        edges = np.linspace(lo, hi, bins + 1)
        counts = {z: np.histogram(a[dataset.z == z], bins=edges)[0].tolist() for z in (z_lo, z_hi)}
        hists.append({"unit": u, "edges": edges.tolist(), "counts": counts})
    return UnitActivationStats((z_lo, z_hi), means, stds, scores, hists)


def selection_key(hyper: ActirHyper, val_acc: float) -> tuple:
    """Sort key for grid points: best validation accuracy, then the weaker penalties."""
    return (-val_acc, hyper.lambda_g, hyper.lambda_c, hyper.gamma, hyper.lr, hyper.steps)


def train_grid(
    grid: Iterable[ActirHyper],
    train_domains: dict[str, DomainDataset],
    val_domain: DomainDataset,
    init: Callable[[], ModelParams],
    rng: Optional[np.random.Generator] = None,
) -> list[tuple[ActirHyper, ModelParams, float]]:
    """Train one model per distinct grid point, each from ``init()``.

    Returns ``(hyper, trained_params, val_acc)`` in grid order.
    """
    unique = list(dict.fromkeys(grid))
    if not unique:
        raise ValueError("empty hyperparameter grid")
    out = []
    for hyper in unique:
        trained, _ = train_actir(init(), train_domains, hyper, rng)
        out.append((hyper, trained, invariant_accuracy(trained, val_domain)))
    return out


def select_and_train(
    grid: Iterable[ActirHyper],
    train_domains: dict[str, DomainDataset],
    val_domain: DomainDataset,
    init: Callable[[], ModelParams],
    rng: Optional[np.random.Generator] = None,
):
    """Like :func:`select_hyperparams` but also returns the winning model.

    Returns ``(best, trained_params, [(hyper, val_acc), ...])``.
    """
    trained = train_grid(grid, train_domains, val_domain, init, rng)
    models = {h: p for h, p, _ in trained}
    scored = sorted(((h, acc) for h, _, acc in trained), key=lambda item: selection_key(*item))
    best = scored[0][0]
    return best, models[best], scored


def select_hyperparams(
    grid: Iterable[ActirHyper],
    train_domains: dict[str, DomainDataset],
    val_domain: DomainDataset,
    init: Callable[[], ModelParams],
    rng: Optional[np.random.Generator] = None,
):
    """Train one model per grid point and keep the best validation accuracy.

    Every point starts from ``init()``, so the choice does not depend on grid
    order. Ties go to smaller ``lambda_g``, then smaller ``lambda_c``.
    Returns ``(best, [(hyper, val_acc), ...])`` in sorted order.
    """
    best, _, scored = select_and_train(grid, train_domains, val_domain, init, rng)
    return best, scored
