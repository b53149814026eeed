"""Representation network plus fixed invariant head and per-domain heads.

Predictions for domain ``e`` are ``(W_base + W_e) @ phi(x)``; the invariant
predictor is ``W_base @ phi(x)``, i.e. the first ``k`` units of ``phi(x)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import tensor as T
from .tensor import Tensor


@dataclass(frozen=True)
class RepSplit:
    k: int  # invariant units, one per class
    m: int  # adaptive units

    def __post_init__(self):
        if self.k < 2 or self.m < 1:
            raise ValueError(f"need k >= 2 and m >= 1, got k={self.k}, m={self.m}")

    @property
    def width(self) -> int:
        return self.k + self.m


def base_head(split: RepSplit) -> np.ndarray:
    w = np.zeros((split.k, split.width))
    w[:, : split.k] = np.eye(split.k)
    return w


@dataclass
class ModelParams:
    phi: list[tuple[np.ndarray, np.ndarray]]
    split: RepSplit
    w_base: np.ndarray
    w_domain: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def k(self) -> int:
        return self.split.k

    @property
    def layer_sizes(self) -> list[int]:
        return [self.phi[0][0].shape[1]] + [w.shape[0] for w, _ in self.phi]

    def named_trainable(self) -> dict[str, np.ndarray]:
        """Trainable arrays in a fixed order; the base head is excluded."""
        out = {}
        for i, (w, b) in enumerate(self.phi):
            out[f"phi.{i}.w"] = w
            out[f"phi.{i}.b"] = b
        for dom in sorted(self.w_domain):
            out[f"head.{dom}"] = self.w_domain[dom]
        return out

    def replace(self, named: dict[str, np.ndarray]) -> "ModelParams":
        phi = [
            (named.get(f"phi.{i}.w", w), named.get(f"phi.{i}.b", b))
            for i, (w, b) in enumerate(self.phi)
        ]
        heads = {d: named.get(f"head.{d}", w) for d, w in self.w_domain.items()}
        return ModelParams(phi, self.split, self.w_base, heads)

    def copy(self) -> "ModelParams":
        return ModelParams(
            [(w.copy(), b.copy()) for w, b in self.phi],
            self.split,
            self.w_base.copy(),
            {d: w.copy() for d, w in self.w_domain.items()},
        )

    def leaves(self) -> "ParamTensors":
        return ParamTensors(
            [(Tensor(w), Tensor(b)) for w, b in self.phi],
            self.split,
            {d: Tensor(w) for d, w in sorted(self.w_domain.items())},
        )


@dataclass
class ParamTensors:
    """Tape-tracked view of the trainable parameters."""

    phi: list[tuple[Tensor, Tensor]]
    split: RepSplit
    w_domain: dict[str, Tensor]

    def named(self) -> dict[str, Tensor]:
        out = {}
        for i, (w, b) in enumerate(self.phi):
            out[f"phi.{i}.w"] = w
            out[f"phi.{i}.b"] = b
        for dom, w in self.w_domain.items():
            out[f"head.{dom}"] = w
        return out


def init_model(
    split: RepSplit,
    layer_sizes: Sequence[int],
    rng: np.random.Generator,
    domains: Sequence[str] = (),
) -> ModelParams:
    """Fan-in scaled uniform init for phi, ``W_base = [I_k | 0]``, zero domain heads."""
    sizes = list(layer_sizes)
    if len(sizes) < 2:
        raise ValueError("need at least an input and an output size")
    if sizes[-1] != split.width:
        raise ValueError(f"last layer has {sizes[-1]} units, split needs k+m={split.width}")
    if any(s <= 0 for s in sizes):
        raise ValueError(f"layer sizes must be positive: {sizes}")
    phi = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        b = rng.uniform(-bound, bound, size=fan_out)
        phi.append((w, b))
    heads = {d: np.zeros((split.k, split.width)) for d in domains}
    return ModelParams(phi, split, base_head(split), heads)


# --------------------------------------------------------------------------
# numpy evaluation


def representation(params: ModelParams, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != params.layer_sizes[0]:
        raise ValueError(f"input width {x.shape[-1]} does not match model input {params.layer_sizes[0]}")
    layers = [(Tensor(w), Tensor(b)) for w, b in params.phi]
    return T.forward_mlp(layers, Tensor(x)).value


def invariant_logits(params: ModelParams, x) -> np.ndarray:
    return representation(params, x)[..., : params.k]


def domain_logits(params: ModelParams, domain_id: str, x) -> np.ndarray:
    if domain_id not in params.w_domain:
        raise KeyError(f"unknown domain {domain_id!r}")
    head = params.w_base + params.w_domain[domain_id]
    return representation(params, x) @ head.T


def head_logits(params: ModelParams, head: np.ndarray, x) -> np.ndarray:
    return representation(params, x) @ np.asarray(head).T


# --------------------------------------------------------------------------
# checkpoints


def to_dict(params: ModelParams) -> dict:
    return {
        "k": params.split.k,
        "m": params.split.m,
        "layer_sizes": params.layer_sizes,
        "phi": [{"w": w.tolist(), "b": b.tolist()} for w, b in params.phi],
        "w_base": params.w_base.tolist(),
        "w_domain": {d: w.tolist() for d, w in sorted(params.w_domain.items())},
    }


def from_dict(data: dict) -> ModelParams:
    split = RepSplit(int(data["k"]), int(data["m"]))
    phi = [(np.array(layer["w"], dtype=np.float64), np.array(layer["b"], dtype=np.float64)) for layer in data["phi"]]
    params = ModelParams(
        phi,
        split,
        np.array(data["w_base"], dtype=np.float64),
        {d: np.array(w, dtype=np.float64) for d, w in data["w_domain"].items()},
    )
    if params.layer_sizes != list(data["layer_sizes"]):
        raise ValueError("checkpoint layer sizes do not match its weights")
    return params


def save_checkpoint(params: ModelParams, path) -> None:
    # json writes floats with repr, which round-trips float64 exactly
    Path(path).write_text(json.dumps(to_dict(params)))


def load_checkpoint(path) -> ModelParams:
    return from_dict(json.loads(Path(path).read_text()))
