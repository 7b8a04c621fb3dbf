"""Pluggable differentiable image log-density terms.

The built-in smoothness prior scores an image by the negated total squared
forward difference across x and y, per channel: a proper unnormalized
log-density (up to a constant) that is 0 exactly for per-channel constant
images and negative otherwise.  The synthesizer applies its own weight; the
prior itself is strength-free.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from . import tensor as T
from .tensor import Tensor


@dataclass(frozen=True)
class PriorModel:
    kind: str
    log_prob: Callable[[Tensor], Tensor]


def _zero_log_prob(x) -> Tensor:
    return Tensor(0.0)


def _smoothness_log_prob(x) -> Tensor:
    x = x if isinstance(x, Tensor) else Tensor(x)
    if x.ndim not in (3, 4):
        raise ValueError(f"smoothness prior expects [C,H,W] or [B,C,H,W], got {x.shape}")
    dx = T.sub(T.slice_tensor(x, (Ellipsis, slice(None), slice(1, None))),
               T.slice_tensor(x, (Ellipsis, slice(None), slice(None, -1))))
    dy = T.sub(T.slice_tensor(x, (Ellipsis, slice(1, None), slice(None))),
               T.slice_tensor(x, (Ellipsis, slice(None, -1), slice(None))))
    return T.scale(T.add(T.tsum(T.square(dx)), T.tsum(T.square(dy))), -1.0)


def none_prior() -> PriorModel:
    return PriorModel("none", _zero_log_prob)


def smoothness_prior() -> PriorModel:
    return PriorModel("smoothness", _smoothness_log_prob)


def make_prior(name: str) -> PriorModel:
    if name == "none":
        return none_prior()
    if name == "smoothness":
        return smoothness_prior()
    raise ValueError(f"unknown prior {name!r}; choose 'none' or 'smoothness'")
