"""Invariance quantification: shift-invariance and linear-combination indices.

Both indices are ratios of mean activations, so they are invariant to uniform
rescaling of a unit's output.  The window mask exp(-(r/sigma)^4) is applied
identically to numerator and denominator of the shift index so the measured
effect is purely positional.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .models import UnitModel
from .priors import PriorModel
from .synthesis import (
    Adam,
    SweepCurve,
    SynthesisConfig,
    SynthesisError,
    _has_converged,
    precondition_gradient,
    project_norm,
    resolve_radius,
    tangent_project,
)
from .tensor import Tensor


class MetricError(ValueError):
    """Raised when an invariance index is undefined (dead unit, missing reference)."""


def mask_sigma(rf: int, ratio: float = 2.5) -> float:
    """Window sigma from the receptive-field size (RF/sigma fixed, default 2.5)."""
    return rf / ratio


def window_mask(size: int, sigma: float) -> np.ndarray:
    """Radial window exp(-(r/sigma)^4) centred on the patch."""
    if sigma <= 0:
        raise ValueError(f"mask sigma must be positive, got {sigma}")
    half = (size - 1) / 2.0
    ys, xs = np.mgrid[0:size, 0:size]
    r2 = (xs - half) ** 2 + (ys - half) ** 2
    return np.exp(-((r2 / (sigma * sigma)) ** 2))


def default_crop_stride(rf: int) -> int:
    """All crops for small units, subsampled for larger ones to bound runtime."""
    return 1 if rf <= 16 else math.ceil(rf / 16)


def extract_crops(texture: np.ndarray, rf: int, stride: int) -> np.ndarray:
    """RF-sized crops [B,C,rf,rf] of a [C,S,S] texture at the given stride."""
    texture = np.asarray(texture, dtype=np.float64)
    if texture.ndim != 3:
        raise ValueError(f"texture must be [C,H,W], got shape {texture.shape}")
    c, h, w = texture.shape
    if h < rf or w < rf:
        raise ValueError(f"texture {h}x{w} smaller than receptive field {rf}")
    crops = []
    for i in range(0, h - rf + 1, stride):
        for j in range(0, w - rf + 1, stride):
            crops.append(texture[:, i : i + rf, j : j + rf])
    return np.stack(crops)


def windowed_mean_activation(unit: UnitModel, images: np.ndarray, mask: np.ndarray) -> float:
    """Mean activation over images after multiplying each by the window mask."""
    images = np.asarray(images, dtype=np.float64)
    masked = images * mask[None, None, :, :]
    return float(np.mean(unit.activations(Tensor(masked)).data))


def optimize_texture(unit: UnitModel, prior: PriorModel, cfg: SynthesisConfig,
                     crop_stride: int | None = None, mask_ratio: float = 2.5,
                     size_factor: int = 2) -> np.ndarray:
    """Optimize a texture twice the unit's RF whose windowed crops all activate it.

    Maximizes the mean activation over all RF-sized crops (at the given
    stride), each multiplied by the window mask before evaluation.  The
    texture is kept on a norm sphere scaled from the per-crop radius by the
    square root of the area ratio, so crops carry the same energy budget as
    synthesized templates.
    """
    cfg.validate()
    rf = unit.rf
    channels = unit.input_shape[0]
    size = size_factor * rf
    stride = default_crop_stride(rf) if crop_stride is None else crop_stride
    if stride < 1:
        raise ValueError(f"crop stride must be >= 1, got {stride}")
    mask = window_mask(rf, mask_sigma(rf, mask_ratio))
    radius = resolve_radius(cfg, unit) * (size / rf)

    rng = np.random.default_rng(cfg.seed)
    texture = project_norm(rng.standard_normal((channels, size, size)), radius, rng)

    n_crops = len(range(0, size - rf + 1, stride)) ** 2
    mask_batch = Tensor(np.broadcast_to(mask, (n_crops, channels, rf, rf)).copy())

    adam = Adam(texture.shape, cfg.lr)
    trace: list[float] = []
    for step in range(cfg.max_steps):
        x = Tensor(texture, requires_grad=True)
        patches = T.extract_patches(x, rf, stride)
        masked = T.mul(patches, mask_batch)
        loss = T.tmean(unit.activations(masked))
        if cfg.alpha > 0.0:
            loss = T.add(loss, T.scale(prior.log_prob(x), cfg.alpha))
        value = loss.item()
        if not np.isfinite(value):
            raise SynthesisError(f"non-finite texture objective at step {step}")
        trace.append(value)
        if _has_converged(trace, cfg.conv_window, cfg.conv_tol):
            break
        loss.backward()
        grad = precondition_gradient(x.grad) if cfg.precondition else x.grad
        grad = tangent_project(grad, texture)
        texture = project_norm(texture + adam.step(grad), radius, rng)
    return texture


def shift_invariance_from_crops(unit: UnitModel, crops: np.ndarray,
                                templates: np.ndarray, mask_ratio: float = 2.5) -> float:
    """Index from pre-extracted crops: windowed crop mean / windowed template mean."""
    mask = window_mask(unit.rf, mask_sigma(unit.rf, mask_ratio))
    denom = windowed_mean_activation(unit, templates, mask)
    if denom == 0.0:
        raise MetricError("unit is dead on its own templates (zero windowed activation)")
    return windowed_mean_activation(unit, crops, mask) / denom


def shift_invariance_index(unit: UnitModel, texture: np.ndarray, templates: np.ndarray,
                           crop_stride: int | None = None, mask_ratio: float = 2.5) -> float:
    """Mean windowed activation of texture crops relative to the diverse templates."""
    stride = default_crop_stride(unit.rf) if crop_stride is None else crop_stride
    crops = extract_crops(texture, unit.rf, stride)
    return shift_invariance_from_crops(unit, crops, templates, mask_ratio)


def pair_averages(templates: np.ndarray) -> np.ndarray:
    """Pixel-space averages of all template pairs, renormalized to the template norm.

    A pair whose average is exactly zero cannot be renormalized and is kept as
    a zero image.
    """
    templates = np.asarray(templates, dtype=np.float64)
    n = templates.shape[0]
    if n < 2:
        raise ValueError("need at least two templates")
    target = float(np.mean([np.linalg.norm(t.ravel()) for t in templates]))
    out = []
    for i in range(n):
        for j in range(i + 1, n):
            avg = 0.5 * (templates[i] + templates[j])
            norm = float(np.linalg.norm(avg.ravel()))
            out.append(avg * (target / norm) if norm > 0.0 else avg)
    return np.stack(out)


def linear_combination_index(unit: UnitModel, templates: np.ndarray) -> float:
    """Mean activation of renormalized template-pair averages relative to templates."""
    averages = pair_averages(templates)
    template_acts = unit.activations(Tensor(np.asarray(templates, dtype=np.float64))).data
    denom = float(np.mean(template_acts))
    if denom == 0.0:
        raise MetricError("unit is dead on its own templates (zero mean activation)")
    pair_acts = unit.activations(Tensor(averages)).data
    return float(np.mean(pair_acts)) / denom


def invariance_score(curve: SweepCurve) -> float:
    """Min feature distance at the optimal lambda relative to the lambda=0 level."""
    dist0 = curve.distance_at_zero
    if dist0 == 0.0:
        raise MetricError("zero minimum distance at lambda=0; score undefined")
    idx = curve.lambdas.index(curve.optimal_lambda)
    return float(curve.min_distance[idx]) / dist0


@dataclass
class InvarianceReport:
    unit: str
    shift_invariance: float
    linear_combination: float
    optimal_lambda: float
    min_distance_rel: float
