"""Gradient-ascent synthesis of diverse, maximally activating image batches.

The objective for a batch x_1..x_n is

    sum_i act(x_i)  +  alpha * sum_i log_prob(x_i)  +  lam * D(x_1..x_n)

where D is the minimum (or average) pairwise distance in the unit's diversity
feature space.  Images live on a fixed-norm sphere; each Adam step is followed
by re-projection.  Gradients are optionally preconditioned in the frequency
domain (1/sqrt(f) per spatial frequency bin) before entering Adam.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import tensor as T
from .models import UnitModel
from .priors import PriorModel
from .tensor import Tensor

DIVERSITY_MODES = ("min", "average")


class SynthesisError(RuntimeError):
    """Raised when an optimization run produces a non-finite objective."""


@dataclass
class SynthesisConfig:
    n: int = 6
    lam: float = 0.0
    alpha: float = 0.0005
    lr: float = 0.1
    max_steps: int = 1000
    conv_window: int = 50
    conv_tol: float = 1e-6
    norm_radius: float | None = None  # None: half a natural-patch norm for the unit size
    act_threshold: float = 0.8
    mode: str = "min"
    precondition: bool = True
    seed: int = 0

    def validate(self) -> None:
        if self.n < 2:
            raise ValueError(f"batch size n must be >= 2, got {self.n}")
        if self.lam < 0:
            raise ValueError(f"diversity weight must be >= 0, got {self.lam}")
        if self.norm_radius is not None and self.norm_radius <= 0:
            raise ValueError(f"norm radius must be positive, got {self.norm_radius}")
        if not (0.0 < self.act_threshold <= 1.0):
            raise ValueError(f"activation threshold must be in (0, 1], got {self.act_threshold}")
        if self.mode not in DIVERSITY_MODES:
            raise ValueError(f"diversity mode must be one of {DIVERSITY_MODES}, got {self.mode!r}")
        if self.lr <= 0:
            raise ValueError(f"learning rate must be positive, got {self.lr}")
        if self.max_steps < 1:
            raise ValueError(f"max_steps must be >= 1, got {self.max_steps}")
        if self.conv_window < 1:
            raise ValueError(f"conv_window must be >= 1, got {self.conv_window}")
        if self.alpha < 0:
            raise ValueError(f"prior weight alpha must be >= 0, got {self.alpha}")


@dataclass
class SynthesisResult:
    images: np.ndarray            # [n, C, H, W]
    activations: np.ndarray       # [n]
    distance_matrix: np.ndarray   # [n, n] feature-space distances
    min_distance: float
    trace: np.ndarray             # objective value per step (before that step's update)
    steps: int
    converged: bool


@dataclass
class SweepCurve:
    """Per-lambda (mean activation, min distance) trade-off with the selected optimum."""

    lambdas: tuple[float, ...]
    mean_activation: np.ndarray     # [L] averaged over repeats
    min_distance: np.ndarray        # [L] averaged over repeats
    optimal_lambda: float
    act_threshold: float
    per_run_activation: np.ndarray = field(repr=False, default=None)  # [L, R]
    per_run_distance: np.ndarray = field(repr=False, default=None)    # [L, R]

    @property
    def zero_index(self) -> int:
        return self.lambdas.index(0.0)

    @property
    def activation_at_zero(self) -> float:
        return float(self.mean_activation[self.zero_index])

    @property
    def distance_at_zero(self) -> float:
        return float(self.min_distance[self.zero_index])

    def normalized(self) -> tuple[np.ndarray, np.ndarray]:
        """Activations and distances rescaled so the lambda=0 point is (1, 1)."""
        act0 = self.activation_at_zero
        dist0 = self.distance_at_zero
        if act0 == 0.0:
            raise ValueError("cannot normalize: zero activation at lambda=0")
        if dist0 == 0.0:
            raise ValueError("cannot normalize: zero minimum distance at lambda=0")
        return self.mean_activation / act0, self.min_distance / dist0


class Adam:
    """Adam moments for ascent steps; returns the update to add."""

    def __init__(self, shape, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0

    def step(self, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        mhat = self.m / (1.0 - self.beta1**self.t)
        vhat = self.v / (1.0 - self.beta2**self.t)
        return self.lr * mhat / (np.sqrt(vhat) + self.eps)


def feature_distance(unit: UnitModel, x_i: Tensor, x_j: Tensor) -> Tensor:
    """Euclidean distance between the unit's diversity features of two images."""
    return T.l2norm(T.sub(unit.features(x_i), unit.features(x_j)))


def _pair_distances(rows: Sequence[Tensor]) -> list[Tensor]:
    """Distance tensors for all unordered pairs, in lexicographic order."""
    dists = []
    for i in range(len(rows)):
        for j in range(i + 1, len(rows)):
            dists.append(T.l2norm(T.sub(rows[i], rows[j])))
    return dists


def _combine_pairs(dists: list[Tensor], mode: str) -> Tensor:
    if mode == "min":
        values = [d.item() for d in dists]
        best = min(range(len(values)), key=lambda idx: (values[idx], idx))
        return dists[best]  # subgradient flows only through the argmin pair
    return T.scale(T.add_n(dists), 1.0 / len(dists))


def diversity_term(batch: Sequence[Tensor] | Tensor, unit: UnitModel, mode: str = "min") -> Tensor:
    """Minimum (or average) pairwise feature distance over a batch of images."""
    if mode not in DIVERSITY_MODES:
        raise ValueError(f"diversity mode must be one of {DIVERSITY_MODES}, got {mode!r}")
    if isinstance(batch, Tensor):
        feats = unit.evaluate(batch)[1]
        rows = [T.slice_tensor(feats, i) for i in range(batch.shape[0])]
    else:
        rows = [unit.features(x) for x in batch]
    if len(rows) < 2:
        raise ValueError("diversity term needs at least two images")
    return _combine_pairs(_pair_distances(rows), mode)


def precondition_gradient(grad: np.ndarray) -> np.ndarray:
    """Rescale each frequency component of a [C,H,W] gradient by 1/sqrt(f).

    f is the radial frequency in cycles/pixel from the signed per-axis bin
    frequencies; the DC bin uses the smallest nonzero f so its scale stays
    tied to the lowest represented frequency.
    """
    grad = np.asarray(grad, dtype=np.float64)
    if grad.ndim != 3:
        raise ValueError(f"precondition_gradient expects [C,H,W], got {grad.shape}")
    _, h, w = grad.shape
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.fftfreq(w)[None, :]
    f = np.sqrt(fx * fx + fy * fy)
    f[0, 0] = min(1.0 / h, 1.0 / w)
    scaling = 1.0 / np.sqrt(f)
    out = np.empty_like(grad)
    for c in range(grad.shape[0]):
        out[c] = T.irfft2(T.rfft2(grad[c]) * scaling, h, w)
    return out


def project_norm(x: np.ndarray, radius: float, rng: np.random.Generator | None = None) -> np.ndarray:
    """Rescale x onto the sphere of the given L2 norm.

    A zero input cannot be projected; it is re-initialized from seeded noise
    at the radius instead.
    """
    if radius <= 0:
        raise ValueError(f"norm radius must be positive, got {radius}")
    x = np.asarray(x, dtype=np.float64)
    norm = float(np.sqrt(np.sum(x * x)))
    if norm == 0.0:
        rng = rng if rng is not None else np.random.default_rng(0)
        fresh = rng.standard_normal(x.shape)
        return fresh * (radius / np.sqrt(np.sum(fresh * fresh)))
    return x * (radius / norm)


NATURAL_PIXEL_RMS = 52.0  # rough grayscale pixel standard deviation of photographs


def default_radius(input_shape) -> float:
    """Half the typical norm of a natural patch of the given shape.

    Mirrors the "half the average natural-patch norm" heuristic without
    needing a patch dataset: pixel RMS of ~52 around the mean.
    """
    n_pixels = int(np.prod(input_shape))
    return 0.5 * NATURAL_PIXEL_RMS * float(np.sqrt(n_pixels))


def resolve_radius(cfg: SynthesisConfig, unit: UnitModel) -> float:
    return cfg.norm_radius if cfg.norm_radius is not None else default_radius(unit.input_shape)


def tangent_project(grad: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Remove the radial component of a gradient at a point on the norm sphere.

    Ascent along the sphere only moves through tangent directions; feeding
    Adam the raw gradient lets its per-coordinate normalization lock onto the
    constant radial part and freeze the constrained dynamics.
    """
    sq = float(np.vdot(x, x))
    if sq == 0.0:
        return grad
    return grad - (float(np.vdot(grad, x)) / sq) * x


def _objective(unit: UnitModel, prior: PriorModel, cfg: SynthesisConfig,
               x: Tensor) -> tuple[Tensor, Tensor]:
    acts, feats = unit.evaluate(x)
    loss = T.tsum(acts)
    if cfg.alpha > 0.0:
        loss = T.add(loss, T.scale(prior.log_prob(x), cfg.alpha))
    if cfg.lam > 0.0:
        rows = [T.slice_tensor(feats, i) for i in range(cfg.n)]
        div = _combine_pairs(_pair_distances(rows), cfg.mode)
        loss = T.add(loss, T.scale(div, cfg.lam))
    return loss, acts


def _has_converged(trace: list[float], window: int, tol: float) -> bool:
    if len(trace) < window + 1:
        return False
    recent = trace[-(window + 1):]
    for prev, cur in zip(recent, recent[1:]):
        if abs(cur - prev) > tol * max(abs(prev), 1e-12):
            return False
    return True


def synthesize(unit: UnitModel, prior: PriorModel, cfg: SynthesisConfig) -> SynthesisResult:
    """Optimize a batch of n images on the norm sphere to maximize the objective."""
    cfg.validate()
    radius = resolve_radius(cfg, unit)
    shape = (cfg.n, *unit.input_shape)
    rng = np.random.default_rng(cfg.seed)
    images = rng.standard_normal(shape)
    for i in range(cfg.n):
        images[i] = project_norm(images[i], radius, rng)

    adam = Adam(shape, cfg.lr)
    trace: list[float] = []
    converged = False
    steps = 0
    for step in range(cfg.max_steps):
        x = Tensor(images, requires_grad=True)
        loss, _ = _objective(unit, prior, cfg, x)
        value = loss.item()
        if not np.isfinite(value):
            raise SynthesisError(f"non-finite objective at step {step}")
        trace.append(value)
        if _has_converged(trace, cfg.conv_window, cfg.conv_tol):
            converged = True
            break
        loss.backward()
        grad = x.grad
        if not np.all(np.isfinite(grad)):
            raise SynthesisError(f"non-finite gradient at step {step}")
        if cfg.precondition:
            grad = np.stack([precondition_gradient(g) for g in grad])
        for i in range(cfg.n):
            grad[i] = tangent_project(grad[i], images[i])
        images = images + adam.step(grad)
        for i in range(cfg.n):
            images[i] = project_norm(images[i], radius, rng)
        steps += 1

    final = Tensor(images)
    acts, feats = unit.evaluate(final)
    fdata = feats.data
    dmat = np.zeros((cfg.n, cfg.n))
    for i in range(cfg.n):
        for j in range(i + 1, cfg.n):
            d = float(np.sqrt(np.sum((fdata[i] - fdata[j]) ** 2)))
            dmat[i, j] = dmat[j, i] = d
    min_distance = float(np.min(dmat[np.triu_indices(cfg.n, k=1)]))
    return SynthesisResult(
        images=images,
        activations=acts.data.copy(),
        distance_matrix=dmat,
        min_distance=min_distance,
        trace=np.array(trace),
        steps=steps,
        converged=converged,
    )


def derive_seed(base_seed: int, lambda_index: int, repeat: int) -> int:
    """Deterministic per-run seed so sweep scheduling never changes results."""
    ss = np.random.SeedSequence(entropy=base_seed, spawn_key=(lambda_index, repeat))
    return int(ss.generate_state(1)[0])


def run_sweep_point(unit: UnitModel, prior: PriorModel, base_cfg: SynthesisConfig,
                    lam: float, seed: int) -> tuple[float, float]:
    """One synthesis run for a sweep: (mean activation, min distance)."""
    cfg = replace(base_cfg, lam=lam, seed=seed)
    try:
        result = synthesize(unit, prior, cfg)
    except SynthesisError as exc:
        raise SynthesisError(f"lambda={lam}: {exc}") from exc
    return float(np.mean(result.activations)), result.min_distance


def lambda_sweep(unit: UnitModel, prior: PriorModel, base_cfg: SynthesisConfig,
                 lambdas: Sequence[float], repeats: int = 3) -> SweepCurve:
    """Sweep diversity weights and select the optimal lambda.

    Each lambda is synthesized `repeats` times with seeds derived from
    (base seed, lambda index, repeat); activations and minimum distances are
    averaged over repeats.  The optimal lambda is the largest one whose mean
    activation stays above the threshold fraction of the lambda=0 level.
    """
    lambdas = list(lambdas)
    if not lambdas:
        raise ValueError("lambda list must not be empty")
    if 0.0 not in lambdas:
        raise ValueError("lambda list must include 0 as the normalization reference")
    if any(l < 0 for l in lambdas):
        raise ValueError("lambda values must be >= 0")
    if repeats < 1:
        raise ValueError(f"repeats must be >= 1, got {repeats}")
    acts = np.zeros((len(lambdas), repeats))
    dists = np.zeros((len(lambdas), repeats))
    for li, lam in enumerate(lambdas):
        for rep in range(repeats):
            seed = derive_seed(base_cfg.seed, li, rep)
            acts[li, rep], dists[li, rep] = run_sweep_point(unit, prior, base_cfg, lam, seed)
    mean_act = acts.mean(axis=1)
    mean_dist = dists.mean(axis=1)
    reference = mean_act[lambdas.index(0.0)]
    if reference <= 0.0:
        raise SynthesisError(
            f"unit is inactive at lambda=0 (mean activation {reference}); "
            "threshold selection is undefined"
        )
    admissible = [lam for lam, a in zip(lambdas, mean_act)
                  if a >= base_cfg.act_threshold * reference]
    optimal = max(admissible)
    return SweepCurve(
        lambdas=tuple(lambdas),
        mean_activation=mean_act,
        min_distance=mean_dist,
        optimal_lambda=float(optimal),
        act_threshold=base_cfg.act_threshold,
        per_run_activation=acts,
        per_run_distance=dists,
    )


DEFAULT_LAMBDAS: tuple[float, ...] = (0.0,) + tuple(0.02 * 2**k for k in range(11))
