"""Tuning curves, phase recovery and circular-coverage statistics.

Phase is recovered by projecting a patch onto a unit-norm quadrature pair at
known orientation and frequency; with the synthesis geometry known this is
exact up to envelope truncation, which keeps the estimate test-stable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .models import GaborParams, UnitModel, gabor
from .tensor import Tensor


@dataclass(frozen=True)
class PhaseEstimate:
    phase: float        # degrees in [0, 360)
    confidence: float   # fraction of patch energy captured by the quadrature pair


def gabor_stimulus(g: GaborParams, phase: float, norm: float = 1.0) -> np.ndarray:
    """Single-channel Gabor stimulus [1,H,W] at the given phase and L2 norm."""
    return gabor(replace(g, phase=phase))[None] * norm


def tuning_curve(unit: UnitModel, g: GaborParams, n_phases: int = 36,
                 stimulus_norm: float = 1.0) -> np.ndarray:
    """Activations for norm-matched Gabor stimuli over a phase grid.

    Returns an array of shape (n_phases, 2) with columns (phase degrees,
    activation).
    """
    if n_phases < 4:
        raise ValueError(f"need at least 4 phases, got {n_phases}")
    phases = np.arange(n_phases) * 360.0 / n_phases
    stims = np.stack([gabor_stimulus(g, p, stimulus_norm) for p in phases])
    acts = unit.activations(Tensor(stims)).data
    return np.column_stack([phases, acts])


def estimate_phase(patch, orientation: float, frequency: float, sigma: float,
                   center: tuple[float, float] | None = None) -> PhaseEstimate:
    """Recover the carrier phase of a patch via quadrature projection."""
    arr = patch.data if isinstance(patch, Tensor) else np.asarray(patch, dtype=np.float64)
    if arr.ndim == 3 and arr.shape[0] == 1:
        arr = arr[0]
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"estimate_phase expects a square patch, got shape {arr.shape}")
    g = GaborParams(orientation=orientation, frequency=frequency, sigma=sigma,
                    center=center, size=arr.shape[0])
    w0 = gabor(g)
    w90 = gabor(replace(g, phase=90.0))
    power = float(np.sum(arr * arr))
    if power == 0.0:
        return PhaseEstimate(phase=0.0, confidence=0.0)
    c0 = float(np.sum(w0 * arr))
    c90 = float(np.sum(w90 * arr))
    phase = math.degrees(math.atan2(c90, c0)) % 360.0
    confidence = (c0 * c0 + c90 * c90) / power
    return PhaseEstimate(phase=phase, confidence=confidence)


def circular_coverage(phases) -> tuple[float, float]:
    """(smallest circular gap in degrees, resultant length) of a phase set.

    Resultant length is the magnitude of the mean unit vector: 0 for a
    perfectly spread set, 1 for a fully collapsed one.
    """
    phases = np.asarray(phases, dtype=np.float64)
    if phases.size < 2:
        raise ValueError("circular coverage needs at least 2 phases")
    wrapped = np.sort(phases % 360.0)
    gaps = np.diff(wrapped)
    closing = 360.0 - (wrapped[-1] - wrapped[0])
    min_gap = float(min(gaps.min() if gaps.size else closing, closing))
    rad = np.radians(phases)
    resultant = float(np.hypot(np.mean(np.cos(rad)), np.mean(np.sin(rad))))
    return min_gap, resultant


def phase_histogram(phases, bin_width: float = 15.0) -> tuple[np.ndarray, np.ndarray]:
    """Counts of phases over [0, 360) bins; returns (bin left edges, counts)."""
    if bin_width <= 0 or 360.0 % bin_width != 0:
        raise ValueError(f"bin width must evenly divide 360, got {bin_width}")
    nbins = int(round(360.0 / bin_width))
    edges = np.arange(nbins + 1) * bin_width
    counts, _ = np.histogram(np.asarray(phases) % 360.0, bins=edges)
    return edges[:-1], counts


def cluster_phases(phases, width: float = 30.0) -> list[list[float]]:
    """Greedy circular clustering: groups phases into arcs of at most `width` degrees."""
    values = sorted(p % 360.0 for p in phases)
    if not values:
        return []
    # rotate so the largest gap splits the circle, then sweep linearly
    gaps = [(values[(i + 1) % len(values)] - values[i]) % 360.0 for i in range(len(values))]
    start = (int(np.argmax(gaps)) + 1) % len(values)
    ordered = values[start:] + values[:start]
    unwrapped = [ordered[0]]
    for v in ordered[1:]:
        while v < unwrapped[-1]:
            v += 360.0
        unwrapped.append(v)
    clusters: list[list[float]] = [[unwrapped[0]]]
    for v in unwrapped[1:]:
        if v - clusters[-1][0] <= width:
            clusters[-1].append(v)
        else:
            clusters.append([v])
    return [[v % 360.0 for v in cluster] for cluster in clusters]
