from dataclasses import replace

import numpy as np
import pytest

from divsynth.analysis import (
    circular_coverage,
    cluster_phases,
    estimate_phase,
    gabor_stimulus,
    phase_histogram,
    tuning_curve,
)
from divsynth.models import GaborParams, energy_cell, gabor, hubel_wiesel_cell, simple_cell

G = GaborParams()


class TestTuningCurve:
    def test_energy_cell_flat(self):
        curve = tuning_curve(energy_cell(G), G, n_phases=36)
        acts = curve[:, 1]
        assert (acts.max() - acts.min()) / acts.max() < 0.02

    def test_simple_cell_rectified(self):
        curve = tuning_curve(simple_cell(G), G, n_phases=36)
        acts = curve[:, 1]
        # zero over a contiguous arc of at least 120 degrees (>= 12 bins of 10)
        zero = acts <= 1e-12
        doubled = np.concatenate([zero, zero])
        best = run = 0
        for z in doubled:
            run = run + 1 if z else 0
            best = max(best, run)
        assert best >= 12

    def test_hubel_wiesel_above_80_percent(self):
        curve = tuning_curve(hubel_wiesel_cell(G), G, n_phases=36)
        acts = curve[:, 1]
        assert np.all(acts >= 0.8 * acts.max())

    def test_phase_grid_and_validation(self):
        curve = tuning_curve(energy_cell(G), G, n_phases=8)
        assert np.allclose(curve[:, 0], np.arange(8) * 45.0)
        with pytest.raises(ValueError, match="at least 4"):
            tuning_curve(energy_cell(G), G, n_phases=3)


class TestEstimatePhase:
    def test_identity_on_gabor_phases(self):
        for phase in np.arange(0, 360, 10.0):
            patch = gabor(replace(G, phase=phase))
            est = estimate_phase(patch, G.orientation, G.frequency, G.sigma)
            err = abs((est.phase - phase + 180) % 360 - 180)
            assert err < 1.0, phase

    def test_quadrature_pair_phases(self):
        est0 = estimate_phase(gabor(G), G.orientation, G.frequency, G.sigma)
        est90 = estimate_phase(gabor(replace(G, phase=90.0)), G.orientation, G.frequency, G.sigma)
        assert abs(est0.phase - 0.0) < 1.0 or abs(est0.phase - 360.0) < 1.0
        assert abs(est90.phase - 90.0) < 1.0
        assert est0.confidence > 0.95 and est90.confidence > 0.95

    def test_noise_robustness_95th_percentile(self):
        # Monte Carlo: gabor at 137 degrees plus 10% norm noise
        errors = []
        clean = gabor(replace(G, phase=137.0))
        rng_master = np.random.default_rng(0)
        for _ in range(100):
            noise = rng_master.standard_normal(clean.shape)
            noise *= 0.1 * np.linalg.norm(clean) / np.linalg.norm(noise)
            est = estimate_phase(clean + noise, G.orientation, G.frequency, G.sigma)
            errors.append(abs((est.phase - 137.0 + 180) % 360 - 180))
        assert np.percentile(errors, 95) < 5.0

    def test_zero_patch(self):
        est = estimate_phase(np.zeros((24, 24)), G.orientation, G.frequency, G.sigma)
        assert est.phase == 0.0 and est.confidence == 0.0

    def test_stimulus_shape_and_norm(self):
        stim = gabor_stimulus(G, 45.0, norm=3.0)
        assert stim.shape == (1, 24, 24)
        assert abs(np.linalg.norm(stim.ravel()) - 3.0) < 1e-12


class TestCircularCoverage:
    def test_perfect_hexagon(self):
        min_gap, resultant = circular_coverage([0, 60, 120, 180, 240, 300])
        assert min_gap == pytest.approx(60.0)
        assert resultant < 1e-12

    def test_collapsed(self):
        min_gap, resultant = circular_coverage([42.0, 42.0, 42.0])
        assert min_gap == 0.0
        assert resultant == pytest.approx(1.0)

    def test_rotation_invariance(self):
        rng = np.random.default_rng(1)
        phases = rng.uniform(0, 360, 8)
        base = circular_coverage(phases)
        rotated = circular_coverage((phases + 77.7) % 360)
        assert abs(base[0] - rotated[0]) < 1e-9
        assert abs(base[1] - rotated[1]) < 1e-12

    def test_min_gap_upper_bound(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            n = int(rng.integers(2, 9))
            phases = rng.uniform(0, 360, n)
            min_gap, _ = circular_coverage(phases)
            assert min_gap <= 360.0 / n + 1e-9
        # equality iff equally spaced
        spaced = np.arange(5) * 72.0 + 13.0
        assert circular_coverage(spaced)[0] == pytest.approx(72.0)

    def test_needs_two(self):
        with pytest.raises(ValueError, match="at least 2"):
            circular_coverage([10.0])


class TestHistogramAndClusters:
    def test_histogram_counts(self):
        edges, counts = phase_histogram([0, 10, 14, 200], bin_width=15.0)
        assert len(edges) == 24
        assert counts[0] == 3 and counts[13] == 1 and counts.sum() == 4

    def test_histogram_bin_validation(self):
        with pytest.raises(ValueError, match="bin width"):
            phase_histogram([0.0], bin_width=50.0)

    def test_cluster_phases_wraparound(self):
        clusters = cluster_phases([355, 5, 10, 180], width=30.0)
        assert len(clusters) == 2
        sizes = sorted(len(c) for c in clusters)
        assert sizes == [1, 3]

    def test_cluster_single_group(self):
        assert len(cluster_phases([10, 20, 30], width=30.0)) == 1
        assert len(cluster_phases([10, 50, 90], width=30.0)) == 3
