"""Acceptance suite: one test per criterion, at the stated tolerances.

Run with `pytest tests/test_acceptance.py -v -s` to see one pass/fail line per
criterion.  Criteria 3 and 4 each contain one sub-clause that is documented as
unattainable under the faithful pipeline (see the decisions ledger); those
asserts are last in their tests so every attainable clause is checked first.
"""

import time
from dataclasses import replace

import numpy as np
import pytest

from divsynth import tensor as T
from divsynth.analysis import circular_coverage, cluster_phases, estimate_phase, tuning_curve
from divsynth.metrics import (
    invariance_score,
    linear_combination_index,
    optimize_texture,
    shift_invariance_index,
)
from divsynth.models import (
    GaborParams,
    corner_toy,
    energy_cell,
    gabor,
    gap_energy_control_unit,
    gap_energy_unit,
    hubel_wiesel_cell,
    texture_unit,
)
from divsynth.priors import none_prior, smoothness_prior
from divsynth.synthesis import (
    DEFAULT_LAMBDAS,
    SynthesisConfig,
    lambda_sweep,
    precondition_gradient,
    project_norm,
    synthesize,
)
from divsynth.tensor import Tensor

from oracles import finite_difference_gradient, max_relative_error, reference_conv2d

G = GaborParams()
TEMPLATE_SEED = 2  # representative batch seed for figure-style template sets


def report(name: str, ok: bool, detail: str = "") -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] {name}" + (f" ({detail})" if detail else ""))


@pytest.fixture(scope="module")
def hw_unit():
    return hubel_wiesel_cell(G)


@pytest.fixture(scope="module")
def hw_sweep(hw_unit):
    cfg = SynthesisConfig(n=6, alpha=0.0, seed=0, act_threshold=0.8)
    return lambda_sweep(hw_unit, none_prior(), cfg, list(DEFAULT_LAMBDAS), repeats=3)


def phases_of(images, g=G):
    return [estimate_phase(img[0], g.orientation, g.frequency, g.sigma).phase
            for img in images]


def test_c1_energy_model_phase_invariance():
    """36-point tuning curve flat within 2% relative spread in under 1 s."""
    start = time.perf_counter()
    unit = energy_cell(G)  # envelope spans 24/5 = 4.8 carrier periods
    curve = tuning_curve(unit, G, n_phases=36)
    elapsed = time.perf_counter() - start
    acts = curve[:, 1]
    spread = (acts.max() - acts.min()) / acts.max()
    ok = spread < 0.02 and elapsed < 1.0
    report("C1 energy-model phase invariance", ok, f"spread={spread:.2e}, {elapsed:.2f}s")
    assert spread < 0.02
    assert elapsed < 1.0


def test_c2_hubel_wiesel_tuning(hw_unit):
    """Default curve everywhere >= 80% of max with a unique maximum, under 1 s."""
    start = time.perf_counter()
    curve = tuning_curve(hw_unit, G, n_phases=36)
    elapsed = time.perf_counter() - start
    acts = curve[:, 1]
    floor = acts.min() / acts.max()
    n_max = int(np.sum(acts == acts.max()))
    ok = floor >= 0.8 and n_max == 1 and elapsed < 1.0
    report("C2 Hubel-Wiesel tuning", ok, f"floor={floor:.3f}, unique_max={n_max == 1}")
    assert floor >= 0.8
    assert n_max == 1
    assert elapsed < 1.0


def test_c3_fig2_reproduction(hw_unit, hw_sweep):
    """Sweep selects lambda ~ 2; templates there are strong and evenly spread."""
    start = time.perf_counter()
    curve = hw_sweep
    within_one_doubling = curve.optimal_lambda in (1.28, 2.56)

    cfg = SynthesisConfig(n=6, lam=curve.optimal_lambda, alpha=0.0, seed=TEMPLATE_SEED)
    result = synthesize(hw_unit, none_prior(), cfg)
    rel = result.activations / curve.activation_at_zero
    phases = phases_of(result.images)
    min_gap, resultant = circular_coverage(phases)

    zero_run = synthesize(hw_unit, none_prior(), replace(cfg, lam=0.0, seed=0))
    zero_phases = phases_of(zero_run.images)
    biggest = max(len(c) for c in cluster_phases(zero_phases, width=30.0))
    elapsed = time.perf_counter() - start

    ok = (within_one_doubling and np.all(rel >= 0.8) and min_gap >= 30.0
          and resultant <= 0.3 and biggest >= 4 and elapsed < 300)
    report("C3 Fig.2 reproduction", ok,
           f"opt={curve.optimal_lambda}, min_rel_act={rel.min():.3f}, "
           f"min_gap={min_gap:.1f}, resultant={resultant:.2f}, "
           f"lambda0_biggest_cluster={biggest}/6, {elapsed:.0f}s")
    assert elapsed < 300
    assert within_one_doubling, f"selected lambda {curve.optimal_lambda}"
    assert np.all(rel >= 0.8), f"template activations {np.round(rel, 3)}"
    assert min_gap >= 30.0
    assert resultant <= 0.3
    # Known-unattainable clause (see ledger): with the pinned optimizer and no
    # image prior, lambda=0 solutions stay in their initialization's phase
    # neighbourhood, so no 4-of-6 collapse emerges.
    assert biggest >= 4, f"largest 30-degree cluster holds {biggest}/6 images"


def test_c4_min_vs_average_diversity():
    """Min-mode covers the phase circle; average mode per the stated two-cluster claim."""
    start = time.perf_counter()
    unit = energy_cell(G)
    cfg = SynthesisConfig(n=6, alpha=0.0, seed=0, act_threshold=0.8)
    curve = lambda_sweep(unit, none_prior(), cfg, list(DEFAULT_LAMBDAS), repeats=2)
    run_cfg = replace(cfg, lam=curve.optimal_lambda, seed=TEMPLATE_SEED)
    min_run = synthesize(unit, none_prior(), run_cfg)
    avg_run = synthesize(unit, none_prior(), replace(run_cfg, mode="average"))
    min_clusters = len(cluster_phases(phases_of(min_run.images), width=30.0))
    avg_clusters = len(cluster_phases(phases_of(avg_run.images), width=30.0))
    elapsed = time.perf_counter() - start
    ok = min_clusters >= 5 and avg_clusters <= 2 and elapsed < 300
    report("C4 min-vs-average diversity", ok,
           f"opt={curve.optimal_lambda}, min_mode={min_clusters} clusters, "
           f"avg_mode={avg_clusters} clusters, {elapsed:.0f}s")
    assert elapsed < 300
    assert min_clusters >= 5
    # Known-unattainable clause (see ledger): for L2 distances on the phase
    # circle the average-distance optimum is near-uniform, not two antipodal
    # clusters; the configuration below therefore spreads beyond 2 clusters.
    assert avg_clusters <= 2, f"average mode produced {avg_clusters} clusters"


def test_c5_invariance_score_control():
    """Hand-wired shift-invariant conv unit scores >= 2x its random control."""
    start = time.perf_counter()
    hand = gap_energy_unit()
    ratios = []
    for seed in (0, 1, 2):
        cfg = SynthesisConfig(n=6, alpha=0.0, seed=seed, act_threshold=0.9)
        hand_curve = lambda_sweep(hand, none_prior(), cfg, list(DEFAULT_LAMBDAS), repeats=2)
        rand_curve = lambda_sweep(gap_energy_control_unit(seed), none_prior(), cfg,
                                  list(DEFAULT_LAMBDAS), repeats=2)
        ratios.append(invariance_score(hand_curve) / invariance_score(rand_curve))
    elapsed = time.perf_counter() - start
    ok = all(r >= 2.0 for r in ratios) and elapsed < 600
    report("C5 invariance-score control", ok,
           f"ratios={np.round(ratios, 2)}, {elapsed:.0f}s")
    assert elapsed < 600
    assert all(r >= 2.0 for r in ratios), f"score ratios {np.round(ratios, 2)}"


def test_c6_metric_separation():
    """Texture unit: shift index >= 0.8, pair index <= 0.5; corner toy reversed."""
    start = time.perf_counter()
    results = {}
    for name, unit in (("texture", texture_unit()), ("corner", corner_toy())):
        cfg = SynthesisConfig(n=6, alpha=0.0, seed=0, act_threshold=unit.act_threshold)
        curve = lambda_sweep(unit, none_prior(), cfg, list(DEFAULT_LAMBDAS), repeats=2)
        templates = synthesize(unit, none_prior(),
                               replace(cfg, lam=curve.optimal_lambda, seed=TEMPLATE_SEED)).images
        texture = optimize_texture(unit, none_prior(), cfg)
        results[name] = (shift_invariance_index(unit, texture, templates),
                         linear_combination_index(unit, templates))
    elapsed = time.perf_counter() - start
    (tex_si, tex_lc), (cor_si, cor_lc) = results["texture"], results["corner"]
    ok = (tex_si >= 0.8 and tex_lc <= 0.5 and cor_lc >= 0.8 and cor_si <= 0.5
          and elapsed < 600)
    report("C6 metric separation", ok,
           f"texture SI={tex_si:.2f} LC={tex_lc:.2f}; corner SI={cor_si:.2f} LC={cor_lc:.2f}, "
           f"{elapsed:.0f}s")
    assert tex_si >= 0.8 and tex_lc <= 0.5, results["texture"]
    assert cor_lc >= 0.8 and cor_si <= 0.5, results["corner"]
    assert elapsed < 600


def test_c7_numerical_hygiene():
    """FD gradients < 1e-4, FFT round-trip < 1e-10, conv oracle < 1e-12,
    projection 1e-9, determinism."""
    rng = np.random.default_rng(0)

    # autodiff vs finite differences: ops, prior, and the full objective
    worst = 0.0
    x0 = rng.standard_normal((2, 5))
    for build in (
        lambda x: T.tsum(T.square(x)),
        lambda x: T.l2norm(x),
        lambda x: T.tmean(T.mul(x, Tensor(np.full((2, 5), 1.5)))),
    ):
        x = Tensor(x0.copy(), requires_grad=True)
        build(x).backward()
        fd = finite_difference_gradient(lambda a: build(Tensor(a)).item(), x0.copy())
        worst = max(worst, max_relative_error(x.grad, fd))

    prior = smoothness_prior()
    p0 = rng.standard_normal((1, 5, 5))
    xp = Tensor(p0.copy(), requires_grad=True)
    prior.log_prob(xp).backward()
    fd = finite_difference_gradient(lambda a: prior.log_prob(Tensor(a)).item(), p0.copy())
    worst = max(worst, max_relative_error(xp.grad, fd))

    unit = energy_cell(GaborParams(size=8, sigma=2.0, frequency=0.25))
    cfg = SynthesisConfig(n=2, lam=0.7, alpha=0.1, seed=1)
    from divsynth.synthesis import _objective

    b0 = rng.standard_normal((2, 1, 8, 8))
    xb = Tensor(b0.copy(), requires_grad=True)
    _objective(unit, prior, cfg, xb)[0].backward()
    fd = finite_difference_gradient(
        lambda a: _objective(unit, prior, cfg, Tensor(a))[0].item(), b0.copy()
    )
    worst = max(worst, max_relative_error(xb.grad, fd))

    # FFT round-trip
    fft_worst = 0.0
    for n in (1, 3, 8, 17, 32):
        img = rng.standard_normal((n, n))
        fft_worst = max(fft_worst, float(np.max(np.abs(T.irfft2(T.rfft2(img), n, n) - img))))

    # conv against the brute-force oracle
    conv_worst = 0.0
    for _ in range(20):
        x = rng.standard_normal((1, 2, 6, 6))
        w = rng.standard_normal((3, 2, 3, 3))
        b = rng.standard_normal(3)
        stride = int(rng.integers(1, 3))
        pad = int(rng.integers(0, 2))
        y = T.conv2d(Tensor(x), Tensor(w), Tensor(b), stride=stride, padding=pad)
        conv_worst = max(conv_worst, float(np.max(np.abs(
            y.data - reference_conv2d(x, w, b, stride=stride, padding=pad)))))

    # norm projection exactness
    proj_worst = 0.0
    for _ in range(20):
        img = rng.standard_normal((1, 7, 7)) * rng.uniform(0.1, 100)
        out = project_norm(img, 13.0)
        proj_worst = max(proj_worst, abs(np.linalg.norm(out.ravel()) - 13.0) / 13.0)

    # determinism under fixed seeds
    run_cfg = SynthesisConfig(n=2, lam=0.5, alpha=0.0, seed=7, max_steps=40)
    a = synthesize(unit, none_prior(), run_cfg)
    b = synthesize(unit, none_prior(), run_cfg)
    deterministic = (np.array_equal(a.images, b.images)
                     and np.array_equal(a.trace, b.trace))

    ok = (worst < 1e-4 and fft_worst < 1e-10 and conv_worst < 1e-12
          and proj_worst < 1e-9 and deterministic)
    report("C7 numerical hygiene", ok,
           f"fd={worst:.1e}, fft={fft_worst:.1e}, conv={conv_worst:.1e}, "
           f"proj={proj_worst:.1e}, deterministic={deterministic}")
    assert worst < 1e-4
    assert fft_worst < 1e-10
    assert conv_worst < 1e-12
    assert proj_worst < 1e-9
    assert deterministic
