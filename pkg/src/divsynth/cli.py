"""Command-line interface: synthesis, sweeps, invariance metrics and reports.

Every command reads an optional INI config plus --set overrides, writes its
outputs (CSV/JSON/images) into --out, and echoes the resolved configuration
to config.used.ini so any run can be reproduced bit-for-bit.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import imageio
from .analysis import circular_coverage, estimate_phase, phase_histogram, tuning_curve
from .config import Config, ConfigError, build_synthesis_config, build_unit, sweep_lambdas
from .metrics import (
    MetricError,
    invariance_score,
    linear_combination_index,
    optimize_texture,
    shift_invariance_index,
)
from .models import forward
from .netio import NetworkFormatError, load_network
from .priors import make_prior
from .synthesis import (
    SweepCurve,
    SynthesisError,
    derive_seed,
    lambda_sweep,
    resolve_radius,
    run_sweep_point,
    synthesize,
)
from .tensor import Tensor


class CliError(RuntimeError):
    pass


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))  # shortest round-trip decimal
    return str(x)


def write_csv(path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def write_json(path, payload) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def prepare_out_dir(cfg: Config, args) -> Path:
    out = args.out or cfg.get("output", "dir")
    if out is None:
        raise CliError("an output directory is required (--out or output.dir)")
    out = Path(out)
    force = args.force or cfg.get_bool("output", "force", False)
    if out.exists() and any(out.iterdir()) and not force:
        raise CliError(f"output directory {out} is not empty (use --force to overwrite)")
    out.mkdir(parents=True, exist_ok=True)
    return out


def load_config(args) -> Config:
    cfg = Config.load(args.config, args.set or [])
    # first-class flags override config values
    if getattr(args, "unit", None):
        cfg.set("unit", "kind", args.unit)
    if getattr(args, "lam", None) is not None:
        cfg.set("synthesis", "lambda", args.lam)
    if getattr(args, "n", None) is not None:
        cfg.set("synthesis", "n", args.n)
    if getattr(args, "seed", None) is not None:
        cfg.set("synthesis", "seed", args.seed)
    if getattr(args, "radius", None) is not None:
        cfg.set("synthesis", "radius", args.radius)
    if getattr(args, "patch_dir", None) is not None:
        radius = radius_from_patches(args.patch_dir)
        cfg.set("synthesis", "radius", radius)
    return cfg


def radius_from_patches(patch_dir) -> float:
    """Half the mean L2 norm of the raw-format patches in a directory."""
    paths = sorted(Path(patch_dir).glob("*.f64"))
    if not paths:
        raise CliError(f"no .f64 patches found in {patch_dir}")
    norms = [float(np.linalg.norm(imageio.read_raw(p).ravel())) for p in paths]
    return 0.5 * float(np.mean(norms))


def _echo_config(cfg: Config, out: Path) -> None:
    cfg.write(out / "config.used.ini")


def _write_templates(out: Path, images: np.ndarray, gain: float) -> list[str]:
    written = []
    for i, img in enumerate(images):
        ext = "pgm" if img.shape[0] == 1 else "ppm"
        imageio.write_image(out / f"template_{i}.{ext}", img, gain)
        imageio.write_raw(out / f"template_{i}.f64", img)
        written.append(f"template_{i}.{ext}")
    return written


def cmd_synthesize(args) -> int:
    cfg = load_config(args)
    unit = build_unit(cfg)
    syn = build_synthesis_config(cfg, unit)
    prior = make_prior(cfg.get("synthesis", "prior", "smoothness"))
    out = prepare_out_dir(cfg, args)
    result = synthesize(unit, prior, syn)
    gain = cfg.get_float("output", "display_gain",
                         imageio.auto_gain(unit.input_shape, resolve_radius(syn, unit)))
    _write_templates(out, result.images, gain)
    write_json(out / "result.json", {
        "unit": unit.name,
        "n": syn.n,
        "lambda": syn.lam,
        "alpha": syn.alpha,
        "mode": syn.mode,
        "seed": syn.seed,
        "activations": result.activations.tolist(),
        "distance_matrix": result.distance_matrix.tolist(),
        "min_distance": result.min_distance,
        "objective_trace": result.trace.tolist(),
        "steps": result.steps,
        "converged": result.converged,
    })
    _echo_config(cfg, out)
    print(f"wrote {syn.n} templates and result.json to {out}")
    return 0


def _sweep_worker(payload):
    (sections, lam, seed) = payload
    cfg = Config()
    for section, items in sections.items():
        for key, value in items.items():
            cfg.set(section, key, value)
    unit = build_unit(cfg)
    syn = build_synthesis_config(cfg, unit)
    prior = make_prior(cfg.get("synthesis", "prior", "smoothness"))
    return run_sweep_point(unit, prior, syn, lam, seed)


def cmd_sweep(args) -> int:
    cfg = load_config(args)
    unit = build_unit(cfg)
    syn = build_synthesis_config(cfg, unit)
    prior = make_prior(cfg.get("synthesis", "prior", "smoothness"))
    lambdas = sweep_lambdas(cfg)
    repeats = cfg.get_int("sweep", "repeats", 3)
    jobs = args.jobs or cfg.get_int("sweep", "jobs", 1)
    out = prepare_out_dir(cfg, args)

    if jobs > 1:
        tasks = [(cfg.sections(), lam, derive_seed(syn.seed, li, rep))
                 for li, lam in enumerate(lambdas) for rep in range(repeats)]
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_worker, tasks))
        acts = np.array([r[0] for r in results]).reshape(len(lambdas), repeats)
        dists = np.array([r[1] for r in results]).reshape(len(lambdas), repeats)
        if 0.0 not in lambdas:
            raise CliError("sweep.lambdas must include 0 as the normalization reference")
        mean_act = acts.mean(axis=1)
        mean_dist = dists.mean(axis=1)
        reference = mean_act[lambdas.index(0.0)]
        if reference <= 0.0:
            raise CliError("unit is inactive at lambda=0; sweep selection is undefined")
        admissible = [l for l, a in zip(lambdas, mean_act) if a >= syn.act_threshold * reference]
        curve = SweepCurve(tuple(lambdas), mean_act, mean_dist, float(max(admissible)),
                           syn.act_threshold, acts, dists)
    else:
        curve = lambda_sweep(unit, prior, syn, lambdas, repeats=repeats)

    act_rel, dist_rel = _normalized_or_nan(curve)
    rows = [
        (lam, act, dist, arel, drel)
        for lam, act, dist, arel, drel in zip(
            curve.lambdas, curve.mean_activation, curve.min_distance, act_rel, dist_rel
        )
    ]
    write_csv(out / "sweep.csv",
              ["lambda", "mean_activation", "min_distance",
               "mean_activation_rel_lambda0", "min_distance_rel_lambda0"], rows)
    write_json(out / "sweep_summary.json", {
        "unit": unit.name,
        "optimal_lambda": curve.optimal_lambda,
        "act_threshold": curve.act_threshold,
        "activation_at_zero": curve.activation_at_zero,
        "min_distance_at_zero": curve.distance_at_zero,
        "repeats": repeats,
    })
    _echo_config(cfg, out)
    print(f"sweep of {len(lambdas)} lambdas written to {out}; optimal lambda = {curve.optimal_lambda}")
    return 0


def _normalized_or_nan(curve: SweepCurve):
    try:
        return curve.normalized()
    except ValueError:
        nan = np.full(len(curve.lambdas), np.nan)
        act0 = curve.activation_at_zero
        act = curve.mean_activation / act0 if act0 != 0 else nan
        return act, nan


def _metric_row(name: str, cfg: Config, base_args) -> dict:
    sub = Config()
    for section, items in cfg.sections().items():
        for key, value in items.items():
            sub.set(section, key, value)
    sub.set("unit", "kind", name)
    unit = build_unit(sub)
    syn = build_synthesis_config(sub, unit)
    prior = make_prior(sub.get("synthesis", "prior", "smoothness"))
    lambdas = sweep_lambdas(sub)
    repeats = sub.get_int("sweep", "repeats", 3)
    curve = lambda_sweep(unit, prior, syn, lambdas, repeats=repeats)
    templates_cfg = replace(syn, lam=curve.optimal_lambda,
                            seed=sub.get_int("metrics", "template_seed", 2))
    templates = synthesize(unit, prior, templates_cfg).images
    stride = sub.get_int("metrics", "crop_stride")
    texture = optimize_texture(unit, prior, syn, crop_stride=stride,
                               mask_ratio=sub.get_float("metrics", "mask_sigma_ratio", 2.5))
    shift_idx = shift_invariance_index(unit, texture, templates, crop_stride=stride,
                                       mask_ratio=sub.get_float("metrics", "mask_sigma_ratio", 2.5))
    lc_idx = linear_combination_index(unit, templates)
    return {
        "unit": unit.name,
        "shift_invariance_index": shift_idx,
        "linear_combination_index": lc_idx,
        "optimal_lambda": curve.optimal_lambda,
        "min_distance_rel_lambda0": invariance_score(curve),
    }


def cmd_metrics(args) -> int:
    cfg = load_config(args)
    names = [tok for tok in (cfg.get("metrics", "units", "") or "").replace(",", " ").split() if tok]
    if not names:
        kind = cfg.get("unit", "kind")
        if kind is None:
            raise CliError("metrics needs metrics.units or unit.kind")
        names = [kind]
    out = prepare_out_dir(cfg, args)
    rows = []
    failures = []
    for name in names:
        try:
            row = _metric_row(name, cfg, args)
            rows.append((row["unit"], row["shift_invariance_index"],
                         row["linear_combination_index"], row["optimal_lambda"],
                         row["min_distance_rel_lambda0"]))
        except (MetricError, SynthesisError) as exc:
            failures.append((name, str(exc)))
            rows.append((name, "error", "error", "error", "error"))
    write_csv(out / "metrics.csv",
              ["unit", "shift_invariance_index", "linear_combination_index",
               "optimal_lambda", "min_distance_rel_lambda0"], rows)
    _echo_config(cfg, out)
    if failures:
        for name, message in failures:
            print(f"error: {name}: {message}", file=sys.stderr)
        return 1
    print(f"invariance metrics for {len(rows)} unit(s) written to {out}")
    return 0


def cmd_phases(args) -> int:
    cfg = load_config(args)
    template_dir = args.templates or cfg.get("phases", "templates")
    if template_dir is None:
        raise CliError("phases needs a template directory (--templates or phases.templates)")
    paths = sorted(Path(template_dir).glob("*.f64"))
    if not paths:
        raise CliError(f"no .f64 templates found in {template_dir}")
    out = prepare_out_dir(cfg, args)
    orientation = cfg.get_float("phases", "orientation", cfg.get_float("unit", "orientation", 0.0))
    frequency = cfg.get_float("phases", "frequency", cfg.get_float("unit", "frequency", 0.2))
    sigma = cfg.get_float("phases", "sigma", cfg.get_float("unit", "sigma", 6.0))
    bin_width = cfg.get_float("phases", "bin_width", 15.0)
    estimates = [estimate_phase(imageio.read_raw(p), orientation, frequency, sigma) for p in paths]
    phases = [e.phase for e in estimates]
    edges, counts = phase_histogram(phases, bin_width)
    write_csv(out / "phases.csv", ["bin_start_deg", "bin_end_deg", "count"],
              [(lo, lo + bin_width, int(c)) for lo, c in zip(edges, counts)])
    write_csv(out / "phase_estimates.csv", ["template", "phase_deg", "confidence"],
              [(p.name, e.phase, e.confidence) for p, e in zip(paths, estimates)])
    min_gap, resultant = circular_coverage(phases)
    write_json(out / "coverage.json", {
        "n": len(phases),
        "min_gap_deg": min_gap,
        "resultant_length": resultant,
        "bin_width_deg": bin_width,
    })
    _echo_config(cfg, out)
    print(f"phase histogram over {len(phases)} templates written to {out}")
    return 0


def cmd_tuning(args) -> int:
    cfg = load_config(args)
    unit = build_unit(cfg)
    gabor_params = unit.meta.get("gabor")
    if gabor_params is None:
        raise CliError(f"unit {unit.name} has no Gabor tuning geometry")
    out = prepare_out_dir(cfg, args)
    n_phases = cfg.get_int("tuning", "n_phases", 36)
    norm = cfg.get_float("tuning", "stimulus_norm", 1.0)
    curve = tuning_curve(unit, gabor_params, n_phases=n_phases, stimulus_norm=norm)
    write_csv(out / "tuning.csv", ["phase_deg", "activation"],
              [tuple(row) for row in curve])
    _echo_config(cfg, out)
    print(f"tuning curve ({n_phases} phases) written to {out}")
    return 0


DEMO_UNITS = ("simple", "energy", "hubel-wiesel", "corner")


def cmd_demo(args) -> int:
    cfg = load_config(args)
    out = prepare_out_dir(cfg, args)
    repeats = cfg.get_int("sweep", "repeats", 3)
    failures = []
    metric_rows = []
    for kind in DEMO_UNITS:
        sub = Config()
        for section, items in cfg.sections().items():
            for key, value in items.items():
                sub.set(section, key, value)
        sub.set("unit", "kind", kind)
        unit = build_unit(sub)
        syn = build_synthesis_config(sub, unit)
        prior = make_prior(sub.get("synthesis", "prior", "none"))
        unit_dir = out / kind
        unit_dir.mkdir(parents=True, exist_ok=True)
        lambdas = sweep_lambdas(sub)
        curve = lambda_sweep(unit, prior, syn, lambdas, repeats=repeats)
        act_rel, dist_rel = _normalized_or_nan(curve)
        write_csv(unit_dir / "sweep.csv",
                  ["lambda", "mean_activation", "min_distance",
                   "mean_activation_rel_lambda0", "min_distance_rel_lambda0"],
                  list(zip(curve.lambdas, curve.mean_activation, curve.min_distance,
                           act_rel, dist_rel)))
        template_cfg = replace(syn, lam=curve.optimal_lambda,
                               seed=sub.get_int("metrics", "template_seed", 2))
        result = synthesize(unit, prior, template_cfg)
        gain = imageio.auto_gain(unit.input_shape, resolve_radius(syn, unit))
        _write_templates(unit_dir, result.images, gain)
        gp = unit.meta.get("gabor")
        if gp is not None:
            tc = tuning_curve(unit, gp)
            write_csv(unit_dir / "tuning.csv", ["phase_deg", "activation"],
                      [tuple(row) for row in tc])
            estimates = [estimate_phase(img[0], gp.orientation, gp.frequency, gp.sigma)
                         for img in result.images]
            phases = [e.phase for e in estimates]
            edges, counts = phase_histogram(phases, cfg.get_float("phases", "bin_width", 15.0))
            write_csv(unit_dir / "phases.csv", ["bin_start_deg", "bin_end_deg", "count"],
                      [(lo, lo + cfg.get_float("phases", "bin_width", 15.0), int(c))
                       for lo, c in zip(edges, counts)])
            min_gap, resultant = circular_coverage(phases)
            write_json(unit_dir / "coverage.json",
                       {"n": len(phases), "min_gap_deg": min_gap, "resultant_length": resultant})
        try:
            texture = optimize_texture(unit, prior, syn)
            shift_idx = shift_invariance_index(unit, texture, result.images)
            lc_idx = linear_combination_index(unit, result.images)
            metric_rows.append((unit.name, shift_idx, lc_idx, curve.optimal_lambda,
                                invariance_score(curve)))
        except (MetricError, SynthesisError) as exc:
            failures.append((kind, str(exc)))
            metric_rows.append((unit.name, "error", "error", curve.optimal_lambda, "error"))
        write_json(unit_dir / "summary.json", {
            "unit": unit.name,
            "optimal_lambda": curve.optimal_lambda,
            "activations": result.activations.tolist(),
            "min_distance": result.min_distance,
        })
    write_csv(out / "metrics.csv",
              ["unit", "shift_invariance_index", "linear_combination_index",
               "optimal_lambda", "min_distance_rel_lambda0"], metric_rows)
    _echo_config(cfg, out)
    if failures:
        for kind, message in failures:
            print(f"error: {kind}: {message}", file=sys.stderr)
        return 1
    print(f"demo pipeline for {len(DEMO_UNITS)} units written to {out}")
    return 0


def cmd_forward(args) -> int:
    net = load_network(args.manifest, args.weights)
    payload = json.loads(Path(args.inputs).read_text())
    inputs = np.asarray(payload["inputs"], dtype=np.float64)
    if inputs.ndim != 4:
        raise CliError(f"inputs must be [N,C,H,W], got shape {inputs.shape}")
    outputs = forward(net, Tensor(inputs))[-1].data
    write_json(args.out_file, {"outputs": outputs.tolist(), "shape": list(outputs.shape)})
    print(f"forward pass of {inputs.shape[0]} inputs written to {args.out_file}")
    return 0


def _add_common(parser, radius=True):
    parser.add_argument("--config", help="INI config file")
    parser.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                        help="override a config value (repeatable)")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--force", action="store_true",
                        help="write into a non-empty output directory")
    parser.add_argument("--unit", help="unit kind (see docs)")
    parser.add_argument("--seed", type=int, help="synthesis seed")
    if radius:
        parser.add_argument("--radius", type=float, help="explicit image norm radius")
        parser.add_argument("--patch-dir",
                            help="derive the norm radius as half the mean norm of these .f64 patches")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="divsynth",
        description="Synthesize diverse maximally-activating images and quantify invariances.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synthesize", help="synthesize a diverse template batch")
    _add_common(p)
    p.add_argument("--lambda", dest="lam", type=float, help="diversity weight")
    p.add_argument("--n", type=int, help="batch size")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("sweep", help="sweep diversity weights and select the optimal one")
    _add_common(p)
    p.add_argument("--jobs", type=int, help="parallel worker processes for sweep points")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("metrics", help="shift-invariance and linear-combination indices")
    _add_common(p)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("phases", help="phase histogram and coverage of saved templates")
    _add_common(p)
    p.add_argument("--templates", help="directory of .f64 template files")
    p.set_defaults(func=cmd_phases)

    p = sub.add_parser("tuning", help="phase tuning curve of a toy unit")
    _add_common(p)
    p.set_defaults(func=cmd_tuning)

    p = sub.add_parser("demo", help="toy pipeline: sweep, templates, phases, metrics")
    _add_common(p)
    p.set_defaults(func=cmd_demo)

    p = sub.add_parser("forward", help="run a stored network on raw inputs")
    p.add_argument("--manifest", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--inputs", required=True, help="JSON file with an [N,C,H,W] 'inputs' array")
    p.add_argument("--out-file", required=True, help="JSON file for the outputs")
    p.set_defaults(func=cmd_forward)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, ConfigError, NetworkFormatError, MetricError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SynthesisError as exc:
        print(f"optimization failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
