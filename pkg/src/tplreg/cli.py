"""Command-line front end: ``tplreg synth | register | benchmark``.

Every long flag can also be given in a ``--config`` file of flat
``key = value`` lines (``#`` starts a comment; keys are flag names with or
without the leading dashes, ``-`` and ``_`` interchangeable).  Flags given
on the command line override file values; unknown keys are rejected.

Exit codes: 0 success, 1 usage/config error, 2 I/O error, 3 internal
invariant violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .evolution import GaParams
from .harness import GroundTruth, benchmark
from .imagecore import (
    DistortionSpec,
    ExtractionError,
    ImageFormatError,
    encode_pgm,
    distort,
    extract_template,
    load_image,
    quantize,
    synthetic_scene,
)
from .objective import ObjectiveConfig, ObjectiveEvaluator, ParameterBounds, penalized_error
from .optim_core import OPTIMIZERS, Algorithm, OptimizerConfig, run
from .report import write_report
from .simplex_family import AnnealingParams, AnnealingSchedule, RestartParams, SimplexParams
from .swarm import SwarmParams

log = logging.getLogger("tplreg")

OUTPUT_ENV = "TPLREG_OUTPUT_DIR"
EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_INVARIANT = 0, 1, 2, 3


class UsageError(Exception):
    pass


class InvariantViolation(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _grid(text):
    try:
        parts = tuple(int(p) for p in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must look like 8x8x3, got {text!r}") from None
    if len(parts) != 3 or min(parts) < 1:
        raise argparse.ArgumentTypeError(f"grid must be three positive counts, got {text!r}")
    return parts


def _algorithms(text):
    names = [t.strip() for t in text.split(",") if t.strip()]
    try:
        return [Algorithm(n) for n in names]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _bool(text):
    if isinstance(text, bool):
        return text
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _add_objective_flags(p):
    g = p.add_argument_group("objective")
    g.add_argument("--budget", type=int, default=1000, help="function evaluations per run")
    g.add_argument("--penalty-c", type=float, default=1000.0, help="penalty per out-of-scene template pixel")
    for name, default in (("x-min", None), ("x-max", None), ("y-min", None), ("y-max", None),
                          ("s-min", 0.1), ("s-max", 2.0)):
        g.add_argument(f"--{name}", type=float, default=default,
                       help="parameter bound (default: scene extent)" if default is None else f"default {default}")


def _add_optimizer_flags(p):
    g = p.add_argument_group("simplex")
    g.add_argument("--grid", type=_grid, default=(8, 8, 3), help="pre-scan lattice, e.g. 8x8x3")
    g.add_argument("--grid-fraction", type=float, default=0.2, help="max share of budget for the pre-scan")
    g.add_argument("--grid-charge", type=_bool, default=True, help="charge pre-scan evaluations to the budget")
    g.add_argument("--grid-jitter", type=_bool, default=True, help="seeded sub-cell shift of the lattice")
    g = p.add_argument_group("annealing")
    g.add_argument("--sa-t0", type=float, default=0.01, help="initial temperature; 0 = initial simplex spread")
    g.add_argument("--sa-decay", type=float, default=0.8)
    g.add_argument("--sa-iters", type=int, default=50, help="iterations per temperature")
    g.add_argument("--sa-kb", type=float, default=1.0)
    g.add_argument("--sa-stall-evals", type=int, default=30)
    g.add_argument("--sa-stall-diameter", type=float, default=1e-3)
    g.add_argument("--sa-restarts", type=_bool, default=True)
    g = p.add_argument_group("genetic")
    g.add_argument("--ga-pop", type=int, default=20)
    g.add_argument("--ga-q", type=float, default=0.6, help="probability of selecting the best")
    g.add_argument("--ga-crossovers", type=int, default=10)
    g.add_argument("--ga-mutations", type=int, default=20)
    g.add_argument("--ga-b", type=float, default=3.0, help="mutation non-uniformity exponent")
    g = p.add_argument_group("swarm")
    g.add_argument("--pso-particles", type=int, default=20)
    g.add_argument("--pso-alpha", type=float, default=0.99)
    g.add_argument("--pso-beta-i", type=float, default=0.01)
    g.add_argument("--pso-beta-g", type=float, default=0.01)
    g.add_argument("--pso-radius", type=int, default=3)
    g.add_argument("--pso-vmax", type=float, default=0.25, help="speed cap as fraction of span; 0 disables")
    g.add_argument("--pso-v0", type=float, default=0.01, help="initial speed as fraction of span")
    g.add_argument("--pso-stochastic", type=_bool, default=False)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tplreg", description="Template registration by derivative-free optimization.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    common = _Parser(add_help=False)
    common.add_argument("--config", type=Path, help="flat key = value file of flag defaults")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--output-dir", type=Path, default=None,
                        help=f"output directory (default ${OUTPUT_ENV} or ./tplreg-out)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("synth", parents=[common], help="cut a template (and distorted variants) from a scene")
    p.add_argument("--scene", type=Path, default=None, help="PGM/PNG scene; default: built-in synthetic scene")
    p.add_argument("--scene-size", type=int, default=256, help="size of the built-in scene")
    p.add_argument("--cx", type=float, default=151.5)
    p.add_argument("--cy", type=float, default=151.5)
    p.add_argument("--magnification", type=float, default=2.0)
    p.add_argument("--width", type=int, default=170)
    p.add_argument("--height", type=int, default=138)
    p.add_argument("--blur", type=float, default=None, help="also write a Gaussian-blurred variant")
    p.add_argument("--noise", type=float, default=None, help="also write a Gaussian-noise variant")
    p.add_argument("--noise-seed", type=int, default=None, help="default: --seed")

    p = sub.add_parser("register", parents=[common], help="register a template once")
    p.add_argument("--scene", type=Path, required=True)
    p.add_argument("--template", type=Path, required=True)
    p.add_argument("--algorithm", type=Algorithm, default=Algorithm.SIMPLEX,
                   choices=list(Algorithm), metavar="{" + ",".join(a.value for a in Algorithm) + "}")
    p.add_argument("--output", type=Path, default=None, help="RunRecord JSON path")
    p.add_argument("--trace", type=_bool, default=False, help="record best-so-far trace")
    _add_objective_flags(p)
    _add_optimizer_flags(p)

    p = sub.add_parser("benchmark", parents=[common], help="repeated seeded runs and accuracy histograms")
    p.add_argument("--scene", type=Path, required=True)
    p.add_argument("--template", type=Path, required=True)
    p.add_argument("--ground-truth", type=Path, default=None,
                   help="sidecar JSON; default ground_truth.json next to the template")
    p.add_argument("--algorithms", type=_algorithms, default=list(OPTIMIZERS),
                   help="comma list of simplex,annealing,genetic,swarm")
    p.add_argument("--runs", type=int, default=50)
    p.add_argument("--baseline", type=_bool, default=None,
                   help="include the random-search baseline; default: only when all optimizers run")
    p.add_argument("--figures", type=_bool, default=True, help="write SVG histograms")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    _add_objective_flags(p)
    _add_optimizer_flags(p)
    return parser


# --------------------------------------------------------------------------
# Config files


def read_config(path: Path) -> dict:
    values = {}
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key.lstrip("-").replace("-", "_")] = (lineno, value)
    return values


def _subparser(parser, name):
    for action in parser._subparsers._group_actions:
        return action.choices[name]


def _apply_config(parser, command, path: Path) -> None:
    """Install config-file values as defaults of ``command``'s subparser."""
    try:
        values = read_config(path)
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    sub = _subparser(parser, command)
    actions = {a.dest: a for a in sub._actions if a.option_strings and a.dest not in ("help", "config")}
    defaults = {}
    for key, (lineno, raw) in values.items():
        action = actions.get(key)
        if action is None:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r} for '{command}'")
        if action.nargs == 0:
            defaults[key] = _bool(raw)
            continue
        try:
            defaults[key] = action.type(raw) if action.type else raw
        except (argparse.ArgumentTypeError, ValueError) as exc:
            raise UsageError(f"{path}:{lineno}: bad value for {key!r}: {exc}") from None
        if action.required:
            action.required = False
    sub.set_defaults(**defaults)


def _preparse_config(argv):
    """Find the subcommand and ``--config`` path before the full parse."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", type=Path)
    known, _ = pre.parse_known_args(argv)
    command = next((a for a in argv if a in COMMANDS), None)
    return command, known.config


# --------------------------------------------------------------------------
# Shared helpers


def output_dir(args) -> Path:
    if args.output_dir is not None:
        return args.output_dir
    return Path(os.environ.get(OUTPUT_ENV, "tplreg-out"))


def _check_readable(*paths):
    for p in paths:
        if not p.is_file():
            raise FileNotFoundError(f"no such file: {p}")


def objective_config(args, scene) -> ObjectiveConfig:
    default = ParameterBounds.for_scene(scene, args.s_min, args.s_max)
    bounds = ParameterBounds(
        default.x_min if args.x_min is None else args.x_min,
        default.x_max if args.x_max is None else args.x_max,
        default.y_min if args.y_min is None else args.y_min,
        default.y_max if args.y_max is None else args.y_max,
        args.s_min,
        args.s_max,
    )
    return ObjectiveConfig(args.penalty_c, bounds)


def optimizer_params(args) -> dict:
    return {
        Algorithm.SIMPLEX: SimplexParams(grid=tuple(args.grid), grid_budget_fraction=args.grid_fraction,
                                         charge_grid=args.grid_charge, jitter=args.grid_jitter),
        Algorithm.ANNEALING: AnnealingParams(
            schedule=AnnealingSchedule(t_initial=args.sa_t0 if args.sa_t0 > 0 else None, decay=args.sa_decay,
                                       iters_per_temp=args.sa_iters, k_b=args.sa_kb),
            restart=RestartParams(stall_evals=args.sa_stall_evals, stall_diameter=args.sa_stall_diameter,
                                  enabled=args.sa_restarts),
        ),
        Algorithm.GENETIC: GaParams(population_size=args.ga_pop, q_select=args.ga_q,
                                    crossovers_per_gen=args.ga_crossovers, mutations_per_gen=args.ga_mutations,
                                    mutation_shape_b=args.ga_b),
        Algorithm.SWARM: SwarmParams(particle_count=args.pso_particles, alpha=args.pso_alpha,
                                     beta_i=args.pso_beta_i, beta_g=args.pso_beta_g,
                                     neighborhood_radius=args.pso_radius,
                                     v_max=args.pso_vmax if args.pso_vmax > 0 else None,
                                     initial_speed=args.pso_v0, stochastic=args.pso_stochastic),
    }


def _write_all(files: dict):
    """Write ``{path: bytes}`` so that either every file appears or none does."""
    tmps = []
    try:
        for path, data in files.items():
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_name(path.name + ".tmp")
            tmp.write_bytes(data)
            tmps.append((tmp, path))
        for tmp, path in tmps:
            os.replace(tmp, path)
    finally:
        for tmp, _ in tmps:
            if tmp.exists():
                tmp.unlink()


def _json_bytes(obj) -> bytes:
    return (json.dumps(obj, indent=2) + "\n").encode("utf-8")


# --------------------------------------------------------------------------
# Subcommands


def cmd_synth(args) -> int:
    if args.scene is not None:
        _check_readable(args.scene)
        scene = load_image(args.scene)
        scene_name = str(args.scene)
    else:
        # quantize first so the files on disk are a consistent pair
        scene = synthetic_scene(args.scene_size)
        scene = quantize(scene)
        scene_name = f"builtin synthetic scene {args.scene_size}x{args.scene_size}"
    out = output_dir(args)
    template = extract_template(scene, args.cx, args.cy, args.magnification, args.width, args.height)
    where = f"cx={args.cx} cy={args.cy} magnification={args.magnification} from {scene_name}"
    files = {}
    if args.scene is None:
        files[out / "scene.pgm"] = encode_pgm(scene, f"tplreg {scene_name}")
    files[out / "template.pgm"] = encode_pgm(template, f"tplreg template {where}")
    if args.blur is not None:
        blurred = distort(template, DistortionSpec("blur", args.blur))
        files[out / "template_blur.pgm"] = encode_pgm(blurred, f"tplreg template blur sigma={args.blur} {where}")
    if args.noise is not None:
        seed = args.seed if args.noise_seed is None else args.noise_seed
        noisy = distort(template, DistortionSpec("noise", args.noise, seed))
        files[out / "template_noise.pgm"] = encode_pgm(
            noisy, f"tplreg template noise sigma={args.noise} seed={seed} {where}")
    gt = GroundTruth(args.cx, args.cy, 1.0 / args.magnification)
    files[out / "ground_truth.json"] = _json_bytes({**gt.as_dict(), "scene": scene_name,
                                                   "width": args.width, "height": args.height})
    _write_all(files)
    for path in files:
        print(path)
    return EXIT_OK


def cmd_register(args) -> int:
    _check_readable(args.scene, args.template)
    scene = load_image(args.scene)
    template = load_image(args.template)
    cfg = objective_config(args, scene)
    params = optimizer_params(args)
    evaluator = ObjectiveEvaluator(scene, template, cfg, eval_budget=args.budget)
    record = run(OptimizerConfig(args.algorithm, seed=args.seed, eval_budget=args.budget,
                                 params=params.get(args.algorithm), record_trace=args.trace), evaluator)
    check = penalized_error(scene, template, record.best_pose, cfg.penalty_c, cfg.bounds)
    if check.error_p != record.best_error:
        raise InvariantViolation("best error does not reproduce on re-evaluation")

    p = record.best_pose
    print(f"algorithm   {record.algorithm.label}")
    print(f"pose        x={p.x:.4f} y={p.y:.4f} s={p.s:.5f}")
    print(f"error       {record.best_error:.6g}")
    print(f"out_pixels  {check.out_pixels}" + ("  (penalty-dominated)" if check.out_pixels else ""))
    print(f"evaluations {record.evals_used}")

    path = args.output or output_dir(args) / f"run_{record.algorithm.value}.json"
    doc = record.to_dict()
    doc.update({"error_raw": check.error_raw, "overlap": check.overlap,
                "scene": str(args.scene), "template": str(args.template)})
    _write_all({path: _json_bytes(doc)})
    print(path)
    return EXIT_OK


def cmd_benchmark(args) -> int:
    gt_path = args.ground_truth or args.template.parent / "ground_truth.json"
    _check_readable(args.scene, args.template)
    if not gt_path.is_file():
        raise FileNotFoundError(f"missing ground truth sidecar: {gt_path}")
    try:
        gt = GroundTruth.from_dict(json.loads(gt_path.read_text()))
    except (KeyError, ValueError, TypeError) as exc:
        raise UsageError(f"malformed ground truth file {gt_path}: {exc}") from None
    scene = load_image(args.scene)
    template = load_image(args.template)
    if args.runs < 1:
        raise UsageError("--runs must be >= 1")
    baseline = args.baseline
    if baseline is None:
        baseline = set(args.algorithms) >= set(OPTIMIZERS)
    metadata = {"scene": str(args.scene), "template": str(args.template), "ground_truth_file": str(gt_path)}
    report = benchmark(scene, template, gt, args.algorithms, args.runs, base_seed=args.seed,
                       eval_budget=args.budget, params=optimizer_params(args),
                       objective_config=objective_config(args, scene), include_baseline=baseline,
                       jobs=args.jobs, metadata=metadata)
    for summary in report.summaries.values():
        print(f"{summary.algorithm.value:10s} bins={summary.histogram.bin_counts} "
              f"median={summary.median_distance:.3f} best={summary.best_distance:.3f} "
              f"evals={summary.mean_evals:.1f}")
    for path in write_report(report, output_dir(args), figures=args.figures).values():
        print(path)
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "register": cmd_register, "benchmark": cmd_benchmark}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        command, config = _preparse_config(argv)
        if command is not None and config is not None:
            _apply_config(parser, command, config)
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:
            return int(exc.code or 0)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args)
    except (UsageError, ExtractionError, ValueError) as exc:
        if isinstance(exc, ImageFormatError):
            print(f"tplreg: {exc}", file=sys.stderr)
            return EXIT_IO
        print(f"tplreg: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"tplreg: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (InvariantViolation, AssertionError) as exc:
        print(f"tplreg: internal invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
