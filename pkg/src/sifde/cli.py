"""Command-line front end: solve, check, stability, ml-eval, example-heat."""

from __future__ import annotations

import argparse
import hashlib
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ProblemConfig, load_config, save_config
from .mittag import mittag_leffler
from .noise import sample_paths
from .problem import (
    ConditionReport,
    HypothesisConstants,
    HypothesisError,
    Prehistory,
    check_existence_condition,
    check_lemma31_condition,
    check_stability_condition,
    measured_constants,
)
from .solver import GridSpec, PicardConfig, Trajectory, build_grid, picard_solve
from .stability import Perturbation, StabilityReport, stability_sweep

__all__ = ["main", "emit_results", "write_manifest", "fmt", "EXIT_CODES"]

EXIT_CODES = {
    "ok": 0,
    "invalid": 1,
    "usage": 2,
    "parse": 3,
    "hypothesis": 4,
    "nonconvergence": 5,
    "condition": 6,
    "output": 7,
}

_EPILOG = """exit status:
  0  success
  1  invalid numeric input (e.g. an argument outside a function's domain)
  2  usage error (bad command-line arguments)
  3  configuration parse error (syntax, unknown key, wrong type, unreadable file)
  4  hypothesis violation ((H1)-(H4) tag in the message)
  5  Picard iteration did not converge on some path (results are still written)
  6  a checked condition is not satisfied (results are still written)
  7  output directory not writable
"""


def fmt(x) -> str:
    """17 significant digits: enough to round-trip any double."""
    return f"{float(x):.17g}"


def _write_csv(path: Path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(v if isinstance(v, str) else fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _out_dir(d) -> Path:
    d = Path(d)
    d.mkdir(parents=True, exist_ok=True)
    return d


def emit_results(result, out_dir) -> list[Path]:
    """Write delimited tables for a Trajectory, ConditionReport(s) or StabilityReport(s)."""
    out = _out_dir(out_dir)
    written = []
    if isinstance(result, Trajectory):
        # one row per node: values (right limits), impulse flag, left limits
        # (equal to the value away from impulse nodes)
        n = result.values.shape[-1]
        cols = [f"x_{k + 1}" for k in range(n)] + ["is_impulse_node"] + [f"xl_{k + 1}" for k in range(n)]
        batch = result.is_batch
        values = result.values if batch else result.values[None]
        left = values.copy()
        if result.impulse_indices:
            ll = result.left_limits if batch else result.left_limits[None]
            left[:, list(result.impulse_indices)] = ll
        flags = np.zeros(result.grid.size, dtype=int)
        flags[list(result.impulse_indices)] = 1
        rows = []
        for p in range(values.shape[0]):
            for j, t in enumerate(result.grid):
                head = [str(p)] if batch else []
                rows.append(head + [t] + values[p, j].tolist() + [str(flags[j])] + left[p, j].tolist())
        path = out / "trajectory.csv"
        _write_csv(path, (["path"] if batch else []) + ["t"] + cols, rows)
        written.append(path)
        if result.diagnostics:
            rows = [
                [str(p), str(d.iterations), "true" if d.converged else "false", d.diffs[-1] if d.diffs else 0.0]
                for p, d in enumerate(result.diagnostics)
            ]
            path = out / "diagnostics.csv"
            _write_csv(path, ["path", "iterations", "converged", "final_diff"], rows)
            written.append(path)
        return written
    if isinstance(result, ConditionReport):
        result = [result]
    if isinstance(result, StabilityReport):
        result = [result]
    result = list(result)
    if result and all(isinstance(r, ConditionReport) for r in result):
        rows = [[r.name, r.value_a, r.value_b, "true" if r.satisfied else "false"] for r in result]
        path = out / "conditions.csv"
        _write_csv(path, ["condition", "value_a", "value_b", "satisfied"], rows)
        return [path]
    if result and all(isinstance(r, StabilityReport) for r in result):
        rows = [
            [r.delta, r.estimate, r.standard_error, str(r.paths), r.condition.value if r.condition else "nan"]
            for r in result
        ]
        path = out / "stability.csv"
        _write_csv(path, ["delta", "estimate", "standard_error", "paths", "condition_value"], rows)
        return [path]
    raise TypeError(f"cannot emit {type(result).__name__}")


def write_manifest(out_dir, command: str, params: dict, seed, config_hash: str | None) -> Path:
    """Flat key=value manifest; sorted keys so identical runs give identical bytes."""
    out = _out_dir(out_dir)
    lines = [f"command={command}", f"version={__version__}", f"seed={'' if seed is None else seed}"]
    lines.append(f"config_sha256={config_hash or ''}")
    for k in sorted(params):
        lines.append(f"arg.{k}={params[k]}")
    path = out / "manifest.txt"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# commands


def _load(path) -> tuple[ProblemConfig, str]:
    data = Path(path).read_bytes() if Path(path).is_file() else None
    cfg = load_config(path)
    return cfg, hashlib.sha256(data).hexdigest()


def _constants(cfg: ProblemConfig) -> HypothesisConstants:
    if cfg.constants is not None:
        return cfg.constants
    return measured_constants(cfg.spec)


def _grid(cfg: ProblemConfig, steps: int | None) -> GridSpec:
    if steps is not None:
        return GridSpec(cfg.spec.horizon, steps, cfg.grid.refined if cfg.grid else False)
    return cfg.grid or GridSpec(cfg.spec.horizon, 200)


def _picard(cfg: ProblemConfig, args) -> PicardConfig:
    base = cfg.picard or PicardConfig()
    return PicardConfig(
        args.tolerance if args.tolerance is not None else base.tolerance,
        args.max_iterations if args.max_iterations is not None else base.max_iterations,
    )


def _cmd_solve(args) -> int:
    cfg, digest = _load(args.problem)
    spec = cfg.spec
    grid = _grid(cfg, args.steps)
    picard = _picard(cfg, args)
    times, _ = build_grid(grid, spec.impulses.times)
    noise = sample_paths(spec.noise.with_seed(args.seed), times, args.paths)
    traj, _ = picard_solve(spec, grid, noise, picard, workers=args.workers)
    if args.paths == 1:
        traj = traj.path(0)
    emit_results(traj, args.out)
    write_manifest(
        args.out,
        "solve",
        {"steps": grid.base_steps, "paths": args.paths, "tolerance": fmt(picard.tolerance), "max_iterations": picard.max_iterations},
        args.seed,
        digest,
    )
    ok = all(d.converged for d in traj.diagnostics)
    print(f"solved {args.paths} path(s) on {times.size} nodes; converged: {'yes' if ok else 'no'}")
    return EXIT_CODES["ok"] if ok else EXIT_CODES["nonconvergence"]


def _report_line(r: ConditionReport) -> str:
    state = "satisfied" if r.satisfied else "NOT satisfied"
    return f"{r.name}: value_a={fmt(r.value_a)} value_b={fmt(r.value_b)} threshold=1 {state}"


def _cmd_check(args) -> int:
    cfg, digest = _load(args.problem)
    consts = _constants(cfg)
    print(f"constants ({consts.source}): M={fmt(consts.M)} M_b={fmt(consts.M_b)} Gamma_b={fmt(consts.Gamma_b)} N_b={fmt(consts.N_b)}")
    reports = [check_existence_condition(cfg.spec, consts), check_lemma31_condition(cfg.spec, consts)]
    status = EXIT_CODES["ok"]
    try:
        reports.append(check_stability_condition(cfg.spec, consts))
    except HypothesisError as exc:
        print(f"stability: {exc}")
        status = EXIT_CODES["hypothesis"]
    for r in reports:
        print(_report_line(r))
    if args.out:
        emit_results(reports, args.out)
        write_manifest(args.out, "check", {}, None, digest)
    if status == EXIT_CODES["ok"] and not all(r.satisfied for r in reports):
        status = EXIT_CODES["condition"]
    return status


def _delta_grid(text: str) -> list[float]:
    try:
        a, b, n = text.split(":")
        a, b, n = float(a), float(b), int(n)
    except ValueError:
        raise argparse.ArgumentTypeError("delta grid must be a:b:n") from None
    if not (0 < a <= b) or n < 1 or (n == 1 and a != b):
        raise argparse.ArgumentTypeError("delta grid needs 0 < a <= b and n >= 1 (n = 1 only if a = b)")
    if n == 1:
        return [a]
    return [float(v) for v in np.geomspace(a, b, n)]


def default_direction(cfg: ProblemConfig) -> Perturbation:
    """Perturb along the initial datum itself; a constant first-mode history if it is zero."""
    spec = cfg.spec
    phi_zero = all(not any(v) for _, v in spec.phi.terms)
    if phi_zero and not np.any(spec.x1):
        e1 = np.zeros(spec.dimension)
        e1[0] = 1.0
        return Perturbation(Prehistory.constant(e1), np.zeros(spec.dimension))
    return Perturbation(None if phi_zero else spec.phi, np.array(spec.x1))


def _cmd_stability(args) -> int:
    cfg, digest = _load(args.problem)
    consts = _constants(cfg)
    deltas = [0.0] + args.delta_grid
    reports = stability_sweep(
        cfg.spec,
        default_direction(cfg),
        deltas,
        args.paths,
        args.seed,
        _grid(cfg, args.steps),
        _picard(cfg, args),
        consts,
        workers=args.workers,
    )
    for r in reports:
        print(f"delta={fmt(r.delta)} estimate={fmt(r.estimate)} se={fmt(r.standard_error)}")
    if args.out:
        emit_results(reports, args.out)
        write_manifest(
            args.out,
            "stability",
            {"delta_grid": args.delta_grid_text, "paths": args.paths, "steps": _grid(cfg, args.steps).base_steps},
            args.seed,
            digest,
        )
    if not all(r.converged for r in reports):
        return EXIT_CODES["nonconvergence"]
    if not reports[0].applicable:
        print("stability premise not satisfied: the estimates carry no theorem guarantee")
        return EXIT_CODES["condition"]
    return EXIT_CODES["ok"]


def _cmd_ml_eval(args) -> int:
    zs = [float(v) for v in args.z.split(",")]
    vals = mittag_leffler(np.asarray(zs), args.q, args.beta)
    print("z,value")
    for z, v in zip(zs, np.atleast_1d(vals)):
        print(f"{fmt(z)},{fmt(v)}")
    if args.out:
        _write_csv(_out_dir(args.out) / "ml.csv", ["z", "value"], [[z, v] for z, v in zip(zs, np.atleast_1d(vals))])
        write_manifest(args.out, "ml-eval", {"q": fmt(args.q), "beta": fmt(args.beta), "z": args.z}, None, None)
    return EXIT_CODES["ok"]


def _cmd_example_heat(args) -> int:
    from .example_heat import HeatExampleParams, build_heat_example, heat_constants

    params = HeatExampleParams(modes=args.modes, seed=args.seed)
    spec = build_heat_example(params)
    cfg = ProblemConfig(spec, heat_constants(spec), GridSpec(spec.horizon, args.steps), PicardConfig())
    save_config(cfg, args.emit)
    print(f"wrote {args.emit}")
    return EXIT_CODES["ok"]


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="sifde",
        description="Stochastic impulsive fractional evolution equations with infinite delay.",
        epilog=_EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common_solver(sp):
        sp.add_argument("--problem", required=True, help="problem configuration file (TOML)")
        sp.add_argument("--steps", type=_positive_int, default=None, help="base grid steps (default: file or 200)")
        sp.add_argument("--tolerance", type=float, default=None, help="Picard tolerance override")
        sp.add_argument("--max-iterations", type=_positive_int, default=None, help="Picard iteration cap override")
        sp.add_argument("--workers", type=_positive_int, default=1, help="parallel workers (results do not depend on it)")

    sp = sub.add_parser("solve", help="solve a problem on sampled noise paths", epilog=_EPILOG,
                        formatter_class=argparse.RawDescriptionHelpFormatter)
    common_solver(sp)
    sp.add_argument("--seed", type=_seed, default=0)
    sp.add_argument("--paths", type=_positive_int, default=1)
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=_cmd_solve)

    sp = sub.add_parser("check", help="evaluate the existence, a-priori and stability conditions", epilog=_EPILOG,
                        formatter_class=argparse.RawDescriptionHelpFormatter)
    sp.add_argument("--problem", required=True)
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=_cmd_check)

    sp = sub.add_parser("stability", help="paired mean-square stability sweep over delta", epilog=_EPILOG,
                        formatter_class=argparse.RawDescriptionHelpFormatter)
    common_solver(sp)
    sp.add_argument("--delta-grid", required=True, help="geometric grid a:b:n (delta = 0 is always added)")
    sp.add_argument("--paths", type=_positive_int, default=100)
    sp.add_argument("--seed", type=_seed, default=0)
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=_cmd_stability)

    sp = sub.add_parser("ml-eval", help="evaluate E_{q,beta}(z)", epilog=_EPILOG,
                        formatter_class=argparse.RawDescriptionHelpFormatter)
    sp.add_argument("--q", type=float, required=True)
    sp.add_argument("--beta", type=float, default=1.0)
    sp.add_argument("--z", required=True, help="comma-separated real arguments")
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=_cmd_ml_eval)

    sp = sub.add_parser("example-heat", help="write the heat-equation example configuration", epilog=_EPILOG,
                        formatter_class=argparse.RawDescriptionHelpFormatter)
    sp.add_argument("--emit", required=True, help="output configuration file")
    sp.add_argument("--modes", type=_positive_int, default=8)
    sp.add_argument("--steps", type=_positive_int, default=200)
    sp.add_argument("--seed", type=_seed, default=0)
    sp.set_defaults(func=_cmd_example_heat)
    return p


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("expected a positive integer")
    return v


def _seed(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer seed, got {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return v


def main(argv=None) -> int:
    parser = _parser()
    args = parser.parse_args(argv)
    if args.command == "stability":
        text = args.delta_grid
        try:
            args.delta_grid = _delta_grid(text)
        except argparse.ArgumentTypeError as exc:
            parser.error(str(exc))
        args.delta_grid_text = text
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CODES["parse"]
    except HypothesisError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CODES["hypothesis"]
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return EXIT_CODES["output"]
    except (ValueError, OverflowError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CODES["invalid"]


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
