"""Batch orchestration: seeded ensembles, diagnostics, and file artifacts.

Every run writes a manifest (full config echo, versions, per-trajectory
seeds, wall time) plus the command's CSV/JSONL outputs into the output
directory, so any row can be traced to a substream and replayed exactly.

Exit codes: 0 all pass criteria met, 1 a criterion failed, 2 usage or config
error, 3 numerical abort (position overflow).
"""

import argparse
import csv
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    COMMANDS,
    ConfigError,
    ExperimentConfig,
    build_model,
    config_from_dict,
    load_config,
    override,
    parse_grid,
    parse_start,
)
from .covariance import validate_field
from .stats import classify_phase, marginal_fit, moment_bound_check, occupation_fraction
from .walk import (
    SimulationOverflow,
    Trajectory,
    compensators,
    convergence_residuals,
    floor_index,
    jump_diagnostics,
    run_ensemble,
    simulate,
    write_track_csv,
    write_trajectory_csv,
)

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_USAGE = 2
EXIT_NUMERIC = 3

MANIFEST_VERSION = 1

_FMT = ".17g"


def _fmt(x) -> str:
    return format(float(x), _FMT)


def _write_jsonl(path: Path, rows) -> None:
    with open(path, "w") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def _write_json(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _steps_for(run) -> int:
    if run.N_steps is not None:
        return run.N_steps
    return int(math.ceil(run.n * run.T - 1e-9))


class _FinalStateVisitor:
    """Per-trajectory final position and running maximum squared radius."""

    def __init__(self, n_rows: int, dim: int):
        self.final = np.zeros((n_rows, dim))
        self.max_radius_sq = np.zeros(n_rows)

    def _absorb(self, pos):
        self.final[:] = pos
        np.maximum(self.max_radius_sq, (pos * pos).sum(axis=1), out=self.max_radius_sq)

    def start(self, pos):
        self._absorb(pos)

    def step(self, k, pos):
        self._absorb(pos)

    def finish(self):
        return self.final, self.max_radius_sq


def _cmd_validate(cfg: ExperimentConfig, outdir: Path, formats):
    model = build_model(cfg.model)
    report = validate_field(model.field, n_dirs=cfg.run.n_dirs, tol=cfg.run.tol)
    _write_json(outdir / "validation.json", report.to_json())
    return report.passed, report.to_json(), ["validation.json"], None


def _cmd_simulate(cfg: ExperimentConfig, outdir: Path, formats):
    model = build_model(cfg.model)
    run = cfg.run
    steps = _steps_for(run)
    start = parse_start(run.start, model.dim)
    (final, max_radius_sq), sub_seeds = run_ensemble(
        model,
        start,
        steps,
        run.N_traj,
        run.seed,
        lambda rows: _FinalStateVisitor(rows, model.dim),
        workers=run.workers,
    )
    outputs = []
    if "jsonl" in formats:
        rows = [
            {
                "master_seed": run.seed,
                "index": i,
                "seed": int(sub_seeds[i]),
                "final": [float(c) for c in final[i]],
                "max_radius_sq": float(max_radius_sq[i]),
            }
            for i in range(run.N_traj)
        ]
        _write_jsonl(outdir / "results.jsonl", rows)
        outputs.append("results.jsonl")
    if run.dump and "csv" in formats:
        for i in range(run.N_traj):
            traj = simulate(model, start, steps, int(sub_seeds[i]))
            name = f"trajectory_{i}.csv"
            write_trajectory_csv(outdir / name, traj, run.n)
            outputs.append(name)
    summary = {
        "steps": steps,
        "mean_final_radius_sq": float((final * final).sum(axis=1).mean()),
    }
    return None, summary, outputs, sub_seeds


def _cmd_marginal_fit(cfg: ExperimentConfig, outdir: Path, formats):
    model = build_model(cfg.model)
    run = cfg.run
    t_eval = run.t_eval if run.t_eval is not None else run.T
    try:
        result = marginal_fit(
            model,
            n=run.n,
            t_eval=t_eval,
            horizon=run.T,
            n_traj=run.N_traj,
            master_seed=run.seed,
            alpha=run.alpha,
            slack=run.slack,
            workers=run.workers,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    outputs = []
    _write_json(outdir / "ks_report.json", result.to_json())
    outputs.append("ks_report.json")
    if "csv" in formats:
        _write_csv(outdir / "samples.csv", ["y"], [[_fmt(y)] for y in result.values])
        outputs.append("samples.csv")
    if "jsonl" in formats:
        rows = [
            {
                "master_seed": run.seed,
                "index": i,
                "seed": int(result.sub_seeds[i]),
                "y": float(result.values[i]),
            }
            for i in range(run.N_traj)
        ]
        _write_jsonl(outdir / "results.jsonl", rows)
        outputs.append("results.jsonl")
    return result.report.passed, result.to_json(), outputs, result.sub_seeds


def _cmd_compensators(cfg: ExperimentConfig, outdir: Path, formats):
    model = build_model(cfg.model)
    run = cfg.run
    steps = int(math.ceil(run.n * run.T - 1e-9))
    start = parse_start(run.start, model.dim)
    from .seeding import substream_seeds
    from .walk import simulate_batch

    sub_seeds = substream_seeds(run.seed, run.N_traj)
    rows = []
    drift_gaps = []
    quad_gaps = []
    outputs = []
    chunk = 256
    for lo in range(0, run.N_traj, chunk):
        hi = min(lo + chunk, run.N_traj)
        positions = simulate_batch(model, start, steps, sub_seeds[lo:hi])
        for j in range(hi - lo):
            i = lo + j
            traj = Trajectory(
                start=start, steps=steps, seed=int(sub_seeds[i]), positions=positions[j]
            )
            track = compensators(traj, model, run.n, run.T)
            jumps = jump_diagnostics(track)
            residuals = convergence_residuals(track)
            drift_gaps.append(residuals.drift_gap)
            quad_gaps.append(residuals.quad_gap)
            rows.append(
                {
                    "master_seed": run.seed,
                    "index": i,
                    "seed": int(sub_seeds[i]),
                    "sup_jump_Y_sq": jumps.radius_sq_jump_sq,
                    "sup_jump_B_sq": jumps.compensator_jump_sq,
                    "sup_jump_A": jumps.quad_jump,
                    "drift_gap": residuals.drift_gap,
                    "quad_gap": residuals.quad_gap,
                    "Y_final": float(track.radius_sq[-1]),
                }
            )
            if i == 0 and (run.dump or run.N_traj == 1) and "csv" in formats:
                write_track_csv(outdir / "track_0.csv", track)
                outputs.append("track_0.csv")
    if "jsonl" in formats:
        _write_jsonl(outdir / "results.jsonl", rows)
        outputs.append("results.jsonl")
    summary = {
        "mean_drift_gap": float(np.mean(drift_gaps)),
        "mean_quad_gap": float(np.mean(quad_gaps)),
    }
    return None, summary, outputs, sub_seeds


def _cmd_phase(cfg: ExperimentConfig, outdir: Path, formats):
    run = cfg.run
    n_steps = run.N_steps if run.N_steps is not None else 100_000
    try:
        verdict = classify_phase(
            radial_var=cfg.model.U,
            total_var=cfg.model.V,
            dim=cfg.model.d,
            n_traj=run.N_traj,
            n_steps=n_steps,
            radius=run.radius,
            master_seed=run.seed,
            noise=cfg.model.noise,
            workers=run.workers,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    _write_json(outdir / "phase.json", verdict.to_json())
    passed = None
    if run.expect is not None:
        passed = verdict.verdict == run.expect
    return passed, verdict.to_json(), ["phase.json"], None


def _cmd_moments(cfg: ExperimentConfig, outdir: Path, formats):
    model = build_model(cfg.model)
    run = cfg.run
    start = parse_start(run.start, model.dim)
    check = moment_bound_check(
        model,
        start,
        power=run.ell,
        m_grid=parse_grid(run.m_grid, "m_grid"),
        n_traj=run.N_traj,
        master_seed=run.seed,
        workers=run.workers,
    )
    outputs = []
    _write_json(outdir / "moment_check.json", check.to_json())
    outputs.append("moment_check.json")
    if "csv" in formats:
        _write_csv(
            outdir / "moments.csv",
            ["m", "ratio"],
            [[int(m), _fmt(r)] for m, r in zip(check.steps, check.ratios)],
        )
        outputs.append("moments.csv")
    return check.passed, check.to_json(), outputs, None


def _cmd_null_occupation(cfg: ExperimentConfig, outdir: Path, formats):
    model = build_model(cfg.model)
    run = cfg.run
    start = parse_start(run.start, model.dim)
    check = occupation_fraction(
        model,
        start,
        ball_radius=run.ball_radius,
        n_grid=parse_grid(run.n_grid, "n_grid"),
        n_traj=run.N_traj,
        master_seed=run.seed,
        workers=run.workers,
    )
    outputs = []
    _write_json(outdir / "occupation_check.json", check.to_json())
    outputs.append("occupation_check.json")
    if "csv" in formats:
        _write_csv(
            outdir / "occupation.csv",
            ["n", "fraction"],
            [[int(n), _fmt(f)] for n, f in zip(check.horizons, check.fractions)],
        )
        outputs.append("occupation.csv")
    return check.passed, check.to_json(), outputs, None


_HANDLERS = {
    "validate": _cmd_validate,
    "simulate": _cmd_simulate,
    "marginal-fit": _cmd_marginal_fit,
    "compensators": _cmd_compensators,
    "phase": _cmd_phase,
    "moments": _cmd_moments,
    "null-occupation": _cmd_null_occupation,
}


def run_experiment(cfg: ExperimentConfig, outdir: str | Path | None = None) -> int:
    """Execute a configured command and write its artifacts plus a manifest."""
    if cfg.command not in _HANDLERS:
        raise ConfigError(f"no command given; choose from {', '.join(COMMANDS)}")
    out = Path(outdir if outdir is not None else cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    formats = {part.strip() for part in cfg.output.formats.split(",") if part.strip()}

    started = time.perf_counter()
    passed, summary, outputs, sub_seeds = _HANDLERS[cfg.command](cfg, out, formats)
    wall = time.perf_counter() - started

    manifest = {
        "manifest_version": MANIFEST_VERSION,
        "command": cfg.command,
        "config": cfg.to_dict(),
        "package_version": __version__,
        "numpy_version": np.__version__,
        "python_version": sys.version.split()[0],
        "master_seed": cfg.run.seed,
        "sub_seeds": None if sub_seeds is None else [int(s) for s in sub_seeds],
        "wall_time_s": wall,
        "outputs": outputs,
        "summary": summary,
    }
    _write_json(out / "manifest.json", manifest)
    return EXIT_PASS if passed in (True, None) else EXIT_FAIL


def replay(manifest_path: str | Path, index: int, outdir: str | Path | None = None) -> int:
    """Regenerate one trajectory of a recorded run, with full CSV dumps."""
    manifest_path = Path(manifest_path)
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    if manifest.get("manifest_version") != MANIFEST_VERSION:
        raise ConfigError(
            f"manifest version {manifest.get('manifest_version')!r} does not match "
            f"this build ({MANIFEST_VERSION})"
        )
    sub_seeds = manifest.get("sub_seeds")
    if not sub_seeds:
        raise ConfigError("manifest records no per-trajectory seeds; nothing to replay")
    if not 0 <= index < len(sub_seeds):
        raise ConfigError(
            f"trajectory index {index} out of range 0..{len(sub_seeds) - 1}"
        )
    cfg = config_from_dict(manifest["config"])
    model = build_model(cfg.model)
    run = cfg.run
    if cfg.command == "simulate":
        steps = _steps_for(run)
    else:
        steps = int(math.ceil(run.n * run.T - 1e-9))
    start = parse_start(run.start, model.dim)
    traj = simulate(model, start, steps, int(sub_seeds[index]))

    out = Path(outdir if outdir is not None else manifest_path.parent)
    out.mkdir(parents=True, exist_ok=True)
    write_trajectory_csv(out / f"replay_trajectory_{index}.csv", traj, run.n)
    track = compensators(traj, model, run.n, run.T)
    write_track_csv(out / f"replay_track_{index}.csv", track)

    t_eval = run.t_eval if run.t_eval is not None else run.T
    y_at_eval = float(track.radius_sq[min(floor_index(run.n, t_eval), len(track.times) - 1)])
    _write_json(
        out / f"replay_{index}.json",
        {
            "index": index,
            "seed": int(sub_seeds[index]),
            "master_seed": run.seed,
            "steps": steps,
            "y_at_t_eval": y_at_eval,
            "y_final": float(track.radius_sq[-1]),
        },
    )
    return EXIT_PASS


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="radialwalk",
        description="Seeded Monte Carlo diagnostics for direction-dependent "
        "zero-drift walks and their squared-Bessel radial limits.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add_common(p):
        p.add_argument("--config", help="config file (flags override its values)")
        p.add_argument("--out", help="output directory (default: config value, "
                       "RADIALWALK_OUT, or '.')")
        g = p.add_argument_group("model")
        g.add_argument("--d", type=int, help="ambient dimension (>= 2)")
        g.add_argument("--U", type=float, help="radial increment variance")
        g.add_argument("--V", type=float, help="total increment variance (trace)")
        g.add_argument("--noise", choices=["rademacher", "gaussian"])
        g.add_argument("--perturb-c", dest="perturb_c", type=float,
                       help="perturbation amplitude c >= 0")
        g.add_argument("--perturb-delta", dest="perturb_delta", type=float,
                       help="perturbation decay delta > 0")
        r = p.add_argument_group("run")
        r.add_argument("--n", type=int, help="diffusive scaling index")
        r.add_argument("--T", type=float, help="horizon")
        r.add_argument("--t-eval", dest="t_eval", type=float, help="marginal time in (0, T]")
        r.add_argument("--N-traj", dest="N_traj", type=int, help="ensemble size")
        r.add_argument("--N-steps", dest="N_steps", type=int, help="steps per walk")
        r.add_argument("--seed", type=int, help="master seed")
        r.add_argument("--workers", type=int, help="worker threads")
        r.add_argument("--start", help="'e1' or comma-separated coordinates")
        r.add_argument("--radius", type=float, help="phase classification radius")
        r.add_argument("--ball-radius", dest="ball_radius", type=float,
                       help="occupation ball radius")
        r.add_argument("--ell", type=int, help="moment power 1..4")
        r.add_argument("--m-grid", dest="m_grid", help="comma list of step counts")
        r.add_argument("--n-grid", dest="n_grid", help="comma list of horizons")
        r.add_argument("--n-dirs", dest="n_dirs", type=int, help="validation directions")
        r.add_argument("--tol", type=float, help="validation tolerance")
        r.add_argument("--alpha", type=float, help="KS significance level")
        r.add_argument("--slack", type=float, help="KS threshold slack")
        r.add_argument("--expect", help="expected phase verdict (phase command)")
        r.add_argument("--dump", action="store_true", default=None,
                       help="write full per-trajectory CSV dumps")
        o = p.add_argument_group("output")
        o.add_argument("--formats", help="comma list from csv,jsonl")

    for name in COMMANDS + ("run",):
        p = sub.add_parser(name, help=f"run the {name} diagnostic"
                           if name != "run" else "run the command named in the config")
        add_common(p)

    rp = sub.add_parser("replay", help="regenerate one recorded trajectory")
    rp.add_argument("--manifest", required=True, help="path to a run manifest")
    rp.add_argument("--index", required=True, type=int, help="trajectory index")
    rp.add_argument("--out", help="output directory (default: manifest directory)")
    return parser


def _assemble_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.subcommand != "run":
        from dataclasses import replace

        cfg = replace(cfg, command=args.subcommand)
    cfg = override(
        cfg,
        "model",
        d=args.d,
        U=args.U,
        V=args.V,
        noise=args.noise,
        perturb_c=args.perturb_c,
        perturb_delta=args.perturb_delta,
    )
    cfg = override(
        cfg,
        "run",
        n=args.n,
        T=args.T,
        t_eval=args.t_eval,
        N_traj=args.N_traj,
        N_steps=args.N_steps,
        seed=args.seed,
        workers=args.workers,
        start=args.start,
        radius=args.radius,
        ball_radius=args.ball_radius,
        ell=args.ell,
        m_grid=args.m_grid,
        n_grid=args.n_grid,
        n_dirs=args.n_dirs,
        tol=args.tol,
        alpha=args.alpha,
        slack=args.slack,
        expect=args.expect,
        dump=args.dump,
    )
    directory = args.out or os.environ.get("RADIALWALK_OUT")
    cfg = override(cfg, "output", directory=directory, formats=args.formats)
    return cfg


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else 0
    try:
        if args.subcommand == "replay":
            return replay(args.manifest, args.index, args.out)
        cfg = _assemble_config(args)
        return run_experiment(cfg)
    except ConfigError as exc:
        print(f"radialwalk: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SimulationOverflow as exc:
        print(
            f"radialwalk: numerical abort: {exc} "
            f"(replay with --index {exc.trajectory})",
            file=sys.stderr,
        )
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
