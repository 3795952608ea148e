"""Command-line front door.

Subcommands: ``solve`` (one steady state + rightmost eigenvalue),
``spectrum`` (Ritz values at the mean viscosity), ``train`` (surrogates at
the sparse-grid design), ``assess`` (Monte Carlo validation tables), and
``cache`` (inspect/clear the evaluation cache).

Exit codes: 0 success, 2 configuration error, 3 solver failure,
4 eigensolver failure.  All output files embed the resolved configuration
and seeds; timing lines go to the console only, so reruns with the same
config are byte-identical.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from .config import (ExperimentConfig, build_mesh, build_kl, build_model,
                     build_simulator, build_space_for, load_config)
from .assembly import SpatialField
from .eigen import build_problem, rightmost, ritz_to_csv
from .errors import (ConfigError, ConvergenceError, EigenError,
                     FlowstabError, SolverError)
from .metrics import Report, build_report
from .quadrature import smolyak
from .simulate import SampleSet, Simulator, monte_carlo
from .steady import build_operators, solve_steady
from .surrogates import (TrainingSet, gp_train, load_surrogate, nn_train,
                         save_surrogate, sc_train)


def _cov_tag(cov: float) -> str:
    return f"cov{100.0 * cov:g}pct"


def surrogate_path(config: ExperimentConfig, name: str, cov: float) -> Path:
    return config.outdir / f"surrogate_{name}_{_cov_tag(cov)}.json"


def design_samples(config: ExperimentConfig):
    """Sparse-grid nodes packaged as the training sample set."""
    grid = smolyak(config.family, config.m, config.level)
    samples = SampleSet(grid.nodes, seed=config.sample_seed,
                        distribution=config.distribution)
    return grid, samples


def train_surrogates(config: ExperimentConfig, sim: Simulator, cov: float,
                     workers: int = 1, save: bool = True) -> dict:
    """Run the simulator at the design nodes and fit the selected models.

    The collocation surrogate always uses the full grid (its weights are
    tied to the nodes); the regression models honour the subsample stride.
    """
    grid, samples = design_samples(config)
    result = monte_carlo(sim, samples, workers=workers)
    if result.n_failed:
        bad = [i for i, r in enumerate(result.records) if r.failed]
        raise ConvergenceError(
            f"{result.n_failed} design-node solves failed "
            f"(nodes {bad}); surrogates need the full grid")

    targets_re = result.lam_re
    targets = targets_re + 1j * result.lam_im
    if np.all(result.lam_im == 0.0):
        targets = targets_re

    surrogates: dict[str, object] = {}
    provenance = {"config": config.resolved(), "cov": cov,
                  "model": sim.model.describe(),
                  "design": {"n_nodes": int(samples.n),
                             "stride": config.stride}}
    for name in config.models:
        start = time.perf_counter()
        if name == "sc":
            fitted = sc_train(grid, targets, config.p)
        else:
            design = TrainingSet.from_samples(samples.xi, targets_re)
            design = design.subsample(config.stride)
            if name == "gp":
                fitted = gp_train(design, sigma_l=config.gp_sigma_l)
            else:
                fitted = nn_train(design, seed=config.nn_seed)
        elapsed = time.perf_counter() - start
        print(f"[train] {name} ({_cov_tag(cov)}): {elapsed:.2f} s")
        surrogates[name] = fitted
        if save:
            config.outdir.mkdir(parents=True, exist_ok=True)
            save_surrogate(fitted, surrogate_path(config, name, cov),
                           provenance=provenance)
    return surrogates


def ensure_surrogates(config: ExperimentConfig, sim: Simulator, cov: float,
                      workers: int = 1) -> dict:
    """Load previously trained surrogates, training any that are missing."""
    missing = [name for name in config.models
               if not surrogate_path(config, name, cov).exists()]
    if missing:
        return train_surrogates(config, sim, cov, workers=workers)
    return {name: load_surrogate(surrogate_path(config, name, cov))
            for name in config.models}


def assess_one(config: ExperimentConfig, sim: Simulator, cov: float,
               surrogates: dict, workers: int = 1) -> Report:
    """Monte Carlo run plus surrogate columns for one CoV setting."""
    samples = SampleSet.draw(config.n_mc, config.m, config.distribution,
                             config.sample_seed)
    start = time.perf_counter()
    result = monte_carlo(sim, samples, workers=workers)
    elapsed = time.perf_counter() - start
    print(f"[assess] simulator x{samples.n} ({_cov_tag(cov)}): "
          f"{elapsed:.2f} s ({elapsed / samples.n:.3f} s/sample)")

    ok_xi = samples.xi[result.ok]
    columns = {}
    for name, fitted in surrogates.items():
        start = time.perf_counter()
        columns[name] = fitted.evaluate(ok_xi)
        elapsed = time.perf_counter() - start
        print(f"[assess] {name} x{ok_xi.shape[0]}: {elapsed:.4f} s")

    provenance = {"config": config.resolved(), "cov": cov,
                  "model": sim.model.describe(),
                  "sample_seed": config.sample_seed}
    return build_report(result.values(), columns, label=_cov_tag(cov),
                        sample_hash=result.sample_hash,
                        n_failed=result.n_failed, provenance=provenance)


def _parse_xi(text: str | None, dim: int) -> np.ndarray:
    if text is None:
        return np.zeros(dim)
    try:
        xi = np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise ConfigError(f"could not parse --xi value {text!r}")
    if xi.size != dim:
        raise ConfigError(f"--xi needs {dim} components, got {xi.size}")
    return xi


def _resolve_workers(args, config: ExperimentConfig) -> int:
    if args.workers is not None:
        return max(1, args.workers)
    return max(1, os.cpu_count() or 1)


def cmd_solve(args) -> int:
    config = load_config(args.config)
    cov = config.covs[0]
    mesh = build_mesh(config)
    space = build_space_for(config, mesh)
    model = build_model(config, build_kl(config, mesh), cov)
    xi = _parse_xi(args.xi, config.m)

    config.outdir.mkdir(parents=True, exist_ok=True)
    visc = model.evaluate(xi)
    ops = build_operators(mesh, space, visc)
    start = time.perf_counter()
    try:
        steady = solve_steady(ops, config.solver)
    except ConvergenceError as exc:
        trace_path = config.outdir / "solve_trace.json"
        trace_path.write_text(json.dumps(
            {"error": str(exc), "trace": exc.trace,
             "config": config.resolved(), "xi": xi.tolist()},
            indent=2, sort_keys=True) + "\n")
        print(f"steady solve failed; trace written to {trace_path}",
              file=sys.stderr)
        raise
    print(f"[solve] steady state: {time.perf_counter() - start:.2f} s")

    start = time.perf_counter()
    eig = rightmost(build_problem(ops, steady.state, delta=config.delta),
                    k=config.k, shift=config.shift, seed=config.eigen_seed)
    print(f"[solve] eigensolve: {time.perf_counter() - start:.2f} s")

    np.save(config.outdir / "velocity.npy", steady.state.velocity)
    np.save(config.outdir / "pressure.npy", steady.state.pressure)
    payload = {
        "config": config.resolved(),
        "cov": cov,
        "xi": xi.tolist(),
        "eigenvalue": {"re": eig.eigenvalue.real, "im": eig.eigenvalue.imag},
        "method": eig.method,
        "k": eig.k,
        "residual": eig.residual,
        "steady": {"converged": steady.converged,
                   "residual": steady.residual,
                   "reference": steady.reference,
                   "iterations": len(steady.trace)},
    }
    (config.outdir / "solve.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n")
    print(f"rightmost eigenvalue: {eig.eigenvalue.real:+.6e} "
          f"{eig.eigenvalue.imag:+.6e}i")
    return 0


def cmd_spectrum(args) -> int:
    config = load_config(args.config)
    mesh = build_mesh(config)
    space = build_space_for(config, mesh)
    # the deterministic reference computation: constant mean viscosity
    ops = build_operators(mesh, space, SpatialField.constant(mesh, config.nu1))
    start = time.perf_counter()
    steady = solve_steady(ops, config.solver)
    eig = rightmost(build_problem(ops, steady.state, delta=config.delta),
                    k=config.k, shift=config.shift, seed=config.eigen_seed)
    print(f"[spectrum] total: {time.perf_counter() - start:.2f} s, "
          f"{eig.candidates.size} Ritz values retained")

    config.outdir.mkdir(parents=True, exist_ok=True)
    ritz_to_csv(eig, config.outdir / "spectrum.csv")
    payload = {
        "config": config.resolved(),
        "rightmost": {"re": eig.eigenvalue.real, "im": eig.eigenvalue.imag},
        "k": eig.k,
        "method": eig.method,
        "n_candidates": int(eig.candidates.size),
        "n_excluded": int(eig.excluded.size),
    }
    (config.outdir / "spectrum.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n")
    print(f"rightmost: {eig.eigenvalue.real:+.6e} {eig.eigenvalue.imag:+.6e}i")
    return 0


def cmd_train(args) -> int:
    config = load_config(args.config)
    workers = _resolve_workers(args, config)
    mesh = build_mesh(config)
    space = build_space_for(config, mesh)
    kl = build_kl(config, mesh)
    for cov in config.covs:
        sim = build_simulator(config, cov, mesh=mesh, space=space, kl=kl)
        train_surrogates(config, sim, cov, workers=workers)
        for name in config.models:
            print(f"wrote {surrogate_path(config, name, cov)}")
    return 0


def cmd_assess(args) -> int:
    config = load_config(args.config)
    workers = _resolve_workers(args, config)
    mesh = build_mesh(config)
    space = build_space_for(config, mesh)
    kl = build_kl(config, mesh)
    config.outdir.mkdir(parents=True, exist_ok=True)

    blocks = []
    for cov in config.covs:
        sim = build_simulator(config, cov, mesh=mesh, space=space, kl=kl)
        surrogates = ensure_surrogates(config, sim, cov, workers=workers)
        report = assess_one(config, sim, cov, surrogates, workers=workers)
        tag = _cov_tag(cov)
        report.to_json(config.outdir / f"report_{tag}.json")
        report.kde_csv(config.outdir / f"kde_{tag}.csv")
        blocks.append((tag, report))

    lines = []
    for tag, report in blocks:
        lines.append(f"# {tag}")
        for row in report.metrics_rows():
            lines.append(",".join(str(v) for v in row))
        lines.append("")
    (config.outdir / "metrics.csv").write_text("\n".join(lines))
    print(f"wrote {config.outdir / 'metrics.csv'}")
    return 0


def cmd_cache(args) -> int:
    config = load_config(args.config)
    if config.cache is None:
        print("cache disabled in config")
        return 0
    path = config.outdir / config.cache
    if args.cache_action == "clear":
        if path.exists():
            path.unlink()
            print(f"removed {path}")
        else:
            print(f"nothing to remove at {path}")
        return 0
    # inspect
    if not path.exists():
        print(f"no cache at {path}")
        return 0
    fingerprints: dict[str, int] = {}
    failed = 0
    with path.open() as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            fingerprints[record["fingerprint"]] = \
                fingerprints.get(record["fingerprint"], 0) + 1
            failed += bool(record.get("failed"))
    total = sum(fingerprints.values())
    print(f"{path}: {total} records, {failed} failed, "
          f"{len(fingerprints)} distinct configurations")
    for fp, count in sorted(fingerprints.items()):
        print(f"  {fp[:16]}...  {count}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flowstab",
        description="Stability of steady flows under uncertain viscosity")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True,
                        help="experiment configuration (YAML)")
    common.add_argument("--workers", type=int, default=None,
                        help="simulator worker processes "
                             "(default: logical cores)")

    p = sub.add_parser("solve", parents=[common],
                       help="one steady solve plus rightmost eigenvalue")
    p.add_argument("--xi", default=None,
                   help="comma-separated germ sample (default: origin)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("spectrum", parents=[common],
                       help="Ritz values at the mean viscosity")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("train", parents=[common],
                       help="fit surrogates at the sparse-grid design")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("assess", parents=[common],
                       help="Monte Carlo validation tables and KDE curves")
    p.set_defaults(func=cmd_assess)

    p = sub.add_parser("cache", parents=[common],
                       help="inspect or clear the evaluation cache")
    p.add_argument("cache_action", choices=("inspect", "clear"))
    p.set_defaults(func=cmd_cache)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except EigenError as exc:
        print(f"eigensolver failure: {exc}", file=sys.stderr)
        return 4
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    except FlowstabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
