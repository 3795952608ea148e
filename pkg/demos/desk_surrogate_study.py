#!/usr/bin/env python3
"""Small surrogate study on the coarse obstacle benchmark.

The full chain at desk scale: draw a sparse collocation grid, run the
simulator at every node, fit the three surrogate families, then judge
them against a fresh Monte Carlo reference.  The printed table shows
the root mean square error of each surrogate together with the moment
and exceedance-probability shifts it would introduce.

With the defaults (refinement 1, 29 design nodes, 150 reference
samples) this takes a couple of minutes on one core.  The point of the
exercise is the last column ratio: surrogate evaluations cost
microseconds, so once trained, the Monte Carlo loop is essentially free.
"""

import argparse
import os
import time

import numpy as np

from flowstab import (GpcBasis, SampleSet, TrainingSet, build_kl, build_mesh,
                      build_model, build_report, build_simulator,
                      build_space_for, config_from_dict, gp_train,
                      monte_carlo, nn_train, sc_train, smolyak)


def desk_config(n_mc, cov):
    return config_from_dict({
        "benchmark": "obstacle",
        "mesh": {"refine": 1},
        "viscosity": {"covs": [cov], "m": 2},
        "eigen": {"seed": 0},
        "surrogates": {"nn_seed": 0},
        "assess": {"n_mc": n_mc, "sample_seed": 101},
        "paths": {"cache": None},
    })


def train_all(config, sim, workers):
    grid = smolyak(config.family, config.m, config.level)
    nodes = SampleSet(grid.nodes, config.sample_seed, config.distribution)
    print(f"[design] {grid.nodes.shape[0]} sparse-grid nodes, "
          f"level {config.level}")
    start = time.perf_counter()
    design = monte_carlo(sim, nodes, workers=workers)
    print(f"[design] simulator sweep: {time.perf_counter() - start:.1f} s")
    if design.n_failed:
        raise SystemExit("design nodes failed; cannot train")

    targets = design.lam_re
    surrogates = {"sc": sc_train(grid, targets, config.p)}
    training = TrainingSet.from_samples(grid.nodes, targets,
                                        weights=grid.weights)
    surrogates["gp"] = gp_train(training.subsample(config.stride))
    surrogates["nn"] = nn_train(training.subsample(config.stride),
                                seed=config.nn_seed)
    return surrogates


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--cov", type=float, default=0.10,
                        help="coefficient of variation (default 0.10)")
    parser.add_argument("--n-mc", type=int, default=150)
    parser.add_argument("--workers", type=int,
                        default=max(1, os.cpu_count() or 1))
    args = parser.parse_args()

    config = desk_config(args.n_mc, args.cov)
    mesh = build_mesh(config)
    space = build_space_for(config, mesh)
    kl = build_kl(config, mesh)
    sim = build_simulator(config, args.cov, use_cache=False,
                          mesh=mesh, space=space, kl=kl)
    print(f"[setup] {sim.label}: {space.n_u} velocity dofs, "
          f"{space.n_p} pressure dofs")

    surrogates = train_all(config, sim, args.workers)

    samples = SampleSet.draw(config.n_mc, config.m, config.distribution,
                             config.sample_seed)
    start = time.perf_counter()
    reference = monte_carlo(sim, samples, workers=args.workers)
    sim_time = time.perf_counter() - start
    print(f"[mc] {samples.n} reference samples: {sim_time:.1f} s "
          f"({sim_time / samples.n:.2f} s/sample)")

    ok_xi = samples.xi[reference.ok]
    columns = {}
    eval_time = {}
    for name, fitted in surrogates.items():
        start = time.perf_counter()
        columns[name] = fitted.evaluate(ok_xi)
        eval_time[name] = time.perf_counter() - start

    report = build_report(reference.values(), columns,
                          label=f"cov{100 * args.cov:g}pct",
                          sample_hash=reference.sample_hash,
                          n_failed=reference.n_failed,
                          provenance={"demo": "desk_surrogate_study"})
    print()
    names = list(report.columns)
    print("  ".join(["metric".rjust(8)] + [n.rjust(12) for n in names]))
    for metric in ("rmse", "mu", "sigma", "pr"):
        cells = [metric.rjust(8)]
        for name in names:
            value = report.columns[name].get(metric)
            cells.append("".rjust(12) if value is None else f"{value:12.4e}")
        print("  ".join(cells))
    print()
    sigma = report.columns["mc"]["sigma"]
    for name in columns:
        speedup = sim_time / max(eval_time[name], 1e-12)
        print(f"{name}: rmse = {report.columns[name]['rmse'] / sigma:.2e} "
              f"of sigma, eval speedup x{speedup:.0f}")


if __name__ == "__main__":
    main()
