"""Monte Carlo driver: repeated rightmost-eigenvalue solves over random
viscosity realizations, with an on-disk evaluation cache.

The expensive map ``xi -> rightmost eigenvalue`` is wrapped in a
:class:`Simulator` that composes viscosity evaluation, the steady solve and
the eigensolve.  Results can be cached in an append-only JSONL file keyed by
the sample bytes together with a fingerprint of the full configuration, so a
cache written under one setup can never leak into another.
"""

from __future__ import annotations

import csv
import hashlib
import json
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigError, ConvergenceError, EigenError, PositivityError
from .eigen import build_problem, rightmost
from .meshes import Mesh, MixedSpace
from .steady import SolverSettings, build_operators, solve_steady
from .viscosity import ViscosityModel

DISTRIBUTIONS = ("normal", "uniform")

#: basis family -> sampling distribution of the germ
FAMILY_DISTRIBUTION = {"hermite": "normal", "legendre": "uniform"}


def family_distribution(family: str) -> str:
    try:
        return FAMILY_DISTRIBUTION[family]
    except KeyError:
        raise ConfigError(f"no sampling distribution for basis family {family!r}")


@dataclass(frozen=True)
class SampleSet:
    """Reproducible batch of germ draws ``xi`` with their provenance."""

    xi: np.ndarray          # (n, dim)
    seed: int
    distribution: str

    def __post_init__(self):
        object.__setattr__(self, "xi", np.atleast_2d(np.asarray(self.xi, dtype=float)))
        if self.distribution not in DISTRIBUTIONS:
            raise ConfigError(f"unknown distribution {self.distribution!r}")

    @property
    def n(self) -> int:
        return self.xi.shape[0]

    @property
    def dim(self) -> int:
        return self.xi.shape[1]

    @classmethod
    def draw(cls, n: int, dim: int, distribution: str, seed: int) -> "SampleSet":
        """Fresh draws: standard normal or uniform on [-1, 1]."""
        if n < 1 or dim < 1:
            raise ConfigError("sample set needs n >= 1 and dim >= 1")
        rng = np.random.default_rng(seed)
        if distribution == "normal":
            xi = rng.standard_normal((n, dim))
        elif distribution == "uniform":
            xi = rng.uniform(-1.0, 1.0, size=(n, dim))
        else:
            raise ConfigError(f"unknown distribution {distribution!r}")
        return cls(xi, seed, distribution)

    def content_hash(self) -> str:
        payload = np.ascontiguousarray(self.xi, dtype=np.float64).tobytes()
        return hashlib.sha256(payload).hexdigest()

    def to_csv(self, path) -> None:
        path = Path(path)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["seed", self.seed])
            writer.writerow(["distribution", self.distribution])
            writer.writerow([f"xi_{j}" for j in range(self.dim)])
            for row in self.xi:
                writer.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path) -> "SampleSet":
        path = Path(path)
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
        if len(rows) < 4 or rows[0][0] != "seed" or rows[1][0] != "distribution":
            raise ConfigError(f"{path} is not a sample-set file")
        seed = int(rows[0][1])
        distribution = rows[1][1]
        xi = np.array([[float(v) for v in row] for row in rows[3:]])
        return cls(xi, seed, distribution)


@dataclass(frozen=True)
class SampleRecord:
    """Outcome of one simulator call.

    ``digest`` is a short hash of the solver iteration trace; two records
    computed from the same configuration and sample agree bitwise.
    """

    xi: tuple
    lam_re: float
    lam_im: float
    failed: bool
    note: str = ""
    digest: str = ""

    def to_dict(self) -> dict:
        return {
            "xi": list(self.xi),
            "lam_re": self.lam_re,
            "lam_im": self.lam_im,
            "failed": self.failed,
            "note": self.note,
            "digest": self.digest,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SampleRecord":
        return cls(tuple(data["xi"]), float(data["lam_re"]), float(data["lam_im"]),
                   bool(data["failed"]), data.get("note", ""), data.get("digest", ""))


class EvalCache:
    """Append-only JSONL store of simulator records.

    Every record carries the configuration fingerprint it was computed
    under; lookups ignore records whose fingerprint differs from the
    cache's own, so stale or foreign entries are recomputed rather than
    reused.
    """

    def __init__(self, path, fingerprint: str):
        self.path = Path(path)
        self.fingerprint = fingerprint
        self._store: dict[str, SampleRecord] = {}
        if self.path.exists():
            with self.path.open() as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    data = json.loads(line)
                    if data.get("fingerprint") != fingerprint:
                        continue
                    self._store.setdefault(data["key"], SampleRecord.from_dict(data))

    def __len__(self) -> int:
        return len(self._store)

    def get(self, key: str) -> Optional[SampleRecord]:
        return self._store.get(key)

    def put(self, key: str, record: SampleRecord) -> None:
        if key in self._store:
            return
        self._store[key] = record
        data = {"key": key, "fingerprint": self.fingerprint}
        data.update(record.to_dict())
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with self.path.open("a") as fh:
            fh.write(json.dumps(data, sort_keys=True) + "\n")


def _sample_key(xi: np.ndarray, fingerprint: str) -> str:
    payload = np.ascontiguousarray(xi, dtype=np.float64).tobytes()
    return hashlib.sha256(payload + fingerprint.encode()).hexdigest()


@dataclass
class Simulator:
    """Bound map from a germ sample to the rightmost eigenvalue.

    Holds everything the map depends on; ``fingerprint`` digests it all so
    cached results are only reused under the exact same setup.
    """

    mesh: Mesh
    space: MixedSpace
    model: ViscosityModel
    settings: SolverSettings = field(default_factory=SolverSettings)
    delta: float = -1e-2
    k: int = 24
    shift: float = 0.0
    seed: int = 0
    label: str = ""
    cache: Optional[EvalCache] = None

    def describe(self) -> dict:
        xs, ys = self.mesh.xs, self.mesh.ys
        return {
            "label": self.label,
            "mesh": {
                "n_cells": int(self.mesh.n_cells),
                "n_vnodes": int(self.mesh.n_vnodes),
                "bbox": [float(xs[0]), float(xs[-1]), float(ys[0]), float(ys[-1])],
                "pressure": self.space.pressure,
                "n_u": int(self.space.n_u),
                "n_p": int(self.space.n_p),
            },
            "viscosity": self.model.describe(),
            "solver": {
                "picard_steps": self.settings.picard_steps,
                "newton_steps": self.settings.newton_steps,
                "rel_tol": self.settings.rel_tol,
                "divergence_patience": self.settings.divergence_patience,
            },
            "eigen": {"delta": self.delta, "k": self.k,
                      "shift": self.shift, "seed": self.seed},
        }

    @property
    def fingerprint(self) -> str:
        blob = json.dumps(self.describe(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def attach_cache(self, path) -> None:
        self.cache = EvalCache(path, self.fingerprint)

    def compute(self, xi) -> SampleRecord:
        """Run the full chain for one sample; failures become records."""
        xi = np.asarray(xi, dtype=float).ravel()
        key = tuple(float(v) for v in xi)
        try:
            visc = self.model.evaluate(xi)
        except PositivityError as exc:
            return SampleRecord(key, float("nan"), float("nan"), True,
                                f"viscosity: {exc}")
        ops = build_operators(self.mesh, self.space, visc)
        try:
            steady = solve_steady(ops, self.settings)
        except ConvergenceError as exc:
            return SampleRecord(key, float("nan"), float("nan"), True,
                                f"steady solve: {exc}")
        problem = build_problem(ops, steady.state, delta=self.delta)
        try:
            eig = rightmost(problem, k=self.k, shift=self.shift, seed=self.seed)
        except EigenError as exc:
            return SampleRecord(key, float("nan"), float("nan"), True,
                                f"eigensolve: {exc}")
        trace = {"steady": steady.trace, "residual": steady.residual,
                 "eigen": {"method": eig.method, "k": eig.k,
                           "residual": eig.residual}}
        digest = hashlib.sha256(
            json.dumps(trace, sort_keys=True).encode()).hexdigest()[:16]
        lam = eig.eigenvalue
        return SampleRecord(key, float(lam.real), float(lam.imag), False,
                            "", digest)

    def run(self, xi) -> SampleRecord:
        xi = np.asarray(xi, dtype=float).ravel()
        if self.cache is not None:
            key = _sample_key(xi, self.fingerprint)
            hit = self.cache.get(key)
            if hit is not None:
                return hit
        record = self.compute(xi)
        if self.cache is not None:
            self.cache.put(key, record)
        return record


def run_simulator(simulator: Simulator, xi) -> SampleRecord:
    """One cached rightmost-eigenvalue evaluation at the sample ``xi``."""
    return simulator.run(xi)


# handed to forked pool workers through inherited memory; boundary profiles
# may be arbitrary callables, so the simulator is not required to pickle
_WORKER_SIM: Optional[Simulator] = None


def _worker_run(xi) -> SampleRecord:
    return _WORKER_SIM.compute(xi)


@dataclass(frozen=True)
class McResult:
    """Aligned records for a sample set; failed entries are NaN-valued."""

    records: tuple
    sample_hash: str

    @property
    def n(self) -> int:
        return len(self.records)

    @property
    def ok(self) -> np.ndarray:
        return np.array([not r.failed for r in self.records], dtype=bool)

    @property
    def n_failed(self) -> int:
        return int((~self.ok).sum())

    @property
    def lam_re(self) -> np.ndarray:
        return np.array([r.lam_re for r in self.records])

    @property
    def lam_im(self) -> np.ndarray:
        return np.array([r.lam_im for r in self.records])

    def values(self) -> np.ndarray:
        """Real parts of the successful samples, in sample order."""
        return self.lam_re[self.ok]


def monte_carlo(simulator: Simulator, samples: SampleSet,
                workers: int = 1) -> McResult:
    """Evaluate the simulator on every sample.

    With ``workers > 1`` the uncached samples fan out over a process pool;
    results are reduced in sample order and cache writes stay in the parent
    process, so the outcome is independent of scheduling.
    """
    if samples.dim != simulator.model.dim:
        raise ConfigError(
            f"sample dimension {samples.dim} does not match "
            f"viscosity model dimension {simulator.model.dim}")
    want = family_distribution(simulator.model.basis.family)
    if samples.distribution != want:
        raise ConfigError(
            f"samples drawn from {samples.distribution!r} but the "
            f"viscosity basis expects {want!r}")

    n = samples.n
    records: list[Optional[SampleRecord]] = [None] * n
    missing: list[int] = []
    if simulator.cache is not None:
        for i in range(n):
            key = _sample_key(samples.xi[i], simulator.fingerprint)
            hit = simulator.cache.get(key)
            if hit is not None:
                records[i] = hit
            else:
                missing.append(i)
    else:
        missing = list(range(n))

    if missing:
        try:
            context = multiprocessing.get_context("fork")
        except ValueError:
            context = None
        if workers > 1 and len(missing) > 1 and context is not None:
            global _WORKER_SIM
            _WORKER_SIM = simulator
            try:
                with ProcessPoolExecutor(max_workers=workers,
                                         mp_context=context) as pool:
                    fresh = list(pool.map(_worker_run,
                                          [samples.xi[i] for i in missing]))
            finally:
                _WORKER_SIM = None
        else:
            fresh = [simulator.compute(samples.xi[i]) for i in missing]
        for i, record in zip(missing, fresh):
            records[i] = record
            if simulator.cache is not None:
                key = _sample_key(samples.xi[i], simulator.fingerprint)
                simulator.cache.put(key, record)

    return McResult(tuple(records), samples.content_hash())
