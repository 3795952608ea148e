"""Simulator composition, the evaluation cache, and the Monte Carlo loop.

Everything runs on a deliberately tiny straight channel so a full
steady-plus-eigen solve takes milliseconds.
"""

import json

import numpy as np
import pytest

from flowstab.assembly import SpatialField
from flowstab.eigen import build_problem, rightmost
from flowstab.errors import ConfigError
from flowstab.meshes import build_space, channel_mesh
from flowstab.randomfield import kl_decompose
from flowstab.simulate import (EvalCache, McResult, SampleRecord, SampleSet,
                               Simulator, family_distribution, monte_carlo,
                               run_simulator)
from flowstab.steady import build_operators, solve_steady
from flowstab.viscosity import build_affine, build_lognormal

NU1 = 0.01


@pytest.fixture(scope="module")
def toy():
    mesh = channel_mesh(8, 4, length=2.0)
    space = build_space(mesh, "q1")
    kl = kl_decompose(mesh, 2, 1.0, 0.5, 0.5)
    return mesh, space, kl


def make_sim(toy, kind="affine", cov=0.1, **kwargs):
    mesh, space, kl = toy
    if kind == "affine":
        model = build_affine(NU1, cov, kl, 2)
    else:
        model = build_lognormal(NU1, cov, kl, 2, 3)
    return Simulator(mesh, space, model, label="toy-channel", **kwargs)


def test_family_distribution_map():
    assert family_distribution("hermite") == "normal"
    assert family_distribution("legendre") == "uniform"
    with pytest.raises(ConfigError):
        family_distribution("laguerre")


def test_sample_set_draws_reproducible():
    a = SampleSet.draw(50, 3, "normal", seed=42)
    b = SampleSet.draw(50, 3, "normal", seed=42)
    np.testing.assert_array_equal(a.xi, b.xi)
    c = SampleSet.draw(50, 3, "normal", seed=43)
    assert not np.array_equal(a.xi, c.xi)
    assert a.n == 50 and a.dim == 3


def test_sample_set_uniform_bounds():
    s = SampleSet.draw(500, 2, "uniform", seed=1)
    assert s.xi.min() >= -1.0 and s.xi.max() <= 1.0
    # a normal draw of this size always escapes the unit box
    assert np.abs(SampleSet.draw(500, 2, "normal", seed=1).xi).max() > 1.0
    with pytest.raises(ConfigError):
        SampleSet.draw(10, 2, "lognormal", seed=0)
    with pytest.raises(ConfigError):
        SampleSet.draw(0, 2, "normal", seed=0)


def test_sample_set_csv_round_trip(tmp_path):
    s = SampleSet.draw(20, 2, "uniform", seed=9)
    path = tmp_path / "samples.csv"
    s.to_csv(path)
    back = SampleSet.from_csv(path)
    np.testing.assert_array_equal(back.xi, s.xi)
    assert back.seed == 9 and back.distribution == "uniform"
    assert back.content_hash() == s.content_hash()
    with pytest.raises(ConfigError):
        bad = tmp_path / "bad.csv"
        bad.write_text("x,y\n1,2\n")
        SampleSet.from_csv(bad)


def test_run_at_zero_matches_deterministic(toy):
    # the affine model at the origin is exactly the constant mean viscosity
    mesh, space, _ = toy
    sim = make_sim(toy)
    record = run_simulator(sim, [0.0, 0.0])
    assert not record.failed

    ops = build_operators(mesh, space, SpatialField.constant(mesh, NU1))
    steady = solve_steady(ops)
    eig = rightmost(build_problem(ops, steady.state))
    assert record.lam_re == pytest.approx(eig.eigenvalue.real, rel=1e-12, abs=1e-14)
    assert record.lam_im == pytest.approx(eig.eigenvalue.imag, rel=1e-12, abs=1e-14)
    # short straight channel at this viscosity is comfortably stable
    assert record.lam_re < 0.0
    assert record.digest != ""


def test_repeat_run_is_bitwise_equal(toy):
    sim = make_sim(toy)
    xi = [0.3, -0.4]
    assert sim.run(xi) == sim.run(xi)


def test_cache_hit_skips_computation(toy, tmp_path, monkeypatch):
    sim = make_sim(toy)
    sim.attach_cache(tmp_path / "cache.jsonl")
    first = sim.run([0.2, 0.1])

    calls = {"n": 0}
    original = Simulator.compute

    def counting(self, xi):
        calls["n"] += 1
        return original(self, xi)

    monkeypatch.setattr(Simulator, "compute", counting)
    again = sim.run([0.2, 0.1])
    assert calls["n"] == 0
    assert again == first


def test_cache_survives_reload(toy, tmp_path):
    path = tmp_path / "cache.jsonl"
    sim = make_sim(toy)
    sim.attach_cache(path)
    record = sim.run([0.25, -0.5])

    fresh = make_sim(toy)
    fresh.attach_cache(path)
    assert len(fresh.cache) == 1
    assert fresh.run([0.25, -0.5]) == record


def test_cache_fingerprint_mismatch_forbids_reuse(toy, tmp_path, monkeypatch):
    path = tmp_path / "cache.jsonl"
    sim = make_sim(toy)
    sim.attach_cache(path)
    sim.run([0.1, 0.1])

    # poison the stored record: claim it came from a different configuration
    lines = [json.loads(line) for line in path.read_text().splitlines()]
    lines[0]["fingerprint"] = "deadbeef"
    lines[0]["lam_re"] = 123.0
    path.write_text("\n".join(json.dumps(d) for d in lines) + "\n")

    calls = {"n": 0}
    original = Simulator.compute

    def counting(self, xi):
        calls["n"] += 1
        return original(self, xi)

    monkeypatch.setattr(Simulator, "compute", counting)
    reloaded = make_sim(toy)
    reloaded.attach_cache(path)
    record = reloaded.run([0.1, 0.1])
    assert calls["n"] == 1
    assert record.lam_re != 123.0


def test_cache_key_separates_configurations(toy, tmp_path):
    # same samples, different eigensolver setup: distinct fingerprints
    a = make_sim(toy)
    b = make_sim(toy, k=12)
    assert a.fingerprint != b.fingerprint
    c = make_sim(toy, cov=0.2)
    assert a.fingerprint != c.fingerprint


def test_monte_carlo_single_sample(toy):
    sim = make_sim(toy)
    samples = SampleSet(np.array([[0.0, 0.0]]), seed=0, distribution="uniform")
    result = monte_carlo(sim, samples)
    assert isinstance(result, McResult)
    assert result.n == 1 and result.n_failed == 0
    assert result.records[0] == sim.run([0.0, 0.0])
    assert result.sample_hash == samples.content_hash()


def test_monte_carlo_cov_zero_identical(toy):
    sim = make_sim(toy, cov=0.0)
    samples = SampleSet.draw(3, 2, "uniform", seed=5)
    result = monte_carlo(sim, samples)
    values = result.values()
    assert values.size == 3
    assert values[0] == values[1] == values[2]


def test_monte_carlo_order_independent(toy):
    sim = make_sim(toy)
    samples = SampleSet.draw(4, 2, "uniform", seed=3)
    forward = monte_carlo(sim, samples)
    perm = np.array([2, 0, 3, 1])
    shuffled = SampleSet(samples.xi[perm], seed=3, distribution="uniform")
    backward = monte_carlo(sim, shuffled)
    for i, j in enumerate(perm):
        assert backward.records[i] == forward.records[j]


def test_monte_carlo_failed_samples_excluded(toy):
    sim = make_sim(toy, cov=0.3)
    # the second sample drives the affine field negative
    xi = np.array([[0.1, 0.2], [-60.0, 0.0], [-0.3, 0.5]])
    samples = SampleSet(xi, seed=0, distribution="uniform")
    result = monte_carlo(sim, samples)
    assert result.n_failed == 1
    assert not result.ok[1]
    assert result.records[1].note.startswith("viscosity")
    assert np.isnan(result.records[1].lam_re)
    assert result.values().size == 2
    assert np.isfinite(result.values()).all()


def test_monte_carlo_rejects_mismatches(toy):
    sim = make_sim(toy)     # legendre basis wants uniform germs
    with pytest.raises(ConfigError):
        monte_carlo(sim, SampleSet.draw(2, 2, "normal", seed=0))
    with pytest.raises(ConfigError):
        monte_carlo(sim, SampleSet.draw(2, 3, "uniform", seed=0))


def test_monte_carlo_lognormal_normal_germs(toy):
    sim = make_sim(toy, kind="lognormal")
    samples = SampleSet.draw(2, 2, "normal", seed=8)
    result = monte_carlo(sim, samples)
    assert result.n_failed == 0
    assert (result.values() < 0.0).all()


def test_monte_carlo_parallel_matches_serial(toy):
    sim = make_sim(toy)
    samples = SampleSet.draw(4, 2, "uniform", seed=12)
    serial = monte_carlo(sim, samples, workers=1)
    parallel = monte_carlo(sim, samples, workers=2)
    assert serial.records == parallel.records


def test_monte_carlo_parallel_fills_cache(toy, tmp_path):
    sim = make_sim(toy)
    sim.attach_cache(tmp_path / "cache.jsonl")
    samples = SampleSet.draw(3, 2, "uniform", seed=2)
    first = monte_carlo(sim, samples, workers=2)
    assert len(sim.cache) == 3

    # second pass is all cache hits and bitwise identical
    from flowstab import simulate

    def boom(self, xi):
        raise AssertionError("cache miss")

    original = Simulator.compute
    Simulator.compute = boom
    try:
        second = monte_carlo(sim, samples, workers=1)
    finally:
        Simulator.compute = original
    assert second.records == first.records


def test_record_round_trip():
    record = SampleRecord((0.1, -0.2), -0.05, 0.0, False, "", "abc123")
    assert SampleRecord.from_dict(record.to_dict()) == record


def test_eval_cache_append_only(tmp_path):
    path = tmp_path / "c.jsonl"
    cache = EvalCache(path, "fp")
    r1 = SampleRecord((1.0,), -1.0, 0.0, False)
    cache.put("k1", r1)
    cache.put("k1", SampleRecord((1.0,), 99.0, 0.0, False))
    assert cache.get("k1") == r1
    assert len(path.read_text().splitlines()) == 1
