import math

import numpy as np
import pytest

from ikseed.evaluation import (
    EvalReport,
    PerturbationSpec,
    SeedSet,
    evaluate,
    fitness_vs_success,
    perturb,
    perturbed_targets,
)
from ikseed.scenario import scenario_from_dict
from ikseed.seedgen import evolve, snapshot
from ikseed.transforms import Pose, random_rotation, rpy_to_matrix

from conftest import small_scenario_dict


def test_default_perturbation():
    s = PerturbationSpec()
    assert s.position_range == 0.07 and s.orientation_range == pytest.approx(math.radians(5))
    with pytest.raises(ValueError):
        PerturbationSpec(-0.1, 0.0)


def test_zero_perturbation_is_identity(rng):
    P = Pose(random_rotation(rng), rng.normal(size=3))
    Q = perturb(P, PerturbationSpec(0.0, 0.0), np.random.default_rng(1))
    assert np.array_equal(Q.rotation, P.rotation) and np.array_equal(Q.translation, P.translation)


def test_perturbation_is_world_frame_uniform(rng):
    P = Pose(random_rotation(rng), rng.normal(size=3))
    spec = PerturbationSpec(0.03, 0.1)
    for s in range(200):
        Q = perturb(P, spec, np.random.default_rng(s))
        draw = np.random.default_rng(s)
        dp = draw.uniform(-0.03, 0.03, 3)
        rpy = draw.uniform(-0.1, 0.1, 3)
        assert np.all(np.abs(Q.translation - P.translation) <= 0.03)
        np.testing.assert_allclose(Q.translation, P.translation + dp, atol=1e-15)
        np.testing.assert_allclose(Q.rotation, rpy_to_matrix(*rpy) @ P.rotation, atol=1e-15)


@pytest.fixture(scope="module")
def setup(seednoid_maps):
    sc = scenario_from_dict(small_scenario_dict(seednoid_maps))
    res = evolve(sc)
    best = SeedSet("best", res.seeds(), res.fitness)
    early = SeedSet("gen0", snapshot(sc, res, 0).seeds(), res.history[0])
    return sc, res, best, early


def test_streams_depend_only_on_seed_and_trial(setup):
    sc, *_ = setup
    spec = PerturbationSpec(0.07, math.radians(5))
    a = perturbed_targets(sc, spec, 5, 3)
    b = perturbed_targets(sc, spec, 5, 3)
    c = perturbed_targets(sc, spec, 5, 4)
    assert all(x.pose.allclose(y.pose, atol=0) for sa, sb in zip(a, b) for x, y in zip(sa, sb))
    assert not a[0][0].pose.allclose(c[0][0].pose)


def test_gating_and_conservation(setup):
    sc, _, best, early = setup
    reps = evaluate(sc, [early, best], PerturbationSpec(0.07, math.radians(5)), trials=30, rng_seed=1)
    for r in reps:
        assert r.attempts[0] == 30
        np.testing.assert_array_equal(r.attempts[1:], r.successes[:-1])
        assert r.total_attempts == r.attempts.sum() and r.total_successes == r.successes.sum()
        assert r.trajectory_successes == r.successes[-1]


def test_report_deterministic_and_thread_independent(setup):
    sc, _, best, early = setup
    spec = PerturbationSpec(0.07, math.radians(5))
    a = evaluate(sc, [early, best], spec, trials=12, rng_seed=9)
    b = evaluate(sc, [early, best], spec, trials=12, rng_seed=9, threads=3)
    for x, y in zip(a, b):
        assert x.to_dict() == y.to_dict()
        assert np.array_equal(x.completed, y.completed)


def test_pairing_identical_sets_gives_zero_delta(setup):
    sc, _, best, _ = setup
    twin = SeedSet("twin", best.seeds, best.fitness)
    reps = evaluate(sc, [best, twin], PerturbationSpec(0.07, math.radians(5)), trials=20, rng_seed=2)
    assert np.array_equal(reps[0].completed, reps[1].completed)
    summary = fitness_vs_success(reps)
    assert summary["deltas"][0]["total_delta"] == 0.0
    assert summary["deltas"][0]["paired_trajectory_delta"] == 0.0
    assert summary["spearman"] is None and summary["spearman_defined"] is False


def test_zero_perturbation_solves_everything(setup):
    sc, _, best, _ = setup
    (r,) = evaluate(sc, [best], PerturbationSpec(0.0, 0.0), trials=5)
    assert r.total_ratio == 1.0 and r.trajectory_successes == 5


def test_seed_mismatch_rejected(setup):
    sc, _, best, _ = setup
    with pytest.raises(ValueError):
        evaluate(sc, [SeedSet("bad", {0: best.seeds[0]})], trials=1)
    with pytest.raises(ValueError):
        evaluate(sc, [SeedSet("bad", {0: np.zeros(3), 1: np.zeros(3)})], trials=1)
    with pytest.raises(ValueError):
        evaluate(sc, [best], trials=0)


def test_spearman_and_intervals():
    def rep(label, fit, completed):
        c = np.array(completed)
        succ = np.array([int(np.sum(c > k)) for k in range(2)])
        att = np.concatenate([[c.size], succ[:-1]])
        return EvalReport(label, fit, ["a", "b"], succ, att, c.size, c)

    reps = [rep("lo", 1.0, [0, 1, 2, 2]), rep("mid", 2.0, [1, 2, 2, 2]), rep("hi", 3.0, [2, 2, 2, 2])]
    s = fitness_vs_success(reps)
    assert s["spearman"] == pytest.approx(1.0)
    assert s["order"] == ["lo", "mid", "hi"]
    assert len(s["deltas"]) == 3
    d = s["deltas"][-1]
    assert d["total_ci95"][0] <= d["total_delta"] <= d["total_ci95"][1]
    with pytest.raises(ValueError):
        fitness_vs_success(reps[:1])
