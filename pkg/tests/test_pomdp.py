import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import line_env
from oracles import bayes_update
from sarp.agent import run_baseline_uniform
from sarp.pomdp import (GAMMA, ModelError, Policy, SolverConfig, belief_update, build_joint_pomdp,
                        build_pomdp, solve, target_corners)
from sarp.simworld import (DETECTED, NOT_APPLICABLE, NOT_DETECTED, EnvironmentMap, PerceptionModel,
                           WorldError, sample_world)

PERFECT = PerceptionModel(tp=1.0, fp=0.0)


def test_defaults(hallway):
    m = build_pomdp(hallway, "banana")
    assert m.gamma == GAMMA == 0.99
    assert m.success_reward == 100 and m.failure_penalty == -100
    for r in range(6):
        for a in m.legal[r]:
            assert m.reward(r, a) == -10
    assert m.terminate_reward(4, 4) == 100 and m.terminate_reward(3, 4) == -100


def test_actions_respect_adjacency(hallway):
    m = build_pomdp(hallway, "banana")
    assert m.legal[3] == [2, 3, 4]
    assert m.actions[-1] == "terminate" and len(m.actions) == 7


def test_hand_evaluated_update(hallway):
    m = build_pomdp(hallway, "banana", PerceptionModel(tp=0.8, fp=0.05))
    b = belief_update(np.full(6, 1 / 6), 1, NOT_DETECTED, m, 1)
    expected = bayes_update([1 / 6] * 6, [0.95, 0.2, 0.95, 0.95, 0.95, 0.95])
    np.testing.assert_allclose(b, expected, atol=1e-15)
    assert round(b[1], 4) == 0.0404 and round(b[0], 4) == 0.1919
    assert np.argmin(b) == 1 and np.sum(b == b.min()) == 1


def test_perfect_sensor_detection_is_point_mass(hallway):
    m = build_pomdp(hallway, "banana", PERFECT)
    b = belief_update(m.uniform_belief(), 2, DETECTED, m, 2)
    np.testing.assert_array_equal(b, np.eye(6)[2])


def test_impossible_observation_rejected(hallway):
    m = build_pomdp(hallway, "banana", PERFECT)
    with pytest.raises(ModelError):
        belief_update(np.eye(6)[0], 2, DETECTED, m, 2)


def test_terminate_observation(hallway):
    m = build_pomdp(hallway, "banana")
    b = m.uniform_belief()
    np.testing.assert_array_equal(belief_update(b, m.terminate, NOT_APPLICABLE, m, 0), b)
    with pytest.raises(ModelError):
        belief_update(b, m.terminate, DETECTED, m, 0)
    with pytest.raises(ModelError):
        belief_update(b, 0, NOT_APPLICABLE, m, 0)


def test_tp_equal_fp_leaves_belief(hallway):
    m = build_pomdp(hallway, "banana", PerceptionModel(tp=0.3, fp=0.3))
    b = np.array([0.1, 0.2, 0.3, 0.1, 0.2, 0.1])
    for z in (DETECTED, NOT_DETECTED):
        np.testing.assert_allclose(belief_update(b, 3, z, m, 3), b, atol=1e-15)


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 1.0), st.floats(0.0, 0.5))
def test_update_normalized(seed, tp, fp):
    rng = np.random.default_rng(seed)
    env = line_env(5)
    m = build_pomdp(env, "banana", PerceptionModel(tp=tp, fp=fp))
    b = rng.dirichlet(np.ones(5))
    r = int(rng.integers(5))
    z = DETECTED if rng.random() < 0.5 else NOT_DETECTED
    try:
        post = belief_update(b, r, z, m, r)
    except ModelError:
        return
    assert abs(post.sum() - 1) <= 1e-9 and post.min() >= 0


def test_one_location_env():
    env = line_env(1)
    m = build_pomdp(env, "banana", PERFECT)
    assert m.actions == ["go_0", "terminate"]
    assert m.move[0, 0, 0] == 1.0
    p = solve(m)
    b = m.uniform_belief()
    assert p.action(b, 0) == m.terminate
    assert p.value(b, 0) == pytest.approx(100.0)


def test_two_location_line_observes_here_first():
    env = line_env(2)
    m = build_pomdp(env, "banana", PERFECT, p_move=1.0)
    p = solve(m, SolverConfig(belief_points=50))
    b = m.uniform_belief()
    assert p.action(b, 0) == 0
    # look here (10) and, half the time, move once more (10): 15 < 20 for visiting both
    expected_value = -10 + GAMMA * (0.5 * 100 + 0.5 * (-10 + GAMMA * 100))
    assert p.value(b, 0) == pytest.approx(expected_value, abs=1e-6)
    assert 10 + 0.5 * 10 < 20


def test_point_mass_here_terminates():
    env = line_env(2)
    m = build_pomdp(env, "banana", PERFECT, p_move=1.0)
    p = solve(m, SolverConfig(belief_points=50))
    assert p.action(np.array([1.0, 0.0]), 0) == m.terminate
    assert p.action(np.array([0.0, 1.0]), 0) == 1


def test_policy_action_deterministic(hallway):
    m = build_pomdp(hallway, "banana")
    p = solve(m, SolverConfig(belief_points=50, iterations=20))
    b = np.random.default_rng(0).dirichlet(np.ones(6))
    assert p.action(b, 3) == p.action(b, 3)


def test_value_history_monotone(hallway):
    m = build_pomdp(hallway, "banana")
    p = solve(m, SolverConfig(belief_points=100, iterations=30, threshold=0.0))
    h = np.array(p.value_history)
    assert len(h) == 30
    assert np.all(np.diff(h) >= -1e-9)


def test_values_lower_bounded_by_terminate(hallway):
    m = build_pomdp(hallway, "banana")
    p = solve(m, SolverConfig(belief_points=100, iterations=30))
    rng = np.random.default_rng(2)
    for _ in range(50):
        b = rng.dirichlet(np.ones(6))
        r = int(rng.integers(6))
        assert p.value(b, r) >= (m.terminal_alphas(r) @ b).max() - 1e-9


def test_higher_go_cost_never_adds_navigation(hallway):
    counts = {}
    for cost in (10, 50):
        m = build_pomdp(hallway, "banana", p_move=1.0, go_cost=cost)
        p = solve(m, SolverConfig(belief_points=300, iterations=60))
        counts[cost] = [
            sum(s.action != "terminate" for s in
                run_baseline_uniform(sample_world(hallway, "banana", seed=s, p_move=1.0), m, p).trace)
            for s in range(60)]
    assert all(b <= a for a, b in zip(counts[10], counts[50]))


def test_distance_cost_mode(hallway):
    m = build_pomdp(hallway, "banana", cost_mode="distance", cost_per_meter=2.0)
    assert m.reward(0, 1) == pytest.approx(-6.0)
    assert m.reward(3, 3) == -10  # staying costs the fixed go cost
    with pytest.raises(ModelError):
        build_pomdp(hallway, "banana", cost_mode="teleport")


def test_disconnected_map_rejected():
    with pytest.raises(WorldError):
        EnvironmentMap("split", [[0, 0], [1, 0], [5, 0]], [[1], [0], []])


def test_joint_k0_is_base_model(hallway):
    det = PerceptionModel(tp=0.7, fp=0.1)
    a = build_pomdp(hallway, "banana", det)
    b = build_joint_pomdp(hallway, "banana", 0, det)
    assert a.fingerprint() == b.fingerprint()
    np.testing.assert_array_equal(a.obs, b.obs)


@pytest.mark.parametrize("k,states", [(1, 9), (2, 27), (3, 81)])
def test_joint_state_counts(k, states):
    m = build_joint_pomdp(line_env(3), "banana", k, PerceptionModel(), ["mug"])
    assert m.n_hidden == states
    assert len(m.obs_names) == 2 ** (k + 1)


def test_joint_refuses_large_k():
    with pytest.raises(ModelError, match="at most"):
        build_joint_pomdp(line_env(3), "banana", 4, PerceptionModel(), ["mug"])


@pytest.mark.parametrize("k", [1, 2])
def test_joint_target_marginal_matches_target_only_update(k):
    env = line_env(3)
    det = PerceptionModel(tp=0.8, fp=0.05)
    base = build_pomdp(env, "banana", det)
    joint = build_joint_pomdp(env, "banana", k, det, ["mug", "book"])
    rng = np.random.default_rng(k)
    b, bj = base.uniform_belief(), joint.uniform_belief()
    for _ in range(15):
        r = int(rng.integers(3))
        zj = int(rng.integers(len(joint.obs_names)))
        bj = belief_update(bj, r, zj, joint, r)
        b = belief_update(b, r, zj & 1, base, r)  # bit 0 is the target
        np.testing.assert_allclose(joint.target_marginal(bj), b, atol=1e-12)


def test_target_corners(hallway):
    m = build_joint_pomdp(line_env(3), "banana", 1, PerceptionModel(), ["mug"])
    c = target_corners(m)
    np.testing.assert_allclose(c.sum(axis=1), 1.0)
    for loc in range(3):
        np.testing.assert_allclose(m.target_marginal(c[loc]), np.eye(3)[loc])


def test_policy_round_trip_and_hash_refusal(tmp_path, hallway):
    m = build_pomdp(hallway, "banana")
    p = solve(m, SolverConfig(belief_points=40, iterations=10))
    path = tmp_path / "policy.json"
    p.save(path)
    q = Policy.load(path, m)
    b = np.random.default_rng(1).dirichlet(np.ones(6))
    for r in range(6):
        assert q.action(b, r) == p.action(b, r)
    other = build_pomdp(hallway, "banana", PerceptionModel(tp=0.9))
    with pytest.raises(ModelError):
        Policy.load(path, other)


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(belief_points=0)
    with pytest.raises(ValueError):
        SolverConfig(threshold=-1)
