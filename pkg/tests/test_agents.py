import json

import numpy as np
import pytest

from quizforge.agents import (EpisodeStats, TrainConfig, TrainLog, a2c_train,
                              a2c_update, a3c_train, dqn_train, dqn_update,
                              greedy_policy, infer_quiz, make_policy,
                              read_train_log, sarsa_train, sarsa_update,
                              train_agent, write_train_log)
from quizforge.datagen import DatasetSpec, generate_synthetic
from quizforge.domain import TargetSpec
from quizforge.environment import build_universe
from quizforge.nets import (AC_HEAD, Q_HEAD, NetworkSpec, ParamSet, forward_ac,
                            forward_q, init_params, make_optimizer)


@pytest.fixture(scope="module")
def small_env():
    ds = generate_synthetic(DatasetSpec(n_mcqs=500, n_topics=10, n_levels=5, seed=17))
    u = build_universe(ds, k=10, n=120, seed=4)
    spec = TargetSpec(tc=np.full(10, 0.1), td=np.full(5, 0.2), alpha=0.5)
    return u, spec


def degenerate_q_params(bias_values=(0.0, 0.0, 0.0, 0.0)):
    """No hidden layers + zero input: Q(s, a) is just the head bias b_a."""
    spec = NetworkSpec(input_dim=2, hidden=(), head=Q_HEAD)
    ps = ParamSet(spec, np.zeros(spec.n_params))
    _, b = ps.layers[0]
    b[:] = np.asarray(bias_values)
    return ps


ZERO_STATE = np.zeros((1, 2))


class TestDqnUpdate:
    def test_reproduces_q_learning_iterate(self):
        # Q <- Q + eta * (r + gamma * max_a' Qt(s',a') - Q), from Q = 0:
        # 0.005 * (0.1 + 0.95 * 0.2) = 0.00145
        params = degenerate_q_params()
        target = degenerate_q_params((0.2, 0.1, 0.0, 0.0))
        opt = make_optimizer("sgd", params.spec.n_params)
        batch = (ZERO_STATE, np.array([0]), np.array([0.1]), ZERO_STATE,
                 np.array([0.0]))
        td = dqn_update(params, target, batch, gamma=0.95, eta=0.005,
                        optimizer=opt)
        expected = 0.005 * (0.1 + 0.95 * 0.2)
        q, _ = forward_q(params, ZERO_STATE)
        assert td[0] == pytest.approx(0.29, abs=1e-12)
        assert q[0, 0] == pytest.approx(expected, abs=1e-12)

    def test_gamma_zero_target_is_reward(self):
        params = degenerate_q_params()
        target = degenerate_q_params((5.0, 5.0, 5.0, 5.0))
        opt = make_optimizer("sgd", params.spec.n_params)
        batch = (ZERO_STATE, np.array([1]), np.array([0.1]), ZERO_STATE,
                 np.array([0.0]))
        td = dqn_update(params, target, batch, gamma=0.0, eta=1.0, optimizer=opt)
        assert td[0] == pytest.approx(0.1, abs=1e-12)

    def test_terminal_masks_bootstrap(self):
        params = degenerate_q_params()
        target = degenerate_q_params((9.0, 9.0, 9.0, 9.0))
        opt = make_optimizer("sgd", params.spec.n_params)
        batch = (ZERO_STATE, np.array([2]), np.array([0.3]), ZERO_STATE,
                 np.array([1.0]))
        td = dqn_update(params, target, batch, gamma=0.95, eta=1.0, optimizer=opt)
        assert td[0] == pytest.approx(0.3, abs=1e-12)

    def test_target_network_untouched_by_updates(self):
        params = degenerate_q_params()
        target = degenerate_q_params((0.2, 0.1, 0.0, 0.0))
        frozen = target.theta.copy()
        opt = make_optimizer("adam", params.spec.n_params)
        rng = np.random.default_rng(0)
        for _ in range(20):
            batch = (rng.normal(size=(4, 2)), rng.integers(4, size=4),
                     rng.normal(size=4) * 0.1, rng.normal(size=(4, 2)),
                     np.zeros(4))
            dqn_update(params, target, batch, 0.95, 0.005, opt)
        np.testing.assert_array_equal(target.theta, frozen)
        assert not np.array_equal(params.theta, np.zeros_like(params.theta))


class TestSarsaUpdate:
    def test_reproduces_sarsa_iterate(self):
        # Q <- Q + eta * (r + gamma * Q(s',a') - Q), with Q(s',1) = 0.1
        params = degenerate_q_params((0.0, 0.1, 0.0, 0.0))
        opt = make_optimizer("sgd", params.spec.n_params)
        td = sarsa_update(params, (ZERO_STATE, 0, 0.1, ZERO_STATE, 1, False),
                          gamma=0.95, eta=0.005, optimizer=opt)
        q, _ = forward_q(params, ZERO_STATE)
        assert td == pytest.approx(0.1 + 0.95 * 0.1, abs=1e-12)
        assert q[0, 0] == pytest.approx(0.005 * (0.1 + 0.95 * 0.1), abs=1e-12)

    def test_gamma_zero_target_is_reward(self):
        params = degenerate_q_params((0.0, 9.0, 0.0, 0.0))
        opt = make_optimizer("sgd", params.spec.n_params)
        td = sarsa_update(params, (ZERO_STATE, 0, 0.25, ZERO_STATE, 1, False),
                          gamma=0.0, eta=0.005, optimizer=opt)
        assert td == pytest.approx(0.25, abs=1e-12)

    def test_sarsa_target_below_dqn_target_off_argmax(self):
        # next-state Q = (0.2, 0.1, ...), behavior takes a'=1
        gamma, r = 0.95, 0.05
        sarsa_target = r + gamma * 0.1
        dqn_target = r + gamma * max(0.2, 0.1, 0.0, 0.0)
        assert sarsa_target < dqn_target


class TestA2cUpdate:
    def test_zero_advantage_leaves_policy_head_unchanged(self):
        spec = NetworkSpec(input_dim=2, hidden=(), head=AC_HEAD)
        ps = ParamSet(spec, np.zeros(spec.n_params))
        _, bv = ps.layers[1]
        bv[:] = 1.0  # V = 1 everywhere
        opt = make_optimizer("sgd", spec.n_params)
        before = ps.theta.copy()
        gamma = 0.9
        r = 1.0 * (1 - gamma)  # makes adv = r + gamma*V - V = 0
        adv = a2c_update(ps, (ZERO_STATE, 2, r, ZERO_STATE, False), gamma=gamma,
                         eta=0.01, entropy_coef=0.0, value_coef=0.5, optimizer=opt)
        assert adv == pytest.approx(0.0, abs=1e-12)
        np.testing.assert_array_equal(ps.theta, before)

    def test_terminal_advantage_is_reward_minus_value(self):
        spec = NetworkSpec(input_dim=2, hidden=(), head=AC_HEAD)
        ps = ParamSet(spec, np.zeros(spec.n_params))
        _, bv = ps.layers[1]
        bv[:] = 0.4
        opt = make_optimizer("sgd", spec.n_params)
        adv = a2c_update(ps, (ZERO_STATE, 0, 1.0, ZERO_STATE, True), gamma=0.9,
                         eta=0.0, entropy_coef=0.0, value_coef=0.5, optimizer=opt)
        assert adv == pytest.approx(1.0 - 0.4, abs=1e-12)

    def test_value_head_converges_to_geometric_sum(self):
        # constant-reward self-loop: V* = r / (1 - gamma)
        spec = NetworkSpec(input_dim=2, hidden=(), head=AC_HEAD)
        ps = ParamSet(spec, np.zeros(spec.n_params))
        opt = make_optimizer("sgd", spec.n_params)
        r, gamma = 0.5, 0.5
        for _ in range(600):
            a2c_update(ps, (ZERO_STATE, 0, r, ZERO_STATE, False), gamma=gamma,
                       eta=0.05, entropy_coef=0.0, value_coef=0.5, optimizer=opt)
        _, values, _ = forward_ac(ps, ZERO_STATE)
        assert values[0] == pytest.approx(r / (1 - gamma), abs=1e-4)


class TestTrainConfig:
    def test_epsilon_schedule_hits_floor(self):
        cfg = TrainConfig(episodes=2000)
        assert cfg.epsilon_at(0) == 1.0
        assert cfg.epsilon_at(1000) == pytest.approx(0.05)
        eps = [cfg.epsilon_at(e) for e in range(1500)]
        assert all(a >= b for a, b in zip(eps, eps[1:]))
        assert min(eps) >= 0.05

    def test_per_beta_anneals_linearly_to_one(self):
        cfg = TrainConfig(episodes=101, per_beta_start=0.4)
        assert cfg.per_beta_at(0) == pytest.approx(0.4)
        assert cfg.per_beta_at(100) == pytest.approx(1.0)
        assert cfg.per_beta_at(50) == pytest.approx(0.7)

    def test_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(gamma=1.5)
        with pytest.raises(ValueError):
            TrainConfig(epsilon_decay=0.0)
        with pytest.raises(ValueError):
            TrainConfig(eta=0.0)


class TestTraining:
    def test_pure_exploration_actions_uniform(self, small_env):
        u, spec = small_env
        cfg = TrainConfig(episodes=25, epsilon_start=1.0, epsilon_decay=1.0,
                          epsilon_min=1.0, seed=3)
        _, log = dqn_train(u, spec, cfg)
        totals = log.action_totals()
        n = totals.sum()
        sigma = np.sqrt(n * 0.25 * 0.75)
        assert np.all(np.abs(totals - n / 4) <= 3.5 * sigma), totals

    def test_action_counts_sum_to_steps(self, small_env):
        u, spec = small_env
        cfg = TrainConfig(episodes=10, seed=5)
        _, log = sarsa_train(u, spec, cfg)
        for st in log.episodes:
            assert sum(st.action_counts) == st.steps

    @pytest.mark.parametrize("algorithm", ["dqn", "sarsa", "a2c"])
    def test_same_seed_is_bitwise_deterministic(self, small_env, tmp_path, algorithm):
        u, spec = small_env
        cfg = TrainConfig(episodes=8, seed=11)
        p1, log1 = train_agent(algorithm, u, spec, cfg)
        p2, log2 = train_agent(algorithm, u, spec, cfg)
        assert p1.theta.tobytes() == p2.theta.tobytes()
        f1, f2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        write_train_log(log1, f1)
        write_train_log(log2, f2)
        assert f1.read_bytes() == f2.read_bytes()

    def test_a3c_single_worker_matches_a2c(self, small_env):
        u, spec = small_env
        cfg = TrainConfig(episodes=8, seed=2, workers=1)
        pa, la = a2c_train(u, spec, cfg)
        pb, lb = a3c_train(u, spec, cfg)
        assert pa.theta.tobytes() == pb.theta.tobytes()
        assert pa.version == pb.version
        assert [s.steps for s in la.episodes] == [s.steps for s in lb.episodes]
        assert [s.max_q for s in la.episodes] == [s.max_q for s in lb.episodes]

    def test_a3c_multi_worker_runs_and_counts_updates(self, small_env):
        u, spec = small_env
        cfg = TrainConfig(episodes=10, seed=2, workers=3)
        params, log = a3c_train(u, spec, cfg)
        assert len(log.episodes) == 10
        assert sorted(st.episode for st in log.episodes) == list(range(10))
        total_steps = sum(st.steps for st in log.episodes)
        assert params.version == total_steps  # one update per step, none lost

    def test_unknown_algorithm(self, small_env):
        u, spec = small_env
        with pytest.raises(ValueError):
            train_agent("ppo", u, spec, TrainConfig(episodes=1))


class TestInference:
    def test_deterministic_given_start(self, small_env):
        u, spec = small_env
        params = init_params(NetworkSpec(u.state_dim, (16,), Q_HEAD), seed=0)
        ecfg = TrainConfig(episodes=1, max_steps=60).episode_config()
        a = infer_quiz(params, u, spec, ecfg, start_index=5)
        b = infer_quiz(params, u, spec, ecfg, start_index=5)
        assert a.quiz_index == b.quiz_index
        assert a.iterations == b.iterations
        assert [r.to_quiz for r in a.trace] == [r.to_quiz for r in b.trace]

    def test_iterations_bounded_and_zero_at_good_start(self, small_env):
        u, spec = small_env
        params = init_params(NetworkSpec(u.state_dim, (16,), Q_HEAD), seed=0)
        matches = u.target_matches(spec)
        best = int(np.argmax(matches))
        lenient = TargetSpec(tc=spec.tc, td=spec.td, alpha=spec.alpha,
                             beta=float(matches[best]) - 1e-9)
        ecfg = TrainConfig(max_steps=30, beta=lenient.beta).episode_config()
        res = infer_quiz(params, u, lenient, ecfg, start_index=best)
        assert res.iterations == 0 and res.success
        for start in (0, 3, 9):
            res = infer_quiz(params, u, spec, ecfg, start_index=start)
            assert res.iterations <= 30

    def test_greedy_policy_breaks_ties_low(self, small_env):
        u, _ = small_env
        spec = NetworkSpec(u.state_dim, (), Q_HEAD)
        ps = ParamSet(spec, np.zeros(spec.n_params))  # all-equal Q
        policy = greedy_policy(ps)
        assert policy(u.states[0]) == 0

    def test_policy_factory_modes(self, small_env):
        u, _ = small_env
        rng = np.random.default_rng(0)
        q_params = init_params(NetworkSpec(u.state_dim, (8,), Q_HEAD), seed=1)
        ac_params = init_params(NetworkSpec(u.state_dim, (8,), AC_HEAD), seed=1)
        state = u.states[0]

        assert make_policy(q_params, "greedy")(state) in range(4)
        explore = make_policy(q_params, "epsilon-greedy", epsilon=1.0, rng=rng)
        picks = {explore(state) for _ in range(200)}
        assert picks == {0, 1, 2, 3}
        actor = make_policy(ac_params, "stochastic", rng=rng)
        assert actor(state) in range(4)

        with pytest.raises(ValueError):
            make_policy(ac_params, "epsilon-greedy", epsilon=0.5, rng=rng)
        with pytest.raises(ValueError):
            make_policy(q_params, "stochastic", rng=rng)
        with pytest.raises(ValueError):
            make_policy(q_params, "epsilon-greedy")  # rng required


class TestTrainLogIO:
    def test_round_trip(self, tmp_path):
        log = TrainLog(algorithm="dqn", config={"episodes": 2})
        log.episodes = [
            EpisodeStats(episode=0, epsilon=1.0, steps=5, terminal_match=0.7,
                         success=False, max_q=0.1, action_counts=(1, 2, 1, 1),
                         no_candidate_steps=0),
            EpisodeStats(episode=1, epsilon=0.995, steps=0, terminal_match=0.9,
                         success=True, max_q=0.2, action_counts=(0, 0, 0, 0),
                         no_candidate_steps=0),
        ]
        path = tmp_path / "log.jsonl"
        write_train_log(log, path)
        loaded = read_train_log(path)
        assert loaded.algorithm == "dqn"
        assert loaded.episodes == log.episodes

    def test_header_carries_schema_and_config(self, tmp_path):
        log = TrainLog(algorithm="a2c", config={"seed": 9})
        path = tmp_path / "log.jsonl"
        write_train_log(log, path)
        header = json.loads(path.read_text().splitlines()[0])
        assert header["schema"] == "quizforge.train_log.v1"
        assert header["config"] == {"seed": 9}

    def test_rejects_foreign_files(self, tmp_path):
        path = tmp_path / "other.jsonl"
        path.write_text('{"schema": "something.else"}\n')
        with pytest.raises(ValueError):
            read_train_log(path)
