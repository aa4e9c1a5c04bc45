"""The four learners: DQN with prioritized replay, SARSA, A2C, and A3C.

DQN regresses Q(s,a) toward r + gamma * max_a' Q_target(s',a') over
prioritized batches; SARSA updates online toward r + gamma * Q(s',a') with
the action actually taken; A2C does per-step actor-critic updates with the
one-step advantage r + gamma * V(s') - V(s); A3C runs the same worker loop
on parallel threads against shared parameters (Hogwild-style, torn reads
tolerated), and with one worker is byte-identical to A2C.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .domain import TargetSpec
from .environment import (Action, EpisodeConfig, NoCandidatesError, StepRecord,
                          Universe, step)
from .nets import (AC_HEAD, N_ACTIONS, Q_HEAD, NetworkSpec, ParamSet,
                   backward_ac_logits, backward_q, forward_ac, forward_q,
                   init_params, make_optimizer)
from .replay import PrioritizedReplayBuffer

ALGORITHMS = ("dqn", "sarsa", "a2c", "a3c")
TRAIN_LOG_SCHEMA = "quizforge.train_log.v1"

# rng stream tags so the independent streams never collide
_TAG_PROBE, _TAG_INIT, _TAG_DQN, _TAG_SARSA, _TAG_AC_BASE, _TAG_INFER = 7, 11, 101, 201, 301, 977


class NonFiniteLossError(FloatingPointError):
    pass


class WorkerPanicError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for every algorithm; unused fields are ignored."""

    episodes: int = 5000
    max_steps: int = 100
    gamma: float = 0.95
    eta: float = 0.005
    batch_size: int = 128
    epsilon_start: float = 1.0
    epsilon_decay: float = 0.995
    epsilon_min: float = 0.05
    target_sync_interval: int = 500
    replay_capacity: int = 50_000
    per_alpha: float = 0.6
    per_beta_start: float = 0.4
    per_epsilon: float = 1e-6
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    workers: int = 1
    hidden: tuple[int, ...] = (64, 64)
    optimizer: str = "adam"
    beta: float = 0.85
    reward_scheme: str = "r2"
    probe_size: int = 256
    seed: int = 0

    def __post_init__(self):
        if self.episodes < 1:
            raise ValueError("episodes must be >= 1")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must be in [0, 1], got {self.gamma}")
        if self.eta <= 0:
            raise ValueError(f"learning rate must be > 0, got {self.eta}")
        if not 0.0 < self.epsilon_decay <= 1.0:
            raise ValueError(f"epsilon_decay must be in (0, 1], got {self.epsilon_decay}")
        if self.epsilon_min < 0:
            raise ValueError("epsilon_min must be >= 0")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    def episode_config(self) -> EpisodeConfig:
        return EpisodeConfig(max_steps=self.max_steps, beta=self.beta,
                             reward_scheme=self.reward_scheme, gamma=self.gamma)

    def epsilon_at(self, episode: int) -> float:
        return max(self.epsilon_min, self.epsilon_start * self.epsilon_decay ** episode)

    def per_beta_at(self, episode: int) -> float:
        frac = episode / max(1, self.episodes - 1)
        return self.per_beta_start + (1.0 - self.per_beta_start) * min(1.0, frac)


@dataclass
class EpisodeStats:
    episode: int
    epsilon: float
    steps: int
    terminal_match: float
    success: bool
    max_q: float
    action_counts: tuple[int, int, int, int]
    no_candidate_steps: int


@dataclass
class TrainLog:
    algorithm: str
    config: dict
    episodes: list[EpisodeStats] = field(default_factory=list)

    def action_totals(self) -> np.ndarray:
        totals = np.zeros(N_ACTIONS, dtype=np.int64)
        for st in self.episodes:
            totals += np.asarray(st.action_counts, dtype=np.int64)
        return totals


def write_train_log(log: TrainLog, path) -> None:
    """One JSONL record per episode, after a schema/config header record."""
    with open(path, "w", encoding="utf-8") as fh:
        header = {"schema": TRAIN_LOG_SCHEMA, "algorithm": log.algorithm,
                  "config": log.config}
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for st in log.episodes:
            rec = {
                "episode": st.episode,
                "epsilon": float(st.epsilon),
                "steps": st.steps,
                "terminal_match": float(st.terminal_match),
                "success": bool(st.success),
                "max_q": float(st.max_q),
                "action_counts": list(st.action_counts),
                "no_candidate_steps": st.no_candidate_steps,
            }
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_train_log(path) -> TrainLog:
    with open(path, encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        if header.get("schema") != TRAIN_LOG_SCHEMA:
            raise ValueError(f"{path}: not a {TRAIN_LOG_SCHEMA} file")
        log = TrainLog(algorithm=header["algorithm"], config=header["config"])
        for line in fh:
            rec = json.loads(line)
            log.episodes.append(EpisodeStats(
                episode=rec["episode"], epsilon=rec["epsilon"], steps=rec["steps"],
                terminal_match=rec["terminal_match"], success=rec["success"],
                max_q=rec["max_q"], action_counts=tuple(rec["action_counts"]),
                no_candidate_steps=rec["no_candidate_steps"],
            ))
    return log


def _probe_states(u: Universe, cfg: TrainConfig) -> np.ndarray:
    rng = np.random.default_rng([cfg.seed, _TAG_PROBE])
    count = min(cfg.probe_size, len(u))
    idx = rng.choice(len(u), size=count, replace=False)
    return np.ascontiguousarray(u.states[idx])


def _probe_metric(params: ParamSet, probe: np.ndarray) -> float:
    """Max Q over the probe set (Q head) or max state value (actor-critic)."""
    if params.spec.head == Q_HEAD:
        q, _ = forward_q(params, probe)
        return float(q.max())
    _, values, _ = forward_ac(params, probe)
    return float(values.max())


def _eps_greedy_action(params: ParamSet, state: np.ndarray, epsilon: float,
                       rng: np.random.Generator) -> int:
    if rng.random() < epsilon:
        return int(rng.integers(N_ACTIONS))
    q, _ = forward_q(params, state)
    return int(np.argmax(q[0]))  # first max: ties break to the lowest action


def _sample_action(probs: np.ndarray, rng: np.random.Generator) -> int:
    cdf = np.cumsum(probs)
    return int(min(np.searchsorted(cdf, rng.random(), side="right"), N_ACTIONS - 1))


def _env_step(u, current, action, spec, ecfg, rng, match_vec):
    """step(), with NoCandidates turned into a zero-reward self-transition."""
    try:
        return step(u, current, Action(action), spec, ecfg, rng, match_vec), False
    except NoCandidatesError:
        m = float(match_vec[current])
        rec = StepRecord(from_quiz=current, action=Action(action), to_quiz=current,
                         reward=0.0, match_before=m, match_after=m)
        return rec, True


# ---------------------------------------------------------------------------
# update rules


def dqn_update(params: ParamSet, target_params: ParamSet, batch, gamma: float,
               eta: float, optimizer, weights=None) -> np.ndarray:
    """One prioritized batch regression toward r + gamma * max_a' Q_target.

    Returns the per-sample TD errors for the priority refresh. The loss is
    mean_i w_i * (td_i)^2 / 2, whose single-sample SGD step reproduces the
    classic Q-learning iterate Q += eta * td exactly.
    """
    states, actions, rewards, next_states, dones = batch
    if weights is None:
        weights = np.ones(len(rewards))
    q, cache = forward_q(params, states)
    q_next, _ = forward_q(target_params, next_states)
    bootstrap = q_next.max(axis=1) * (1.0 - dones)
    targets = rewards + gamma * bootstrap
    rows = np.arange(len(rewards))
    td = targets - q[rows, actions]
    if not np.isfinite(td).all():
        raise NonFiniteLossError(f"non-finite TD errors in DQN batch: {td}")
    d_q = np.zeros_like(q)
    d_q[rows, actions] = -(weights * td) / len(rewards)
    grad = backward_q(params, cache, d_q)
    optimizer.step(params, grad, eta)
    return td


def sarsa_update(params: ParamSet, transition, gamma: float, eta: float,
                 optimizer) -> float:
    """On-policy single-step update toward r + gamma * Q(s', a').

    `transition` is (s, a, r, s', a', done); a' must be the action actually
    taken at s'. Returns the TD error.
    """
    s, a, r, s2, a2, done = transition
    q, cache = forward_q(params, s)
    if done:
        target = r
    else:
        q2, _ = forward_q(params, s2)
        target = r + gamma * float(q2[0, a2])
    td = target - float(q[0, a])
    if not np.isfinite(td):
        raise NonFiniteLossError(f"non-finite SARSA TD error: {td}")
    d_q = np.zeros((1, N_ACTIONS))
    d_q[0, a] = -td
    grad = backward_q(params, cache, d_q)
    optimizer.step(params, grad, eta)
    return td


def a2c_update(params: ParamSet, transition, gamma: float, eta: float,
               entropy_coef: float, value_coef: float, optimizer) -> float:
    """One-step advantage actor-critic update; returns the advantage.

    Policy loss -log pi(a|s) * adv (advantage held constant), value loss
    value_coef * adv^2, entropy bonus entropy_coef * H(pi). Gradients are
    formed at the logit level so near-zero probabilities stay harmless.
    """
    s, a, r, s2, done = transition
    probs_b, values, cache = forward_ac(params, s)
    probs = probs_b[0]
    v = float(values[0])
    if done:
        target = r
    else:
        _, v2, _ = forward_ac(params, s2)
        target = r + gamma * float(v2[0])
    adv = target - v
    if not np.isfinite(adv):
        raise NonFiniteLossError(f"non-finite advantage: {adv}")

    onehot = np.zeros(N_ACTIONS)
    onehot[a] = 1.0
    log_probs = np.log(probs)
    entropy = -float(np.dot(probs, log_probs))
    d_logits = adv * (probs - onehot)
    d_logits += entropy_coef * probs * (log_probs + entropy)
    d_value = np.array([-2.0 * value_coef * adv])
    grad = backward_ac_logits(params, cache, d_logits.reshape(1, -1), d_value)
    optimizer.step(params, grad, eta)
    return adv


# ---------------------------------------------------------------------------
# training loops


def dqn_train(u: Universe, spec: TargetSpec, cfg: TrainConfig):
    rng = np.random.default_rng([cfg.seed, _TAG_DQN])
    netspec = NetworkSpec(u.state_dim, cfg.hidden, Q_HEAD)
    params = init_params(netspec, seed=[cfg.seed, _TAG_INIT])
    target = params.copy()
    optimizer = make_optimizer(cfg.optimizer, netspec.n_params)
    buffer = PrioritizedReplayBuffer(cfg.replay_capacity, u.state_dim,
                                     cfg.per_alpha, cfg.per_epsilon)
    match_vec = u.target_matches(spec)
    ecfg = cfg.episode_config()
    probe = _probe_states(u, cfg)
    log = TrainLog(algorithm="dqn", config=asdict(cfg))
    updates = 0

    for ep in range(cfg.episodes):
        eps = cfg.epsilon_at(ep)
        per_beta = cfg.per_beta_at(ep)
        current = int(rng.integers(len(u)))
        counts = [0, 0, 0, 0]
        steps = 0
        no_cand = 0
        match = float(match_vec[current])
        success = match >= cfg.beta
        while not success and steps < cfg.max_steps:
            state = u.states[current]
            action = _eps_greedy_action(params, state, eps, rng)
            rec, was_noop = _env_step(u, current, action, spec, ecfg, rng, match_vec)
            no_cand += was_noop
            done = rec.match_after >= cfg.beta
            buffer.push(state, action, rec.reward, u.states[rec.to_quiz], done)
            if buffer.size >= cfg.batch_size:
                idx, batch, weights = buffer.sample(cfg.batch_size, rng, per_beta)
                td = dqn_update(params, target, batch, cfg.gamma, cfg.eta,
                                optimizer, weights)
                buffer.update_priorities(idx, td)
                updates += 1
                if updates % cfg.target_sync_interval == 0:
                    target.load_from(params.theta)
            counts[action] += 1
            steps += 1
            current = rec.to_quiz
            match = rec.match_after
            success = done
        log.episodes.append(EpisodeStats(
            episode=ep, epsilon=eps, steps=steps, terminal_match=match,
            success=success, max_q=_probe_metric(params, probe),
            action_counts=tuple(counts), no_candidate_steps=no_cand))
    return params, log


def sarsa_train(u: Universe, spec: TargetSpec, cfg: TrainConfig):
    rng = np.random.default_rng([cfg.seed, _TAG_SARSA])
    netspec = NetworkSpec(u.state_dim, cfg.hidden, Q_HEAD)
    params = init_params(netspec, seed=[cfg.seed, _TAG_INIT])
    optimizer = make_optimizer(cfg.optimizer, netspec.n_params)
    match_vec = u.target_matches(spec)
    ecfg = cfg.episode_config()
    probe = _probe_states(u, cfg)
    log = TrainLog(algorithm="sarsa", config=asdict(cfg))

    for ep in range(cfg.episodes):
        eps = cfg.epsilon_at(ep)
        current = int(rng.integers(len(u)))
        counts = [0, 0, 0, 0]
        steps = 0
        no_cand = 0
        match = float(match_vec[current])
        success = match >= cfg.beta
        if not success:
            action = _eps_greedy_action(params, u.states[current], eps, rng)
        while not success and steps < cfg.max_steps:
            state = u.states[current]
            rec, was_noop = _env_step(u, current, action, spec, ecfg, rng, match_vec)
            no_cand += was_noop
            done = rec.match_after >= cfg.beta
            next_state = u.states[rec.to_quiz]
            if done:
                sarsa_update(params, (state, action, rec.reward, None, None, True),
                             cfg.gamma, cfg.eta, optimizer)
            else:
                next_action = _eps_greedy_action(params, next_state, eps, rng)
                sarsa_update(params,
                             (state, action, rec.reward, next_state, next_action, False),
                             cfg.gamma, cfg.eta, optimizer)
            counts[action] += 1
            steps += 1
            current = rec.to_quiz
            match = rec.match_after
            success = done
            if not done:
                action = next_action
        log.episodes.append(EpisodeStats(
            episode=ep, epsilon=eps, steps=steps, terminal_match=match,
            success=success, max_q=_probe_metric(params, probe),
            action_counts=tuple(counts), no_candidate_steps=no_cand))
    return params, log


class _EpisodeCounter:
    """Hands out episode indices to workers, in order, under a lock."""

    def __init__(self, total: int):
        self.total = total
        self.next_index = 0
        self.lock = threading.Lock()

    def claim(self):
        with self.lock:
            if self.next_index >= self.total:
                return None
            i = self.next_index
            self.next_index += 1
            return i


def _ac_worker(worker_id: int, u: Universe, spec: TargetSpec, cfg: TrainConfig,
               params: ParamSet, optimizer, counter: _EpisodeCounter,
               stats: list, stats_lock: threading.Lock, match_vec: np.ndarray,
               probe: np.ndarray) -> None:
    rng = np.random.default_rng([cfg.seed, _TAG_AC_BASE, worker_id])
    ecfg = cfg.episode_config()
    while (ep := counter.claim()) is not None:
        current = int(rng.integers(len(u)))
        counts = [0, 0, 0, 0]
        steps = 0
        no_cand = 0
        match = float(match_vec[current])
        success = match >= cfg.beta
        while not success and steps < cfg.max_steps:
            state = u.states[current]
            probs, _, _ = forward_ac(params, state)
            action = _sample_action(probs[0], rng)
            rec, was_noop = _env_step(u, current, action, spec, ecfg, rng, match_vec)
            no_cand += was_noop
            done = rec.match_after >= cfg.beta
            a2c_update(params,
                       (state, action, rec.reward, u.states[rec.to_quiz], done),
                       cfg.gamma, cfg.eta, cfg.entropy_coef, cfg.value_coef,
                       optimizer)
            counts[action] += 1
            steps += 1
            current = rec.to_quiz
            match = rec.match_after
            success = done
        st = EpisodeStats(
            episode=ep, epsilon=cfg.epsilon_at(ep), steps=steps,
            terminal_match=match, success=success,
            max_q=_probe_metric(params, probe),
            action_counts=tuple(counts), no_candidate_steps=no_cand)
        with stats_lock:
            stats.append(st)


def _actor_critic_train(u: Universe, spec: TargetSpec, cfg: TrainConfig,
                        workers: int, algorithm: str):
    netspec = NetworkSpec(u.state_dim, cfg.hidden, AC_HEAD)
    params = init_params(netspec, seed=[cfg.seed, _TAG_INIT])
    optimizer = make_optimizer(cfg.optimizer, netspec.n_params)
    counter = _EpisodeCounter(cfg.episodes)
    stats: list[EpisodeStats] = []
    stats_lock = threading.Lock()
    match_vec = u.target_matches(spec)
    probe = _probe_states(u, cfg)

    if workers == 1:
        _ac_worker(0, u, spec, cfg, params, optimizer, counter, stats,
                   stats_lock, match_vec, probe)
    else:
        failures: list[tuple[int, BaseException]] = []

        def run(wid: int) -> None:
            try:
                _ac_worker(wid, u, spec, cfg, params, optimizer, counter,
                           stats, stats_lock, match_vec, probe)
            except BaseException as exc:  # noqa: BLE001 - reported via WorkerPanic
                failures.append((wid, exc))

        threads = [threading.Thread(target=run, args=(w,), name=f"ac-worker-{w}")
                   for w in range(workers)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        if failures:
            wid, exc = failures[0]
            raise WorkerPanicError(f"worker {wid} failed: {exc!r}") from exc

    stats.sort(key=lambda st: st.episode)
    log = TrainLog(algorithm=algorithm, config=asdict(cfg))
    log.episodes = stats
    return params, log


def a2c_train(u: Universe, spec: TargetSpec, cfg: TrainConfig):
    return _actor_critic_train(u, spec, cfg, workers=1, algorithm="a2c")


def a3c_train(u: Universe, spec: TargetSpec, cfg: TrainConfig):
    """A2C worker loops on cfg.workers threads over shared parameters."""
    return _actor_critic_train(u, spec, cfg, workers=cfg.workers, algorithm="a3c")


def train_agent(algorithm: str, u: Universe, spec: TargetSpec, cfg: TrainConfig):
    """Train one agent; returns (ParamSet, TrainLog)."""
    algorithm = algorithm.lower()
    if algorithm == "dqn":
        return dqn_train(u, spec, cfg)
    if algorithm == "sarsa":
        return sarsa_train(u, spec, cfg)
    if algorithm == "a2c":
        return a2c_train(u, spec, cfg)
    if algorithm == "a3c":
        return a3c_train(u, spec, cfg)
    raise ValueError(f"unknown algorithm {algorithm!r} (expected one of {ALGORITHMS})")


# ---------------------------------------------------------------------------
# inference


def greedy_policy(params: ParamSet):
    """Deterministic policy: argmax Q, or argmax of the actor's probabilities."""
    if params.spec.head == Q_HEAD:
        def policy(state: np.ndarray) -> int:
            q, _ = forward_q(params, state)
            return int(np.argmax(q[0]))
    else:
        def policy(state: np.ndarray) -> int:
            probs, _, _ = forward_ac(params, state)
            return int(np.argmax(probs[0]))
    return policy


def make_policy(params: ParamSet, mode: str = "greedy", epsilon: float = 0.0,
                rng: np.random.Generator | None = None):
    """Policy factory over a parameter snapshot.

    Modes: "greedy" (argmax, ties to the lowest action), "epsilon-greedy"
    (explore uniformly with probability epsilon; Q head only), and
    "stochastic" (sample the actor's distribution; actor-critic head only).
    """
    if mode == "greedy":
        return greedy_policy(params)
    if mode == "epsilon-greedy":
        if params.spec.head != Q_HEAD:
            raise ValueError("epsilon-greedy needs a Q head")
        if rng is None:
            raise ValueError("epsilon-greedy needs an rng")
        return lambda state: _eps_greedy_action(params, state, epsilon, rng)
    if mode == "stochastic":
        if params.spec.head != AC_HEAD:
            raise ValueError("stochastic mode needs an actor-critic head")
        if rng is None:
            raise ValueError("stochastic mode needs an rng")

        def policy(state: np.ndarray) -> int:
            probs, _, _ = forward_ac(params, state)
            return _sample_action(probs[0], rng)

        return policy
    raise ValueError(f"unknown policy mode {mode!r}")


@dataclass
class InferenceResult:
    start_index: int
    quiz_index: int
    match: float
    iterations: int
    elapsed_sec: float
    success: bool
    trace: list[StepRecord]


def infer_quiz(params: ParamSet, u: Universe, spec: TargetSpec,
               ecfg: EpisodeConfig, start_index: int, rng_seed: int = 0,
               match_vec: np.ndarray | None = None) -> InferenceResult:
    """Greedy episode from start_index; deterministic given (params, u, start)."""
    from .environment import run_episode

    if match_vec is None:
        match_vec = u.target_matches(spec)
    rng = np.random.default_rng([rng_seed, _TAG_INFER, start_index])
    t0 = time.perf_counter()
    trace, success = run_episode(u, start_index, greedy_policy(params), spec,
                                 ecfg, rng, match_vec)
    elapsed = time.perf_counter() - t0
    final = trace[-1].to_quiz if trace else start_index
    return InferenceResult(
        start_index=start_index, quiz_index=final,
        match=float(match_vec[final]), iterations=len(trace),
        elapsed_sec=elapsed, success=success, trace=trace)
