"""The quiz-state MDP: universe materialization, actions, rewards, episodes.

A Universe is a fixed set of N distinct k-MCQ quizzes; each state is the
concatenation of a quiz's topic and difficulty proportion vectors. The four
actions move to a quiz drawn uniformly from the 25 most similar or most
dissimilar quizzes in one objective (topic or difficulty), never to a
near-duplicate of the current quiz (full-state cosine similarity > 0.95).

Rewards: scheme "r2" is the progress reward targetMatch(next) -
targetMatch(current); scheme "r1" is the direct similarity targetMatch(next).
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .datagen import Dataset
from .domain import Quiz, TargetSpec, target_match

CANDIDATE_POOL = 25
DUPLICATE_SIM_CAP = 0.95
UNIVERSE_FORMAT_VERSION = 1

# Ranking similarities are quantized to this many decimals so that
# mathematically equal cosines (proportion vectors are small rationals)
# compare equal regardless of evaluation order, keeping the ascending-index
# tie-break well defined.
SIM_DECIMALS = 12

R1 = "r1"
R2 = "r2"


class InsufficientPoolError(ValueError):
    pass


class NoCandidatesError(RuntimeError):
    pass


class Action(IntEnum):
    SIM_TOPIC = 0
    SIM_LEVEL = 1
    DISS_TOPIC = 2
    DISS_LEVEL = 3


# objective axis per action: 0 = topic vectors, 1 = difficulty vectors
_ACTION_OBJECTIVE = {Action.SIM_TOPIC: 0, Action.DISS_TOPIC: 0,
                     Action.SIM_LEVEL: 1, Action.DISS_LEVEL: 1}
_ACTION_WANTS_SIMILAR = {Action.SIM_TOPIC: True, Action.SIM_LEVEL: True,
                         Action.DISS_TOPIC: False, Action.DISS_LEVEL: False}


@dataclass(frozen=True)
class EpisodeConfig:
    max_steps: int = 100
    beta: float = 0.85
    reward_scheme: str = R2
    gamma: float = 0.95

    def __post_init__(self):
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if not 0.0 < self.beta <= 1.0:
            raise ValueError(f"beta must be in (0, 1], got {self.beta}")
        if self.reward_scheme not in (R1, R2):
            raise ValueError(f"reward_scheme must be {R1!r} or {R2!r}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must be in [0, 1], got {self.gamma}")


@dataclass(frozen=True)
class StepRecord:
    """One transition; match_before is carried so traces are self-contained."""

    from_quiz: int
    action: Action
    to_quiz: int
    reward: float
    match_before: float
    match_after: float


class Universe:
    """Immutable, shareable set of candidate quizzes with neighbor rankings."""

    def __init__(self, member_ids: np.ndarray, states: np.ndarray, k: int,
                 n_topics: int, n_levels: int, meta: dict | None = None,
                 neighbor_cache: dict | None = None):
        self.member_ids = np.ascontiguousarray(member_ids, dtype=np.int64)
        self.states = np.ascontiguousarray(states, dtype=np.float64)
        self.k = int(k)
        self.n_topics = int(n_topics)
        self.n_levels = int(n_levels)
        self.meta = dict(meta or {})
        if self.states.shape != (self.member_ids.shape[0], self.state_dim):
            raise ValueError("states shape does not match member_ids / vocab sizes")

        self.topic_mat = self.states[:, :self.n_topics]
        self.diff_mat = self.states[:, self.n_topics:]
        self.topic_norms = np.linalg.norm(self.topic_mat, axis=1)
        self.diff_norms = np.linalg.norm(self.diff_mat, axis=1)
        self.state_norms = np.linalg.norm(self.states, axis=1)
        self.quizzes = [
            Quiz(mcq_ids=frozenset(int(i) for i in row),
                 topic_vec=self._frozen_row(self.topic_mat[i]),
                 diff_vec=self._frozen_row(self.diff_mat[i]))
            for i, row in enumerate(self.member_ids)
        ]
        if neighbor_cache is None:
            self._neighbors = {axis: self._rank_neighbors(axis) for axis in (0, 1)}
        else:
            self._neighbors = neighbor_cache
        # memo for the exact-ranking fallback; keyed (quiz, axis, similar)
        self._exact_memo: dict[tuple[int, int, bool], np.ndarray] = {}

    @staticmethod
    def _frozen_row(row: np.ndarray) -> np.ndarray:
        out = row.copy()
        out.setflags(write=False)
        return out

    def __len__(self) -> int:
        return self.states.shape[0]

    @property
    def state_dim(self) -> int:
        return self.n_topics + self.n_levels

    def _objective(self, axis: int) -> tuple[np.ndarray, np.ndarray]:
        if axis == 0:
            return self.topic_mat, self.topic_norms
        return self.diff_mat, self.diff_norms

    def _rank_neighbors(self, axis: int) -> tuple[np.ndarray, np.ndarray]:
        """Top/bottom neighbor indices by objective cosine, per quiz.

        Width is min(25, N-1); ties break toward the lower quiz index (stable
        sort on the negated/plain similarities).
        """
        n = len(self)
        width = min(CANDIDATE_POOL, n - 1)
        mat, norms = self._objective(axis)
        unit = mat / norms[:, None]
        top = np.empty((n, width), dtype=np.int32)
        bottom = np.empty((n, width), dtype=np.int32)
        chunk = max(1, min(256, n))
        for lo in range(0, n, chunk):
            hi = min(lo + chunk, n)
            sims = np.round(unit[lo:hi] @ unit.T, SIM_DECIMALS)
            for r in range(hi - lo):
                row = sims[r]
                i = lo + r
                row_desc = row.copy()
                row_desc[i] = -np.inf  # self sorts last in descending order
                top[i] = np.argsort(-row_desc, kind="stable")[:width]
                row_asc = row
                row_asc[i] = np.inf  # self sorts last in ascending order
                bottom[i] = np.argsort(row_asc, kind="stable")[:width]
        return top, bottom

    def full_state_sims(self, current: int, others: np.ndarray) -> np.ndarray:
        """Quantized cosine similarity of the concatenated state vectors."""
        dots = self.states[others] @ self.states[current]
        return np.round(dots / (self.state_norms[others] * self.state_norms[current]),
                        SIM_DECIMALS)

    def objective_sims(self, current: int, axis: int) -> np.ndarray:
        mat, norms = self._objective(axis)
        return np.round((mat @ mat[current]) / (norms * norms[current]), SIM_DECIMALS)

    def target_matches(self, spec: TargetSpec) -> np.ndarray:
        """targetMatch of every quiz against one teacher goal (vectorized)."""
        tc = np.asarray(spec.tc)
        td = np.asarray(spec.td)
        ts = (self.topic_mat @ tc) / (self.topic_norms * np.linalg.norm(tc))
        ds = (self.diff_mat @ td) / (self.diff_norms * np.linalg.norm(td))
        return spec.alpha * ts + (1.0 - spec.alpha) * ds


def build_universe(dataset: Dataset, k: int, n: int, seed: int = 0) -> Universe:
    """Sample n distinct k-subsets of the pool, uniformly at random.

    Deterministic given seed. Raises InsufficientPoolError when the pool
    cannot produce n distinct quizzes.
    """
    pool = dataset.mcqs
    if len(pool) < k:
        raise InsufficientPoolError(f"pool has {len(pool)} MCQs, need at least k={k}")
    total = math.comb(len(pool), k)
    if total < n:
        raise InsufficientPoolError(
            f"pool admits only C({len(pool)},{k})={total} quizzes, need {n}")

    rng = np.random.default_rng(seed)
    if total <= max(4 * n, 100_000):
        # dense regime: enumerate and subsample to avoid rejection stalls
        combos = list(itertools.combinations(range(len(pool)), k))
        picks = rng.choice(len(combos), size=n, replace=False)
        subsets = [combos[i] for i in picks]
    else:
        seen: set[tuple[int, ...]] = set()
        subsets = []
        while len(subsets) < n:
            cand = tuple(sorted(rng.choice(len(pool), size=k, replace=False).tolist()))
            if cand in seen:
                continue
            seen.add(cand)
            subsets.append(cand)

    topics = np.array([m.topic for m in pool])
    levels = np.array([m.level for m in pool])
    ids = np.array([m.id for m in pool], dtype=np.int64)
    member_ids = np.empty((n, k), dtype=np.int64)
    states = np.zeros((n, dataset.n_topics + dataset.n_levels))
    for i, subset in enumerate(subsets):
        idx = np.fromiter(subset, count=k, dtype=np.int64)
        member_ids[i] = ids[idx]
        states[i, :dataset.n_topics] = np.bincount(topics[idx], minlength=dataset.n_topics) / k
        states[i, dataset.n_topics:] = np.bincount(levels[idx], minlength=dataset.n_levels) / k

    meta = {"seed": seed, "k": k, "n": n, "dataset": dataset.meta}
    return Universe(member_ids, states, k, dataset.n_topics, dataset.n_levels, meta)


def candidates(u: Universe, current: int, action: Action) -> np.ndarray:
    """Destination choices for one action: up to 25 quiz indices.

    Ranking is by objective cosine similarity to the current quiz (descending
    for Sim*, ascending for Diss*, ties toward lower index), with the current
    quiz and near-duplicates (full-state similarity > 0.95) excluded. The
    cached top/bottom 25 answer most queries; when the duplicate filter bites
    into a truncated cache row the exact ranking is recomputed.
    """
    action = Action(action)
    axis = _ACTION_OBJECTIVE[action]
    top, bottom = u._neighbors[axis]
    cached = top[current] if _ACTION_WANTS_SIMILAR[action] else bottom[current]
    keep = u.full_state_sims(current, cached) <= DUPLICATE_SIM_CAP
    if keep.all():
        result = cached
    elif cached.shape[0] == len(u) - 1:
        result = cached[keep]  # cache already holds the full ranking
    else:
        result = _exact_candidates(u, current, axis, _ACTION_WANTS_SIMILAR[action])
    if result.shape[0] == 0:
        raise NoCandidatesError(
            f"no destination for quiz {current} action {action.name}: "
            "all ranked quizzes are near-duplicates")
    return result


def _exact_candidates(u: Universe, current: int, axis: int, similar: bool) -> np.ndarray:
    memo_key = (current, axis, similar)
    hit = u._exact_memo.get(memo_key)
    if hit is not None:
        return hit
    sims = u.objective_sims(current, axis)
    sims[current] = -np.inf if similar else np.inf  # self sorts last either way
    order = np.argsort(-sims if similar else sims, kind="stable")[:-1]
    keep = u.full_state_sims(current, order) <= DUPLICATE_SIM_CAP
    result = order[keep][:CANDIDATE_POOL].astype(np.int32)
    u._exact_memo[memo_key] = result
    return result


def step(u: Universe, current: int, action: Action, spec: TargetSpec,
         cfg: EpisodeConfig, rng: np.random.Generator,
         match_vec: np.ndarray | None = None) -> StepRecord:
    """Apply one action: sample a destination uniformly from the candidates.

    Raises NoCandidatesError when the duplicate filter removes every ranked
    quiz; run_episode converts that into a zero-reward self-transition.
    """
    cands = candidates(u, current, action)
    dest = int(cands[rng.integers(len(cands))])
    if match_vec is not None:
        before = float(match_vec[current])
        after = float(match_vec[dest])
    else:
        before = target_match(u.quizzes[current], spec)
        after = target_match(u.quizzes[dest], spec)
    reward = after if cfg.reward_scheme == R1 else after - before
    return StepRecord(from_quiz=current, action=Action(action), to_quiz=dest,
                      reward=reward, match_before=before, match_after=after)


def run_episode(u: Universe, start_index: int, policy, spec: TargetSpec,
                cfg: EpisodeConfig, rng: np.random.Generator,
                match_vec: np.ndarray | None = None):
    """Run one episode under `policy` (a state-vector -> action callable).

    Returns (trace, success). Terminates as soon as targetMatch >= beta
    (success; a start quiz already past beta yields an empty trace) or after
    max_steps. NoCandidates steps become zero-reward self-transitions so the
    episode stays total.
    """
    if match_vec is None:
        match_vec = u.target_matches(spec)
    current = start_index
    match = float(match_vec[current])
    if match >= cfg.beta:
        return [], True
    trace: list[StepRecord] = []
    for _ in range(cfg.max_steps):
        action = Action(policy(u.states[current]))
        try:
            rec = step(u, current, action, spec, cfg, rng, match_vec)
        except NoCandidatesError:
            rec = StepRecord(from_quiz=current, action=action, to_quiz=current,
                             reward=0.0, match_before=match, match_after=match)
        trace.append(rec)
        current = rec.to_quiz
        match = rec.match_after
        if match >= cfg.beta:
            return trace, True
    return trace, False


def session_match(trace, gamma: float) -> float:
    """Discounted sum of per-step match improvements.

    The i-th step (1-based) is discounted by gamma**i, so the first step
    already carries one factor of gamma.
    """
    return sum((gamma ** (i + 1)) * (rec.match_after - rec.match_before)
               for i, rec in enumerate(trace))


def save_universe(path, u: Universe) -> None:
    np.savez(
        path,
        format_version=np.int64(UNIVERSE_FORMAT_VERSION),
        member_ids=u.member_ids,
        states=u.states,
        k=np.int64(u.k),
        n_topics=np.int64(u.n_topics),
        n_levels=np.int64(u.n_levels),
        top_topic=u._neighbors[0][0], bottom_topic=u._neighbors[0][1],
        top_diff=u._neighbors[1][0], bottom_diff=u._neighbors[1][1],
        meta=np.bytes_(json.dumps(u.meta, sort_keys=True).encode()),
    )


def load_universe(path) -> Universe:
    with np.load(path) as data:
        fmt = int(data["format_version"])
        if fmt != UNIVERSE_FORMAT_VERSION:
            raise ValueError(f"unsupported universe format {fmt}")
        cache = {
            0: (data["top_topic"].copy(), data["bottom_topic"].copy()),
            1: (data["top_diff"].copy(), data["bottom_diff"].copy()),
        }
        return Universe(
            member_ids=data["member_ids"],
            states=data["states"],
            k=int(data["k"]),
            n_topics=int(data["n_topics"]),
            n_levels=int(data["n_levels"]),
            meta=json.loads(bytes(data["meta"]).decode()),
            neighbor_cache=cache,
        )
