"""Core domain types: MCQs, quizzes, teacher targets, and the match functions.

Everything here is immutable after construction and safe to share across
threads. Proportion vectors are float64; equality checks elsewhere use a
1e-9 absolute tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

PROPORTION_TOL = 1e-9


class ZeroVectorError(ValueError):
    """Raised when a similarity is requested against an all-zero vector."""


class SizeMismatchError(ValueError):
    pass


class DuplicateMcqError(ValueError):
    pass


def _frozen_vector(values: Iterable[float]) -> np.ndarray:
    vec = np.asarray(list(values) if not isinstance(values, np.ndarray) else values,
                     dtype=np.float64)
    if vec.ndim != 1:
        raise ValueError(f"expected a 1-D vector, got shape {vec.shape}")
    vec = vec.copy()
    vec.setflags(write=False)
    return vec


@dataclass(frozen=True)
class Mcq:
    """One multiple-choice question with a single topic and difficulty level.

    Text fields (question body, choices, answer key) are carried only for
    export; no logic looks at them.
    """

    id: int
    topic: int
    level: int
    question: str = ""
    choices: tuple[str, ...] = ()
    answer: str = ""

    def __post_init__(self):
        if self.id < 0:
            raise ValueError(f"mcq id must be non-negative, got {self.id}")
        if self.topic < 0 or self.level < 0:
            raise ValueError(f"mcq {self.id}: negative topic or level index")


@dataclass(frozen=True)
class Quiz:
    """A set of exactly k MCQ ids plus derived topic/difficulty proportion vectors."""

    mcq_ids: frozenset[int]
    topic_vec: np.ndarray
    diff_vec: np.ndarray

    @property
    def k(self) -> int:
        return len(self.mcq_ids)

    def state_vector(self) -> np.ndarray:
        """Concatenated topic and difficulty proportions (the MDP state)."""
        return np.concatenate([self.topic_vec, self.diff_vec])


@dataclass(frozen=True)
class TargetSpec:
    """Teacher goal: target topic/difficulty distributions, scalarization weight,
    and the success threshold at which an episode stops."""

    tc: np.ndarray
    td: np.ndarray
    alpha: float = 0.5
    beta: float = 0.85

    def __post_init__(self):
        object.__setattr__(self, "tc", _frozen_vector(self.tc))
        object.__setattr__(self, "td", _frozen_vector(self.td))
        for name, vec in (("tc", self.tc), ("td", self.td)):
            if np.any(vec < 0):
                raise ValueError(f"{name} has negative entries")
            if abs(float(vec.sum()) - 1.0) > PROPORTION_TOL:
                raise ValueError(f"{name} must sum to 1, got {vec.sum()!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if not 0.0 < self.beta <= 1.0:
            raise ValueError(f"beta must be in (0, 1], got {self.beta}")


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity of two non-negative vectors, in [0, 1].

    Raises ZeroVectorError if either vector is all zeros; a length mismatch
    is a usage error and raises ValueError.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ZeroVectorError("cosine similarity of an all-zero vector is undefined")
    sim = float(np.dot(a, b)) / (na * nb)
    # inputs are non-negative, so clamp only the fp overshoot above 1
    return min(sim, 1.0)


def quiz_from_mcqs(members: Sequence[Mcq], k: int, n_topics: int, n_levels: int) -> Quiz:
    """Build a Quiz from exactly k distinct MCQs, counting proportion vectors."""
    if len(members) != k:
        raise SizeMismatchError(f"expected {k} MCQs, got {len(members)}")
    ids = [m.id for m in members]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise DuplicateMcqError(f"duplicate mcq ids: {dupes}")
    topic_vec = np.zeros(n_topics, dtype=np.float64)
    diff_vec = np.zeros(n_levels, dtype=np.float64)
    for m in members:
        if m.topic >= n_topics:
            raise ValueError(f"mcq {m.id}: topic {m.topic} out of range [0, {n_topics})")
        if m.level >= n_levels:
            raise ValueError(f"mcq {m.id}: level {m.level} out of range [0, {n_levels})")
        topic_vec[m.topic] += 1.0
        diff_vec[m.level] += 1.0
    topic_vec /= k
    diff_vec /= k
    topic_vec.setflags(write=False)
    diff_vec.setflags(write=False)
    return Quiz(mcq_ids=frozenset(ids), topic_vec=topic_vec, diff_vec=diff_vec)


def topic_match(quiz: Quiz, tc: np.ndarray) -> float:
    return cosine_similarity(quiz.topic_vec, tc)


def diff_match(quiz: Quiz, td: np.ndarray) -> float:
    return cosine_similarity(quiz.diff_vec, td)


def target_match(quiz: Quiz, spec: TargetSpec) -> float:
    """Scalarized closeness to the teacher goal:
    alpha * topic_match + (1 - alpha) * diff_match."""
    return spec.alpha * topic_match(quiz, spec.tc) + (1.0 - spec.alpha) * diff_match(quiz, spec.td)


def target_match_vectors(topic_vec: np.ndarray, diff_vec: np.ndarray, spec: TargetSpec) -> float:
    """target_match for raw proportion vectors (no Quiz object needed)."""
    return (spec.alpha * cosine_similarity(topic_vec, spec.tc)
            + (1.0 - spec.alpha) * cosine_similarity(diff_vec, spec.td))
