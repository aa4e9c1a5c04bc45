import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quizforge.domain import (DuplicateMcqError, Mcq, SizeMismatchError,
                              TargetSpec, ZeroVectorError, cosine_similarity,
                              diff_match, quiz_from_mcqs, target_match,
                              topic_match)


def make_quiz(topics, levels, n_topics=10, n_levels=5):
    mcqs = [Mcq(id=i, topic=t, level=l) for i, (t, l) in enumerate(zip(topics, levels))]
    return quiz_from_mcqs(mcqs, k=len(mcqs), n_topics=n_topics, n_levels=n_levels)


class TestCosineSimilarity:
    def test_identical_vectors(self):
        assert cosine_similarity(np.array([0.5, 0.5]), np.array([0.5, 0.5])) == pytest.approx(1.0)

    def test_orthogonal_vectors(self):
        assert cosine_similarity(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 0.0

    def test_two_topic_quiz_vs_uniform(self):
        a = np.array([0.5, 0.5] + [0.0] * 8)
        b = np.full(10, 0.1)
        # dot = 0.1, norms sqrt(0.5) * sqrt(0.1)
        expected = 0.1 / (np.sqrt(0.5) * np.sqrt(0.1))
        assert cosine_similarity(a, b) == pytest.approx(expected)
        assert round(cosine_similarity(a, b), 4) == 0.4472

    def test_zero_vector_raises(self):
        with pytest.raises(ZeroVectorError):
            cosine_similarity(np.zeros(3), np.array([1.0, 0.0, 0.0]))
        with pytest.raises(ZeroVectorError):
            cosine_similarity(np.array([1.0, 0.0, 0.0]), np.zeros(3))

    def test_length_mismatch_is_usage_error(self):
        with pytest.raises(ValueError):
            cosine_similarity(np.ones(3), np.ones(4))

    @given(st.lists(st.floats(0.0, 100.0), min_size=2, max_size=12).filter(lambda v: sum(v) > 1e-6))
    @settings(max_examples=60, deadline=None)
    def test_self_similarity_is_one(self, values):
        vec = np.asarray(values)
        assert cosine_similarity(vec, vec) == pytest.approx(1.0, abs=1e-12)

    @given(
        st.lists(st.floats(0.0, 10.0), min_size=2, max_size=8).filter(lambda v: sum(v) > 1e-6),
        st.lists(st.floats(0.0, 10.0), min_size=2, max_size=8).filter(lambda v: sum(v) > 1e-6),
        st.floats(0.01, 1000.0),
    )
    @settings(max_examples=60, deadline=None)
    def test_symmetry_and_scale_invariance(self, va, vb, scale):
        n = min(len(va), len(vb))
        a, b = np.asarray(va[:n]), np.asarray(vb[:n])
        if a.sum() < 1e-6 or b.sum() < 1e-6:
            return
        assert cosine_similarity(a, b) == pytest.approx(cosine_similarity(b, a))
        assert cosine_similarity(scale * a, b) == pytest.approx(
            cosine_similarity(a, b), abs=1e-9)


class TestQuizFromMcqs:
    def test_two_topic_proportions(self):
        quiz = make_quiz(topics=[0] * 5 + [1] * 5, levels=[0] * 10)
        expected = np.array([0.5, 0.5] + [0.0] * 8)
        np.testing.assert_allclose(quiz.topic_vec, expected)

    def test_degenerate_level_counting(self):
        quiz = make_quiz(topics=list(range(10)), levels=[2] * 10)
        np.testing.assert_allclose(quiz.diff_vec, [0, 0, 1, 0, 0])

    def test_small_symmetric_quiz(self):
        quiz = make_quiz(topics=[0, 1], levels=[0, 1], n_topics=2, n_levels=2)
        np.testing.assert_allclose(quiz.topic_vec, [0.5, 0.5])

    def test_size_mismatch(self):
        mcqs = [Mcq(id=i, topic=0, level=0) for i in range(3)]
        with pytest.raises(SizeMismatchError):
            quiz_from_mcqs(mcqs, k=4, n_topics=1, n_levels=1)

    def test_duplicate_ids(self):
        mcqs = [Mcq(id=0, topic=0, level=0), Mcq(id=0, topic=1, level=1)]
        with pytest.raises(DuplicateMcqError):
            quiz_from_mcqs(mcqs, k=2, n_topics=2, n_levels=2)

    def test_out_of_range_topic(self):
        mcqs = [Mcq(id=0, topic=5, level=0)]
        with pytest.raises(ValueError):
            quiz_from_mcqs(mcqs, k=1, n_topics=3, n_levels=1)

    @given(st.lists(st.tuples(st.integers(0, 9), st.integers(0, 4)), min_size=1, max_size=30))
    @settings(max_examples=60, deadline=None)
    def test_proportions_sum_to_one(self, pairs):
        quiz = make_quiz(topics=[t for t, _ in pairs], levels=[l for _, l in pairs])
        assert quiz.topic_vec.sum() == pytest.approx(1.0, abs=1e-9)
        assert quiz.diff_vec.sum() == pytest.approx(1.0, abs=1e-9)
        state = quiz.state_vector()
        assert state.shape == (15,)
        np.testing.assert_array_equal(state[:10], quiz.topic_vec)


class TestMatches:
    def test_topic_match_identity(self):
        quiz = make_quiz(topics=[0] * 5 + [1] * 5, levels=[0] * 10)
        assert topic_match(quiz, quiz.topic_vec) == pytest.approx(1.0)

    def test_topic_match_uniform_target(self):
        quiz = make_quiz(topics=[0] * 5 + [1] * 5, levels=[0] * 10)
        assert topic_match(quiz, np.full(10, 0.1)) == pytest.approx(0.4472, abs=5e-5)

    def test_biased_topic_target_hit_exactly(self):
        # half the quiz on topic 5, half on topic 8, target identical
        quiz = make_quiz(topics=[5] * 5 + [8] * 5, levels=list(range(5)) * 2)
        tc = np.array([0, 0, 0, 0, 0, 0.5, 0, 0, 0.5, 0])
        assert topic_match(quiz, tc) == pytest.approx(1.0)

    def test_diff_match_single_level_vs_uniform(self):
        quiz = make_quiz(topics=list(range(10)), levels=[0] * 10)
        td = np.full(5, 0.2)
        # dot = 0.2, norms 1 * sqrt(0.2)
        assert diff_match(quiz, td) == pytest.approx(0.2 / np.sqrt(0.2))

    def test_biased_level_target_hit_exactly(self):
        quiz = make_quiz(topics=list(range(10)), levels=[0] * 5 + [4] * 5)
        td = np.array([0.5, 0, 0, 0, 0.5])
        assert diff_match(quiz, td) == pytest.approx(1.0)

    def test_alpha_collapse(self):
        quiz = make_quiz(topics=[0] * 5 + [1] * 5, levels=[0] * 4 + [1] * 6)
        tc, td = np.full(10, 0.1), np.full(5, 0.2)
        spec1 = TargetSpec(tc=tc, td=td, alpha=1.0)
        spec0 = TargetSpec(tc=tc, td=td, alpha=0.0)
        assert target_match(quiz, spec1) == pytest.approx(topic_match(quiz, tc))
        assert target_match(quiz, spec0) == pytest.approx(diff_match(quiz, td))

    def test_weighted_average(self):
        quiz = make_quiz(topics=[0] * 5 + [1] * 5, levels=list(range(5)) * 2)
        tc = np.full(10, 0.1)
        spec = TargetSpec(tc=tc, td=quiz.diff_vec, alpha=0.5)
        tm = topic_match(quiz, tc)
        assert tm == pytest.approx(0.4472, abs=5e-5)
        assert diff_match(quiz, spec.td) == pytest.approx(1.0)
        assert target_match(quiz, spec) == pytest.approx(0.5 * tm + 0.5)

    @given(
        st.lists(st.tuples(st.integers(0, 9), st.integers(0, 4)), min_size=1, max_size=20),
        st.floats(0.0, 1.0),
    )
    @settings(max_examples=60, deadline=None)
    def test_target_match_bounded(self, pairs, alpha):
        quiz = make_quiz(topics=[t for t, _ in pairs], levels=[l for _, l in pairs])
        spec = TargetSpec(tc=np.full(10, 0.1), td=np.full(5, 0.2), alpha=alpha)
        assert 0.0 <= target_match(quiz, spec) <= 1.0

    def test_monotone_in_topic_match(self):
        # same diff vector, increasingly concentrated topics vs uniform target
        td = np.full(5, 0.2)
        spec = TargetSpec(tc=np.full(10, 0.1), td=td, alpha=0.7)
        spread = make_quiz(topics=list(range(10)), levels=list(range(5)) * 2)
        lumped = make_quiz(topics=[0] * 10, levels=list(range(5)) * 2)
        assert topic_match(spread, spec.tc) > topic_match(lumped, spec.tc)
        assert target_match(spread, spec) > target_match(lumped, spec)


class TestTargetSpec:
    def test_vectors_must_sum_to_one(self):
        with pytest.raises(ValueError):
            TargetSpec(tc=np.array([0.5, 0.4]), td=np.array([1.0]))

    def test_alpha_range(self):
        with pytest.raises(ValueError):
            TargetSpec(tc=np.array([1.0]), td=np.array([1.0]), alpha=1.5)

    def test_beta_range(self):
        with pytest.raises(ValueError):
            TargetSpec(tc=np.array([1.0]), td=np.array([1.0]), beta=0.0)

    def test_vectors_frozen(self):
        spec = TargetSpec(tc=np.array([0.5, 0.5]), td=np.array([1.0]))
        with pytest.raises(ValueError):
            spec.tc[0] = 0.9
