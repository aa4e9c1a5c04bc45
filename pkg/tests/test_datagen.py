import numpy as np
import pytest

from quizforge.datagen import (DatasetSpec, EmptyDatasetError, EmptyResultError,
                               ParseError, UnknownColumnError, filter_topics,
                               generate_synthetic, load_dataset_csv,
                               sample_topic_subset, save_dataset_csv)


def test_same_seed_is_bit_reproducible():
    spec = DatasetSpec(n_mcqs=500, n_topics=10, n_levels=5, seed=42)
    a = generate_synthetic(spec)
    b = generate_synthetic(spec)
    assert [(m.id, m.topic, m.level) for m in a.mcqs] == \
           [(m.id, m.topic, m.level) for m in b.mcqs]
    assert a.meta["topic_categorical"] == b.meta["topic_categorical"]


def test_different_seeds_differ():
    base = DatasetSpec(n_mcqs=500, n_topics=10, n_levels=5, seed=1)
    other = DatasetSpec(n_mcqs=500, n_topics=10, n_levels=5, seed=2)
    a, b = generate_synthetic(base), generate_synthetic(other)
    assert [(m.topic, m.level) for m in a.mcqs] != [(m.topic, m.level) for m in b.mcqs]


def test_counts_track_drawn_categorical_within_3_sigma():
    spec = DatasetSpec(n_mcqs=10_000, n_topics=10, n_levels=5,
                       topic_concentration=1.0, seed=11)
    ds = generate_synthetic(spec)
    probs = np.asarray(ds.meta["topic_categorical"])
    counts = np.bincount([m.topic for m in ds.mcqs], minlength=10)
    expected = spec.n_mcqs * probs
    sigma = np.sqrt(spec.n_mcqs * probs * (1 - probs))
    assert np.all(np.abs(counts - expected) <= 3 * sigma + 1)


def test_huge_concentration_approaches_uniform():
    spec = DatasetSpec(n_mcqs=10_000, n_topics=10, n_levels=5,
                       topic_concentration=1e6, level_concentration=1e6, seed=5)
    ds = generate_synthetic(spec)
    probs = np.asarray(ds.meta["topic_categorical"])
    np.testing.assert_allclose(probs, 0.1, atol=5e-3)
    counts = np.bincount([m.topic for m in ds.mcqs], minlength=10)
    sigma = np.sqrt(10_000 * 0.1 * 0.9)
    assert np.all(np.abs(counts - 1000) <= 4 * sigma)


def test_biased_concentration_spreads_mass_unevenly():
    spec = DatasetSpec(n_mcqs=100, n_topics=10, n_levels=5,
                       topic_concentration=0.5, seed=3)
    probs = np.asarray(generate_synthetic(spec).meta["topic_categorical"])
    assert probs.max() > 2 * probs.min()


def test_dirichlet_mean_is_uniform_over_many_draws():
    draws = []
    for seed in range(300):
        spec = DatasetSpec(n_mcqs=1, n_topics=8, n_levels=2, seed=seed)
        draws.append(generate_synthetic(spec).meta["topic_categorical"])
    mean = np.mean(draws, axis=0)
    # each coordinate of a Dirichlet(1) draw has mean 1/8, sd ~0.11
    sigma = 0.11 / np.sqrt(300)
    assert np.all(np.abs(mean - 1 / 8) < 3.5 * sigma)


class TestCsvRoundTrip:
    def test_round_trip(self, tmp_path):
        ds = generate_synthetic(DatasetSpec(n_mcqs=200, n_topics=6, n_levels=4, seed=9))
        path = tmp_path / "pool.csv"
        save_dataset_csv(ds, path)
        loaded = load_dataset_csv(path)
        assert len(loaded) == 200
        assert loaded.n_topics == ds.n_topics
        assert loaded.n_levels == ds.n_levels
        assert [(m.id, m.topic, m.level) for m in loaded.mcqs] == \
               [(m.id, m.topic, m.level) for m in ds.mcqs]

    def test_three_row_csv(self, tmp_path):
        path = tmp_path / "mini.csv"
        path.write_text(
            "id,topic,difficulty,question,choice_a,choice_b,choice_c,choice_d,answer\n"
            "1,algebra,2,What is x?,1,2,3,4,b\n"
            "2,geometry,1,,,,,,\n"
            "3,algebra,1,,,,,,\n")
        ds = load_dataset_csv(path)
        assert len(ds) == 3
        assert ds.topic_labels == ["algebra", "geometry"]
        assert ds.level_labels == ["1", "2"]
        assert ds.mcqs[0].topic == 0 and ds.mcqs[0].level == 1
        assert ds.mcqs[0].question == "What is x?"

    def test_numeric_difficulty_scale(self, tmp_path):
        path = tmp_path / "levels.csv"
        rows = "\n".join(f"{i},t,{(i % 5) + 1},,,,,," for i in range(10))
        path.write_text("id,topic,difficulty,question,choice_a,choice_b,"
                        f"choice_c,choice_d,answer\n{rows}\n")
        ds = load_dataset_csv(path)
        assert ds.level_labels == ["1", "2", "3", "4", "5"]
        assert sorted({m.level for m in ds.mcqs}) == [0, 1, 2, 3, 4]

    def test_missing_difficulty_names_row(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("id,topic,difficulty\n1,a,2\n2,b,\n")
        with pytest.raises(ParseError) as err:
            load_dataset_csv(path)
        assert err.value.line == 3

    def test_duplicate_id_rejected(self, tmp_path):
        path = tmp_path / "dup.csv"
        path.write_text("id,topic,difficulty\n1,a,2\n1,b,1\n")
        with pytest.raises(ParseError):
            load_dataset_csv(path)

    def test_unknown_column(self, tmp_path):
        path = tmp_path / "extra.csv"
        path.write_text("id,topic,difficulty,bogus\n1,a,2,x\n")
        with pytest.raises(UnknownColumnError):
            load_dataset_csv(path)

    def test_empty_dataset(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("id,topic,difficulty\n")
        with pytest.raises(EmptyDatasetError):
            load_dataset_csv(path)


class TestFilterTopics:
    def test_identity_filter(self):
        ds = generate_synthetic(DatasetSpec(n_mcqs=100, n_topics=5, n_levels=3, seed=2))
        out = filter_topics(ds, range(5))
        assert len(out) == 100
        assert out.topic_labels == ds.topic_labels

    def test_single_topic(self):
        ds = generate_synthetic(DatasetSpec(n_mcqs=100, n_topics=5, n_levels=3, seed=2))
        count = sum(1 for m in ds.mcqs if m.topic == 0)
        out = filter_topics(ds, {0})
        assert len(out) == count
        assert out.n_topics == 1
        assert all(m.topic == 0 for m in out.mcqs)

    def test_membership_and_dense_reindex(self):
        ds = generate_synthetic(DatasetSpec(n_mcqs=3000, n_topics=111, n_levels=5, seed=8))
        sub = sample_topic_subset(ds, 10, seed=4)
        assert sub.n_topics == 10
        chosen_labels = set(sub.topic_labels)
        assert chosen_labels <= set(ds.topic_labels)
        # dense indices with no gaps, and every kept mcq maps to a chosen label
        used = sorted({m.topic for m in sub.mcqs})
        assert used == list(range(len(used)))
        by_id = {m.id: m for m in ds.mcqs}
        for m in sub.mcqs:
            assert ds.topic_labels[by_id[m.id].topic] == sub.topic_labels[m.topic]

    def test_empty_result(self):
        from quizforge.datagen import Dataset
        from quizforge.domain import Mcq
        tiny = Dataset(mcqs=[Mcq(id=0, topic=0, level=0)],
                       topic_labels=["a", "b"], level_labels=["x"])
        with pytest.raises(EmptyResultError):
            filter_topics(tiny, {1})

    def test_topics_must_be_nonempty(self):
        ds = generate_synthetic(DatasetSpec(n_mcqs=50, n_topics=5, n_levels=3, seed=2))
        with pytest.raises(ValueError):
            filter_topics(ds, set())
