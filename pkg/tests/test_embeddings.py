"""Skip-gram embedding trainer and the text embedding-file format."""

import numpy as np
import pytest

from dialdistill.embeddings import WordEmbeddings, cosine, train_word_embeddings
from dialdistill.errors import DataError


def template_corpus(seed=0, sentences=400):
    """Tokens 'x' and 'y' appear in identical slot contexts; the other
    content words pair up arbitrarily, giving a baseline of unrelated
    vectors to compare against."""
    rng = np.random.default_rng(seed)
    pre = [f"p{i}" for i in range(4)]
    post = [f"s{i}" for i in range(4)]
    other = [f"w{i}" for i in range(8)]
    corpus = []
    for k in range(sentences):
        if k % 2 == 0:
            target = "x" if (k // 2) % 2 == 0 else "y"
            corpus.append([str(rng.choice(pre)), target, str(rng.choice(post))])
        else:
            corpus.append([str(t) for t in rng.choice(other, size=3)])
    return corpus


class TestTrainer:
    def test_every_token_gets_requested_dimension(self):
        table = train_word_embeddings(template_corpus(), dim=16, seed=3, epochs=1)
        corpus_tokens = {t for s in template_corpus() for t in s}
        assert table.dim == 16
        assert set(table.tokens()) == corpus_tokens
        for t in table.tokens():
            assert table.vector(t).shape == (16,)

    def test_same_seed_reproduces_table_exactly(self):
        a = train_word_embeddings(template_corpus(), dim=8, seed=5, epochs=1)
        b = train_word_embeddings(template_corpus(), dim=8, seed=5, epochs=1)
        assert a.tokens() == b.tokens()
        for t in a.tokens():
            assert np.array_equal(a.vector(t), b.vector(t))

    def test_different_seeds_differ(self):
        a = train_word_embeddings(template_corpus(), dim=8, seed=1, epochs=1)
        b = train_word_embeddings(template_corpus(), dim=8, seed=2, epochs=1)
        assert any(not np.array_equal(a.vector(t), b.vector(t)) for t in a.tokens())

    def test_interchangeable_tokens_align(self):
        table = train_word_embeddings(template_corpus(), dim=24, seed=0, epochs=8)
        xy = table.similarity("x", "y")
        rng = np.random.default_rng(11)
        others = [t for t in table.tokens() if t not in ("x", "y")]
        baseline = []
        for _ in range(60):
            a, b = rng.choice(others, size=2, replace=False)
            baseline.append(table.similarity(str(a), str(b)))
        assert xy > float(np.mean(baseline))

    def test_tiny_corpus_rejected(self):
        with pytest.raises(DataError):
            train_word_embeddings([["a", "b", "c"]] * 10, dim=4)

    def test_unknown_token_lookup_returns_none(self):
        table = train_word_embeddings(template_corpus(), dim=4, seed=0, epochs=1)
        assert table.vector("never-seen") is None
        assert table.similarity("x", "never-seen") == 0.0


class TestCosine:
    def test_identical_is_one(self):
        v = np.array([1.0, 2.0, -3.0])
        assert abs(cosine(v, v) - 1.0) < 1e-12

    def test_orthogonal_is_zero(self):
        assert cosine(np.array([1.0, 0.0]), np.array([0.0, 5.0])) == 0.0

    def test_zero_vector_is_zero_not_nan(self):
        assert cosine(np.zeros(3), np.array([1.0, 1.0, 1.0])) == 0.0


class TestFileFormat:
    def test_round_trip(self, tmp_path):
        table = train_word_embeddings(template_corpus(), dim=6, seed=0, epochs=1)
        path = tmp_path / "vectors.txt"
        table.save(path)
        loaded = WordEmbeddings.load(path)
        assert loaded.dim == 6
        assert set(loaded.tokens()) == set(table.tokens())
        for t in table.tokens():
            assert np.allclose(loaded.vector(t), table.vector(t), atol=1e-6)

    def test_header_counts_rows_and_dimension(self, tmp_path):
        path = tmp_path / "v.txt"
        WordEmbeddings({"a": [1.0, 2.0], "b": [3.0, 4.0]}).save(path)
        first = path.read_text().splitlines()[0]
        assert first == "2 2"

    def test_malformed_header_rejected(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("not a header\na 1.0\n")
        with pytest.raises(DataError):
            WordEmbeddings.load(path)

    def test_row_width_mismatch_rejected(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("1 3\na 1.0 2.0\n")
        with pytest.raises(DataError):
            WordEmbeddings.load(path)

    def test_non_numeric_value_rejected(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("1 2\na 1.0 oops\n")
        with pytest.raises(DataError):
            WordEmbeddings.load(path)

    def test_row_count_mismatch_rejected(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("3 2\na 1.0 2.0\nb 3.0 4.0\n")
        with pytest.raises(DataError):
            WordEmbeddings.load(path)

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "empty.txt"
        path.write_text("")
        with pytest.raises(DataError):
            WordEmbeddings.load(path)

    def test_inconsistent_shapes_rejected(self):
        with pytest.raises(DataError):
            WordEmbeddings({"a": [1.0, 2.0], "b": [1.0]})
