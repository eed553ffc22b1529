"""Word embeddings: a small skip-gram-with-negative-sampling trainer
plus the text file format shared with externally trained tables.

The trainer exists so the embedding-based metrics and clustering have a
self-contained vector source; any table in the same text format
(first line ``<count> <dim>``, then ``token v1 ... vd`` per line) can be
imported instead.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError

MIN_CORPUS_TOKENS = 100


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity, with zero vectors mapped to 0 rather than NaN."""
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


class WordEmbeddings:
    """Token -> vector table of a single dimension."""

    def __init__(self, vectors: dict):
        if not vectors:
            raise DataError("embedding table is empty")
        dims = {np.asarray(v).shape for v in vectors.values()}
        if len(dims) != 1 or len(next(iter(dims))) != 1:
            raise DataError(f"inconsistent embedding shapes: {sorted(dims)}")
        self._vectors = {t: np.asarray(v, dtype=np.float64) for t, v in vectors.items()}
        self.dim = next(iter(dims))[0]

    def __contains__(self, token: str) -> bool:
        return token in self._vectors

    def __len__(self) -> int:
        return len(self._vectors)

    def tokens(self):
        return list(self._vectors)

    def vector(self, token: str):
        """The token's vector, or None when the token is unknown."""
        return self._vectors.get(token)

    def similarity(self, a: str, b: str) -> float:
        va, vb = self._vectors.get(a), self._vectors.get(b)
        if va is None or vb is None:
            return 0.0
        return cosine(va, vb)

    def save(self, path) -> None:
        lines = [f"{len(self._vectors)} {self.dim}"]
        for token, vec in self._vectors.items():
            if not token or any(ch.isspace() for ch in token):
                raise DataError(f"token {token!r} cannot be written to a space-separated file")
            lines.append(token + " " + " ".join(f"{x:.8g}" for x in vec))
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "WordEmbeddings":
        with open(path, "r", encoding="utf-8") as fh:
            raw = [line.rstrip("\n") for line in fh if line.strip()]
        if not raw:
            raise DataError(f"{path}: empty embedding file")
        head = raw[0].split()
        if len(head) != 2:
            raise DataError(f"{path}: header must be '<count> <dim>', got {raw[0]!r}")
        try:
            count, dim = int(head[0]), int(head[1])
        except ValueError as exc:
            raise DataError(f"{path}: non-integer header {raw[0]!r}") from exc
        if len(raw) - 1 != count:
            raise DataError(f"{path}: header promises {count} rows, file has {len(raw) - 1}")
        vectors = {}
        for line in raw[1:]:
            parts = line.split()
            if len(parts) != dim + 1:
                raise DataError(f"{path}: row {parts[0]!r} has {len(parts) - 1} values, expected {dim}")
            try:
                vectors[parts[0]] = np.array([float(x) for x in parts[1:]])
            except ValueError as exc:
                raise DataError(f"{path}: non-numeric value in row {parts[0]!r}") from exc
        return cls(vectors)


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + np.exp(-x))
    e = np.exp(x)
    return e / (1.0 + e)


def train_word_embeddings(
    corpus,
    dim: int = 32,
    seed: int = 0,
    window: int = 2,
    negatives: int = 5,
    epochs: int = 5,
    learning_rate: float = 0.025,
) -> WordEmbeddings:
    """Skip-gram with negative sampling over a tokenized corpus.

    ``corpus`` is an iterable of token lists (one per sentence/turn).
    Noise words are drawn from the unigram distribution raised to 3/4.
    Deterministic for a given seed.
    """
    sentences = [list(s) for s in corpus if s]
    tokens = [t for s in sentences for t in s]
    if len(tokens) < MIN_CORPUS_TOKENS:
        raise DataError(
            f"embedding corpus has {len(tokens)} tokens; need at least {MIN_CORPUS_TOKENS}"
        )
    if dim < 1:
        raise DataError(f"embedding dimension must be positive, got {dim}")

    vocab = sorted(set(tokens))
    index = {t: i for i, t in enumerate(vocab)}
    counts = np.zeros(len(vocab))
    for t in tokens:
        counts[index[t]] += 1
    noise = counts ** 0.75
    noise /= noise.sum()

    rng = np.random.default_rng(seed)
    vocab_size = len(vocab)
    w_in = (rng.random((vocab_size, dim)) - 0.5) / dim
    w_out = np.zeros((vocab_size, dim))

    encoded = [[index[t] for t in s] for s in sentences]
    for _ in range(epochs):
        for sentence in encoded:
            for pos, center in enumerate(sentence):
                lo = max(0, pos - window)
                hi = min(len(sentence), pos + window + 1)
                for ctx_pos in range(lo, hi):
                    if ctx_pos == pos:
                        continue
                    context = sentence[ctx_pos]
                    grad_center = np.zeros(dim)
                    targets = [(context, 1.0)]
                    for noise_id in rng.choice(vocab_size, size=negatives, p=noise):
                        if noise_id != context:
                            targets.append((int(noise_id), 0.0))
                    for target, label in targets:
                        p = _sigmoid(float(np.dot(w_in[center], w_out[target])))
                        g = learning_rate * (label - p)
                        grad_center += g * w_out[target]
                        w_out[target] += g * w_in[center]
                    w_in[center] += grad_center

    return WordEmbeddings({t: w_in[index[t]] for t in vocab})
