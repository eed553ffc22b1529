"""Corpus preparation: tokenization, windowing, filtering, vocabulary,
and deterministic batching.

Two input formats are supported:

* format A — one dialogue per line, turns separated by the literal
  delimiter ``__eou__``;
* format B — one JSON object per line with a ``"turns"`` field holding
  an array of strings.

A dialogue becomes training material by sliding a window of
``h + r + f`` consecutive turns over it (stride 1 by default): the first
``h`` turns are the history, the next turn the response, the last ``f``
turns the future conversation. Length filtering then keeps examples
whose response is 5–25 tokens and whose concatenated history and future
are 25–80 tokens each (inclusive, configurable).
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import DataError

PAD_ID = 0
UNK_ID = 1
BOS_ID = 2
EOS_ID = 3
RESERVED = ("<pad>", "<unk>", "<bos>", "<eos>")

TURN_DELIMITER = "__eou__"

_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)


def tokenize(text: str) -> list:
    """Lowercase and split into word and single-punctuation tokens.

    Idempotent on its own space-joined output.
    """
    return _TOKEN_RE.findall(text.lower())


# --------------------------------------------------------------------------
# Reading dialogues
# --------------------------------------------------------------------------


def read_dialogues_format_a(path) -> list:
    """One dialogue per line; turns separated by ``__eou__``."""
    dialogues = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            turns = [t.strip() for t in line.split(TURN_DELIMITER)]
            turns = [t for t in turns if t]
            if turns:
                dialogues.append(turns)
    return dialogues


def read_dialogues_format_b(path) -> list:
    """JSON-lines records with a "turns" array of strings."""
    dialogues = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON record: {exc}") from exc
            if not isinstance(record, dict) or "turns" not in record:
                raise DataError(f"{path}:{lineno}: record lacks a 'turns' field")
            turns = record["turns"]
            if not isinstance(turns, list) or not all(isinstance(t, str) for t in turns):
                raise DataError(f"{path}:{lineno}: 'turns' must be an array of strings")
            turns = [t.strip() for t in turns if t.strip()]
            if turns:
                dialogues.append(turns)
    return dialogues


def read_dialogues(path, fmt: str = "auto") -> list:
    """Load dialogues as lists of raw turn strings; fmt in {a, b, auto}."""
    if fmt == "a":
        return read_dialogues_format_a(path)
    if fmt == "b":
        return read_dialogues_format_b(path)
    if fmt != "auto":
        raise DataError(f"unknown corpus format {fmt!r}; expected 'a', 'b', or 'auto'")
    with open(path, encoding="utf-8") as fh:
        first = ""
        for line in fh:
            if line.strip():
                first = line.strip()
                break
    return read_dialogues_format_b(path) if first.startswith("{") else read_dialogues_format_a(path)


# --------------------------------------------------------------------------
# Windowing and filtering
# --------------------------------------------------------------------------


@dataclass
class DialogueExample:
    """One (history, response, future) window of tokenized turns."""

    history: list  # list of turns, each a list of tokens
    response: list  # one turn: list of tokens
    future: list  # list of turns
    dialogue_index: int = 0
    window_offset: int = 0

    @property
    def history_tokens(self) -> list:
        return [tok for turn in self.history for tok in turn]

    @property
    def future_tokens(self) -> list:
        return [tok for turn in self.future for tok in turn]


def window_dialogue(
    turns: list, h: int = 3, r: int = 1, f: int = 3, stride: int = 1, dialogue_index: int = 0
) -> list:
    """Slide an (h + r + f)-turn window over one tokenized dialogue."""
    if min(h, r, f) < 1:
        raise DataError(f"window counts must be >= 1, got ({h}, {r}, {f})")
    if stride < 1:
        raise DataError(f"stride must be >= 1, got {stride}")
    width = h + r + f
    out = []
    for start in range(0, len(turns) - width + 1, stride):
        chunk = turns[start : start + width]
        out.append(
            DialogueExample(
                history=chunk[:h],
                response=chunk[h],
                future=chunk[h + r :],
                dialogue_index=dialogue_index,
                window_offset=start,
            )
        )
    return out


def window_dialogues(dialogues: list, h: int = 3, r: int = 1, f: int = 3, stride: int = 1) -> list:
    """Window every dialogue; ordering is (dialogue index, window offset)."""
    out = []
    for idx, turns in enumerate(dialogues):
        out.extend(window_dialogue(turns, h, r, f, stride, dialogue_index=idx))
    return out


@dataclass(frozen=True)
class LengthBounds:
    response_min: int = 5
    response_max: int = 25
    context_min: int = 25
    context_max: int = 80


def length_filter(examples: list, bounds: LengthBounds = LengthBounds()) -> list:
    """Keep exactly the examples satisfying all three inclusive bounds."""
    kept = []
    for ex in examples:
        if not bounds.response_min <= len(ex.response) <= bounds.response_max:
            continue
        if not bounds.context_min <= len(ex.history_tokens) <= bounds.context_max:
            continue
        if not bounds.context_min <= len(ex.future_tokens) <= bounds.context_max:
            continue
        kept.append(ex)
    return kept


# --------------------------------------------------------------------------
# Vocabulary
# --------------------------------------------------------------------------


class Vocabulary:
    """token <-> id maps with four reserved ids (pad, unk, bos, eos)."""

    def __init__(self, tokens: list):
        self._id_to_token = list(RESERVED) + list(tokens)
        self._token_to_id = {t: i for i, t in enumerate(self._id_to_token)}
        if len(self._token_to_id) != len(self._id_to_token):
            raise DataError("vocabulary contains duplicate tokens")

    def __len__(self):
        return len(self._id_to_token)

    def id_of(self, token: str) -> int:
        return self._token_to_id.get(token, UNK_ID)

    def token_of(self, idx: int) -> str:
        return self._id_to_token[idx]

    def __contains__(self, token: str) -> bool:
        return token in self._token_to_id

    def encode(self, tokens: list) -> list:
        return [self._token_to_id.get(t, UNK_ID) for t in tokens]

    def decode(self, ids, stop_at_eos: bool = True) -> list:
        out = []
        for i in ids:
            i = int(i)
            if stop_at_eos and i == EOS_ID:
                break
            if i in (PAD_ID, BOS_ID):
                continue
            out.append(self._id_to_token[i])
        return out

    def content_tokens(self) -> list:
        return self._id_to_token[len(RESERVED):]

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for tok in self.content_tokens():
                fh.write(tok + "\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path, encoding="utf-8") as fh:
            tokens = [line.rstrip("\n") for line in fh if line.rstrip("\n")]
        return cls(tokens)


def build_vocabulary(token_sequences, max_size: int) -> Vocabulary:
    """Most frequent tokens up to ``max_size - 4``; ties break lexicographically."""
    if max_size < len(RESERVED):
        raise DataError(f"max_size must be >= {len(RESERVED)}, got {max_size}")
    counts = Counter()
    for seq in token_sequences:
        counts.update(seq)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    keep = [tok for tok, _ in ranked[: max_size - len(RESERVED)]]
    return Vocabulary(keep)


def corpus_token_stream(examples: list):
    """All token sequences of the examples (history turns, response, future turns)."""
    for ex in examples:
        for turn in ex.history:
            yield turn
        yield ex.response
        for turn in ex.future:
            yield turn


# --------------------------------------------------------------------------
# Encoding and batching
# --------------------------------------------------------------------------


@dataclass
class EncodedExample:
    history: list  # flat id list
    response: list  # id list, no bos/eos
    future: list  # flat id list


def encode_example(ex: DialogueExample, vocab: Vocabulary) -> EncodedExample:
    return EncodedExample(
        history=vocab.encode(ex.history_tokens),
        response=vocab.encode(ex.response),
        future=vocab.encode(ex.future_tokens),
    )


@dataclass
class Batch:
    """Padded id matrices plus masks for one optimizer step.

    ``response_in`` starts with the begin-of-sequence id;
    ``response_target`` ends each row with end-of-sequence. The float
    ``target_mask`` is 1 on real target positions (end-of-sequence
    included) and 0 on padding.
    """

    history: np.ndarray  # (B, Th) int
    response_in: np.ndarray  # (B, Tr) int
    response_target: np.ndarray  # (B, Tr) int
    target_mask: np.ndarray  # (B, Tr) float
    history_lengths: np.ndarray  # (B,)
    response_lengths: np.ndarray  # (B,) includes the eos position
    future: np.ndarray = None  # (B, Tf) int, scenario training only
    future_lengths: np.ndarray = None

    @property
    def size(self) -> int:
        return self.history.shape[0]

    @property
    def token_count(self) -> float:
        return float(self.target_mask.sum())


def _pad_rows(rows: list, pad: int = PAD_ID) -> np.ndarray:
    width = max(len(r) for r in rows)
    out = np.full((len(rows), width), pad, dtype=np.int64)
    for i, r in enumerate(rows):
        out[i, : len(r)] = r
    return out


def make_batch(examples: list, include_future: bool = True) -> Batch:
    """Pad a list of EncodedExamples to a single Batch."""
    if not examples:
        raise DataError("cannot build a batch from zero examples")
    hist = _pad_rows([e.history for e in examples])
    resp_in = _pad_rows([[BOS_ID] + e.response for e in examples])
    resp_tgt = _pad_rows([e.response + [EOS_ID] for e in examples])
    lengths = np.array([len(e.response) + 1 for e in examples], dtype=np.int64)
    mask = (np.arange(resp_tgt.shape[1])[None, :] < lengths[:, None]).astype(T.active_dtype())
    batch = Batch(
        history=hist,
        response_in=resp_in,
        response_target=resp_tgt,
        target_mask=mask,
        history_lengths=np.array([len(e.history) for e in examples], dtype=np.int64),
        response_lengths=lengths,
    )
    if include_future:
        batch.future = _pad_rows([e.future for e in examples])
        batch.future_lengths = np.array([len(e.future) for e in examples], dtype=np.int64)
    return batch


def batchify(
    examples: list, batch_size: int, seed=None, include_future: bool = True
) -> list:
    """Deterministically shuffled batches (unshuffled when seed is None).

    The final short batch is kept, so every example appears exactly once.
    """
    if batch_size < 1:
        raise DataError(f"batch_size must be >= 1, got {batch_size}")
    order = np.arange(len(examples))
    if seed is not None:
        order = np.random.default_rng(seed).permutation(len(examples))
    out = []
    for start in range(0, len(examples), batch_size):
        chunk = [examples[i] for i in order[start : start + batch_size]]
        out.append(make_batch(chunk, include_future=include_future))
    return out


def split_examples(examples: list, val_fraction: float, test_fraction: float, seed: int):
    """Deterministic train/validation/test split by shuffled index."""
    if val_fraction < 0 or test_fraction < 0 or val_fraction + test_fraction >= 1.0:
        raise DataError("split fractions must be non-negative and sum to < 1")
    order = np.random.default_rng(seed).permutation(len(examples))
    n_val = int(round(len(examples) * val_fraction))
    n_test = int(round(len(examples) * test_fraction))
    val_idx = order[:n_val]
    test_idx = order[n_val : n_val + n_test]
    train_idx = order[n_val + n_test :]
    pick = lambda idx: [examples[i] for i in sorted(idx)]
    return pick(train_idx), pick(val_idx), pick(test_idx)
