"""Post-training analyses: parameter-noise robustness curves and the
teacher/student agreement measure used to judge distillation quality.
"""

from __future__ import annotations

import json

import numpy as np

from .corpus import batchify
from .errors import ContractError
from .metrics import corpus_ppl
from .training import forward_batch

_LOG_FLOOR = 1e-12


def perturbation_analysis(
    model,
    examples,
    sigmas,
    samples_per_sigma: int = 5,
    seed: int = 0,
    batch_size: int = 32,
) -> list:
    """Perplexity under element-wise Gaussian parameter noise.

    For each sigma, draws ``samples_per_sigma`` independent
    perturbations of every trainable tensor, scores the corpus, and
    restores the original parameters bitwise. Sigma 0 is evaluated once
    without touching the parameters, so it reproduces the base
    perplexity exactly. Returns one record per sigma:
    {"sigma", "mean_ppl", "std_ppl"}.
    """
    sigmas = [float(s) for s in sigmas]
    if not sigmas:
        raise ContractError("need at least one sigma")
    if sigmas[0] != 0.0:
        raise ContractError(f"sigma grid must start at 0, got {sigmas[0]}")
    if any(b < a for a, b in zip(sigmas, sigmas[1:])):
        raise ContractError(f"sigmas must be sorted ascending, got {sigmas}")
    if samples_per_sigma < 1:
        raise ContractError(f"samples_per_sigma must be >= 1, got {samples_per_sigma}")

    trainable = [(name, t) for name, t in model.params.items() if model.params.is_trainable(name)]
    originals = {name: t.data for name, t in trainable}
    records = []
    try:
        for i, sigma in enumerate(sigmas):
            if sigma == 0.0:
                base = corpus_ppl(model, examples, batch_size).value
                records.append({"sigma": 0.0, "mean_ppl": base, "std_ppl": 0.0})
                continue
            ppls = []
            for sample in range(samples_per_sigma):
                rng = np.random.default_rng([seed, 13, i, sample])
                for name, tensor in trainable:
                    noise = rng.normal(0.0, sigma, size=tensor.data.shape)
                    tensor.data = (originals[name] + noise).astype(originals[name].dtype)
                ppls.append(corpus_ppl(model, examples, batch_size).value)
            records.append(
                {
                    "sigma": sigma,
                    "mean_ppl": float(np.mean(ppls)),
                    "std_ppl": float(np.std(ppls)),
                }
            )
    finally:
        for name, tensor in trainable:
            tensor.data = originals[name]
    return records


def write_perturbation_series(records: list, path) -> None:
    """One JSON object per line: sigma, mean_ppl, std_ppl."""
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def read_perturbation_series(path) -> list:
    with open(path, "r", encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def mean_teacher_student_kl(teacher, student, examples, batch_size: int = 32) -> float:
    """Mean per-position KL (nats) from the student's next-token
    distribution to the teacher's, teacher-forced on gold targets.

    The teacher sees whatever its variant demands (futures included);
    the student scores the same prefixes from history alone. Masked
    padding positions are excluded.
    """
    total = 0.0
    count = 0.0
    with teacher.params.inference(), student.params.inference():
        for batch in batchify(examples, batch_size, seed=None, include_future=True):
            q = forward_batch(teacher, batch).probabilities.data
            p = forward_batch(student, batch).probabilities.data
            log_ratio = np.log(np.maximum(q, _LOG_FLOOR)) - np.log(np.maximum(p, _LOG_FLOOR))
            per_position = (q * log_ratio).sum(axis=-1)
            mask = np.asarray(batch.target_mask, dtype=np.float64)
            total += float((per_position * mask).sum())
            count += float(mask.sum())
    if count == 0:
        raise ContractError("no unmasked positions to compare")
    return total / count
