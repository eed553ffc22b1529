"""Trainers for the teacher, the student, the plain baseline, and the
language-model teacher.

All four share one loop: deterministically shuffled mini-batches, the
combined loss from :mod:`dialdistill.losses`, global gradient clipping,
Adam, per-step loss logging, and periodic validation with
best-checkpoint tracking. Randomness is namespaced off a single seed —
parameter init uses the seed itself, epoch shuffles use (seed, 7,
epoch), and per-step dropout uses (seed, 11, step) — so a student run
with ``lambda1 == 0`` consumes exactly the same random draws as a plain
baseline run and reproduces it step for step.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .corpus import batchify
from .errors import ContractError, DataError
from .losses import nll_sum, total_loss
from .model import ModelConfig, ParameterSet, TransformerModel
from .optim import Adam

TRANSFER_SCOPES = ("none", "word-emb", "encoder")
WORD_EMB_TENSORS = ("encoder_embedding", "decoder_embedding")


@dataclass
class TrainingConfig:
    learning_rate: float = 0.001
    grad_clip_norm: float = 2.0
    batch_size: int = 128
    alpha: float = 0.01
    lambda1: float = 2.0
    lambda_lm: float = 0.5
    epochs: int = 1
    max_steps: int = None  # when set, cycles epochs until this many steps ran
    seed: int = 0
    hard_transfer_scope: str = "none"
    val_every: int = 100
    log_every: int = 1

    def __post_init__(self):
        if self.alpha < 0:
            raise ContractError(f"alpha must be >= 0, got {self.alpha}")
        if self.lambda1 < 0:
            raise ContractError(f"lambda1 must be >= 0, got {self.lambda1}")
        if self.hard_transfer_scope not in TRANSFER_SCOPES:
            raise ContractError(
                f"hard_transfer_scope {self.hard_transfer_scope!r} not in {TRANSFER_SCOPES}"
            )
        if self.batch_size < 1 or self.val_every < 1 or self.log_every < 1:
            raise ContractError("batch_size, val_every, and log_every must be >= 1")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingConfig":
        return cls(**d)


@dataclass
class TrainResult:
    model: TransformerModel
    log: list = field(default_factory=list)
    best_val_loss: float = None
    best_state: dict = None  # parameter arrays at the best validation point
    steps: int = 0

    def write_log(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for rec in self.log:
                fh.write(json.dumps(rec) + "\n")


def _empty_history(batch_rows: int) -> np.ndarray:
    return np.zeros((batch_rows, 0), dtype=np.int64)


def forward_batch(model: TransformerModel, batch, train: bool = False, rng=None):
    """Run the variant-appropriate teacher-forced pass over one batch."""
    v = model.config.variant
    if v == "scenario-based":
        if batch.future is None:
            raise ContractError("scenario-based forward needs batches with futures")
        return model.forward(
            batch.history, batch.response_in, future=batch.future, train=train, rng=rng
        )
    if v == "language-model":
        return model.forward(_empty_history(batch.size), batch.response_in, train=train, rng=rng)
    return model.forward(batch.history, batch.response_in, train=train, rng=rng)


def validation_nll(model: TransformerModel, val_batches) -> float:
    """Per-token NLL over a batch list, dropout off, no graph retained."""
    total = 0.0
    count = 0.0
    with model.params.inference():
        for batch in val_batches:
            out = forward_batch(model, batch)
            total += float(nll_sum(out.probabilities, batch.response_target, batch.target_mask).data)
            count += batch.token_count
    return total / count if count else 0.0


def _snapshot(params: ParameterSet) -> dict:
    return {n: t.data.copy() for n, t in params.items()}


def _train_loop(
    model: TransformerModel,
    train_examples: list,
    val_examples: list,
    tcfg: TrainingConfig,
    batch_loss,
    include_future: bool,
    log_path=None,
) -> TrainResult:
    """Shared mini-batch loop. ``batch_loss(model, batch, rng)`` returns
    (scalar loss node, LossBreakdown)."""
    if not train_examples:
        raise DataError("training example list is empty")
    opt = Adam(
        model.params.update_targets(),
        learning_rate=tcfg.learning_rate,
        clip_norm=tcfg.grad_clip_norm,
    )
    val_batches = (
        batchify(val_examples, tcfg.batch_size, seed=None, include_future=include_future)
        if val_examples
        else []
    )
    result = TrainResult(model=model)
    best_val = None
    step = 0
    done = False
    epoch = 0
    while not done:
        for batch in batchify(
            train_examples, tcfg.batch_size, seed=[tcfg.seed, 7, epoch], include_future=include_future
        ):
            step += 1
            rng = np.random.default_rng([tcfg.seed, 11, step])
            loss, breakdown = batch_loss(model, batch, rng)
            model.params.zero_grads()
            T.backward(loss)
            opt.step()

            record = None
            if step % tcfg.log_every == 0:
                record = breakdown.as_log_record(step)
            if val_batches and step % tcfg.val_every == 0:
                val = validation_nll(model, val_batches)
                if record is None:
                    record = breakdown.as_log_record(step)
                record["val_loss"] = val
                if best_val is None or val < best_val:
                    best_val = val
                    result.best_state = _snapshot(model.params)
            if record is not None:
                result.log.append(record)

            if tcfg.max_steps is not None and step >= tcfg.max_steps:
                done = True
                break
        epoch += 1
        if tcfg.max_steps is None and epoch >= tcfg.epochs:
            done = True
    result.steps = step
    result.best_val_loss = best_val
    if log_path is not None:
        result.write_log(log_path)
    return result


# --------------------------------------------------------------------------
# Specific trainers
# --------------------------------------------------------------------------


def train_teacher(
    train_examples, val_examples, config: ModelConfig, tcfg: TrainingConfig, log_path=None
) -> TrainResult:
    """Fit the scenario-based model on (history, future) -> response NLL."""
    if config.variant != "scenario-based":
        raise ContractError(f"teacher training requires the scenario-based variant, got {config.variant!r}")
    model = TransformerModel.build(config, tcfg.seed)

    def batch_loss(m, batch, rng):
        out = forward_batch(m, batch, train=True, rng=rng)
        return total_loss(
            out.probabilities, out.hidden_states, batch.response_target, batch.target_mask,
            lambda1=0.0,
        )

    return _train_loop(model, train_examples, val_examples, tcfg, batch_loss, True, log_path)


def train_conventional(
    train_examples, val_examples, config: ModelConfig, tcfg: TrainingConfig, log_path=None
) -> TrainResult:
    """Plain history-only NLL baseline (also the lambda1=0 reference)."""
    if config.variant != "conventional":
        raise ContractError(f"baseline training requires the conventional variant, got {config.variant!r}")
    model = TransformerModel.build(config, tcfg.seed)

    def batch_loss(m, batch, rng):
        out = forward_batch(m, batch, train=True, rng=rng)
        return total_loss(
            out.probabilities, out.hidden_states, batch.response_target, batch.target_mask,
            lambda1=0.0,
        )

    return _train_loop(model, train_examples, val_examples, tcfg, batch_loss, False, log_path)


def train_lm_teacher(
    train_examples, val_examples, config: ModelConfig, tcfg: TrainingConfig, log_path=None
) -> TrainResult:
    """Next-token language model over response sequences alone."""
    if config.variant != "language-model":
        raise ContractError(f"LM training requires the language-model variant, got {config.variant!r}")
    model = TransformerModel.build(config, tcfg.seed)

    def batch_loss(m, batch, rng):
        out = forward_batch(m, batch, train=True, rng=rng)
        return total_loss(
            out.probabilities, out.hidden_states, batch.response_target, batch.target_mask,
            lambda1=0.0,
        )

    return _train_loop(model, train_examples, val_examples, tcfg, batch_loss, False, log_path)


def _configs_compatible(a: ModelConfig, b: ModelConfig) -> bool:
    da, db = a.to_dict(), b.to_dict()
    da.pop("variant")
    db.pop("variant")
    return da == db


def hard_transfer_init(
    student_params: ParameterSet, teacher_params: ParameterSet, scope: str
) -> list:
    """Copy teacher tensors into the student per ``scope`` and freeze them.

    ``word-emb`` copies both embedding tables; ``encoder`` additionally
    copies the whole encoder stack. Returns the frozen names.
    """
    if scope not in TRANSFER_SCOPES:
        raise ContractError(f"unknown hard-transfer scope {scope!r}")
    if scope == "none":
        return []
    names = list(WORD_EMB_TENSORS)
    if scope == "encoder":
        names += [n for n in student_params.names() if n.startswith("enc.")]
    for n in names:
        if n not in student_params or n not in teacher_params:
            raise ContractError(f"hard transfer: tensor {n!r} missing (configs must match)")
        src = teacher_params[n].data
        dst = student_params[n]
        if src.shape != dst.data.shape:
            raise ContractError(
                f"hard transfer: {n!r} shape {src.shape} != student {dst.data.shape}"
            )
        dst.data = src.astype(dst.data.dtype).copy()
    student_params.freeze(names)
    return names


def train_student(
    train_examples,
    val_examples,
    teacher: TransformerModel,
    config: ModelConfig,
    tcfg: TrainingConfig,
    lm_teacher: TransformerModel = None,
    log_path=None,
) -> TrainResult:
    """Distill the teacher into a history-only student.

    Per batch: the teacher runs forward-only on (history, future) to
    produce target distributions and hidden states; the student runs on
    the history alone; the combined loss imitates both. The teacher (and
    LM teacher) parameters are never touched. When ``lambda1 == 0`` the
    teacher is not even consulted and the run reduces to the baseline.
    """
    if config.variant != "conventional":
        raise ContractError(f"students use the conventional variant, got {config.variant!r}")
    if teacher is not None and teacher.config.variant != "scenario-based":
        raise ContractError("the teacher checkpoint must be the scenario-based variant")
    if teacher is not None and not _configs_compatible(teacher.config, config):
        raise ContractError(
            "teacher and student ModelConfigs must match apart from the variant"
        )
    if tcfg.lambda1 > 0.0 and teacher is None:
        raise ContractError("lambda1 > 0 requires a teacher")
    if lm_teacher is not None and lm_teacher.config.variant != "language-model":
        raise ContractError("lm_teacher must be the language-model variant")

    model = TransformerModel.build(config, tcfg.seed)
    if tcfg.hard_transfer_scope != "none":
        if teacher is None:
            raise ContractError("hard transfer requires a teacher")
        hard_transfer_init(model.params, teacher.params, tcfg.hard_transfer_scope)

    use_teacher = tcfg.lambda1 > 0.0
    use_lm = lm_teacher is not None and tcfg.lambda_lm > 0.0

    def batch_loss(m, batch, rng):
        teacher_probs = teacher_hiddens = lm_probs = None
        if use_teacher:
            with teacher.params.inference():
                t_out = forward_batch(teacher, batch)
            teacher_probs = t_out.probabilities.data
            teacher_hiddens = [h.data for h in t_out.hidden_states]
        if use_lm:
            with lm_teacher.params.inference():
                lm_out = lm_teacher.forward(_empty_history(batch.size), batch.response_in)
            lm_probs = lm_out.probabilities.data
        out = forward_batch(m, batch, train=True, rng=rng)
        return total_loss(
            out.probabilities,
            out.hidden_states,
            batch.response_target,
            batch.target_mask,
            teacher_probs=teacher_probs,
            teacher_hiddens=teacher_hiddens,
            lambda1=tcfg.lambda1,
            alpha=tcfg.alpha,
            lm_probs=lm_probs,
            lambda_lm=tcfg.lambda_lm,
        )

    return _train_loop(model, train_examples, val_examples, tcfg, batch_loss, True, log_path)
