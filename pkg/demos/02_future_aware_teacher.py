"""Why a future-conditioned teacher helps.

Trains two models on a synthetic corpus where the correct final
response token is revealed only by a marker in the *future* turns:
a teacher that attends over history and future, and a conventional
model restricted to the history. Only the teacher can solve the task.

Run: python3 demos/02_future_aware_teacher.py   (~20 s)
"""

import numpy as np

from dialdistill.corpus import encode_example, make_batch
from dialdistill.model import ModelConfig
from dialdistill.synthetic import future_marker_corpus, marker_vocabulary
from dialdistill.training import TrainingConfig, forward_batch, train_conventional, train_teacher


def final_token_accuracy(model, examples):
    batch = make_batch(examples, include_future=True)
    with model.params.inference():
        probs = forward_batch(model, batch).probabilities.data
    hits = 0
    for i, ex in enumerate(examples):
        pos = len(ex.response) - 1
        hits += int(np.argmax(probs[i, pos]) == ex.response[pos])
    return hits / len(examples)


def main():
    vocab = marker_vocabulary()
    corpus = future_marker_corpus(320, seed=1000)
    train = [encode_example(e, vocab) for e in corpus[:256]]
    held = [encode_example(e, vocab) for e in corpus[256:]]
    print(f"corpus: {len(train)} train / {len(held)} held-out, vocab {len(vocab)}")

    dims = dict(vocab_size=len(vocab), model_dim=48, num_blocks=1, num_heads=2,
                ffn_dim=96, dropout_rate=0.0)
    tcfg = TrainingConfig(batch_size=16, seed=0, max_steps=1400, val_every=10**9,
                          learning_rate=0.003)

    print("training future-aware teacher ...")
    teacher = train_teacher(train, [], ModelConfig(variant="scenario-based", **dims), tcfg).model

    print("training history-only baseline ...")
    bcfg = TrainingConfig(batch_size=16, seed=0, max_steps=400, val_every=10**9,
                          learning_rate=0.003)
    baseline = train_conventional(train, [], ModelConfig(variant="conventional", **dims), bcfg).model

    acc_t = final_token_accuracy(teacher, held)
    acc_b = final_token_accuracy(baseline, held)
    print(f"held-out final-token accuracy: teacher {acc_t:.1%}, "
          f"history-only {acc_b:.1%} (chance is {1 / 8:.1%})")


if __name__ == "__main__":
    main()
