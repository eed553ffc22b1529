"""Distilling the future-aware teacher into a history-only student.

Trains the teacher, then two students with identical budgets: one with
the imitation losses on (soft targets + gated hidden-state matching,
lambda1 = 2) and one trained on gold labels alone (lambda1 = 0).
The distilled student ends up measurably closer to the teacher's output
distributions and generalizes better, which is the whole point.

Run: python3 demos/03_distill_student.py   (~60 s)
"""

from dialdistill.analysis import mean_teacher_student_kl
from dialdistill.corpus import encode_example
from dialdistill.metrics import corpus_ppl
from dialdistill.model import ModelConfig
from dialdistill.synthetic import future_marker_corpus, marker_vocabulary
from dialdistill.training import TrainingConfig, train_student, train_teacher


def main():
    vocab = marker_vocabulary()
    corpus = future_marker_corpus(320, seed=1000)
    train = [encode_example(e, vocab) for e in corpus[:256]]
    held = [encode_example(e, vocab) for e in corpus[256:]]

    dims = dict(vocab_size=len(vocab), model_dim=48, num_blocks=1, num_heads=2,
                ffn_dim=96, dropout_rate=0.0)
    conv = ModelConfig(variant="conventional", **dims)

    print("training teacher ...")
    tcfg = TrainingConfig(batch_size=16, seed=0, max_steps=1400, val_every=10**9,
                          learning_rate=0.003)
    teacher = train_teacher(train, [], ModelConfig(variant="scenario-based", **dims), tcfg).model

    results = {}
    for lam in (2.0, 0.0):
        print(f"training student with lambda1 = {lam:g} ...")
        scfg = TrainingConfig(batch_size=16, seed=0, max_steps=1000, val_every=10**9,
                              learning_rate=0.003, lambda1=lam)
        student = train_student(train, [], teacher, conv, scfg).model
        results[lam] = {
            "kl": mean_teacher_student_kl(teacher, student, held),
            "ppl": corpus_ppl(student, held).value,
        }

    print()
    print(f"{'':>14}  {'KL(teacher||student)':>22}  {'held-out ppl':>12}")
    for lam, r in results.items():
        label = "distilled" if lam > 0 else "labels only"
        print(f"{label:>14}  {r['kl']:>22.4f}  {r['ppl']:>12.3f}")
    drop = 1 - results[2.0]["kl"] / results[0.0]["kl"]
    print(f"\ndistillation cuts the gap to the teacher by {drop:.0%}")


if __name__ == "__main__":
    main()
