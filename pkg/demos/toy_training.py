"""
Training on a toy corpus
========================

A small two-stage model is fit to 16 synthetic motions and compared with
two baselines. One repeats the last observed pose. The other is the
untrained model, which only interpolates between predicted boundary poses.
Takes a few minutes on one core.
"""
import numpy as np

from snipmotion import ModelConfig, SnippetToMotion, TrainConfig, evaluate, fit, synthetic_corpus

corpus = synthetic_corpus(16, 6, 10, 25, noise_std=0.5, seed=7)
stamps = [80, 400, 560, 1000]

const = np.repeat(corpus.past[:, -1:], corpus.horizon, axis=1)
print("constant pose:", evaluate(None, corpus, stamps, predictions=const))

model = SnippetToMotion(ModelConfig(joints=6, history=10, horizon=25, hidden=32))
print("parameters:", model.parameter_count())
print("untrained:", evaluate(model, corpus, stamps))


def progress(epoch, report):
    if epoch % 200 == 0:
        print(f"epoch {epoch:4d}  loss {report.total:8.2f}  mpjpe {report.mpjpe:7.2f}")


fit(model, corpus, TrainConfig(learning_rate=3e-3, decay_every=80, epochs=2000, batch_size=16), on_epoch=progress)
print("trained:", evaluate(model, corpus, stamps))

# the last stage's boundary poses for one sample
out = model.forward(corpus.past[:1])[-1]
print("boundary frames:", out.targets[0])
