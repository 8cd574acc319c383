#!/usr/bin/env python3
"""Generate the seeded test fixtures under tests/fixtures.

Synthetic 8x8 images in ten classes: each class has a smooth prototype and
samples are prototype plus pixel noise, clipped to [0, 1]. A 64-10-10-10 ReLU
MLP is trained with full-batch Adam. Outputs:

  model.json        the trained network (verix JSON format, input_bounds [0,1])
  directional.csv   20 held-out inputs the model classifies correctly
  detect.csv        60 correctly and 60 incorrectly classified held-out inputs
  train.csv         the training set, for reference

Rerunning with the same seed reproduces the files byte for byte.
"""

import argparse
import json
from pathlib import Path

import numpy as np

SIDE = 8
CLASSES = 10


def prototypes(rng):
    # low-frequency patterns: sum of a few random 2-D cosines, rescaled to [0.15, 0.85]
    yy, xx = np.mgrid[0:SIDE, 0:SIDE] / (SIDE - 1)
    protos = []
    for _ in range(CLASSES):
        img = np.zeros((SIDE, SIDE))
        for _ in range(3):
            fx, fy = rng.uniform(0.5, 2.0, size=2)
            phase = rng.uniform(0, 2 * np.pi)
            img += np.cos(2 * np.pi * (fx * xx + fy * yy) + phase)
        img = (img - img.min()) / (img.max() - img.min())
        protos.append(0.15 + 0.7 * img)
    return np.stack([p.ravel() for p in protos])


def sample(rng, protos, n, noise):
    labels = rng.integers(0, CLASSES, size=n)
    x = protos[labels] + rng.normal(0.0, noise, size=(n, SIDE * SIDE))
    return np.clip(x, 0.0, 1.0), labels


def init(rng, sizes):
    params = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_out, fan_in))
        params.append([w, np.zeros(fan_out)])
    return params


def forward(params, x):
    acts = [x]
    h = x
    for k, (w, b) in enumerate(params):
        h = h @ w.T + b
        if k < len(params) - 1:
            h = np.maximum(h, 0.0)
        acts.append(h)
    return acts


def train(rng, x, y, sizes, steps, lr):
    params = init(rng, sizes)
    m = [[np.zeros_like(w), np.zeros_like(b)] for w, b in params]
    v = [[np.zeros_like(w), np.zeros_like(b)] for w, b in params]
    onehot = np.eye(CLASSES)[y]
    for t in range(1, steps + 1):
        acts = forward(params, x)
        logits = acts[-1]
        p = np.exp(logits - logits.max(axis=1, keepdims=True))
        p /= p.sum(axis=1, keepdims=True)
        grad = (p - onehot) / len(x)
        for k in range(len(params) - 1, -1, -1):
            w, _ = params[k]
            gw = grad.T @ acts[k]
            gb = grad.sum(axis=0)
            if k > 0:
                grad = (grad @ w) * (acts[k] > 0)
            for slot, g in ((0, gw), (1, gb)):
                m[k][slot] = 0.9 * m[k][slot] + 0.1 * g
                v[k][slot] = 0.999 * v[k][slot] + 0.001 * g * g
                mh = m[k][slot] / (1 - 0.9**t)
                vh = v[k][slot] / (1 - 0.999**t)
                params[k][slot] -= lr * mh / (np.sqrt(vh) + 1e-8)
    return params


def predict(params, x):
    return forward(params, x)[-1].argmax(axis=1)


def to_document(params, name):
    layers = []
    for k, (w, b) in enumerate(params):
        layers.append({"type": "dense", "weights": np.round(w, 6).tolist(), "bias": np.round(b, 6).tolist()})
        if k < len(params) - 1:
            layers.append({"type": "relu"})
    return {
        "name": name,
        "input_dim": SIDE * SIDE,
        "labels": [f"class{c}" for c in range(CLASSES)],
        "input_bounds": [[0.0, 1.0]] * (SIDE * SIDE),
        "layers": layers,
    }


def rounded(params):
    return [[np.round(w, 6), np.round(b, 6)] for w, b in params]


def write_csv(path, x, y):
    with open(path, "w") as f:
        for row, label in zip(x, y):
            f.write(",".join(f"{v:.6f}" for v in row) + f",{int(label)}\n")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path(__file__).resolve().parent.parent / "tests" / "fixtures")
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--noise", type=float, default=0.22)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    protos = prototypes(rng)
    x_train, y_train = sample(rng, protos, 700, args.noise)
    x_test, y_test = sample(rng, protos, 3000, args.noise)
    x_train = np.round(x_train, 6)
    x_test = np.round(x_test, 6)

    model = rounded(train(rng, x_train, y_train, [64, 10, 10, 10], steps=1500, lr=0.01))

    pred = predict(model, x_test)
    correct = np.flatnonzero(pred == y_test)
    wrong = np.flatnonzero(pred != y_test)
    print(f"train acc {np.mean(predict(model, x_train) == y_train):.3f}  "
          f"test acc {np.mean(pred == y_test):.3f}")
    if len(wrong) < 60:
        raise SystemExit(f"only {len(wrong)} misclassified held-out samples; raise --noise")

    directional = correct[:20]
    detect = np.concatenate([correct[20:80], wrong[:60]])

    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "model.json").write_text(json.dumps(to_document(model, "synthetic-8x8-mlp"), indent=1) + "\n")
    write_csv(args.out / "train.csv", x_train, y_train)
    write_csv(args.out / "directional.csv", x_test[directional], y_test[directional])
    write_csv(args.out / "detect.csv", x_test[detect], y_test[detect])


if __name__ == "__main__":
    main()
