"""Regenerate the bundled toy dataset and Swish classifier.

Run once; the outputs under src/tytan/data are versioned and every test
reads the frozen files, never this script.

    python tools/build_toy_model.py
"""
import argparse
from pathlib import Path

import numpy as np

from tytan.activations import ActivationKind, ActivationSpec
from tytan.nn import ApproxModel, Dataset, build_model

DATA_DIR = Path(__file__).resolve().parents[1] / "src" / "tytan" / "data"


def two_moons(n: int, noise: float, rng: np.random.Generator) -> Dataset:
    half = n // 2
    t = rng.uniform(0.0, np.pi, size=n)
    upper = np.column_stack([np.cos(t[:half]), np.sin(t[:half])])
    lower = np.column_stack([1.0 - np.cos(t[half:]), 0.5 - np.sin(t[half:])])
    x = np.vstack([upper, lower]) + rng.normal(0.0, noise, size=(n, 2))
    x = (x - np.array([0.5, 0.25])) * 1.5
    y = np.concatenate([np.zeros(half, dtype=int), np.ones(n - half, dtype=int)])
    order = rng.permutation(n)
    return Dataset(np.round(x[order], 6), y[order])


def swish(z):
    s = 1.0 / (1.0 + np.exp(-z))
    return z * s, s + z * s * (1.0 - s)


def train(model, data, steps, lr, l2, rng):
    params = [p for layer in model.layers for p in (layer.weights, layer.bias)]
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    onehot = np.eye(model.num_classes)[data.labels]
    for step in range(1, steps + 1):
        hs, ds = [data.inputs], []
        for i, layer in enumerate(model.layers):
            z = hs[-1] @ layer.weights + layer.bias
            if layer.activation is None:
                hs.append(z)
                ds.append(np.ones_like(z))
            else:
                h, d = swish(z)
                hs.append(h)
                ds.append(d)
        logits = hs[-1]
        p = np.exp(logits - logits.max(axis=1, keepdims=True))
        p /= p.sum(axis=1, keepdims=True)
        delta = (p - onehot) / len(data)
        grads = []
        for i in reversed(range(len(model.layers))):
            layer = model.layers[i]
            delta = delta * ds[i]
            grads.append(layer.bias * 0 + delta.sum(axis=0))
            grads.append(hs[i].T @ delta + l2 * layer.weights)
            delta = delta @ layer.weights.T
        grads = grads[::-1]
        for j, (prm, g) in enumerate(zip(params, grads)):
            m[j] = 0.9 * m[j] + 0.1 * g
            v[j] = 0.999 * v[j] + 0.001 * g * g
            mh = m[j] / (1 - 0.9**step)
            vh = v[j] / (1 - 0.999**step)
            prm -= lr * mh / (np.sqrt(vh) + 1e-8)
    return model


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--steps", type=int, default=3000)
    ap.add_argument("--noise", type=float, default=0.25)
    ap.add_argument("--lr", type=float, default=0.01)
    ap.add_argument("--l2", type=float, default=3e-3)
    ap.add_argument("--dry-run", action="store_true")
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    data = two_moons(400, args.noise, rng)
    model = build_model([2, 16, 16, 16, 2], ActivationSpec(ActivationKind.SWISH), rng)
    train(model, data, args.steps, args.lr, args.l2, rng)
    for layer in model.layers:
        # 8 decimals keeps the JSON small; values are exact once written
        layer.weights = np.round(layer.weights, 8)
        layer.bias = np.round(layer.bias, 8)
    print(f"train accuracy {ApproxModel(model).accuracy(data)}")
    if not args.dry_run:
        model.save(DATA_DIR / "toy_model.json")
        (DATA_DIR / "toy_data.csv").write_text(data.to_csv())
    return model, data


if __name__ == "__main__":
    main()
