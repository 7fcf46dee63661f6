#!/usr/bin/env python3
"""Benchmark the compiled kernel backend against the numpy fallback.

Times the two hot kernels (same-padded conv1d and fused layer norm,
forward + backward) on toy- and full-scale shapes, then optionally a
whole training step via VOXADAPT_PURE (see --help).

Run:  python3 benchmarks/bench_kernels.py [--repeats N] [--train-steps N]
"""

import argparse
import os
import time

import numpy as np

from voxadapt.kernels import available_backends, get_backend

CONV_SHAPES = [
    # (label, L, c_in, c_out, k, stride)
    ("ffn conv, toy", 60, 32, 64, 9, 1),
    ("ffn conv, full", 400, 256, 1024, 9, 1),
    ("utterance enc", 120, 80, 256, 5, 3),
    ("variance head", 14, 32, 32, 3, 1),
]

LN_SHAPES = [
    ("ln, toy frames", 60, 32),
    ("ln, full frames", 400, 256),
    ("ln, phonemes", 14, 32),
]


def best_of(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def bench_conv(backend, length, c_in, c_out, k, stride, repeats):
    rng = np.random.default_rng(0)
    x = rng.normal(size=(length, c_in)).astype(np.float32)
    w = rng.normal(size=(c_out, c_in, k)).astype(np.float32)
    b = rng.normal(size=c_out).astype(np.float32)
    y = backend.conv1d_forward(x, w, b, stride, "zero")
    gy = rng.normal(size=y.shape).astype(np.float32)

    fwd = best_of(lambda: backend.conv1d_forward(x, w, b, stride, "zero"), repeats)
    bwd = best_of(lambda: backend.conv1d_backward(x, w, stride, "zero", gy), repeats)
    return fwd, bwd


def bench_ln(backend, n, h, repeats):
    rng = np.random.default_rng(0)
    x = rng.normal(size=(n, h)).astype(np.float32)
    gamma = rng.normal(size=h).astype(np.float32)
    beta = rng.normal(size=h).astype(np.float32)
    _, xhat, inv = backend.layer_norm_forward(x, gamma, beta, 1e-5)
    gy = rng.normal(size=(n, h)).astype(np.float32)

    fwd = best_of(lambda: backend.layer_norm_forward(x, gamma, beta, 1e-5), repeats)
    bwd = best_of(lambda: backend.layer_norm_backward(gamma, xhat, inv, gy), repeats)
    return fwd, bwd


def bench_train_step(steps):
    """One toy pretraining step, end to end, under the selected backend."""
    from voxadapt.config import RunConfig
    from voxadapt.corpus import gen_corpus
    from voxadapt.pipeline import pretrain

    rc = RunConfig(n_speakers=6, n_adapt_speakers=2, utterances_per_speaker=10,
                   holdout_utterances=3, adaptation_k=5,
                   pretrain_phase1_steps=steps, pretrain_phase2_steps=0, seed=0)
    corpus = gen_corpus(rc.corpus_spec())
    start = time.perf_counter()
    pretrain(corpus, rc)
    return (time.perf_counter() - start) / steps


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=30)
    parser.add_argument("--train-steps", type=int, default=0,
                        help="also time N end-to-end training steps")
    args = parser.parse_args()

    backends = available_backends()
    if len(backends) < 2:
        print("compiled extension not built; only the numpy backend is "
              "available, nothing to compare")
        return

    nb, cb = get_backend("numpy"), get_backend("compiled")
    width = max(len(s[0]) for s in CONV_SHAPES + LN_SHAPES) + 2
    header = f"{'kernel':<{width}} {'numpy':>10} {'compiled':>10} {'speedup':>8}"

    print("forward")
    print(header)
    rows_b = []
    for label, *shape in CONV_SHAPES:
        f_n, b_n = bench_conv(nb, *shape, args.repeats)
        f_c, b_c = bench_conv(cb, *shape, args.repeats)
        print(f"{label:<{width}} {f_n*1e6:>8.1f}us {f_c*1e6:>8.1f}us "
              f"{f_n/f_c:>7.2f}x")
        rows_b.append((label, b_n, b_c))
    for label, *shape in LN_SHAPES:
        f_n, b_n = bench_ln(nb, *shape, args.repeats)
        f_c, b_c = bench_ln(cb, *shape, args.repeats)
        print(f"{label:<{width}} {f_n*1e6:>8.1f}us {f_c*1e6:>8.1f}us "
              f"{f_n/f_c:>7.2f}x")
        rows_b.append((label, b_n, b_c))

    print("\nbackward")
    print(header)
    for label, b_n, b_c in rows_b:
        print(f"{label:<{width}} {b_n*1e6:>8.1f}us {b_c*1e6:>8.1f}us "
              f"{b_n/b_c:>7.2f}x")

    if args.train_steps:
        selected = os.environ.get("VOXADAPT_PURE") and "numpy" or "compiled"
        per_step = bench_train_step(args.train_steps)
        print(f"\ntraining step under the '{selected}' backend: "
              f"{per_step*1e3:.1f} ms/step")
        print("(set VOXADAPT_PURE=1 and rerun to time the numpy backend)")


if __name__ == "__main__":
    main()
