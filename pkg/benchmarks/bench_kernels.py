#!/usr/bin/env python3
"""Benchmark the compiled LSTM kernels against the pure-numpy fallback.

Two levels: raw sequence kernels (forward / backward) and an end-to-end
training epoch of the default aux model. Run from the repo root:

    python benchmarks/bench_kernels.py [--quick]
"""

import argparse
import time

import numpy as np

from crosspath.model import ModelConfig, build, train_model
from crosspath.numkit.kernels import get_backend, use_backend
from crosspath.windowing import WindowingSpec, build_sample_set, fit_normalization
from crosspath.dataschema import CrossingInstance, ScenarioContext, TrajectoryPoint


def time_call(fn, repeats):
    fn()  # warm up
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats


def bench_kernels(shapes, repeats):
    rows = []
    for T, B, H in shapes:
        rng = np.random.default_rng(0)
        x_pre = rng.normal(size=(T, B, 4 * H))
        bias = rng.normal(size=4 * H)
        wh = rng.normal(size=(H, 4 * H)) * 0.1
        h_seq = np.empty((T, B, H))
        c_all = np.zeros((T + 1, B, H))
        caches = np.empty((T, B, 5 * H))
        g = rng.normal(size=(T, B, H))
        da = np.empty((T, B, 4 * H))
        for name in available_backends():
            _, fwd, bwd = get_backend(name)

            def run_fwd():
                fwd(x_pre.copy(), bias, wh, h_seq, c_all, caches)

            def run_bwd():
                bwd(g, wh, c_all, caches, da, np.empty((B, H)), np.empty((B, H)))

            fwd_ms = time_call(run_fwd, repeats) * 1e3
            bwd_ms = time_call(run_bwd, repeats) * 1e3
            rows.append((f"T={T} B={B} H={H}", name, fwd_ms, bwd_ms))
    return rows


def synthetic_samples(n_instances, steps):
    instances = []
    rng = np.random.default_rng(1)
    ctx = ScenarioContext(road_type="one_way", lane_width_m=3.0, n_lanes=2)
    for k in range(n_instances):
        n = int(rng.integers(*steps))
        pts = [TrajectoryPoint(t=round(i * 0.1, 6), x=0.01 * i, y=6.0 * i / (n - 1),
                               o=0.0, d=30.0) for i in range(n)]
        instances.append(CrossingInstance(id=f"b{k:04d}", points=pts, context=ctx))
    norm = fit_normalization(instances, "xyod")
    return build_sample_set(instances, WindowingSpec(mode="time", t1_s=1.0, t2_s=2.0), norm)


def bench_training(n_instances, epochs):
    samples = synthetic_samples(n_instances, (35, 70))
    n = len(samples)
    train = samples.subset(np.arange(int(n * 0.9)))
    val = samples.subset(np.arange(int(n * 0.9), n))
    config = ModelConfig(kind="aux", lstm_layers=1, dense_layers=1, nodes=50,
                         batch_size=128, input_features=4, context_length=10,
                         output_steps=train.targets.shape[1])
    rows = []
    for name in available_backends():
        with use_backend(name):
            net = build(config, seed=0)
            t0 = time.perf_counter()
            train_model(net, train, val, seed=0, epochs=epochs)
            per_epoch = (time.perf_counter() - t0) / epochs
        rows.append((f"{n} samples/epoch", name, per_epoch))
    return rows


def available_backends():
    names = ["numpy"]
    try:
        get_backend("cython")
        names.insert(0, "cython")
    except ImportError:
        pass
    return names


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--quick", action="store_true", help="smaller workloads")
    args = parser.parse_args()

    shapes = [(10, 32, 10), (10, 128, 50), (20, 128, 100)]
    repeats = 30 if args.quick else 150
    print(f"kernel timings ({repeats} repeats):")
    print(f"{'shape':>18}  {'backend':>7}  {'forward ms':>10}  {'backward ms':>11}")
    for shape, backend, fwd_ms, bwd_ms in bench_kernels(shapes, repeats):
        print(f"{shape:>18}  {backend:>7}  {fwd_ms:>10.3f}  {bwd_ms:>11.3f}")

    n_instances = 200 if args.quick else 800
    epochs = 2 if args.quick else 3
    print("\nend-to-end training (default aux config):")
    print(f"{'workload':>18}  {'backend':>7}  {'s/epoch':>8}")
    for workload, backend, per_epoch in bench_training(n_instances, epochs):
        print(f"{workload:>18}  {backend:>7}  {per_epoch:>8.2f}")


if __name__ == "__main__":
    main()
