"""Compare the compiled kernel backend against the numpy fallback.

Times the three matrix products at training-relevant sizes plus one full
training epoch of the reference architecture on synthetic data, for every
available backend. Run as:

    python benchmarks/bench_backends.py
"""

import time

import numpy as np

from adep.data import expand_symmetric, pair_matrix
from adep.engine import kernels
from adep.model import ArchSpec
from adep.synth import SynthConfig, gen_synthetic
from adep.training import TrainConfig, train

MATMUL_SIZES = [(64, 250, 256), (256, 256, 256), (512, 512, 512)]


def timed(fn, *args, reps=5):
    fn(*args)  # warm up
    started = time.perf_counter()
    for _ in range(reps):
        fn(*args)
    return (time.perf_counter() - started) / reps


def bench_matmuls(backend):
    kernels.set_backend(backend)
    rng = np.random.default_rng(0)
    rows = []
    for m, k, n in MATMUL_SIZES:
        a = rng.standard_normal((m, k))
        b = rng.standard_normal((k, n))
        bn = rng.standard_normal((n, k))
        at = rng.standard_normal((k, m))
        gflop = 2e-9 * m * k * n
        rows.append((
            f"{m}x{k}x{n}",
            gflop / timed(kernels.matmul, a, b),
            gflop / timed(kernels.matmul_nt, a, bn),
            gflop / timed(kernels.matmul_tn, at, b),
        ))
    return rows


def bench_epoch(backend):
    kernels.set_backend(backend)
    synth = SynthConfig(n_drugs=120, n_classes=6, n_pairs=1500,
                        imbalance_exponent=1.0, bit_density=0.2,
                        flip_prob=0.1, seed=1)
    dataset = gen_synthetic(synth).dataset
    x, y = pair_matrix(dataset.table, expand_symmetric(dataset.pairs))
    arch = ArchSpec(input_dim=dataset.table.pair_width, n_classes=6,
                    enc_hidden=256, latent=128, cls_hidden1=64, cls_hidden2=32,
                    disc_hidden1=64, disc_hidden2=32)
    config = TrainConfig(epochs=1, batch_size=64, seed=0)
    started = time.perf_counter()
    train(config, arch, x, y)
    return time.perf_counter() - started


def main():
    default = kernels.backend_name()
    print(f"available backends: {', '.join(kernels.available_backends())} "
          f"(default: {default})\n")
    print(f"{'size':>12}  {'backend':>7}  {'matmul':>8}  {'nt':>8}  {'tn':>8}   GFLOP/s")
    for backend in kernels.available_backends():
        for label, mm, nt, tn in bench_matmuls(backend):
            print(f"{label:>12}  {backend:>7}  {mm:8.2f}  {nt:8.2f}  {tn:8.2f}")
    print("\none training epoch (3000 samples, reference architecture):")
    for backend in kernels.available_backends():
        seconds = bench_epoch(backend)
        print(f"  {backend:>7}: {seconds:6.2f}s")
    kernels.set_backend(default)


if __name__ == "__main__":
    main()
