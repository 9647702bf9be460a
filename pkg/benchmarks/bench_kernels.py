"""Compare the compiled kernels with the numpy fallback.

    python3 benchmarks/bench_kernels.py [--n 50000] [--repeat 5]
"""

import argparse
import time

import numpy as np

from trustpred import _backend
from trustpred.data_io import SynthConfig, synth_generate
from trustpred.losses import SLIDE_ORIENTATION, LossSpec
from trustpred.oracle import TrainConfig, train


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def bench_loss_grad(kernels, n, repeat):
    rng = np.random.default_rng(0)
    z = rng.normal(0, 3, n)
    o = rng.integers(0, 2, n).astype(np.uint8)
    p = rng.random(n)
    results = {}
    for spec in (LossSpec.ce(), LossSpec.focal(2.0), LossSpec.tcp(), LossSpec.steep_slope()):
        args = (int(spec.kind), z, o, p, spec.gamma, spec.alpha_pos, spec.alpha_neg,
                SLIDE_ORIENTATION)
        results[f"loss_grad {spec.kind.name.lower()}"] = best_of(lambda: kernels.loss_grad(*args), repeat)
    return results


def bench_train(n, repeat):
    data = synth_generate(SynthConfig(d=16, n=n, seed=0))
    results = {}
    for spec in (LossSpec.ce(), LossSpec.steep_slope()):
        cfg = TrainConfig(lr_max=0.05, epochs=1, batch_size=40)
        results[f"train 1 epoch {spec.kind.name.lower()}"] = best_of(
            lambda: train(data, spec, cfg), repeat)
    return results


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=50_000, help="samples")
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)

    backends = _backend.available()
    if "cython" not in backends:
        print("compiled kernels are not built; only the numpy fallback is available")
    table = {}
    original = _backend.kernels
    try:
        for name, kernels in backends.items():
            _backend.kernels = kernels
            row = bench_loss_grad(kernels, args.n, args.repeat)
            row.update(bench_train(args.n, args.repeat))
            table[name] = row
    finally:
        _backend.kernels = original

    names = list(table)
    print(f"n={args.n}, best of {args.repeat} (seconds)")
    print(f"{'kernel':<28}" + "".join(f"{b:>12}" for b in names)
          + ("     speedup" if len(names) == 2 else ""))
    for key in table[names[0]]:
        cells = [table[b][key] for b in names]
        line = f"{key:<28}" + "".join(f"{c:12.5f}" for c in cells)
        if len(names) == 2:
            line += f"{table['python'][key] / table['cython'][key]:11.1f}x"
        print(line)


if __name__ == "__main__":
    main()
