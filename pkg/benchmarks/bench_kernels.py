"""Benchmark the compiled kernels against the numpy fallback.

Times the four hot kernels of the attack inner loop at several graph
sizes and reports the speedup plus the maximum numerical deviation, then
times one full projected-descent attack under each backend.

Usage:
    python benchmarks/bench_kernels.py [--sizes 200,500,1000] [--repeats 30]
"""

import argparse
import time

import numpy as np

from grail.kernels import _impl_np as numpy_impl

try:
    from grail import _ckernels as compiled_impl
except ImportError:
    compiled_impl = None


def timeit(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def bench_kernels(sizes, repeats):
    rng = np.random.default_rng(0)
    print(f"{'kernel':<28}{'n':>6}{'numpy ms':>12}{'compiled ms':>13}"
          f"{'speedup':>9}{'max |diff|':>12}")
    for n in sizes:
        W = rng.random((n, n))
        W = (W + W.T) / 2
        np.fill_diagonal(W, 0.0)
        G = rng.standard_normal((n, n))
        k = min(4 * n, n * (n - 1) // 2)
        lin = np.sort(rng.choice(n * (n - 1) // 2, size=k, replace=False))
        b = 2 * n - 1
        rows = ((b - np.sqrt(b * b - 8.0 * lin)) / 2).astype(np.int64)
        offset = rows * (2 * n - rows - 1) // 2
        rows = np.where(offset > lin, rows - 1, rows)
        offset = rows * (2 * n - rows - 1) // 2
        cols = lin - offset + rows + 1
        A = (W > 0.5).astype(float)
        A = np.triu(A, 1)
        A = A + A.T
        p = rng.random(k) * 2 - 0.5
        _, s = numpy_impl.normalize_adjacency_forward(W)

        cases = {
            "normalize_forward": (lambda m: m.normalize_adjacency_forward(W)),
            "normalize_vjp": (lambda m: m.normalize_adjacency_vjp(G, W, s)),
            "assemble+gather": (lambda m: m.pair_flip_grads(
                m.assemble_relaxed(A, rows, cols, np.clip(p, 0, 1)),
                A, rows, cols)),
            "project_budget": (lambda m: m.project_budget(p, k / 8)),
        }
        for name, call in cases.items():
            t_np = timeit(lambda: call(numpy_impl), repeats)
            if compiled_impl is None:
                print(f"{name:<28}{n:>6}{1e3 * t_np:>12.3f}{'-':>13}{'-':>9}")
                continue
            t_cy = timeit(lambda: call(compiled_impl), repeats)
            ref = call(numpy_impl)
            new = call(compiled_impl)
            if isinstance(ref, tuple):
                diff = max(np.abs(a - b).max() for a, b in zip(ref, new))
            else:
                diff = np.abs(ref - new).max()
            print(f"{name:<28}{n:>6}{1e3 * t_np:>12.3f}{1e3 * t_cy:>13.3f}"
                  f"{t_np / t_cy:>9.2f}{diff:>12.2e}")


def bench_attack(repeats):
    import os
    import subprocess
    import sys

    script = (
        "import time, numpy as np\n"
        "from grail.data import SbmSpec, generate_sbm_node_dataset\n"
        "from grail.encoders import EncoderConfig\n"
        "from grail.probe import train_supervised\n"
        "from grail.attacks import AttackConfig, Budget, prbcd_attack\n"
        "import grail.kernels as K\n"
        "ds = generate_sbm_node_dataset(SbmSpec(blocks=2, nodes_per_block=100,"
        " p_in=0.1, p_out=0.01, feature_dim=8, feature_signal=0.3, seed=7))\n"
        "g = ds.graph\n"
        "enc, pr = train_supervised(ds, EncoderConfig(num_layers=2,"
        " hidden_dim=16), epochs=30, seed=0)\n"
        "cfg = AttackConfig(kind='prbcd', steps=60, seed=1, block_size=4000)\n"
        "budget = Budget.from_fraction(0.05, g.num_edges)\n"
        "start = time.perf_counter()\n"
        "prbcd_attack(g, enc, pr, budget, cfg,"
        " labels=np.asarray(g.node_labels), target_idx=ds.test_indices)\n"
        "print(f'{K.BACKEND}: {time.perf_counter() - start:.3f}s')\n"
    )
    print("\nfull prbcd attack (200 nodes, 60 steps, block 4000):", flush=True)
    for pure in ("0", "1"):
        env = dict(os.environ, GRAIL_PURE_PYTHON=pure)
        subprocess.run([sys.executable, "-c", script], env=env, check=True)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", default="200,500,1000")
    parser.add_argument("--repeats", type=int, default=30)
    parser.add_argument("--skip-attack", action="store_true")
    args = parser.parse_args()
    if compiled_impl is None:
        print("compiled kernels not built; timing numpy fallback only")
    bench_kernels([int(s) for s in args.sizes.split(",")], args.repeats)
    if not args.skip_attack:
        bench_attack(args.repeats)


if __name__ == "__main__":
    main()
