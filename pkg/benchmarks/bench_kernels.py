"""Compare the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--devices 200000] [--repeat 5]

Also times one end-to-end run per backend in a subprocess, since the backend
is picked at import time.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from prefixhh import _kernels
from prefixhh._kernels import fallback, stream_key

END_TO_END = """
import time
from prefixhh import _kernels
from prefixhh.data import ZipfSpec, corpus_codebook, encode_population, generate_zipf
from prefixhh.engine import RunConfig, run
raw = generate_zipf(ZipfSpec({n}, 5000, 1.1, 5.0, seed=1))
cb = corpus_codebook(raw)
pop, _ = encode_population(raw, cb, 60)
cfg = RunConfig(rounds=4, dimension_limit=10**6, epsilon_local=2.0, codebook=cb, threads=1)
run(pop, cfg)
t = time.perf_counter()
for _ in range(3):
    run(pop, cfg)
print(_kernels.BACKEND, (time.perf_counter() - t) / 3)
"""


def workload(n, rng):
    sizes = rng.poisson(5, n) + 1
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    rows = int(offsets[-1])
    vocab = rng.integers(0, 5000, rows).astype(np.int64)
    weight = rng.integers(0, 4, rows).astype(np.int64)
    return offsets, vocab, weight


def best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--devices", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--skip-end-to-end", action="store_true")
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    offsets, vocab, weight = workload(args.devices, rng)
    ids = np.arange(args.devices)
    key = stream_key(1, 1, 1)
    u = fallback.uniforms(key, ids)
    active = np.ones(args.devices, dtype=np.uint8)

    backends = {"numpy": fallback}
    if _kernels.compiled is not None:
        backends["cython"] = _kernels.compiled
    else:
        print("compiled extension not available; timing the fallback only")

    print(f"{args.devices} devices, {offsets[-1]} rows, best of {args.repeat}")
    print(f"{'kernel':<14}{'backend':<10}{'ms':>10}")
    results = {}
    for name, mod in backends.items():
        results[("uniforms", name)] = best(lambda: mod.uniforms(key, ids), args.repeat)
        results[("select_rows", name)] = best(lambda: mod.select_rows(offsets, vocab, weight, u, active), args.repeat)
    for (kernel, name), sec in results.items():
        print(f"{kernel:<14}{name:<10}{sec * 1e3:>10.2f}")
    if "cython" in backends:
        for kernel in ("uniforms", "select_rows"):
            print(f"{kernel} speedup: {results[(kernel, 'numpy')] / results[(kernel, 'cython')]:.2f}x")
        same = np.array_equal(
            fallback.select_rows(offsets, vocab, weight, u, active),
            _kernels.compiled.select_rows(offsets, vocab, weight, u, active),
        )
        print(f"outputs identical: {same}")

    if not args.skip_end_to_end:
        code = END_TO_END.format(n=50_000)
        for pure in ("", "1"):
            env = dict(os.environ, PREFIXHH_PURE_PYTHON=pure) if pure else {k: v for k, v in os.environ.items() if k != "PREFIXHH_PURE_PYTHON"}
            out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
            backend, sec = out.stdout.split()
            print(f"end-to-end run (N=50k, T=4) {backend:<7} {float(sec) * 1e3:8.1f} ms")


if __name__ == "__main__":
    main()
