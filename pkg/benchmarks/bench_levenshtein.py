"""Compare the compiled and pure-Python Levenshtein kernels.

    python3 benchmarks/bench_levenshtein.py [--pairs 300] [--length 200]

Pairs look like the real workload: a short query against a longer
textualized observation.
"""
import argparse
import random
import string
import time

from wedas.kernels import BACKEND, levenshtein_ext, levenshtein_py


def make_pairs(n, length, seed):
    rng = random.Random(seed)
    alphabet = string.ascii_lowercase + " "
    pairs = []
    for _ in range(n):
        q = "".join(rng.choice(alphabet) for _ in range(rng.randint(8, 40)))
        o = "".join(rng.choice(alphabet) for _ in range(length))
        pairs.append((q, o))
    return pairs


def timed(fn, pairs, repeat):
    best = float("inf")
    total = 0
    for _ in range(repeat):
        start = time.perf_counter()
        total = sum(fn(a, b) for a, b in pairs)
        best = min(best, time.perf_counter() - start)
    return best, total


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--pairs", type=int, default=300)
    p.add_argument("--length", type=int, default=200)
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()

    pairs = make_pairs(args.pairs, args.length, args.seed)
    py_time, py_total = timed(levenshtein_py, pairs, args.repeat)
    print(f"active backend: {BACKEND}")
    print(f"python  {py_time * 1e3:9.2f} ms")
    if levenshtein_ext is None:
        print("cython  (not built; reinstall with a C compiler available)")
        return
    ext_time, ext_total = timed(levenshtein_ext, pairs, args.repeat)
    if ext_total != py_total:
        raise SystemExit(f"kernels disagree: {ext_total} != {py_total}")
    print(f"cython  {ext_time * 1e3:9.2f} ms")
    print(f"speedup {py_time / ext_time:9.1f}x")


if __name__ == "__main__":
    main()
