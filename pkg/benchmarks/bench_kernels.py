"""Time the hot kernels on the pure-Python and compiled paths.

    python3 benchmarks/bench_kernels.py [--repeat N] [--docs N]

Both paths are run on identical inputs and their outputs are compared
before any timing is reported.
"""
from __future__ import annotations

import argparse
import array
import random
import timeit

from fairretrieval import _accel
from fairretrieval.metrics import weight_matrix


def bm25_inputs(docs: int, seed: int = 0):
    rng = random.Random(seed)
    ids = array.array("i", sorted(rng.sample(range(docs), docs // 3)))
    tfs = array.array("d", [float(rng.randint(1, 6)) for _ in ids])
    lens = array.array("d", [float(rng.randint(5, 200)) for _ in range(docs)])
    return ids, tfs, lens


def kappa_inputs(n: int, k: int = 6, seed: int = 1):
    rng = random.Random(seed)
    a = [rng.randrange(k) for _ in range(n)]
    b = [rng.randrange(k) for _ in range(n)]
    return a, b, [v for row in weight_matrix(k) for v in row], k


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--docs", type=int, default=200_000, help="corpus size for the BM25 kernel")
    ap.add_argument("--pairs", type=int, default=200_000, help="label pairs for the kappa kernel")
    args = ap.parse_args(argv)

    backends = _accel.available_backends()
    if "cython" not in backends:
        print("compiled kernels not built; timing the Python path only")

    ids, tfs, lens = bm25_inputs(args.docs)
    a, b, w, k = kappa_inputs(args.pairs)

    def bm25(backend):
        scores = array.array("d", bytes(8 * args.docs))
        _accel.bm25_accumulate(scores, ids, tfs, lens, 1.3, 1.2, 0.75, 100.0, backend)
        return scores

    def kappa(backend):
        return _accel.weighted_disagreement(a, b, w, k, backend)

    for name, fn in (("bm25_accumulate", bm25), ("weighted_disagreement", kappa)):
        results = {be: fn(be) for be in backends}
        if len({bytes(r) if isinstance(r, array.array) else r for r in results.values()}) != 1:
            raise SystemExit(f"{name}: backends disagree")
        timings = {}
        for be in backends:
            timings[be] = min(timeit.repeat(lambda: fn(be), number=1, repeat=args.repeat))
        line = "  ".join(f"{be}={t * 1e3:8.2f} ms" for be, t in timings.items())
        if "cython" in timings:
            line += f"  speedup={timings['python'] / timings['cython']:6.1f}x"
        print(f"{name:22} {line}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
