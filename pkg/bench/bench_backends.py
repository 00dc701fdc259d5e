#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallback.

Times the per-document hot paths (likelihood and likelihood+gradients,
plain and ctx) on synthetic documents and prints per-call microseconds
and the speedup. The first jit call compiles, so the numba backend is
warmed before timing.

    python3 bench/bench_backends.py --vocab 2000 --hidden 200 --docs 200
"""

import argparse
import time

import numpy as np

from texttovec import kernels
from texttovec.ctx_lm import init_ctx_params
from texttovec.docnade import init_params


def make_workload(args):
    rng = np.random.default_rng(args.seed)
    docs = [
        rng.integers(0, args.vocab, size=rng.integers(args.min_len, args.max_len + 1)).astype(np.int64)
        for _ in range(args.docs)
    ]
    dn = init_params(args.vocab, args.hidden, seed=1, activation="tanh", depth=args.depth)
    ctx = init_ctx_params(args.vocab, args.hidden, seed=1, activation="tanh", depth=args.depth, lam=0.5)
    return docs, dn, ctx


def timed(fn, docs, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        for doc in docs:
            fn(doc)
        best = min(best, time.perf_counter() - start)
    return 1e6 * best / len(docs)


def bench_backend(name, docs, dn, ctx, repeats):
    backend = kernels.use_backend(name)
    dn_args = dn.kernel_args()
    ctx_args = ctx.kernel_args()
    warm = docs[0]
    backend.docnade_logps(warm, *dn_args)
    backend.docnade_grads(warm, *dn_args)
    backend.ctx_logps(warm, *ctx_args)
    backend.ctx_grads(warm, *ctx_args)
    return {
        "docnade_logps": timed(lambda d: backend.docnade_logps(d, *dn_args), docs, repeats),
        "docnade_grads": timed(lambda d: backend.docnade_grads(d, *dn_args), docs, repeats),
        "ctx_logps": timed(lambda d: backend.ctx_logps(d, *ctx_args), docs, repeats),
        "ctx_grads": timed(lambda d: backend.ctx_grads(d, *ctx_args), docs, repeats),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--vocab", type=int, default=2000)
    ap.add_argument("--hidden", type=int, default=200)
    ap.add_argument("--depth", type=int, default=1)
    ap.add_argument("--docs", type=int, default=100)
    ap.add_argument("--min-len", type=int, default=20)
    ap.add_argument("--max-len", type=int, default=80)
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    docs, dn, ctx = make_workload(args)
    print(
        f"vocab={args.vocab} hidden={args.hidden} depth={args.depth} "
        f"docs={args.docs} len={args.min_len}..{args.max_len} (best of {args.repeats})"
    )
    results = {name: bench_backend(name, docs, dn, ctx, args.repeats) for name in ("numpy", "numba")}
    print(f"{'kernel':<16}{'numpy us/doc':>14}{'numba us/doc':>14}{'speedup':>9}")
    for key in results["numpy"]:
        np_t = results["numpy"][key]
        nb_t = results["numba"][key]
        print(f"{key:<16}{np_t:>14.1f}{nb_t:>14.1f}{np_t / nb_t:>8.2f}x")


if __name__ == "__main__":
    main()
