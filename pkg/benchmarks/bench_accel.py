"""Compiled vs pure-Python backends on the two hot paths: numerical CDF
inversion inside lobe samplers and BVH ray traversal.

    python benchmarks/bench_accel.py [--n 200000] [--repeat 3]
"""

import argparse
import time

import numpy as np

from brdfgrad import accel, brdf
from brdfgrad.core import RandomStream
from brdfgrad.decomp import build
from brdfgrad.render.library import builtin_scene

# (label, model, parameter, lobe index)
CASES = [
    ("AnisoGGX alpha_x shape", brdf.model("AnisoGGX", alpha_x=0.2, alpha_y=0.5), "alpha_x", 0),
    ("ABC B shape", brdf.model("ABC", B=10.0, C=2.0), "B", 1),
    ("Burley d shape", brdf.model("BurleyProfile", d=1.0), "d", 0),
    ("OrenNayar sigma B lobe", brdf.model("OrenNayar", sigma=0.5), "sigma", 0),
]


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def sampler_jobs(n):
    wo = np.array([0.3, 0.2, np.sqrt(1 - 0.13)])
    for label, m, p, k in CASES:
        pair = build(m, p)
        u = RandomStream(7).uniform(n, 2)
        yield label, (lambda lobe=pair.lobes[k]: lobe.sample(u, wo))


def bvh_job(n):
    scene = builtin_scene("cornell_mixture", res=8)
    acc = scene.accel
    rng = np.random.default_rng(3)
    o = np.tile([0.0, 1.0, 0.5], (n, 1))
    d = rng.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return lambda: acc.intersect(o, d)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if not accel.compiled_available():
        print("compiled kernels are not built; only the python backend is available")
    jobs = list(sampler_jobs(args.n)) + [("BVH closest hit (cornell)", bvh_job(args.n // 4))]
    print(f"{'case':32s} {'python s':>10s} {'compiled s':>11s} {'speedup':>8s}")
    for label, fn in jobs:
        with accel.use_backend("python"):
            tp = best_of(fn, args.repeat)
        if accel.compiled_available():
            with accel.use_backend("compiled"):
                tc = best_of(fn, args.repeat)
            print(f"{label:32s} {tp:10.3f} {tc:11.3f} {tp / tc:7.1f}x")
        else:
            print(f"{label:32s} {tp:10.3f} {'-':>11s} {'-':>8s}")


if __name__ == "__main__":
    main()
