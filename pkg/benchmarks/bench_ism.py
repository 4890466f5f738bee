"""Time the compiled and numpy image-source accumulators on the same lattices.

Usage: python3 benchmarks/bench_ism.py [--orders 5 10 20] [--repeat 3] [--length 2.0]
"""
import argparse
import timeit

import numpy as np

from speakerdist import _ism_py, kernels
from speakerdist.roomsim import RoomSpec, SceneSpec

FS, C, OVERSAMPLE = 16000, 343.0, 16


def lattice_args(order, length_s=1.0):
    scene = SceneSpec(RoomSpec.uniform((7.5, 9.0, 3.5), 0.3), (2.0, 3.0, 1.5), (5.0, 6.0, 1.2))
    beta = np.ascontiguousarray(scene.room.reflection_matrix())
    return (np.array(scene.source_pos, float), np.array(scene.mic_pos, float),
            np.array(scene.room.dims, float), beta, np.full(3, order, dtype=np.int64),
            FS, C, int(length_s * FS), OVERSAMPLE)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--orders", type=int, nargs="+", default=[5, 10, 20])
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--length", type=float, default=2.0, help="response length in seconds")
    args = p.parse_args(argv)
    backends = {"numpy": _ism_py.accumulate_images}
    if kernels.BACKEND == "cython":
        backends["cython"] = kernels.accumulate_images
    else:
        print("compiled kernel not built; timing numpy only")
    print(f"{'order':>5} {'images':>9} " + " ".join(f"{b + ' (s)':>12}" for b in backends) + "   speedup")
    for n in args.orders:
        a = lattice_args(n, args.length)
        times = {b: min(timeit.repeat(lambda f=f: f(*a), number=1, repeat=args.repeat))
                 for b, f in backends.items()}
        ref, _ = backends["numpy"](*a)
        if "cython" in backends:
            fast, _ = backends["cython"](*a)
            assert np.allclose(ref, fast, atol=1e-12), "backends disagree"
        speed = times["numpy"] / times["cython"] if "cython" in times else float("nan")
        print(f"{n:>5} {(2 * n + 1) ** 3:>9} " + " ".join(f"{t:>12.4f}" for t in times.values())
              + f"   {speed:7.1f}x")


if __name__ == "__main__":
    main()
