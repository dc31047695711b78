"""Time the per-image feature path and report how kernel cost grows with L.

The second table counts multiply-adds in the banded bispectrum kernel
(one per stored Clebsch-Gordan entry) at doubling band limits; the
log-log slope should sit between the L^4 of the coupled sums and the
extra L-ish factor from the number of triples.
"""
import argparse
import pathlib
import sys
import time

import numpy as np

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from bispectral import invariants, pipeline, sht, so3


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--images", type=int, default=10)
    ap.add_argument("--L", type=int, default=15)
    ap.add_argument("--patch-size", type=int, default=30)
    args = ap.parse_args()

    data = pipeline.make_demo_digits()
    plan = sht.build_projection_plan(args.patch_size, L=args.L, a=2.0)
    table = so3.build_cg_table(args.L)
    samples = [pipeline.transform_digit(data.images[i], seed=900 + i)
               for i in range(args.images)]
    times = []
    for s in samples:
        t0 = time.perf_counter()
        pipeline.extract_features([s], plan, table)
        times.append(time.perf_counter() - t0)
    print("feature extraction at N=%d, L=%d over %d images:"
          % (args.patch_size, args.L, args.images))
    print("  mean %.1f ms, max %.1f ms"
          % (1e3 * np.mean(times), 1e3 * np.max(times)))

    Ls = [8, 16, 32]
    counts = [invariants.banded_term_count(L) for L in Ls]
    slope = np.polyfit(np.log(Ls), np.log(counts), 1)[0]
    print("kernel multiply-add counts:")
    for L, c in zip(Ls, counts):
        print("  L=%2d  %9d terms" % (L, c))
    print("  least-squares log-log slope %.3f" % slope)


if __name__ == "__main__":
    main()
