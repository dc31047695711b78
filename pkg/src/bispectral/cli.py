"""Batch command-line tools over the library.

Subcommands: project (image -> coefficients), features (images/coeffs ->
feature CSV), gram (features -> Gram CSV), prep (IDX -> transformed
sample cache), eval (pairwise error tables), demo-cyclic and demo-group
(invariance printouts).  Exit codes: 0 success, 1 usage error, 2 data
error.  Every run is deterministic given its flags and seed; passing
--manifest writes the resolved configuration, seeds and timings as JSON.
"""

import argparse
import json
import os
import sys
import time
from dataclasses import asdict, dataclass

import numpy as np

from . import cyclic, finitegroup, invariants, pipeline, sht, so3

__all__ = ["RunConfig", "run", "main"]


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on bad usage; the contract here is 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write("%s: error: %s\n" % (self.prog, message))
        raise SystemExit(1)


@dataclass(frozen=True)
class RunConfig:
    """Resolved experiment-level settings shared by the heavy subcommands."""

    L: int = 15
    a: float = 2.0
    sigma: float = 0.0
    patch_size: int = 30
    seed: int = 7
    splits: int = 10
    jobs: int = 1


def _add_projection_flags(p, with_full=False):
    p.add_argument("--L", type=int, default=15, help="band limit (default 15)")
    p.add_argument("--a", type=float, default=2.0,
                   help="magnification, radians per unit plane distance (default 2)")
    p.add_argument("--sigma", type=float, default=0.0,
                   help="heat-kernel band taper width (default 0, off)")
    p.add_argument("--literal-harmonics", action="store_true",
                   help="project against unconjugated harmonics")
    if with_full:
        p.add_argument("--full-grid", action="store_true",
                       help="emit the full (l1,l2) grid instead of l1 <= l2")


def _build_parser():
    parser = _Parser(prog="bispectral",
                     description="Rotation/translation invariant bispectral "
                                 "image features and the digit experiment.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("project", help="project one image patch onto sphere coefficients")
    p.add_argument("--input", required=True, help="patch file (.pgm or .csv grid)")
    _add_projection_flags(p)
    p.add_argument("--out", help="output path (default: JSON to stdout)")
    p.add_argument("--binary", action="store_true",
                   help="write packed SPHCOEF1 binary instead of JSON (needs --out)")
    p.add_argument("--manifest", help="write run manifest JSON here")

    p = sub.add_parser("features", help="bispectrum feature rows for patches or coeff files")
    p.add_argument("--input", required=True, action="append",
                   help="patch (.pgm/.csv) or coefficients (.json); repeatable")
    _add_projection_flags(p, with_full=True)
    p.add_argument("--out", required=True, help="feature CSV path")
    p.add_argument("--binary-out", help="also write packed BISPFT01 binary here")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--manifest", help="write run manifest JSON here")

    p = sub.add_parser("gram", help="Gram matrix from a feature CSV")
    p.add_argument("--features", required=True, help="feature CSV from `features`")
    p.add_argument("--kind", choices=("linear", "rbf"), default="linear")
    p.add_argument("--sigma", type=float, help="RBF width (required for rbf)")
    p.add_argument("--out", required=True, help="Gram CSV path")
    p.add_argument("--manifest", help="write run manifest JSON here")

    p = sub.add_parser("prep", help="transform IDX digits into a 30x30 sample cache")
    p.add_argument("--images", required=True, help="IDX image file (may be .gz)")
    p.add_argument("--labels", required=True, help="IDX label file (may be .gz)")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--start", type=int, default=1000,
                   help="first dataset index (default 1000, the second thousand)")
    p.add_argument("--count", type=int, default=1000)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--patch-size", type=int, default=30)
    p.add_argument("--manifest", help="write run manifest JSON here")

    p = sub.add_parser("eval", help="pairwise digit classification error tables")
    p.add_argument("--images", help="IDX image file (may be .gz)")
    p.add_argument("--labels", help="IDX label file (may be .gz)")
    p.add_argument("--cache", help="prep output directory (instead of --images/--labels)")
    p.add_argument("--pairs", default=None,
                   help="digit pairs like '0,1' or '0,1;2,3' (default: built-in 10)")
    p.add_argument("--kernel", choices=("linear", "rbf", "both"), default="both")
    _add_projection_flags(p)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--splits", type=int, default=10)
    p.add_argument("--per-class", type=int, default=None)
    p.add_argument("--pool-start", type=int, default=1000)
    p.add_argument("--pool-count", type=int, default=1000)
    p.add_argument("--patch-size", type=int, default=30)
    p.add_argument("--standardize", action="store_true",
                   help="per-feature train-fit standardization")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True, help="results CSV path")
    p.add_argument("--manifest", help="write run manifest JSON here")

    p = sub.add_parser("demo-cyclic", help="print shift-invariant spectra of a 1-D signal")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--input", help="CSV file holding one real signal")
    group.add_argument("--random", type=int, metavar="N",
                       help="use a random complex signal of length N")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("demo-group", help="print invariance residuals on the symmetric group S3")
    p.add_argument("--seed", type=int, default=0)

    return parser


def _numeric_flags(args, names):
    return {name: getattr(args, name.replace("-", "_")) for name in names}


def _write_manifest(path, command, config, timings):
    doc = {"command": command, "config": config, "timings": timings}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_patch(path):
    if path.endswith(".pgm"):
        return sht.ImagePatch.from_pgm(path)
    return sht.ImagePatch.from_csv(path)


def _cmd_project(args):
    t0 = time.perf_counter()
    patch = _load_patch(args.input)
    plan = sht.build_projection_plan(patch.n, L=args.L, a=args.a, sigma=args.sigma,
                                     conjugate=not args.literal_harmonics)
    coeffs = sht.project_image(patch, plan)
    if args.binary:
        if not args.out:
            raise SystemExit(_usage_error("--binary requires --out"))
        with open(args.out, "wb") as fh:
            fh.write(coeffs.to_binary())
    elif args.out:
        with open(args.out, "w") as fh:
            fh.write(coeffs.to_json() + "\n")
    else:
        sys.stdout.write(coeffs.to_json() + "\n")
    if args.manifest:
        _write_manifest(args.manifest, "project",
                        {"L": args.L, "a": args.a, "sigma": args.sigma,
                         "n": patch.n, "conjugate": not args.literal_harmonics},
                        {"total_s": time.perf_counter() - t0})
    return 0


def _cmd_features(args):
    t0 = time.perf_counter()
    coeff_list, ids = [], []
    plan = None
    for path in args.input:
        ids.append(os.path.basename(path))
        if path.endswith(".json"):
            with open(path) as fh:
                c = sht.SphereCoeffs.from_json(fh.read())
            if c.L != args.L:
                raise invariants.BandLimitMismatch(
                    "%s has L=%d, run requests L=%d" % (path, c.L, args.L))
            coeff_list.append(c)
        else:
            patch = _load_patch(path)
            if plan is None or plan.n != patch.n:
                plan = sht.build_projection_plan(patch.n, L=args.L, a=args.a,
                                                 sigma=args.sigma,
                                                 conjugate=not args.literal_harmonics)
            coeff_list.append(sht.project_image(patch, plan))
    t_project = time.perf_counter() - t0
    table = so3.build_cg_table(args.L)
    reduced = not args.full_grid

    def one(c):
        return invariants.feature_vector(invariants.bispectrum(c, table, reduced=reduced))

    if args.jobs > 1 and len(coeff_list) > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            rows = np.stack(list(pool.map(one, coeff_list)))
    else:
        rows = np.stack([one(c) for c in coeff_list])
    triples = invariants.canonical_triples(args.L, reduced)
    with open(args.out, "w") as fh:
        invariants.write_features_csv(fh, rows, triples, ids=ids)
    if args.binary_out:
        with open(args.binary_out, "wb") as fh:
            fh.write(invariants.features_to_binary(rows, args.L, reduced, triples))
    if args.manifest:
        _write_manifest(args.manifest, "features",
                        {"L": args.L, "a": args.a, "sigma": args.sigma,
                         "jobs": args.jobs, "full_grid": args.full_grid,
                         "inputs": len(args.input)},
                        {"project_s": t_project,
                         "total_s": time.perf_counter() - t0})
    return 0


def _cmd_gram(args):
    t0 = time.perf_counter()
    with open(args.features) as fh:
        ids, x, _ = invariants.read_features_csv(fh)
    g = pipeline.gram(x, args.kind, sigma=args.sigma)
    with open(args.out, "w") as fh:
        fh.write("id," + ",".join(ids) + "\n")
        for rid, row in zip(ids, g.values):
            fh.write(rid + "," + ",".join("%.17g" % v for v in row) + "\n")
    if args.manifest:
        _write_manifest(args.manifest, "gram",
                        {"kind": args.kind, "sigma": args.sigma, "rows": len(ids)},
                        {"total_s": time.perf_counter() - t0})
    return 0


def _cmd_prep(args):
    t0 = time.perf_counter()
    ds = pipeline.load_idx(args.images, args.labels)
    stop = min(args.start + args.count, len(ds))
    indices = range(args.start, stop)
    samples = [pipeline.transform_digit(ds.images[i],
                                        pipeline.sample_seed(args.seed, i),
                                        label=int(ds.labels[i]),
                                        patch_size=args.patch_size)
               for i in indices]
    os.makedirs(args.out_dir, exist_ok=True)
    out = os.path.join(args.out_dir, "samples.npz")
    np.savez(out,
             patches=np.stack([s.patch for s in samples]),
             labels=np.array([s.label for s in samples]),
             angles=np.array([s.angle for s in samples]),
             offsets=np.array([s.offset for s in samples]),
             seeds=np.array([s.seed for s in samples], dtype=np.uint64),
             patch_size=np.array(args.patch_size))
    config = {"start": args.start, "count": args.count, "seed": args.seed,
              "patch_size": args.patch_size, "written": len(samples)}
    _write_manifest(os.path.join(args.out_dir, "manifest.json"), "prep",
                    config, {"total_s": time.perf_counter() - t0})
    if args.manifest:
        _write_manifest(args.manifest, "prep", config,
                        {"total_s": time.perf_counter() - t0})
    return 0


def _load_cache(cache_dir):
    data = np.load(os.path.join(cache_dir, "samples.npz"))
    samples = []
    for i in range(data["patches"].shape[0]):
        samples.append(pipeline.TransformedSample(
            patch=data["patches"][i], label=int(data["labels"][i]),
            angle=float(data["angles"][i]),
            offset=tuple(int(v) for v in data["offsets"][i]),
            seed=int(data["seeds"][i])))
    return samples


def _parse_pairs(text):
    if text is None:
        return None
    pairs = []
    for chunk in text.replace(";", " ").split():
        a, b = chunk.split(",")
        pairs.append((int(a), int(b)))
    return tuple(pairs)


def _cmd_eval(args):
    t0 = time.perf_counter()
    if bool(args.cache) == bool(args.images):
        raise SystemExit(_usage_error("eval needs either --cache or --images/--labels"))
    kernels = ("linear", "rbf") if args.kernel == "both" else (args.kernel,)
    pairs = _parse_pairs(args.pairs)
    config = pipeline.EvalConfig(
        L=args.L, a=args.a, sigma_smooth=args.sigma, patch_size=args.patch_size,
        seed=args.seed, splits=args.splits, per_class=args.per_class,
        pool_start=args.pool_start, pool_count=args.pool_count,
        pairs=pairs if pairs is not None else pipeline.EvalConfig.pairs,
        kernels=kernels, standardize=args.standardize, jobs=args.jobs)
    t_tables = time.perf_counter()
    plan = sht.build_projection_plan(config.patch_size, L=config.L, a=config.a,
                                     sigma=config.sigma_smooth,
                                     conjugate=not args.literal_harmonics)
    table = so3.build_cg_table(config.L)
    t_tables = time.perf_counter() - t_tables
    if args.cache:
        samples = _load_cache(args.cache)
        results = pipeline.pairwise_eval(None, config, plan=plan, table=table,
                                         samples=samples)
    else:
        if not args.labels:
            raise SystemExit(_usage_error("--images requires --labels"))
        ds = pipeline.load_idx(args.images, args.labels)
        results = pipeline.pairwise_eval(ds, config, plan=plan, table=table)
    with open(args.out, "w") as fh:
        pipeline.write_results_csv(fh, results)
    if args.manifest:
        _write_manifest(args.manifest, "eval",
                        {"L": config.L, "a": config.a, "sigma": config.sigma_smooth,
                         "patch_size": config.patch_size, "seed": config.seed,
                         "splits": config.splits, "per_class": config.per_class,
                         "pool_start": config.pool_start,
                         "pool_count": config.pool_count,
                         "pairs": [list(p) for p in config.pairs],
                         "kernels": list(config.kernels),
                         "lam_grid": [float(v) for v in config.lam_grid],
                         "sigma_scales": [float(v) for v in config.sigma_scales],
                         "folds_linear": config.folds_linear,
                         "folds_rbf": config.folds_rbf,
                         "standardize": config.standardize,
                         "jobs": config.jobs},
                        {"tables_s": t_tables,
                         "total_s": time.perf_counter() - t0})
    return 0


def _cmd_demo_cyclic(args):
    if args.input:
        f = np.loadtxt(args.input, delimiter=",", dtype=float).ravel().astype(complex)
    else:
        rng = np.random.default_rng(args.seed)
        f = rng.standard_normal(args.random) + 1j * rng.standard_normal(args.random)
    fhat = cyclic.dft(f)
    q = cyclic.power_spectrum(fhat)
    b = cyclic.cyclic_bispectrum(fhat)
    n = f.size
    dev_q = dev_b = 0.0
    for z in range(n):
        gz = cyclic.dft(cyclic.shift(f, z))
        dev_q = max(dev_q, np.abs(cyclic.power_spectrum(gz) - q).max())
        dev_b = max(dev_b, np.abs(cyclic.cyclic_bispectrum(gz) - b).max())
    print("n = %d" % n)
    print("power spectrum q:")
    print("  " + " ".join("%.6g" % v for v in q))
    print("bispectrum b (rows k1, columns k2):")
    for row in b:
        print("  " + " ".join("%.4g%+.4gj" % (v.real, v.imag) for v in row))
    print("max shift deviation: q %.3g, b %.3g" % (dev_q, dev_b))
    return 0


def _cmd_demo_group(args):
    spec = finitegroup.symmetric_group_3()
    irreps = finitegroup.s3_irreps()
    finitegroup.validate_group(spec)
    finitegroup.validate_irreps(irreps, spec)
    cg = finitegroup.build_group_cg(irreps, spec)
    rng = np.random.default_rng(args.seed)
    f = rng.standard_normal(spec.order) + 1j * rng.standard_normal(spec.order)
    fourier = finitegroup.group_fourier(f, irreps)
    q = finitegroup.group_power_spectrum(fourier)
    b = finitegroup.group_bispectrum(fourier, cg)
    dev_q = dev_b = 0.0
    for z in range(spec.order):
        fz = finitegroup.left_translate(f, z, spec)
        fourier_z = finitegroup.group_fourier(fz, irreps)
        qz = finitegroup.group_power_spectrum(fourier_z)
        bz = finitegroup.group_bispectrum(fourier_z, cg)
        dev_q = max(dev_q, max(np.abs(qz[r] - q[r]).max() for r in range(len(q))))
        dev_b = max(dev_b, max(np.abs(bz[k] - b[k]).max() for k in b))
    print("group: S3 (order %d), irrep dims %s" % (spec.order, list(irreps.dims)))
    print("random complex signal, all %d left translations:" % spec.order)
    print("  max power-spectrum deviation:  %.3g" % dev_q)
    print("  max bispectrum deviation:      %.3g" % dev_b)
    for (r1, r2), dec in sorted(cg.items()):
        print("  rho%d (x) rho%d -> blocks %s" % (r1, r2, list(dec.block_list)))
    return 0


def _usage_error(message):
    sys.stderr.write("bispectral: error: %s\n" % message)
    return 1


_COMMANDS = {
    "project": _cmd_project,
    "features": _cmd_features,
    "gram": _cmd_gram,
    "prep": _cmd_prep,
    "eval": _cmd_eval,
    "demo-cyclic": _cmd_demo_cyclic,
    "demo-group": _cmd_demo_group,
}


def run(argv) -> int:
    """Dispatch a command line; returns the process exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (ValueError, OSError) as exc:
        # every data-format and numeric-domain error in the library is a
        # ValueError subclass; file problems surface as OSError
        sys.stderr.write("bispectral: %s: %s\n" % (type(exc).__name__, exc))
        return 2


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
