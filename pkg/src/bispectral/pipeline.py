"""Rotated-digit classification harness.

Digits are read from IDX files, rotated by a uniform random angle,
cropped to their content and dropped at a random position inside a 30x30
patch.  Two feature paths run on identical transformed samples: the
rotation/translation-invariant bispectrum features, and the raw 900-pixel
baseline that a classifier must disentangle on its own.  A deterministic
kernel regularized least squares classifier (solve (K + lambda I) a = y,
predict by sign) stands in for an SVM; the claim under test is about the
features, not the classifier, and KRLS removes both the QP dependency
and solver nondeterminism.

Every random draw flows from explicit integer seeds through
numpy.random.Generator, so a full pairwise evaluation is bit-reproducible
and the two feature paths share transforms and splits exactly.
"""

import math
import gzip
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .invariants import BandLimitMismatch, bispectrum, feature_vector
from .sht import ImagePatch, ProjectionPlan, project_image
from .so3 import CGTable

__all__ = [
    "BadMagic",
    "TruncatedFile",
    "CountMismatch",
    "ContentTooLarge",
    "BadSigma",
    "InsufficientData",
    "SingularSystem",
    "DigitDataset",
    "load_idx",
    "write_idx",
    "make_demo_digits",
    "TransformedSample",
    "transform_digit",
    "sample_seed",
    "extract_features",
    "GramMatrix",
    "gram",
    "gram_cross",
    "median_pairwise_distance",
    "train_binary",
    "predict",
    "split_error",
    "CVChoice",
    "cross_validate",
    "EvalConfig",
    "PairResult",
    "pairwise_eval",
    "write_results_csv",
]


class BadMagic(ValueError):
    """IDX file does not start with the expected magic number."""

    def __init__(self, path, expected, found):
        self.path, self.expected, self.found = str(path), expected, found
        super().__init__("%s: expected magic 0x%08x, found 0x%08x"
                         % (path, expected, found))


class TruncatedFile(ValueError):
    def __init__(self, path, needed, have):
        self.path, self.needed, self.have = str(path), needed, have
        super().__init__("%s: need %d bytes, file has %d" % (path, needed, have))


class CountMismatch(ValueError):
    def __init__(self, n_images, n_labels):
        self.n_images, self.n_labels = n_images, n_labels
        super().__init__("%d images but %d labels" % (n_images, n_labels))


class ContentTooLarge(ValueError):
    """Rotated content does not fit the target patch (strict mode only;
    the default behaviour is to centre-crop instead)."""


class BadSigma(ValueError):
    """RBF width missing or non-positive."""


class InsufficientData(ValueError):
    """Not enough samples per class for the requested folds or splits."""


class SingularSystem(ValueError):
    """The regularized kernel system could not be solved."""


IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


@dataclass(frozen=True)
class DigitDataset:
    """images: (n, h, w) float64 in [0, 1]; labels: (n,) small ints."""

    images: np.ndarray
    labels: np.ndarray

    def __len__(self):
        return self.images.shape[0]


def _read_bytes(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] == b"\x1f\x8b":
        data = gzip.decompress(data)
    return data


def load_idx(images_path, labels_path) -> DigitDataset:
    """Read a big-endian IDX pair (magic 0x803 for images, 0x801 labels).

    Gzipped files are detected by their two-byte signature and inflated
    transparently.  Intensities come back rescaled to [0, 1].
    """
    img_raw = _read_bytes(images_path)
    if len(img_raw) < 16:
        raise TruncatedFile(images_path, 16, len(img_raw))
    magic, count, h, w = struct.unpack_from(">IIII", img_raw, 0)
    if magic != IMAGES_MAGIC:
        raise BadMagic(images_path, IMAGES_MAGIC, magic)
    need = 16 + count * h * w
    if len(img_raw) < need:
        raise TruncatedFile(images_path, need, len(img_raw))
    images = np.frombuffer(img_raw, dtype=np.uint8, count=count * h * w,
                           offset=16).reshape(count, h, w) / 255.0

    lbl_raw = _read_bytes(labels_path)
    if len(lbl_raw) < 8:
        raise TruncatedFile(labels_path, 8, len(lbl_raw))
    magic, n_labels = struct.unpack_from(">II", lbl_raw, 0)
    if magic != LABELS_MAGIC:
        raise BadMagic(labels_path, LABELS_MAGIC, magic)
    if len(lbl_raw) < 8 + n_labels:
        raise TruncatedFile(labels_path, 8 + n_labels, len(lbl_raw))
    labels = np.frombuffer(lbl_raw, dtype=np.uint8, count=n_labels,
                           offset=8).astype(np.int64)
    if count != n_labels:
        raise CountMismatch(count, n_labels)
    return DigitDataset(images=images, labels=labels)


def write_idx(images, labels, images_path, labels_path) -> None:
    """Companion writer for load_idx; intensities quantised back to uint8."""
    images = np.asarray(images, dtype=float)
    labels = np.asarray(labels)
    n, h, w = images.shape
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IMAGES_MAGIC, n, h, w))
        fh.write(np.rint(np.clip(images, 0, 1) * 255).astype(np.uint8).tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", LABELS_MAGIC, n))
        fh.write(labels.astype(np.uint8).tobytes())


def make_demo_digits(limit=None) -> DigitDataset:
    """Real handwritten digits in 28x28 frames, built from the 8x8
    scikit-learn digits set by bilinear upscaling to 20x20 and centring
    with a 4-pixel margin (the usual geometry of the classic 28x28 sets,
    which cannot be bundled here).  Requires scikit-learn.
    """
    from sklearn.datasets import load_digits

    raw = load_digits()
    images = raw.images / 16.0
    labels = raw.target.astype(np.int64)
    if limit is not None:
        images, labels = images[:limit], labels[:limit]
    out = np.zeros((images.shape[0], 28, 28))
    for i, img in enumerate(images):
        big = ndimage.zoom(img, 20.0 / 8.0, order=1)[:20, :20]
        out[i, 4:24, 4:24] = big
    return DigitDataset(images=np.clip(out, 0.0, 1.0), labels=labels)


@dataclass(frozen=True)
class TransformedSample:
    """A digit after random rotation and placement.

    patch: (size, size) float64; angle in radians in [0, 2 pi); offset is
    the (row, col) of the content's top-left corner inside the patch;
    seed is the integer that reproduces the draw.
    """

    patch: np.ndarray
    label: int
    angle: float
    offset: tuple
    seed: int


def transform_digit(img, seed, label: int = -1, patch_size: int = 30,
                    strict: bool = False) -> TransformedSample:
    """Rotate by a uniform random angle, crop to content, place randomly.

    Rotation is bilinear about the image centre with the frame expanded so
    nothing is lost to the frame itself.  The content bounding box is then
    cropped out and embedded at a uniformly random offset in a zero patch,
    fully contained.  A bounding box larger than the patch is
    centre-cropped, or raises ContentTooLarge when strict is set.
    Deterministic given seed (angle drawn first, then row, then column).
    """
    img = np.asarray(img, dtype=float)
    rng = np.random.default_rng(seed)
    angle = rng.uniform(0.0, 2.0 * math.pi)
    rotated = ndimage.rotate(img, math.degrees(angle), reshape=True, order=1)
    rotated = np.clip(rotated, 0.0, 1.0)
    mask = rotated > 1e-12
    patch = np.zeros((patch_size, patch_size))
    if not mask.any():
        return TransformedSample(patch=patch, label=label, angle=angle,
                                 offset=(0, 0), seed=int(seed))
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    content = rotated[rows[0]:rows[-1] + 1, cols[0]:cols[-1] + 1]
    h, w = content.shape
    if h > patch_size or w > patch_size:
        if strict:
            raise ContentTooLarge("rotated content %dx%d exceeds %dx%d"
                                  % (h, w, patch_size, patch_size))
        r0 = max(0, (h - patch_size) // 2)
        c0 = max(0, (w - patch_size) // 2)
        content = content[r0:r0 + patch_size, c0:c0 + patch_size]
        h, w = content.shape
    dr = int(rng.integers(0, patch_size - h + 1))
    dc = int(rng.integers(0, patch_size - w + 1))
    patch[dr:dr + h, dc:dc + w] = content
    return TransformedSample(patch=patch, label=label, angle=angle,
                             offset=(dr, dc), seed=int(seed))


def sample_seed(master: int, index: int) -> int:
    """Stable per-sample seed derived from the master seed and a dataset
    index, via SeedSequence so nearby indices do not correlate."""
    return int(np.random.SeedSequence([int(master), int(index)])
               .generate_state(1, np.uint64)[0])


def extract_features(samples, plan: ProjectionPlan, table: CGTable,
                     kind: str = "bispectrum", reduced: bool = True,
                     jobs: int = 1) -> np.ndarray:
    """Feature matrix, one row per sample, order preserved regardless of jobs.

    kind "bispectrum": row i = feature_vector(bispectrum(project(sample),
    table)).  kind "raw": flattened pixels, the baseline path.  samples
    may be TransformedSample objects or bare 2-D arrays.
    """
    patches = [s.patch if isinstance(s, TransformedSample)
               else np.asarray(s, dtype=float) for s in samples]
    if kind == "raw":
        return np.stack([p.ravel() for p in patches]) if patches else np.empty((0, 0))
    if kind != "bispectrum":
        raise ValueError("unknown feature kind %r" % kind)
    if plan.L != table.L:
        raise BandLimitMismatch("plan has L=%d, table has L=%d" % (plan.L, table.L))

    def row(patch):
        coeffs = project_image(ImagePatch(pixels=patch), plan)
        return feature_vector(bispectrum(coeffs, table, reduced=reduced))

    if jobs > 1 and len(patches) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(row, patches))
    else:
        rows = [row(p) for p in patches]
    return np.stack(rows) if rows else np.empty((0, 0))


@dataclass(frozen=True)
class GramMatrix:
    values: np.ndarray
    kind: str
    sigma: float = None


def _sq_dists(x, y):
    """Pairwise squared Euclidean distances, clipped against negative
    round-off from the expansion |x|^2 - 2<x,y> + |y|^2."""
    xx = np.einsum("ij,ij->i", x, x)
    yy = np.einsum("ij,ij->i", y, y)
    d2 = xx[:, None] - 2.0 * (x @ y.T) + yy[None, :]
    return np.maximum(d2, 0.0)


def gram(features, kind: str, sigma: float = None) -> GramMatrix:
    """K_ij = <x_i, x_j> (linear) or exp(-|x_i - x_j|^2 / (2 sigma^2)) (rbf)."""
    x = np.asarray(features, dtype=float)
    if kind == "linear":
        k = x @ x.T
        return GramMatrix(values=0.5 * (k + k.T), kind=kind)
    if kind == "rbf":
        if sigma is None or not sigma > 0:
            raise BadSigma("rbf kernel needs sigma > 0, got %r" % (sigma,))
        d2 = _sq_dists(x, x)
        np.fill_diagonal(d2, 0.0)
        k = np.exp(-d2 / (2.0 * sigma ** 2))
        return GramMatrix(values=0.5 * (k + k.T), kind=kind, sigma=float(sigma))
    raise ValueError("unknown kernel kind %r" % kind)


def gram_cross(features_a, features_b, kind: str, sigma: float = None) -> np.ndarray:
    """Rectangular kernel block K_ij = k(a_i, b_j); used for prediction."""
    a = np.asarray(features_a, dtype=float)
    b = np.asarray(features_b, dtype=float)
    if kind == "linear":
        return a @ b.T
    if kind == "rbf":
        if sigma is None or not sigma > 0:
            raise BadSigma("rbf kernel needs sigma > 0, got %r" % (sigma,))
        return np.exp(-_sq_dists(a, b) / (2.0 * sigma ** 2))
    raise ValueError("unknown kernel kind %r" % kind)


def median_pairwise_distance(features) -> float:
    """Median of the strictly positive pairwise Euclidean distances; the
    reference scale for RBF width grids."""
    x = np.asarray(features, dtype=float)
    d = np.sqrt(_sq_dists(x, x)[np.triu_indices(x.shape[0], k=1)])
    d = d[d > 0]
    return float(np.median(d)) if d.size else 1.0


def train_binary(gram_k, labels, lam: float) -> np.ndarray:
    """Kernel regularized least squares: solve (K + lambda I) alpha = y.

    labels must be +-1 and lambda > 0.  The predictor on a new point x is
    sign(sum_j alpha_j k(x, x_j)).
    """
    k = gram_k.values if isinstance(gram_k, GramMatrix) else np.asarray(gram_k, dtype=float)
    y = np.asarray(labels, dtype=float)
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise ValueError("gram matrix must be square, got %r" % (k.shape,))
    if y.shape != (k.shape[0],) or not np.all(np.abs(y) == 1.0):
        raise ValueError("labels must be a +-1 vector matching the gram size")
    if not lam > 0:
        raise ValueError("lambda must be positive, got %r" % (lam,))
    try:
        alpha = np.linalg.solve(k + lam * np.eye(k.shape[0]), y)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    if not np.all(np.isfinite(alpha)):
        raise SingularSystem("non-finite dual coefficients")
    return alpha


def predict(k_cross, alpha) -> np.ndarray:
    """sign(K_cross @ alpha) with the tie sign(0) resolved to +1."""
    scores = np.asarray(k_cross) @ np.asarray(alpha)
    return np.where(scores >= 0, 1, -1)


def split_error(k_train, k_cross, y_train, y_test, lam: float) -> float:
    """Train-and-test error fraction for one split at one lambda."""
    alpha = train_binary(k_train, y_train, lam)
    return float(np.mean(predict(k_cross, alpha) != np.asarray(y_test)))


@dataclass(frozen=True)
class CVChoice:
    kind: str
    lam: float
    sigma: float
    cv_error: float


def _stratified_folds(labels, folds, rng):
    """Fold id per sample; each class is shuffled then dealt round-robin,
    so every fold sees every class when counts allow."""
    labels = np.asarray(labels)
    fold_of = np.empty(labels.size, dtype=int)
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        idx = idx[rng.permutation(idx.size)]
        fold_of[idx] = np.arange(idx.size) % folds
    return fold_of


def cross_validate(features, labels, kind: str, lam_grid, sigma_scales=None,
                   folds: int = 10, seed: int = 0) -> CVChoice:
    """Pick (lambda, sigma) by k-fold cross validation.

    Fold assignment is stratified and deterministic given seed.  The
    regularizer actually applied is lam * mean(diag(K_train)), which makes
    the dimensionless lam grid meaningful for both kernels.  Ties in mean
    CV error break toward larger lambda, then larger sigma.  For linear
    kernels sigma_scales is ignored and sigma comes back as nan; for rbf,
    sigma candidates are sigma_scales times the median pairwise distance
    of the whole feature set.
    """
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=float)
    if folds < 2:
        raise InsufficientData("need at least 2 folds")
    classes, counts = np.unique(y, return_counts=True)
    if counts.min() < folds:
        raise InsufficientData("smallest class has %d samples for %d folds"
                               % (counts.min(), folds))
    rng = np.random.default_rng(seed)
    fold_of = _stratified_folds(y, folds, rng)
    if kind == "linear":
        sigmas = [float("nan")]
        grams = {sigmas[0]: gram(x, "linear").values}
    elif kind == "rbf":
        if not sigma_scales:
            raise BadSigma("rbf cross-validation needs sigma_scales")
        scale = median_pairwise_distance(x)
        sigmas = [float(s) * scale for s in sigma_scales]
        d2 = _sq_dists(x, x)
        np.fill_diagonal(d2, 0.0)
        grams = {s: np.exp(-d2 / (2.0 * s ** 2)) for s in sigmas}
    else:
        raise ValueError("unknown kernel kind %r" % kind)
    best = None
    for sigma in sigmas:
        k_full = grams[sigma]
        for lam in lam_grid:
            errs = []
            for f in range(folds):
                tr = fold_of != f
                te = ~tr
                k_tr = k_full[np.ix_(tr, tr)]
                lam_eff = float(lam) * float(np.mean(np.diag(k_tr)))
                errs.append(split_error(k_tr, k_full[np.ix_(te, tr)],
                                        y[tr], y[te], lam_eff))
            cand = (np.mean(errs), -float(lam), -(sigma if sigma == sigma else 0.0))
            if best is None or cand < best[0]:
                best = (cand, CVChoice(kind=kind, lam=float(lam), sigma=sigma,
                                       cv_error=float(np.mean(errs))))
    return best[1]


_DEFAULT_PAIRS = ((0, 1), (2, 3), (4, 5), (6, 7), (8, 9),
                  (0, 8), (1, 7), (3, 5), (4, 9), (2, 6))


@dataclass(frozen=True)
class EvalConfig:
    """Everything a pairwise run depends on, so runs are reproducible.

    pool_start/pool_count select the image pool (default: the second
    thousand).  per_class caps how many pool images of each digit are
    used (None: all, trimmed to an even count for the 50/50 splits).
    """

    L: int = 15
    a: float = 2.0
    sigma_smooth: float = 0.0
    patch_size: int = 30
    seed: int = 7
    splits: int = 10
    per_class: int = None
    pool_start: int = 1000
    pool_count: int = 1000
    pairs: tuple = _DEFAULT_PAIRS
    kernels: tuple = ("linear", "rbf")
    lam_grid: tuple = tuple(np.logspace(-4, 0, 7))
    sigma_scales: tuple = (0.5, 1.0, 2.0, 4.0, 8.0)
    folds_linear: int = 10
    folds_rbf: int = 3
    standardize: bool = False
    reduced: bool = True
    jobs: int = 1


@dataclass(frozen=True)
class PairResult:
    digit_a: int
    digit_b: int
    feature_kind: str
    kernel_kind: str
    mean_error: float
    std_error: float
    splits: int
    errors: tuple


def _standardized(train, test):
    mu = train.mean(axis=0)
    sd = train.std(axis=0)
    sd = np.where(sd < 1e-12, 1.0, sd)
    return (train - mu) / sd, (test - mu) / sd


def _even_split(idx_by_class, split_seed):
    """Per-class random half/half partition; deterministic given seed."""
    rng = np.random.default_rng(split_seed)
    train, test = [], []
    for idx in idx_by_class:
        perm = idx[rng.permutation(idx.size)]
        half = idx.size // 2
        train.append(perm[:half])
        test.append(perm[half:2 * half])
    return np.concatenate(train), np.concatenate(test)


def _select_even(indices, per_class):
    idx = np.asarray(indices)
    if per_class is not None:
        idx = idx[:per_class]
    idx = idx[:idx.size - (idx.size % 2)]
    return idx


def _eval_pair(samples, a_digit, b_digit, config, plan, table) -> list:
    """Split/CV/train/test loop for one digit pair over prepared samples."""
    y = np.where(np.array([s.label for s in samples]) == a_digit, 1.0, -1.0)
    feats = {
        "bispectrum": extract_features(samples, plan, table, kind="bispectrum",
                                       reduced=config.reduced, jobs=config.jobs),
        "raw_pixels": extract_features(samples, plan, table, kind="raw"),
    }
    # class index lists positionally within this pair's sample block
    local_by_class = [np.flatnonzero(y > 0), np.flatnonzero(y < 0)]
    errors = {(fk, kk): [] for fk in feats for kk in config.kernels}
    for s in range(config.splits):
        split_seed = sample_seed(config.seed, 10_000_019 + s)
        tr, te = _even_split(local_by_class, split_seed)
        for fk, x in feats.items():
            x_tr, x_te = x[tr], x[te]
            if config.standardize:
                x_tr, x_te = _standardized(x_tr, x_te)
            for kk in config.kernels:
                folds = config.folds_linear if kk == "linear" else config.folds_rbf
                choice = cross_validate(x_tr, y[tr], kk, config.lam_grid,
                                        sigma_scales=config.sigma_scales,
                                        folds=folds,
                                        seed=sample_seed(config.seed,
                                                         20_000_003 + s))
                k_tr = gram(x_tr, kk, sigma=choice.sigma).values
                k_te = gram_cross(x_te, x_tr, kk, sigma=choice.sigma)
                lam_eff = choice.lam * float(np.mean(np.diag(k_tr)))
                err = split_error(k_tr, k_te, y[tr], y[te], lam_eff)
                errors[(fk, kk)].append(100.0 * err)
    out = []
    for (fk, kk), errs in errors.items():
        errs = np.array(errs)
        out.append(PairResult(digit_a=a_digit, digit_b=b_digit,
                              feature_kind=fk, kernel_kind=kk,
                              mean_error=float(errs.mean()),
                              std_error=float(errs.std()),
                              splits=config.splits,
                              errors=tuple(errs)))
    return out


def pairwise_eval(dataset: DigitDataset, config: EvalConfig,
                  plan: ProjectionPlan = None, table: CGTable = None,
                  samples: list = None) -> list:
    """Binary classification errors for each digit pair, feature kind and
    kernel, averaged over random even splits.

    Both feature paths see the same transformed samples and the same
    splits.  plan/table may be passed in to reuse tables across runs;
    otherwise they are built from the config.  When samples (a list of
    pre-transformed TransformedSample, e.g. from a prep cache) is given,
    the dataset and the pool/transform settings are ignored and per-digit
    selection happens directly on it.
    """
    from .sht import build_projection_plan
    from .so3 import build_cg_table

    if plan is None:
        plan = build_projection_plan(config.patch_size, L=config.L, a=config.a,
                                     sigma=config.sigma_smooth)
    if table is None:
        table = build_cg_table(config.L)
    results = []
    if samples is not None:
        labels = np.array([s.label for s in samples])
        for (a_digit, b_digit) in config.pairs:
            block = []
            for digit in (a_digit, b_digit):
                idx = _select_even(np.flatnonzero(labels == digit), config.per_class)
                if idx.size < 2:
                    raise InsufficientData("digit %d has %d usable cached samples"
                                           % (digit, idx.size))
                block.extend(samples[i] for i in idx)
            results.extend(_eval_pair(block, a_digit, b_digit, config, plan, table))
        return results
    pool_stop = config.pool_start + config.pool_count
    pool = np.arange(len(dataset))[config.pool_start:pool_stop]
    for (a_digit, b_digit) in config.pairs:
        all_idx = []
        for digit in (a_digit, b_digit):
            idx = _select_even(pool[dataset.labels[pool] == digit], config.per_class)
            if idx.size < 2:
                raise InsufficientData("digit %d has %d usable pool samples"
                                       % (digit, idx.size))
            all_idx.append(idx)
        block = [transform_digit(dataset.images[i],
                                 sample_seed(config.seed, int(i)),
                                 label=int(dataset.labels[i]),
                                 patch_size=config.patch_size)
                 for i in np.concatenate(all_idx)]
        results.extend(_eval_pair(block, a_digit, b_digit, config, plan, table))
    return results


def write_results_csv(fh, results) -> None:
    """Pair/feature/kernel error table, mean and std in percent."""
    fh.write("digit_a,digit_b,feature_kind,kernel,mean_error_pct,std_error_pct,splits\n")
    for r in results:
        fh.write("%d,%d,%s,%s,%.6f,%.6f,%d\n"
                 % (r.digit_a, r.digit_b, r.feature_kind, r.kernel_kind,
                    r.mean_error, r.std_error, r.splits))
