"""Spherical harmonics and projection of square image patches onto the sphere.

An N x N patch is identified with samples of a function on the sphere by
sending pixel centres to polar coordinates

    x = (i - 1/2)/N - 1/2,   y = (j - 1/2)/N - 1/2
    theta = a sqrt(x^2 + y^2),   phi = atan2(y, x) mod 2 pi

so the patch centre lands on the north pole, translation of the image
content moves it over the sphere, and in-plane rotation about the centre
becomes rotation about the polar axis.  The magnification a controls how
much of the sphere the patch covers; a sqrt(2)/2 must stay below pi or
the corners would wrap past the south pole.

Expansion coefficients up to band limit L are obtained by direct
summation against conjugated harmonics,

    c_lm = sum_ij M[i, j] w(l) conj(Y_lm(theta_ij, phi_ij))

with an optional Gaussian band taper w(l) = exp(-l^2 sigma^2 / 2).  The
sum over scattered pixel locations is not a quadrature, so this is a
feature map rather than an invertible transform; band-limited functions
sampled on proper quadrature grids do round-trip (see the tests).
"""

import json
import math
import struct
from dataclasses import dataclass

import numpy as np

__all__ = [
    "DomainError",
    "DimensionMismatch",
    "MagnificationTooLarge",
    "PGMParseError",
    "assoc_legendre",
    "spherical_harmonic",
    "ImagePatch",
    "ProjectionPlan",
    "build_projection_plan",
    "project_image",
    "SphereCoeffs",
    "synthesize",
]


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class DimensionMismatch(ValueError):
    """Array shapes are inconsistent with the declared sizes."""


class MagnificationTooLarge(ValueError):
    """The patch corners would map past the south pole."""


class PGMParseError(ValueError):
    """Malformed PGM input; .offset is the byte position of the problem."""

    def __init__(self, message, offset):
        self.offset = int(offset)
        super().__init__("%s (byte offset %d)" % (message, offset))


_LOGFACT = [0.0]


def _logfact(n: int) -> float:
    while len(_LOGFACT) <= n:
        _LOGFACT.append(_LOGFACT[-1] + math.log(len(_LOGFACT)))
    return _LOGFACT[n]


def assoc_legendre(l: int, m: int, x):
    """Associated Legendre P_l^m(x) with the Condon-Shortley phase.

    Upward three-term recurrence in degree, seeded by the closed form

        P_m^m(x) = (-1)^m (2m-1)!! (1 - x^2)^{m/2}

    Requires 0 <= m <= l and |x| <= 1; x may be an array.
    """
    if not 0 <= m <= l:
        raise DomainError("need 0 <= m <= l, got l=%d m=%d" % (l, m))
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) > 1 + 1e-12):
        raise DomainError("argument outside [-1, 1]")
    x = np.clip(x, -1.0, 1.0)
    pmm = np.ones_like(x)
    if m > 0:
        somx2 = np.sqrt((1.0 - x) * (1.0 + x))
        fact = 1.0
        for _ in range(m):
            pmm = pmm * (-fact * somx2)
            fact += 2.0
    if l == m:
        return pmm
    pmmp1 = x * (2 * m + 1) * pmm
    if l == m + 1:
        return pmmp1
    for ll in range(m + 2, l + 1):
        pmm, pmmp1 = pmmp1, (x * (2 * ll - 1) * pmmp1 - (ll + m - 1) * pmm) / (ll - m)
    return pmmp1


def spherical_harmonic(l: int, m: int, theta, phi):
    """Orthonormal Y_l^m(theta, phi) on the unit sphere.

    Y_l^m = sqrt((2l+1)/(4 pi) (l-m)!/(l+m)!) P_l^m(cos theta) e^{i m phi},
    with Y_l^{-m} = (-1)^m conj(Y_l^m).  Normalised so that the integral
    of |Y_l^m|^2 over the sphere is 1.  theta must lie in [0, pi].
    """
    if l < 0 or abs(m) > l:
        raise DomainError("need l >= 0 and |m| <= l, got l=%d m=%d" % (l, m))
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if np.any(theta < -1e-12) or np.any(theta > math.pi + 1e-12):
        raise DomainError("theta outside [0, pi]")
    if m < 0:
        y = spherical_harmonic(l, -m, theta, phi)
        return (-1) ** (-m) * y.conj()
    lognorm = 0.5 * (math.log((2 * l + 1) / (4.0 * math.pi))
                     + _logfact(l - m) - _logfact(l + m))
    p = assoc_legendre(l, m, np.cos(theta))
    return math.exp(lognorm) * p * np.exp(1j * m * phi)


@dataclass(frozen=True)
class ImagePatch:
    """A square grayscale patch with intensities in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.pixels, dtype=float)
        if p.ndim != 2 or p.shape[0] != p.shape[1] or p.shape[0] == 0:
            raise DimensionMismatch("patch must be square and non-empty, got %r" % (p.shape,))
        object.__setattr__(self, "pixels", np.clip(p, 0.0, 1.0))

    @property
    def n(self) -> int:
        return self.pixels.shape[0]

    @classmethod
    def from_csv(cls, path) -> "ImagePatch":
        """Read a patch from a plain CSV grid of numbers.

        Values are rescaled by the maximum if it exceeds 1, so both unit
        and 8-bit style grids are accepted.
        """
        grid = np.loadtxt(path, delimiter=",", dtype=float, ndmin=2)
        if grid.size and grid.max() > 1.0:
            grid = grid / grid.max()
        return cls(pixels=grid)

    @classmethod
    def from_pgm(cls, path) -> "ImagePatch":
        """Read a P2 (ASCII) or P5 (binary) PGM file."""
        with open(path, "rb") as fh:
            data = fh.read()
        return cls(pixels=_parse_pgm(data))


def _pgm_tokens(data, start):
    """Yield (token, offset) from PGM header bytes, skipping comments."""
    pos = start
    n = len(data)
    while pos < n:
        c = data[pos:pos + 1]
        if c.isspace():
            pos += 1
        elif c == b"#":
            while pos < n and data[pos:pos + 1] != b"\n":
                pos += 1
        else:
            end = pos
            while end < n and not data[end:end + 1].isspace() and data[end:end + 1] != b"#":
                end += 1
            yield data[pos:end], pos
            pos = end
    return


def _parse_pgm(data):
    if data[:2] not in (b"P2", b"P5"):
        raise PGMParseError("not a PGM file (magic %r)" % data[:2], 0)
    binary = data[:2] == b"P5"
    tokens = _pgm_tokens(data, 2)
    header = []
    for tok, off in tokens:
        try:
            header.append((int(tok), off))
        except ValueError:
            raise PGMParseError("expected integer in header, got %r" % tok, off) from None
        if len(header) == 3:
            break
    if len(header) < 3:
        raise PGMParseError("truncated header", len(data))
    (width, w_off), (height, _), (maxval, m_off) = header
    if width != height:
        raise PGMParseError("patch must be square, got %dx%d" % (width, height), w_off)
    if not 0 < maxval < 65536:
        raise PGMParseError("maxval %d out of range" % maxval, m_off)
    count = width * height
    if binary:
        # single whitespace byte separates header from raster
        raster_off = header[2][1] + len(str(maxval)) + 1
        if maxval < 256:
            raw = np.frombuffer(data, dtype=np.uint8, count=-1, offset=raster_off)
        else:
            raw = np.frombuffer(data[raster_off:], dtype=">u2")
        if raw.size < count:
            raise PGMParseError("raster has %d samples, need %d" % (raw.size, count),
                                len(data))
        vals = raw[:count].astype(float)
    else:
        vals = np.empty(count, dtype=float)
        got = 0
        last = len(data)
        for tok, off in tokens:
            if got >= count:
                break
            try:
                v = int(tok)
            except ValueError:
                raise PGMParseError("expected pixel value, got %r" % tok, off) from None
            if v < 0 or v > maxval:
                raise PGMParseError("pixel value %d exceeds maxval %d" % (v, maxval), off)
            vals[got] = v
            got += 1
            last = off
        if got < count:
            raise PGMParseError("raster has %d samples, need %d" % (got, count), last)
    return (vals / maxval).reshape(height, width)


@dataclass(frozen=True)
class ProjectionPlan:
    """Precomputed pixel-to-coefficient weights for one (N, L, a, sigma).

    weights has shape ((L+1)^2, N^2); row index is the flat harmonic index
    l^2 + l + m, column index is the row-major pixel index.  Building the
    plan costs O(N^2 L^2) harmonic evaluations; applying it to a patch is
    a single matrix-vector product, so plans should be reused across
    patches.
    """

    n: int
    L: int
    a: float
    sigma: float
    conjugate: bool
    weights: np.ndarray
    thetas: np.ndarray
    phis: np.ndarray


def build_projection_plan(n: int, L: int = 15, a: float = 2.0, sigma: float = 0.0,
                          conjugate: bool = True) -> ProjectionPlan:
    """Map pixel centres to the sphere and tabulate harmonic weights.

    conjugate=True (default) sums the patch against conj(Y_lm), which is
    the convention under which expansion coefficients of a real function
    satisfy c_{l,-m} = (-1)^m conj(c_{lm}).  conjugate=False sums against
    Y_lm itself; the two differ by relabelling m -> -m and a sign, and
    yield identical invariant features.
    """
    if n < 1:
        raise DimensionMismatch("patch size must be positive")
    if L < 0:
        raise DomainError("band limit must be non-negative")
    if a <= 0:
        raise DomainError("magnification must be positive")
    if a * math.sqrt(2.0) / 2.0 >= math.pi:
        raise MagnificationTooLarge(
            "a=%g maps patch corners to theta >= pi; need a < %g" % (a, math.pi * math.sqrt(2.0)))
    if sigma < 0:
        raise DomainError("band taper width must be non-negative")
    idx = (np.arange(1, n + 1) - 0.5) / n - 0.5
    x, y = np.meshgrid(idx, idx, indexing="ij")
    theta = a * np.sqrt(x * x + y * y)
    phi = np.mod(np.arctan2(y, x), 2.0 * math.pi)
    tflat = theta.ravel()
    pflat = phi.ravel()
    weights = np.empty(((L + 1) ** 2, n * n), dtype=complex)
    for l in range(L + 1):
        taper = math.exp(-0.5 * (l * sigma) ** 2) if sigma > 0 else 1.0
        for m in range(-l, l + 1):
            y_lm = spherical_harmonic(l, m, tflat, pflat)
            weights[l * l + l + m] = taper * (y_lm.conj() if conjugate else y_lm)
    return ProjectionPlan(n=n, L=L, a=a, sigma=sigma, conjugate=conjugate,
                          weights=weights, thetas=theta, phis=phi)


@dataclass(frozen=True)
class SphereCoeffs:
    """Coefficients c_lm for l <= L, stored flat in index order l^2 + l + m."""

    L: int
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape != ((self.L + 1) ** 2,):
            raise DimensionMismatch(
                "expected %d coefficients for L=%d, got shape %r"
                % ((self.L + 1) ** 2, self.L, v.shape))
        object.__setattr__(self, "values", v)

    @staticmethod
    def index(l: int, m: int) -> int:
        if abs(m) > l:
            raise DomainError("|m| > l")
        return l * l + l + m

    def get(self, l: int, m: int) -> complex:
        return self.values[self.index(l, m)]

    def band(self, l: int) -> np.ndarray:
        """The 2l+1 coefficients of degree l, m running -l..l."""
        if not 0 <= l <= self.L:
            raise DomainError("band %d outside 0..%d" % (l, self.L))
        return self.values[l * l:(l + 1) ** 2]

    def to_json(self) -> str:
        coeffs = [[float(v.real), float(v.imag)] for v in self.values]
        return json.dumps({"L": self.L, "coeffs": coeffs})

    @classmethod
    def from_json(cls, text: str) -> "SphereCoeffs":
        doc = json.loads(text)
        values = np.array([complex(re, im) for re, im in doc["coeffs"]])
        return cls(L=int(doc["L"]), values=values)

    MAGIC = b"SPHCOEF1"

    def to_binary(self) -> bytes:
        pairs = np.empty(2 * self.values.size, dtype="<f8")
        pairs[0::2] = self.values.real
        pairs[1::2] = self.values.imag
        return self.MAGIC + struct.pack("<I", self.L) + pairs.tobytes()

    @classmethod
    def from_binary(cls, blob: bytes) -> "SphereCoeffs":
        if blob[:8] != cls.MAGIC:
            raise ValueError("bad magic %r" % blob[:8])
        (L,) = struct.unpack_from("<I", blob, 8)
        count = (L + 1) ** 2
        pairs = np.frombuffer(blob, dtype="<f8", count=2 * count, offset=12)
        if pairs.size != 2 * count:
            raise ValueError("truncated coefficient block")
        return cls(L=int(L), values=pairs[0::2] + 1j * pairs[1::2])


def project_image(patch: ImagePatch, plan: ProjectionPlan) -> SphereCoeffs:
    """Apply a projection plan to a patch: c = W @ vec(M)."""
    if patch.n != plan.n:
        raise DimensionMismatch("patch is %dx%d but plan expects %dx%d"
                                % (patch.n, patch.n, plan.n, plan.n))
    return SphereCoeffs(L=plan.L, values=plan.weights @ patch.pixels.ravel())


def synthesize(coeffs: SphereCoeffs, theta, phi):
    """Evaluate sum_lm c_lm Y_lm at the given points on the sphere."""
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    out = np.zeros(np.broadcast(theta, phi).shape, dtype=complex)
    for l in range(coeffs.L + 1):
        for m in range(-l, l + 1):
            c = coeffs.values[l * l + l + m]
            if c != 0:
                out = out + c * spherical_harmonic(l, m, theta, phi)
    return out
