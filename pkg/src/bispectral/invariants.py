"""Rotation-invariant spectra of spherical expansions.

The power spectrum p_l = sum_m |f_{lm}|^2 is invariant but phase-blind:
any per-band unitary mixing leaves it unchanged.  The bispectrum

    p_{l1,l2,l} = sum_m f_{lm} conj( sum_{m1} C^{l1,l2,l}_{m1,m-m1,m}
                                     f_{l1,m1} f_{l2,m-m1} )

couples bands pairwise through Clebsch-Gordan coefficients and retains
relative phase, which is what separates genuinely different functions
with identical band energies.  Invariance follows from D^l unitarity plus
the tensor decomposition identity; it holds for arbitrary complex
coefficient vectors, not just those of real images.

The inner sum runs only over the band max(-l1, m-l2) <= m1 <= min(l1, m+l2)
where the CG coefficient can be nonzero, giving O(L^5) multiply-adds over
all triples.  The triple list is canonical: l1 = 0..L, l2 = l1..L,
l = |l1-l2| .. min(l1+l2, L).  The cap at L is forced by data (no f_l
above the band-limit); the l1 <= l2 reduction drops features that are
duplicates up to sign, and can be disabled for the full grid.

For batch work the banded sums are flattened once per (table, grid) into
coordinate arrays, so evaluating one image is two fancy-indexed products,
a bincount and a segmented reduction.
"""

import io
import struct
from dataclasses import dataclass

import numpy as np

from .sht import DimensionMismatch, SphereCoeffs
from .so3 import CGTable

__all__ = [
    "BandLimitMismatch",
    "power_spectrum",
    "canonical_triples",
    "coupled_vector",
    "BispectrumFeatures",
    "bispectrum",
    "feature_vector",
    "features_from_vector",
    "banded_term_count",
    "write_features_csv",
    "read_features_csv",
    "features_to_binary",
    "features_from_binary",
]


class BandLimitMismatch(ValueError):
    """Coefficients and CG table were built for different band-limits."""


def power_spectrum(coeffs: SphereCoeffs) -> np.ndarray:
    """p_l = sum_m |f_{lm}|^2 for l = 0..L."""
    v = coeffs.values
    return np.array([np.vdot(v[l * l:(l + 1) ** 2], v[l * l:(l + 1) ** 2]).real
                     for l in range(coeffs.L + 1)])


def canonical_triples(L: int, reduced: bool = True):
    """Ordered (l1, l2, l) list; reduced keeps only l1 <= l2."""
    out = []
    for l1 in range(L + 1):
        for l2 in range(l1 if reduced else 0, L + 1):
            for l in range(abs(l1 - l2), min(l1 + l2, L) + 1):
                out.append((l1, l2, l))
    return out


def coupled_vector(coeffs: SphereCoeffs, l1: int, l2: int, l: int,
                   table: CGTable) -> np.ndarray:
    """g_m = sum_{m1} C^{l1,l2,l}_{m1,m-m1,m} f_{l1,m1} f_{l2,m-m1},
    the CG-contracted product of two bands; length 2l+1."""
    mat = table.get(l1, l2, l)
    v = coeffs.values
    g = np.zeros(2 * l + 1, dtype=complex)
    for m in range(-l, l + 1):
        lo, hi = max(-l1, m - l2), min(l1, m + l2)
        for m1 in range(lo, hi + 1):
            g[m + l] += (mat[m + l, m1 + l1]
                         * v[l1 * l1 + l1 + m1] * v[l2 * l2 + l2 + m - m1])
    return g


@dataclass(frozen=True)
class BispectrumFeatures:
    """Bispectrum values aligned with a canonical triple list."""

    L: int
    reduced: bool
    triples: tuple
    values: np.ndarray

    def get(self, l1: int, l2: int, l: int) -> complex:
        return self.values[self.triples.index((l1, l2, l))]


def _kernel(table: CGTable, reduced: bool):
    """Flattened banded summation: index arrays into the coefficient
    vector for both inner factors, CG values, the g-slot each term
    accumulates into, the coefficient index each g-slot pairs with, and
    per-triple segment offsets."""
    key = ("kernel", reduced)
    if key in table.kernels:
        return table.kernels[key]
    triples = tuple(canonical_triples(table.L, reduced))
    i1, i2, cc, fl, offsets = [], [], [], [], []
    slot_of_term = []
    slot = 0
    for (l1, l2, l) in triples:
        mat = table.get(l1, l2, l)
        offsets.append(len(fl))
        for m in range(-l, l + 1):
            lo, hi = max(-l1, m - l2), min(l1, m + l2)
            m1 = np.arange(lo, hi + 1)
            i1.append(l1 * l1 + l1 + m1)
            i2.append(l2 * l2 + l2 + m - m1)
            cc.append(mat[m + l, m1 + l1])
            slot_of_term.append(np.full(m1.size, slot))
            fl.append(l * l + l + m)
            slot += 1
    kern = {
        "triples": triples,
        "i1": np.concatenate(i1),
        "i2": np.concatenate(i2),
        "cc": np.concatenate(cc),
        "slot": np.concatenate(slot_of_term),
        "n_slots": slot,
        "fl": np.array(fl),
        "offsets": np.array(offsets),
    }
    table.kernels[key] = kern
    return kern


def bispectrum(coeffs: SphereCoeffs, table: CGTable,
               reduced: bool = True) -> BispectrumFeatures:
    """All p_{l1,l2,l} for the canonical triple grid at the table's L."""
    if coeffs.L != table.L:
        raise BandLimitMismatch("coeffs have L=%d, table has L=%d"
                                % (coeffs.L, table.L))
    kern = _kernel(table, reduced)
    v = coeffs.values
    terms = kern["cc"] * v[kern["i1"]] * v[kern["i2"]]
    g = (np.bincount(kern["slot"], weights=terms.real, minlength=kern["n_slots"])
         + 1j * np.bincount(kern["slot"], weights=terms.imag, minlength=kern["n_slots"]))
    contrib = g.conj() * v[kern["fl"]]
    values = np.add.reduceat(contrib, kern["offsets"])
    return BispectrumFeatures(L=table.L, reduced=reduced,
                              triples=kern["triples"], values=values)


def feature_vector(b: BispectrumFeatures) -> np.ndarray:
    """Interleaved real view [Re p_0, Im p_0, Re p_1, Im p_1, ...]."""
    out = np.empty(2 * b.values.size)
    out[0::2] = b.values.real
    out[1::2] = b.values.imag
    return out


def features_from_vector(vec, L: int, reduced: bool = True) -> BispectrumFeatures:
    """Inverse of feature_vector for a known (L, reduced) grid."""
    vec = np.asarray(vec, dtype=float)
    triples = tuple(canonical_triples(L, reduced))
    if vec.shape != (2 * len(triples),):
        raise DimensionMismatch("expected %d reals for L=%d, got shape %r"
                                % (2 * len(triples), L, vec.shape))
    return BispectrumFeatures(L=L, reduced=reduced, triples=triples,
                              values=vec[0::2] + 1j * vec[1::2])


def banded_term_count(L: int, reduced: bool = True) -> int:
    """Exact multiply-add count of the banded summation at band-limit L.

    This is the kernel's term-array length, computed without building it;
    the agreement is asserted in the tests.  Grows like L^5.
    """
    total = 0
    for (l1, l2, l) in canonical_triples(L, reduced):
        m = np.arange(-l, l + 1)
        total += int((np.minimum(l1, m + l2) - np.maximum(-l1, m - l2) + 1).sum())
    return total


def _triple_names(triples):
    return [f"{l1}_{l2}_{l}" for (l1, l2, l) in triples]


def write_features_csv(fh, rows, triples, ids=None) -> None:
    """One line per image: id, then interleaved re/im feature entries.

    The header row documents the canonical triple order as re_l1_l2_l /
    im_l1_l2_l column pairs.  fh is an open text file (or any write()
    target); rows is a (n, 2*|triples|) real matrix.
    """
    rows = np.asarray(rows, dtype=float)
    names = _triple_names(triples)
    header = "id," + ",".join("re_%s,im_%s" % (n, n) for n in names)
    fh.write(header + "\n")
    for i, row in enumerate(rows):
        rid = str(i) if ids is None else str(ids[i])
        fh.write(rid + "," + ",".join("%.17g" % x for x in row) + "\n")


def read_features_csv(fh):
    """Inverse of write_features_csv: (ids, matrix, triples)."""
    header = fh.readline().strip().split(",")
    if header[0] != "id" or (len(header) - 1) % 2 != 0:
        raise ValueError("malformed feature CSV header")
    triples = []
    for col in header[1::2]:
        if not col.startswith("re_"):
            raise ValueError("malformed feature CSV header column %r" % col)
        triples.append(tuple(int(t) for t in col[3:].split("_")))
    ids, rows = [], []
    for line in fh:
        line = line.strip()
        if not line:
            continue
        parts = line.split(",")
        ids.append(parts[0])
        rows.append(np.array([float(x) for x in parts[1:]]))
    matrix = np.vstack(rows) if rows else np.empty((0, 2 * len(triples)))
    return ids, matrix, tuple(triples)


_FEAT_MAGIC = b"BISPFT01"


def features_to_binary(rows, L: int, reduced: bool, triples) -> bytes:
    """Packed little-endian feature matrix with the triple list inline."""
    rows = np.asarray(rows, dtype=float)
    buf = io.BytesIO()
    buf.write(_FEAT_MAGIC)
    buf.write(struct.pack("<IIII", L, 1 if reduced else 0, len(triples), rows.shape[0]))
    buf.write(np.asarray(triples, dtype="<i4").tobytes())
    buf.write(rows.astype("<f8").tobytes())
    return buf.getvalue()


def features_from_binary(blob: bytes):
    """Inverse of features_to_binary: (rows, L, reduced, triples)."""
    if blob[:8] != _FEAT_MAGIC:
        raise ValueError("bad magic %r" % blob[:8])
    L, reduced, n_triples, n_rows = struct.unpack_from("<IIII", blob, 8)
    off = 24
    triples = np.frombuffer(blob, dtype="<i4", count=3 * n_triples, offset=off)
    triples = tuple(tuple(int(v) for v in t) for t in triples.reshape(-1, 3))
    off += 12 * n_triples
    rows = np.frombuffer(blob, dtype="<f8", count=n_rows * 2 * n_triples, offset=off)
    if rows.size != n_rows * 2 * n_triples:
        raise ValueError("truncated feature block")
    return rows.reshape(n_rows, 2 * n_triples).copy(), int(L), bool(reduced), triples
