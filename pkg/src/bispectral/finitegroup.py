"""Fourier analysis and bispectra on arbitrary finite groups.

A group is given concretely as a multiplication table.  Signals are
complex vectors indexed by group elements, translation acts on the left,
f^z[x] = f[z^-1 x], and the Fourier transform at a unitary irreducible
representation rho is the matrix

    fhat(rho) = sum_x f[x] rho(x)

so that translation becomes left multiplication: fhat^z(rho) = rho(z) fhat(rho).
The power spectrum fhat(rho)^H fhat(rho) and the bispectrum built from the
Clebsch-Gordan decomposition of tensor product representations are then
translation invariant.

The Clebsch-Gordan matrices are found numerically: projection of random
matrices by group averaging yields intertwiners from each irrep into the
tensor product, Schur orthogonality makes them easy to orthonormalise,
and stacking their columns gives the unitary change of basis.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "AxiomViolation",
    "DecompositionFailure",
    "FiniteGroupSpec",
    "IrrepSet",
    "GroupCGDecomposition",
    "cyclic_group",
    "symmetric_group_3",
    "cyclic_irreps",
    "s3_irreps",
    "validate_group",
    "validate_irreps",
    "left_translate",
    "group_fourier",
    "group_power_spectrum",
    "characters",
    "tensor_multiplicities",
    "clebsch_gordan_matrix",
    "build_group_cg",
    "group_bispectrum",
]


class AxiomViolation(ValueError):
    """A multiplication table fails a group axiom.

    Carries which axiom broke and a witness tuple of element indices.
    """

    def __init__(self, axiom, witnesses, message=None):
        self.axiom = axiom
        self.witnesses = tuple(int(w) for w in witnesses)
        super().__init__(message or "%s fails at witnesses %r" % (axiom, self.witnesses))


class DecompositionFailure(ValueError):
    """Clebsch-Gordan decomposition could not be completed or verified."""


@dataclass(frozen=True)
class FiniteGroupSpec:
    """A finite group as data: multiplication table, identity, inverses.

    mult[i, j] is the index of g_i g_j.  Construct through the factory
    functions or pass validated tables; validate_group checks the axioms.
    """

    order: int
    mult: np.ndarray
    identity: int
    inverse: np.ndarray

    def multiply(self, i, j):
        return int(self.mult[i, j])

    def inv(self, i):
        return int(self.inverse[i])


def cyclic_group(n: int) -> FiniteGroupSpec:
    """Z_n with elements 0..n-1 under addition mod n."""
    if n < 1:
        raise ValueError("group order must be positive")
    idx = np.arange(n)
    mult = (idx[:, None] + idx[None, :]) % n
    return FiniteGroupSpec(order=n, mult=mult, identity=0, inverse=(n - idx) % n)


# Permutations of {0,1,2} in lexicographic order; composition is
# (s t)(i) = s[t[i]], matching left action on points.
_S3_PERMS = (
    (0, 1, 2),
    (0, 2, 1),
    (1, 0, 2),
    (1, 2, 0),
    (2, 0, 1),
    (2, 1, 0),
)


def symmetric_group_3() -> FiniteGroupSpec:
    """S_3, the smallest non-abelian group, as permutations of three points."""
    lookup = {p: i for i, p in enumerate(_S3_PERMS)}
    n = len(_S3_PERMS)
    mult = np.empty((n, n), dtype=int)
    inverse = np.empty(n, dtype=int)
    for i, s in enumerate(_S3_PERMS):
        for j, t in enumerate(_S3_PERMS):
            mult[i, j] = lookup[tuple(s[t[k]] for k in range(3))]
        inv = [0, 0, 0]
        for k in range(3):
            inv[s[k]] = k
        inverse[i] = lookup[tuple(inv)]
    return FiniteGroupSpec(order=n, mult=mult, identity=0, inverse=inverse)


def validate_group(spec: FiniteGroupSpec) -> None:
    """Check closure, associativity, identity and inverses.

    Raises AxiomViolation naming the broken axiom with a witness tuple.
    O(n^3) for associativity, vectorised.
    """
    n = spec.order
    mult = np.asarray(spec.mult)
    if mult.shape != (n, n):
        raise AxiomViolation("closure", (n,), "multiplication table must be order x order")
    if mult.min() < 0 or mult.max() >= n:
        bad = np.argwhere((mult < 0) | (mult >= n))[0]
        raise AxiomViolation("closure", tuple(bad))
    idx = np.arange(n)
    # (xy)z vs x(yz) via fancy indexing over all triples
    left = mult[mult[:, :, None], idx[None, None, :]]
    right = mult[idx[:, None, None], mult[None, :, :]]
    if not np.array_equal(left, right):
        bad = np.argwhere(left != right)[0]
        raise AxiomViolation("associativity", tuple(bad))
    e = spec.identity
    if not (np.array_equal(mult[e], idx) and np.array_equal(mult[:, e], idx)):
        bad = np.argwhere((mult[e] != idx) | (mult[:, e] != idx))[0]
        raise AxiomViolation("identity", (e, int(bad[0])))
    inv = np.asarray(spec.inverse)
    ok = (mult[idx, inv] == e) & (mult[inv, idx] == e)
    if not ok.all():
        bad = int(np.argwhere(~ok)[0][0])
        raise AxiomViolation("inverse", (bad, int(inv[bad])))


@dataclass(frozen=True)
class IrrepSet:
    """A complete set of unitary irreducible representations.

    irreps[r] has shape (order, d_r, d_r); irreps[r][x] is the matrix for
    group element x.  Completeness means sum of d_r^2 equals the order.
    """

    irreps: tuple

    @property
    def dims(self):
        return tuple(rho.shape[1] for rho in self.irreps)

    def __len__(self):
        return len(self.irreps)

    def __getitem__(self, r):
        return self.irreps[r]


def cyclic_irreps(n: int) -> IrrepSet:
    """The n characters of Z_n: rho_k(x) = exp(-2 pi i k x / n).

    With this sign the Fourier transform over Z_n coincides entry for
    entry with the classical DFT.
    """
    x = np.arange(n)
    irreps = tuple(
        np.exp(-2j * np.pi * k * x / n).reshape(n, 1, 1) for k in range(n)
    )
    return IrrepSet(irreps=irreps)


def s3_irreps() -> IrrepSet:
    """Trivial, sign and 2-d standard representation of S_3.

    The standard representation is the action on the plane orthogonal to
    (1,1,1), expressed in an orthonormal basis so the matrices come out
    real orthogonal.
    """
    n = len(_S3_PERMS)
    triv = np.ones((n, 1, 1), dtype=complex)
    sign = np.empty((n, 1, 1), dtype=complex)
    std = np.empty((n, 2, 2), dtype=complex)
    basis = np.array([
        [1.0, -1.0, 0.0],
        [1.0, 1.0, -2.0],
    ])
    basis /= np.linalg.norm(basis, axis=1, keepdims=True)
    for i, p in enumerate(_S3_PERMS):
        perm = np.zeros((3, 3))
        for k in range(3):
            perm[p[k], k] = 1.0
        sign[i] = np.linalg.det(perm)
        std[i] = basis @ perm @ basis.T
    return IrrepSet(irreps=(triv, sign, std))


def validate_irreps(irreps: IrrepSet, spec: FiniteGroupSpec, tol=1e-10) -> None:
    """Check each rho is a unitary homomorphism and the set is complete."""
    n = spec.order
    if sum(d * d for d in irreps.dims) != n:
        raise ValueError("irrep dimensions %r do not satisfy sum d^2 = %d" % (irreps.dims, n))
    for r, rho in enumerate(irreps.irreps):
        if rho.shape[0] != n:
            raise ValueError("irrep %d has %d matrices, group has order %d" % (r, rho.shape[0], n))
        d = rho.shape[1]
        if np.abs(rho[spec.identity] - np.eye(d)).max() > tol:
            raise ValueError("irrep %d does not map identity to I" % r)
        prod = np.einsum("xab,ybc->xyac", rho, rho)
        if np.abs(rho[spec.mult] - prod).max() > tol:
            raise ValueError("irrep %d is not a homomorphism" % r)
        uni = np.einsum("xab,xcb->xac", rho, rho.conj())
        if np.abs(uni - np.eye(d)).max() > tol:
            raise ValueError("irrep %d is not unitary" % r)


def left_translate(f, z: int, spec: FiniteGroupSpec):
    """f^z[x] = f[z^-1 x]; moves a delta at e to a delta at z."""
    f = np.asarray(f, dtype=complex)
    if f.shape != (spec.order,):
        raise ValueError("signal length %d does not match group order %d" % (f.size, spec.order))
    return f[spec.mult[spec.inverse[z]]]


def group_fourier(f, irreps: IrrepSet):
    """fhat(rho) = sum_x f[x] rho(x), one matrix per irrep."""
    f = np.asarray(f, dtype=complex)
    return [np.tensordot(f, rho, axes=(0, 0)) for rho in irreps.irreps]


def group_power_spectrum(components):
    """q(rho) = fhat(rho)^H fhat(rho), positive semidefinite and invariant."""
    return [F.conj().T @ F for F in components]


def characters(irreps: IrrepSet):
    """chi_r[x] = tr rho_r(x), shape (num_irreps, order)."""
    return np.stack([np.trace(rho, axis1=1, axis2=2) for rho in irreps.irreps])


def tensor_multiplicities(r1: int, r2: int, irreps: IrrepSet, spec: FiniteGroupSpec):
    """How many copies of each irrep sit inside rho_r1 (x) rho_r2.

    By character orthogonality m_r = (1/|G|) sum_x chi_1 chi_2 conj(chi_r).
    The result must be a non-negative integer vector; anything else means
    the supplied irreps are wrong.
    """
    chi = characters(irreps)
    raw = (chi[r1] * chi[r2]) @ chi.conj().T / spec.order
    mult = np.rint(raw.real).astype(int)
    if np.abs(raw - mult).max() > 1e-8 or mult.min() < 0:
        raise DecompositionFailure(
            "character inner products %r are not non-negative integers" % (raw,))
    return mult


@dataclass
class GroupCGDecomposition:
    """Unitary C with C (rho_r1 (x) rho_r2) C^H = block diag of irreps.

    block_list names the irrep index of each diagonal block in order;
    repeated indices record multiplicities.  block_dims carries the
    matching dimensions so consumers need not look the irreps up again.
    """

    r1: int
    r2: int
    c_matrix: np.ndarray
    block_list: tuple
    block_dims: tuple

    def block_slices(self):
        out = []
        start = 0
        for d in self.block_dims:
            out.append(slice(start, start + d))
            start += d
        return out


def clebsch_gordan_matrix(r1: int, r2: int, irreps: IrrepSet, spec: FiniteGroupSpec,
                          seed: int = 0, tol: float = 1e-8) -> GroupCGDecomposition:
    """Decompose rho_r1 (x) rho_r2 into irreducibles, returning the basis change.

    For each irrep rho with multiplicity m, the averaging operator

        T = (d_rho / |G|) sum_x (rho_r1 (x) rho_r2)(x) S rho(x^-1)

    projects an arbitrary S onto the space of intertwiners rho -> tensor.
    Random S with Gram-Schmidt in the trace inner product yields m
    orthonormal intertwiners (Schur: T^H T is then a multiple of I).
    Their columns, stacked over irreps, form a unitary U; C = U^H.
    Failure to reach the required multiplicities or to verify the block
    structure raises DecompositionFailure.
    """
    rho1, rho2 = irreps[r1], irreps[r2]
    d1, d2 = rho1.shape[1], rho2.shape[1]
    dd = d1 * d2
    tensor = np.einsum("xab,xcd->xacbd", rho1, rho2).reshape(spec.order, dd, dd)
    mult = tensor_multiplicities(r1, r2, irreps, spec)
    rng = np.random.default_rng(seed)
    columns = []
    block_list = []
    for r, m in enumerate(mult):
        if m == 0:
            continue
        rho = irreps[r]
        d = rho.shape[1]
        rho_inv = rho[spec.inverse]
        found = []
        attempts = 0
        while len(found) < m:
            attempts += 1
            if attempts > 20 * m:
                raise DecompositionFailure(
                    "could not extract %d intertwiners for irrep %d in %d (x) %d"
                    % (m, r, r1, r2))
            s = rng.standard_normal((dd, d)) + 1j * rng.standard_normal((dd, d))
            t = np.einsum("xab,bc,xcd->ad", tensor, s, rho_inv) * (d / spec.order)
            for u in found:
                t = t - u * (np.trace(u.conj().T @ t) / d)
            norm2 = np.trace(t.conj().T @ t).real / d
            if norm2 > tol:
                found.append(t / np.sqrt(norm2))
        for t in found:
            columns.append(t)
            block_list.append(r)
    u = np.hstack(columns)
    if u.shape != (dd, dd):
        raise DecompositionFailure("intertwiner columns do not fill the tensor space")
    c = u.conj().T
    if np.abs(c @ c.conj().T - np.eye(dd)).max() > 1e-6:
        raise DecompositionFailure("change of basis is not unitary")
    dims = irreps.dims
    dec = GroupCGDecomposition(r1=r1, r2=r2, c_matrix=c, block_list=tuple(block_list),
                               block_dims=tuple(dims[r] for r in block_list))
    # verify the advertised block structure on every group element
    blocks = dec.block_slices()
    for x in range(spec.order):
        conj = c @ tensor[x] @ c.conj().T
        expected = np.zeros((dd, dd), dtype=complex)
        for r, sl in zip(block_list, blocks):
            expected[sl, sl] = irreps[r][x]
        if np.abs(conj - expected).max() > 1e-6:
            raise DecompositionFailure(
                "conjugated tensor representation is not block diagonal at element %d" % x)
    return dec


def build_group_cg(irreps: IrrepSet, spec: FiniteGroupSpec, seed: int = 0):
    """Decompositions for every ordered pair of irreps, keyed by (r1, r2)."""
    out = {}
    for r1 in range(len(irreps)):
        for r2 in range(len(irreps)):
            out[(r1, r2)] = clebsch_gordan_matrix(r1, r2, irreps, spec, seed=seed)
    return out


def group_bispectrum(components, cg):
    """b(r1, r2) = C (fhat_r1 (x) fhat_r2)^H C^H (direct sum of fhat blocks).

    Translation multiplies the tensor factor by C (rho1 (x) rho2)(z) C^H
    on the right inside the dagger and each direct-sum block by rho(z) on
    the left; the unitaries meet in the middle and cancel, so b is
    invariant.  For a delta at the identity every fhat is I and b = I.

    components: output of group_fourier.  cg: mapping from (r1, r2) to
    GroupCGDecomposition, e.g. from build_group_cg.  Returns a dict of
    complex matrices keyed by (r1, r2).
    """
    out = {}
    for (r1, r2), dec in cg.items():
        c = dec.c_matrix
        tens = np.kron(components[r1], components[r2])
        dd = tens.shape[0]
        summed = np.zeros((dd, dd), dtype=complex)
        for r, sl in zip(dec.block_list, dec.block_slices()):
            summed[sl, sl] = components[r]
        out[(r1, r2)] = c @ tens.conj().T @ c.conj().T @ summed
    return out
