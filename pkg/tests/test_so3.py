import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bispectral import sht, so3
from conftest import random_coeffs
from oracles import (angles_from_vec, racah_cg, rel_dev, rotation_matrix_ref,
                     vec_from_angles, wigner_d_entry)


# ------------------------------------------------------------ Euler rotations

def test_angle_normalization():
    r = so3.EulerRotation(7.0, 1.0, -1.0)
    assert 0.0 <= r.alpha < 2 * math.pi
    assert 0.0 <= r.gamma < 2 * math.pi
    assert abs(r.alpha - (7.0 - 2 * math.pi)) <= 1e-15
    with pytest.raises(sht.DomainError):
        so3.EulerRotation(0.0, -0.5, 0.0)
    with pytest.raises(sht.DomainError):
        so3.EulerRotation(0.0, 3.5, 0.0)


def test_to_matrix_matches_scipy():
    rng = np.random.default_rng(0)
    for _ in range(20):
        r = so3.EulerRotation.random(rng)
        ref = rotation_matrix_ref(r.alpha, r.beta, r.gamma)
        assert np.max(np.abs(r.to_matrix() - ref)) <= 1e-13


def test_matrix_round_trip():
    rng = np.random.default_rng(1)
    for _ in range(50):
        r = so3.EulerRotation.random(rng)
        back = so3.EulerRotation.from_matrix(r.to_matrix())
        assert np.max(np.abs(back.to_matrix() - r.to_matrix())) <= 1e-12


def test_from_matrix_gimbal_lock():
    top = so3.EulerRotation.from_matrix(so3._rot_z(0.7))
    assert top.beta == 0.0
    assert abs(top.alpha - 0.7) <= 1e-12 and top.gamma == 0.0
    flip = so3._rot_z(0.4) @ so3._rot_y(math.pi)
    bottom = so3.EulerRotation.from_matrix(flip)
    assert np.max(np.abs(bottom.to_matrix() - flip)) <= 1e-12


def test_from_matrix_rejects_improper():
    with pytest.raises(sht.DomainError):
        so3.EulerRotation.from_matrix(np.diag([1.0, 1.0, -1.0]))
    with pytest.raises(sht.DomainError):
        so3.EulerRotation.from_matrix(2.0 * np.eye(3))


def test_compose_and_inverse():
    rng = np.random.default_rng(2)
    for _ in range(10):
        r1, r2 = so3.EulerRotation.random(rng), so3.EulerRotation.random(rng)
        prod = r1.compose(r2)
        assert np.max(np.abs(prod.to_matrix() - r1.to_matrix() @ r2.to_matrix())) <= 1e-12
        ident = r1.compose(r1.inverse())
        assert np.max(np.abs(ident.to_matrix() - np.eye(3))) <= 1e-12


# ------------------------------------------------------------------- small d

def test_d0_is_one():
    for beta in (0.0, 0.4, math.pi):
        assert np.array_equal(so3.wigner_d_small(0, beta), [[1.0]])


def test_d1_00_is_cos_beta():
    for beta in (0.0, 0.3, math.pi / 2, 2.8):
        d = so3.wigner_d_small(1, beta)
        assert abs(d[1, 1] - math.cos(beta)) <= 1e-14
    assert abs(so3.wigner_d_small(1, math.pi / 2)[1, 1]) <= 1e-15


def test_d_identity_at_zero():
    for l in range(5):
        assert np.max(np.abs(so3.wigner_d_small(l, 0.0) - np.eye(2 * l + 1))) <= 1e-14


def test_d_matches_factorial_sum_oracle():
    for l in range(9):
        for beta in (0.1, 0.9, 1.7, 2.9):
            d = so3.wigner_d_small(l, beta)
            for mp in range(-l, l + 1):
                for m in range(-l, l + 1):
                    ref = wigner_d_entry(l, mp, m, beta)
                    assert abs(d[mp + l, m + l] - ref) <= 1e-12


def test_d_orthogonal():
    for l in range(7):
        d = so3.wigner_d_small(l, 1.3)
        assert np.max(np.abs(d @ d.T - np.eye(2 * l + 1))) <= 1e-12


# ------------------------------------------------------------------ Wigner D

def test_D_identity():
    for l in range(5):
        d = so3.wigner_D(l, so3.EulerRotation.identity())
        assert np.max(np.abs(d - np.eye(2 * l + 1))) <= 1e-14


def test_D_unitary_and_homomorphism():
    rng = np.random.default_rng(3)
    for _ in range(20):
        r1, r2 = so3.EulerRotation.random(rng), so3.EulerRotation.random(rng)
        prod = r1.compose(r2)
        for l in range(7):
            d1, d2 = so3.wigner_D(l, r1), so3.wigner_D(l, r2)
            eye = np.eye(2 * l + 1)
            assert np.max(np.abs(d1 @ d1.conj().T - eye)) <= 1e-10
            assert np.max(np.abs(d1 @ d2 - so3.wigner_D(l, prod))) <= 1e-10


def test_D_l1_matches_cartesian_rotation():
    # rows of u convert (x, y, z) to the spherical basis (m = -1, 0, +1)
    u = np.array([[1.0, -1.0j, 0.0],
                  [0.0, 0.0, math.sqrt(2.0)],
                  [-1.0, -1.0j, 0.0]]) / math.sqrt(2.0)
    rng = np.random.default_rng(4)
    for _ in range(10):
        r = so3.EulerRotation.random(rng)
        lhs = so3.wigner_D(1, r)
        rhs = (u @ r.to_matrix() @ u.conj().T).conj()
        assert np.max(np.abs(lhs - rhs)) <= 1e-12


# --------------------------------------------------------------- rotate_coeffs

def test_rotate_identity():
    rng = np.random.default_rng(5)
    c = random_coeffs(4, rng)
    out = so3.rotate_coeffs(c, so3.EulerRotation.identity())
    assert rel_dev(out.values, c.values) <= 1e-14


def test_rotate_pure_gamma_phase_law():
    rng = np.random.default_rng(6)
    c = random_coeffs(4, rng)
    gamma = 0.77
    out = so3.rotate_coeffs(c, so3.EulerRotation(0.0, 0.0, gamma))
    for l in range(5):
        for m in range(-l, l + 1):
            want = np.exp(-1j * m * gamma) * c.get(l, m)
            assert abs(out.get(l, m) - want) <= 1e-13


@given(st.integers(0, 2**32 - 1))
def test_rotate_preserves_band_norms(seed):
    rng = np.random.default_rng(seed)
    c = random_coeffs(5, rng)
    rot = so3.EulerRotation.random(rng)
    out = so3.rotate_coeffs(c, rot)
    for l in range(6):
        before = np.linalg.norm(c.band(l))
        after = np.linalg.norm(out.band(l))
        assert abs(after - before) <= 1e-12 * before


def test_rotation_consistent_with_synthesis():
    rng = np.random.default_rng(7)
    c = random_coeffs(6, rng)
    rot = so3.EulerRotation.random(rng)
    rotated = so3.rotate_coeffs(c, rot)
    r_inv = rot.to_matrix().T
    for _ in range(50):
        theta = math.acos(rng.uniform(-1.0, 1.0))
        phi = rng.uniform(0.0, 2.0 * math.pi)
        lhs = sht.synthesize(rotated, theta, phi)
        tb, pb = angles_from_vec(r_inv @ vec_from_angles(theta, phi))
        rhs = sht.synthesize(c, tb, pb)
        assert abs(lhs - rhs) <= 1e-9


# ----------------------------------------------------------- Clebsch-Gordan

def test_cg_known_values():
    assert so3.cg_coefficient(0, 0, 0, 0, 0, 0) == 1.0
    assert abs(so3.cg_coefficient(1, 1, 2, 1, 1, 2) - 1.0) <= 1e-15
    assert abs(so3.cg_coefficient(1, 1, 0, 1, -1, 0) - 1.0 / math.sqrt(3)) <= 1e-15


def test_cg_selection_rules():
    assert so3.cg_coefficient(1, 1, 2, 1, 0, 2) == 0.0  # m1+m2 != m
    assert so3.cg_coefficient(1, 1, 3, 0, 0, 0) == 0.0  # triangle fails
    assert so3.cg_coefficient(2, 1, 1, 2, 1, 3) == 0.0  # |m| > l
    with pytest.raises(sht.DomainError):
        so3.cg_coefficient(-1, 0, 1, 0, 0, 0)


def test_cg_recursion_matches_racah():
    for l1 in range(5):
        for l2 in range(5):
            for l in range(abs(l1 - l2), l1 + l2 + 1):
                mat = so3.cg_matrix(l1, l2, l)
                for m in range(-l, l + 1):
                    for m1 in range(-l1, l1 + 1):
                        ref = racah_cg(l1, m1, l2, m - m1, l, m)
                        assert abs(mat[m + l, m1 + l1] - ref) <= 1e-12


def test_assembled_block_unitary_and_indexed():
    c = so3.assemble_cg_block(1, 1)
    assert c.shape == (9, 9)
    assert np.max(np.abs(c @ c.T - np.eye(9))) <= 1e-12
    # rows are (l, m) with l ascending, m inner; columns (m1, m2) m1-major.
    # the stretched row (l=2, m=2) is the last one; its single nonzero
    # column is (m1=1, m2=1), the last column
    assert abs(c[8, 8] - 1.0) <= 1e-15


def test_decomposition_identity():
    rng = np.random.default_rng(8)
    for _ in range(20):
        rot = so3.EulerRotation.random(rng)
        for l1 in range(3):
            for l2 in range(3):
                c = so3.assemble_cg_block(l1, l2)
                tensor = np.kron(so3.wigner_D(l1, rot), so3.wigner_D(l2, rot))
                blocks = [so3.wigner_D(l, rot)
                          for l in range(abs(l1 - l2), l1 + l2 + 1)]
                direct = np.zeros_like(tensor)
                r = 0
                for b in blocks:
                    n = b.shape[0]
                    direct[r:r + n, r:r + n] = b
                    r += n
                assert np.max(np.abs(c @ tensor @ c.T - direct)) <= 1e-10


# ----------------------------------------------------------------- CG table

def test_table_L0():
    t = so3.build_cg_table(0)
    assert list(t.matrices) == [(0, 0, 0)]
    assert t.matrices[(0, 0, 0)].shape == (1, 1)
    assert t.matrices[(0, 0, 0)][0, 0] == 1.0


def test_table_contents(table6):
    assert table6.L == 6
    for (l1, l2, l), mat in table6.matrices.items():
        assert l1 <= 6 and l2 <= 6 and abs(l1 - l2) <= l <= min(l1 + l2, 6)
        assert mat.shape == (2 * l + 1, 2 * l1 + 1)
    assert table6.coefficient(1, 1, 2, 1, 1, 2) == so3.cg_coefficient(1, 1, 2, 1, 1, 2)
    with pytest.raises(sht.DomainError):
        table6.get(6, 6, 7)


def test_table_save_load_bit_exact(tmp_path, table6):
    path = tmp_path / "cg.bin"
    table6.save(path)
    back = so3.CGTable.load(path)
    assert back.L == 6
    assert sorted(back.matrices) == sorted(table6.matrices)
    for key, mat in table6.matrices.items():
        assert np.array_equal(back.matrices[key], mat)


def test_table_load_rejects_garbage(tmp_path, table6):
    path = tmp_path / "cg.bin"
    table6.save(path)
    blob = path.read_bytes()
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"NOTMAGIC" + blob[8:])
    with pytest.raises(ValueError):
        so3.CGTable.load(bad)
    short = tmp_path / "short.bin"
    short.write_bytes(blob[:len(blob) // 2])
    with pytest.raises(ValueError):
        so3.CGTable.load(short)
