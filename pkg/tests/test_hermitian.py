import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crossdetect import hermitian
from crossdetect.errors import DimensionMismatch, NotPositiveDefinite

from conftest import random_hpd, random_snapshot, rng


class TestCholesky:
    def test_factor_reconstructs(self):
        a = random_hpd(rng(1), 6)
        low = hermitian.cholesky_factor(a)
        assert np.allclose(low @ low.conj().T, a)

    def test_rejects_indefinite(self):
        a = np.diag([1.0, -1.0, 2.0]).astype(complex)
        with pytest.raises(NotPositiveDefinite):
            hermitian.cholesky_factor(a)

    def test_rejects_near_singular(self):
        a = random_hpd(rng(2), 5)
        u = random_snapshot(rng(3), 5)
        proj = np.eye(5) - np.outer(u, u.conj()) / (u.conj() @ u)
        with pytest.raises(NotPositiveDefinite):
            hermitian.cholesky_factor(proj @ a @ proj.conj().T)

    def test_rejects_nonsquare(self):
        with pytest.raises(DimensionMismatch):
            hermitian.cholesky_factor(np.ones((3, 4)))


class TestSolves:
    def test_solve_hpd_matches_dense(self):
        a = random_hpd(rng(4), 7)
        b = random_snapshot(rng(5), 7)
        assert np.allclose(hermitian.solve_hpd(a, b), np.linalg.solve(a, b))

    def test_solve_cholesky_matrix_rhs(self):
        a = random_hpd(rng(6), 5)
        b = rng(7).standard_normal((5, 3)) + 0j
        low = hermitian.cholesky_factor(a)
        assert np.allclose(hermitian.solve_cholesky(low, b), np.linalg.solve(a, b))

    def test_solve_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            hermitian.solve_hpd(random_hpd(rng(8), 4), np.ones(5, dtype=complex))

    def test_hpd_inverse(self):
        a = random_hpd(rng(9), 6)
        inv = hermitian.hpd_inverse(a)
        assert np.allclose(inv @ a, np.eye(6), atol=1e-10)
        assert np.allclose(inv, inv.conj().T)


class TestBlocks:
    def test_split_and_assemble_round_trip(self):
        a = random_hpd(rng(10), 8)
        b = hermitian.blocks(a)
        assert np.array_equal(hermitian.assemble(b.b11, b.b12, b.b21, b.b22), a)

    def test_inverse_blocks_are_full_inverse_blocks(self):
        # the library convention: blocks of M^-1, not inverses of blocks of M
        a = random_hpd(rng(11), 8)
        w = hermitian.inverse_blocks(a)
        full = np.linalg.inv(a)
        assert np.allclose(w.b11, full[:4, :4])
        assert np.allclose(w.b12, full[:4, 4:])
        assert not np.allclose(w.b11, np.linalg.inv(a[:4, :4]))

    def test_inverse_blocks_hermitian_pairing(self):
        w = hermitian.inverse_blocks(random_hpd(rng(12), 6))
        assert np.allclose(w.b21, w.b12.conj().T)

    def test_odd_dimension_rejected(self):
        with pytest.raises(DimensionMismatch):
            hermitian.blocks(np.eye(5))


class TestQuadForms:
    def test_matches_dense(self):
        w = random_hpd(rng(13), 5)
        x = random_snapshot(rng(14), 5)
        y = random_snapshot(rng(15), 5)
        assert np.isclose(hermitian.quad_form(w, x, y), x.conj() @ w @ y)

    def test_batched(self):
        w = random_hpd(rng(16), 4)
        x = rng(17).standard_normal((3, 4)) + 0j
        out = hermitian.quad_form_real(w, x)
        assert out.shape == (3,)
        assert np.allclose(out, [np.real(v.conj() @ w @ v) for v in x])

    def test_real_form_positive_for_hpd(self):
        w = random_hpd(rng(18), 6)
        x = random_snapshot(rng(19), 6)
        assert hermitian.quad_form_real(w, x) > 0

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            hermitian.quad_form(np.eye(3), np.ones(4), np.ones(3))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(2, 10))
def test_inverse_round_trip_property(seed, n):
    a = random_hpd(rng(seed), n)
    inv = hermitian.hpd_inverse(a)
    assert np.allclose(hermitian.hpd_inverse(inv), a, rtol=1e-8, atol=1e-10)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), m=st.integers(1, 5))
def test_symmetrize_fixes_hermitian_drift(seed, m):
    g = rng(seed).standard_normal((2 * m, 2 * m)) + 1j * rng(seed + 1).standard_normal(
        (2 * m, 2 * m)
    )
    s = hermitian.symmetrize(g)
    assert np.allclose(s, s.conj().T)
