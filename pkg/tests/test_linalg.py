import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mimojscc.linalg import (
    ConvergenceError,
    DimensionError,
    RngStream,
    complex_svd,
    frobenius_norm_sq,
    pseudo_inverse_diag,
    sample_complex_gaussian,
)


def random_complex(rng, n):
    return sample_complex_gaussian(rng, n, n, 1.0)


# ---------------------------------------------------------------------------
# complex_svd


def test_svd_diagonal_descending():
    f = complex_svd(np.diag([3.0, 1.0]).astype(complex))
    assert np.allclose(f.u, np.eye(2))
    assert np.allclose(f.s, [3.0, 1.0])
    assert np.allclose(f.v, np.eye(2))


def test_svd_antidiagonal_matches_characteristic_polynomial_oracle():
    # Oracle: singular values are sqrt of eigenvalues of H^H H. For the 2x2
    # case solve the characteristic polynomial directly.
    h = np.array([[0.0, 2.0], [1.0, 0.0]], dtype=complex)
    hh = h.conj().T @ h
    tr = float(np.real(hh[0, 0] + hh[1, 1]))
    det = float(np.real(hh[0, 0] * hh[1, 1] - hh[0, 1] * hh[1, 0]))
    disc = np.sqrt(tr * tr - 4 * det)
    eigs = sorted([(tr + disc) / 2, (tr - disc) / 2], reverse=True)
    expected = np.sqrt(eigs)
    assert np.allclose(expected, [2.0, 1.0])
    f = complex_svd(h)
    assert np.allclose(f.s, expected, atol=1e-12)


@pytest.mark.parametrize("n", [1, 2, 3, 4, 8])
@pytest.mark.parametrize("seed", [0, 1, 2, 3, 4, 5, 6, 7, 8, 9])
def test_svd_reconstruction_and_unitarity(n, seed):
    h = random_complex(RngStream(seed, n), n)
    f = complex_svd(h)
    scale = max(np.linalg.norm(h), 1e-30)
    assert np.linalg.norm(f.reconstruct() - h) / scale < 1e-10
    eye = np.eye(n)
    assert np.linalg.norm(f.u @ f.u.conj().T - eye) < 1e-10
    assert np.linalg.norm(f.v @ f.v.conj().T - eye) < 1e-10
    assert np.all(np.diff(f.s) <= 1e-15)
    assert np.all(f.s >= 0)


def test_svd_deterministic_and_phase_fixed():
    h = random_complex(RngStream(5, 1), 4)
    f1 = complex_svd(h)
    f2 = complex_svd(h)
    assert np.array_equal(f1.u, f2.u)
    assert np.array_equal(f1.s, f2.s)
    assert np.array_equal(f1.v, f2.v)
    for j in range(4):
        i = int(np.argmax(np.abs(f1.u[:, j])))
        assert abs(f1.u[i, j].imag) < 1e-12
        assert f1.u[i, j].real >= 0


def test_svd_rank_deficient_and_zero():
    h = np.array([[1.0, 0.0], [1.0, 0.0]], dtype=complex)
    f = complex_svd(h)
    assert np.allclose(f.s, [np.sqrt(2.0), 0.0], atol=1e-12)
    assert np.linalg.norm(f.reconstruct() - h) < 1e-10
    assert np.linalg.norm(f.u @ f.u.conj().T - np.eye(2)) < 1e-10

    z = complex_svd(np.zeros((3, 3), dtype=complex))
    assert np.allclose(z.s, 0.0)
    assert np.linalg.norm(z.u @ z.u.conj().T - np.eye(3)) < 1e-12


def test_svd_input_validation():
    with pytest.raises(DimensionError):
        complex_svd(np.zeros((2, 3), dtype=complex))
    with pytest.raises(DimensionError):
        complex_svd(np.zeros((9, 9), dtype=complex))
    bad = np.zeros((2, 2), dtype=complex)
    bad[0, 0] = np.nan
    with pytest.raises(ValueError):
        complex_svd(bad)


# ---------------------------------------------------------------------------
# pseudo_inverse_diag


def test_pseudo_inverse_examples():
    assert np.allclose(pseudo_inverse_diag(np.array([2.0, 1.0])), [0.5, 1.0])
    assert np.allclose(pseudo_inverse_diag(np.array([2.0, 0.0])), [0.5, 0.0])
    # Relative tolerance: uniformly tiny values still invert; only an
    # all-zero vector maps entirely to zero.
    out = pseudo_inverse_diag(np.array([1e-20, 1e-20]))
    assert np.allclose(out, [1e20, 1e20])
    assert np.allclose(pseudo_inverse_diag(np.array([0.0, 0.0])), [0.0, 0.0])


def test_pseudo_inverse_rejects_negative():
    with pytest.raises(ValueError):
        pseudo_inverse_diag(np.array([1.0, -0.5]))


@given(st.lists(st.floats(min_value=1e-6, max_value=1e6), min_size=1, max_size=8))
@settings(max_examples=50, deadline=None)
def test_pseudo_inverse_involution_on_kept_entries(values):
    s = np.asarray(values)
    twice = pseudo_inverse_diag(pseudo_inverse_diag(s))
    keep = s > 1e-12 * s.max()
    assert np.allclose(twice[keep], s[keep], rtol=1e-12)


# ---------------------------------------------------------------------------
# frobenius_norm_sq


def test_frobenius_examples():
    assert frobenius_norm_sq(np.zeros((2, 3), dtype=complex)) == 0.0
    assert frobenius_norm_sq(np.array([[1.0 + 1.0j]])) == pytest.approx(2.0, abs=1e-15)
    assert frobenius_norm_sq(np.eye(3, dtype=complex)) == pytest.approx(3.0, abs=1e-15)


# ---------------------------------------------------------------------------
# sampling and streams


def test_sample_zero_variance_is_exact_zeros():
    w = sample_complex_gaussian(RngStream(0, 0), 4, 5, 0.0)
    assert np.array_equal(w, np.zeros((4, 5), dtype=complex))


def test_sample_negative_variance_rejected():
    with pytest.raises(ValueError):
        sample_complex_gaussian(RngStream(0, 0), 1, 1, -1.0)


def test_sample_repeatable_across_fresh_streams():
    a = sample_complex_gaussian(RngStream(123, 9), 3, 3, 1.0)
    b = sample_complex_gaussian(RngStream(123, 9), 3, 3, 1.0)
    assert np.array_equal(a, b)


def test_sample_monte_carlo_variance():
    # Monte-Carlo oracle: 1e6 draws, empirical per-entry variance within 1%.
    w = sample_complex_gaussian(RngStream(7, 0), 1000, 1000, 1.0)
    var = float(np.mean(np.abs(w) ** 2))
    assert 0.99 <= var <= 1.01
    # Real and imaginary parts carry half the variance each.
    assert 0.49 <= float(np.var(w.real)) <= 0.51
    assert 0.49 <= float(np.var(w.imag)) <= 0.51
    assert abs(float(np.mean(w.real))) < 3.0 / np.sqrt(2e6)


def test_distinct_streams_are_uncorrelated():
    n = 100_000
    a = RngStream(42, 0).uniform(n) - 0.5
    b = RngStream(42, 1).uniform(n) - 0.5
    corr = float(np.corrcoef(a, b)[0, 1])
    assert abs(corr) < 0.02


def test_derive_is_deterministic_and_injective_in_practice():
    root = RngStream(11, 0)
    ids = {root.derive(i).stream_id for i in range(1000)}
    assert len(ids) == 1000
    assert root.derive(5).stream_id == RngStream(11, 0).derive(5).stream_id
    with pytest.raises(ValueError):
        root.derive(-1)


def test_integers_range_and_determinism():
    r = RngStream(3, 4)
    draws = r.integers(2, 5, (2000,))
    assert draws.min() >= 2 and draws.max() <= 4
    assert set(np.unique(draws)) == {2, 3, 4}
