import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from floquet_bbc.errors import DomainError, GapViolationError, PreconditionError
from floquet_bbc.lattice import LatticeGeometry, LatticeOperator
from floquet_bbc.spectral import (TWO_PI, GapFunction, SpectralGap, band_projection, branch_log,
                                  eigen_unitary, find_gaps, gap_function_eval, largest_gap,
                                  unitary_function, wrap_phase)

from conftest import haar_unitary


def op(values):
    v = np.asarray(values, dtype=complex)
    return LatticeOperator.diagonal(LatticeGeometry.torus((len(v),)), v)


def gapped_unitary(rng, n, phases):
    g = LatticeGeometry.torus((n,))
    Q = haar_unitary(n, rng)
    return LatticeOperator(g, (Q * np.exp(1j * np.asarray(phases))) @ Q.conj().T)


def test_wrap_phase():
    assert wrap_phase(TWO_PI - 1e-13) == 0
    assert wrap_phase(-np.pi / 2) == pytest.approx(1.5 * np.pi)


def test_eigen_unitary_examples(rng):
    assert np.array_equal(eigen_unitary(op([1, 1, 1])).phases, [0, 0, 0])
    assert np.allclose(eigen_unitary(op([1j, -1])).phases, [np.pi / 2, np.pi])
    g = LatticeGeometry.torus((8,))
    U = LatticeOperator(g, haar_unitary(8, rng))
    s = eigen_unitary(U)
    V = s.vectors
    assert np.abs((V * np.exp(1j * s.phases)) @ V.conj().T - U.matrix).max() < 1e-10
    assert np.abs(V.conj().T @ V - np.eye(8)).max() < 1e-10
    assert np.all(np.diff(s.phases) >= 0)


def test_eigen_unitary_rejects_non_unitary():
    with pytest.raises(PreconditionError) as exc:
        eigen_unitary(op([1, 2]))
    assert exc.value.defect == pytest.approx(3.0)


def test_find_gaps_examples():
    gaps = find_gaps(eigen_unitary(op([1, -1])), 1.0)
    assert [g.center for g in gaps] == pytest.approx([np.pi / 2, 1.5 * np.pi])
    assert [g.width for g in gaps] == pytest.approx([np.pi, np.pi])
    dense = op(np.exp(1j * np.arange(0, TWO_PI, 0.01)))
    assert find_gaps(eigen_unitary(dense), 0.1) == []
    with pytest.raises(DomainError):
        find_gaps(eigen_unitary(dense), 0)


def test_largest_gap_tie_breaks_to_smallest_center():
    assert largest_gap(eigen_unitary(op([1, -1]))).center == pytest.approx(np.pi / 2)


def test_band_projection_examples():
    s = eigen_unitary(op([1, 1j, -1]))
    P = band_projection(s, np.pi / 4, 3 * np.pi / 4)
    assert P.rank == 1
    assert np.allclose(P.P.matrix, np.diag([0, 1, 0]))
    assert band_projection(s, 0.2, 0.4).rank == 0
    assert band_projection(s, 5.0, 5.0 + TWO_PI).rank == 3
    with pytest.raises(GapViolationError):
        band_projection(s, np.pi / 2, 3.0)


def test_projection_properties(rng):
    U = gapped_unitary(rng, 12, rng.uniform(0.5, 2.5, 6).tolist() + rng.uniform(3.5, 5.5, 6).tolist())
    s = eigen_unitary(U)
    P = band_projection(s, 0.0, 3.0).P.matrix
    Q = band_projection(s, 3.0, TWO_PI).P.matrix
    assert np.abs(P @ P - P).max() < 1e-10
    assert np.abs(P - P.conj().T).max() < 1e-10
    assert np.abs(P @ U.matrix - U.matrix @ P).max() < 1e-10
    assert np.abs(P + Q - np.eye(12)).max() < 1e-10


def test_branch_log_examples():
    assert not branch_log(eigen_unitary(op([1, 1])), np.pi).matrix.any()
    h = branch_log(eigen_unitary(op([1j, 1j])), np.pi)
    assert np.allclose(h.matrix, -0.25 * np.eye(2))
    with pytest.raises(GapViolationError):
        branch_log(eigen_unitary(op([1j, 1])), np.pi / 2)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.0, TWO_PI - 1e-3), st.integers(0, 2 ** 32 - 1))
def test_branch_log_reconstruction_and_containment(theta, seed):
    rng = np.random.default_rng(seed)
    phases = theta + rng.uniform(0.2, TWO_PI - 0.2, 10)
    s = eigen_unitary(gapped_unitary(rng, 10, phases))
    h = branch_log(s, theta)
    w, Z = np.linalg.eigh(h.matrix)
    rebuilt = (Z * np.exp(-2j * np.pi * w)) @ Z.conj().T
    assert np.abs(rebuilt - s.source.matrix).max() < 1e-9
    assert w.min() >= -theta / TWO_PI - 1e-12
    assert w.max() < 1 - theta / TWO_PI


def test_log_difference_is_band_projection(rng):
    U = gapped_unitary(rng, 10, [0.5, 1.0, 1.5, 2.0, 2.2, 3.5, 4.0, 4.5, 5.0, 5.5])
    s = eigen_unitary(U)
    theta, theta_p = 0.2, 3.0
    diff = branch_log(s, theta).matrix - branch_log(s, theta_p).matrix
    assert np.abs(diff - band_projection(s, theta, theta_p).P.matrix).max() < 1e-9


def test_unitary_function(rng):
    s = eigen_unitary(op([1j, -1]))
    assert np.allclose(unitary_function(s, lambda p: 1.0).matrix, np.eye(2))
    assert np.allclose(unitary_function(s, lambda p: np.exp(2j * p)).matrix, np.diag([-1, 1]))
    s = eigen_unitary(gapped_unitary(rng, 8, rng.uniform(0, TWO_PI, 8)))
    f = unitary_function(s, np.cos).matrix
    g = unitary_function(s, lambda p: np.exp(1j * p)).matrix
    fg = unitary_function(s, lambda p: np.cos(p) * np.exp(1j * p)).matrix
    assert np.abs(f @ g - fg).max() < 1e-10


def test_bump_normalization():
    gf = GapFunction.bump(SpectralGap(-0.5, 1.2), 0.3)
    x = np.linspace(0, TWO_PI, 10 ** 4, endpoint=False)
    # periodic trapezoid rule is spectrally accurate for the smooth bump
    assert abs(gap_function_eval(gf, x, derivative=True).sum() * TWO_PI / 1e4 - 1) < 1e-8
    assert gf.width == pytest.approx(2 * 0.8 * 0.8)


def test_bump_must_fit_gap():
    with pytest.raises(GapViolationError):
        GapFunction.bump(SpectralGap(0.0, 1.0), 2.0)
    with pytest.raises(DomainError):
        GapFunction.bump(SpectralGap(0.0, 1.0), 0.5, fraction=1.5)


def test_step_pair_shape():
    g0, g1 = SpectralGap(-0.6, 0.6), SpectralGap(2.8, 3.4)
    gf = GapFunction.step_pair(g0, g1, 0.8)
    assert gf.value(-0.55) == 0
    assert gf.value(1.5) == 1
    assert gf.value(3.39) == 0
    x = np.linspace(0, TWO_PI, 2001)
    v = gf.value(x)
    assert v.min() >= 0 and v.max() <= 1
    b0 = GapFunction("bump", gf.theta, gf.width)
    b1 = GapFunction("bump", gf.theta_p, gf.width_p)
    assert np.abs(gf.derivative(x) - (b0.derivative(x) - b1.derivative(x))).max() < 1e-12


def test_step_pair_derivative_matches_value():
    gf = GapFunction.step_pair(SpectralGap(-0.6, 0.6), SpectralGap(2.8, 3.4), 0.8)
    x = np.linspace(0.01, TWO_PI - 0.01, 500)
    h = 1e-6
    fd = (gf.value(x + h) - gf.value(x - h)) / (2 * h)
    assert np.abs(fd - gf.derivative(x)).max() < 1e-5


def test_exp_of_step_pair_trivial_off_gaps(rng):
    gf = GapFunction.step_pair(SpectralGap(-0.6, 0.6), SpectralGap(2.8, 3.4), 0.8)
    s = eigen_unitary(gapped_unitary(rng, 8, rng.uniform(0.7, 2.7, 4).tolist() + rng.uniform(3.5, 5.6, 4).tolist()))
    W = unitary_function(s, lambda p: np.exp(-2j * np.pi * gf.value(p))).matrix
    assert np.abs(W - np.eye(8)).max() < 1e-12
    gf.check_against(s)


def test_check_against_detects_spectrum_in_support():
    gf = GapFunction.bump(SpectralGap(-0.6, 0.6), 0.0)
    with pytest.raises(GapViolationError):
        gf.check_against(eigen_unitary(op([np.exp(0.1j), -1])))


def test_gap_contains_is_open():
    g = SpectralGap(1.0, 2.0)
    assert g.contains(1.5) and not g.contains(1.0) and not g.contains(2.0)
