from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zdet.circle_ops import (
    CircleOperator,
    FourierSeries,
    MultiplierExpansion,
    ZollRegularizer,
    decomposition_trace,
    entry,
    fourier_component,
    identity,
    log_q_diagonal,
    mk_multiplication,
    mk_multiplier,
    mk_random_operator,
    mk_reciprocal_multiplier,
    mk_shift,
    mk_smoothing,
    op_norm_estimate,
    sigma_of_j,
    truncate,
)
from zdet.detfit import trace_power


def test_multiplication_identity_and_terms():
    A = mk_multiplication(FourierSeries({0: 1.0}))
    assert np.array_equal(truncate(A, 3), np.eye(7))
    f = FourierSeries.from_trig(1.0, cos={1: 0.3})
    M = mk_multiplication(f)
    terms = {s: m(5)[()] for s, m in M.terms}
    assert terms == {-1: 0.15, 0: 1.0, 1: 0.15}
    assert M.smoothing == ()


def test_pure_shift_superdiagonal():
    S = mk_multiplication(FourierSeries({1: 1.0}))
    assert entry(S, 3, 2) == 1
    assert entry(S, 2, 3) == 0
    T = truncate(S, 1)
    assert np.array_equal(T, np.diag(np.ones(2), 1).T) or np.array_equal(T, np.eye(3, k=-1))
    # modes -1, 0, 1: entry (m, n) = 1 when m = n + 1, i.e. the subdiagonal in row-major mode order
    assert np.array_equal(T, np.eye(3, k=-1))


def test_entry_examples():
    assert entry(identity(), 5, 5) == 1
    A = mk_multiplier([0, 1])
    assert entry(A, 4, 4) == pytest.approx(0.25)
    assert entry(A, 0, 0) == 0


def test_truncate_matches_entries():
    A = mk_random_operator(4, 2, 0.3) + mk_smoothing(2, 0.1, 3.0, 4)
    n = 6
    T = truncate(A, n)
    for m in range(-n, n + 1):
        for k in range(-n, n + 1):
            assert T[m + n, k + n] == entry(A, m, k)


def test_fourier_components():
    f = FourierSeries.from_trig(0.2, cos={1: 0.6, 2: 0.1})
    M = mk_multiplication(f)
    C = fourier_component(M, 1)
    assert len(C.terms) == 1 and C.terms[0][0] == 1
    assert C.terms[0][1](7)[()] == pytest.approx(f[1])
    single = mk_shift(2, 0.5)
    assert fourier_component(single, 2) == single
    assert not np.any(truncate(fourier_component(single, 1), 5))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_components_reconstruct_entrywise(seed):
    A = mk_random_operator(seed, 3, 0.5) + mk_smoothing(seed, 0.2, 2.0, 5)
    n = 9
    total = sum(truncate(fourier_component(A, k), n) for k in range(-2 * n, 2 * n + 1))
    assert np.array_equal(total, truncate(A, n))


def test_sigma_of_j():
    assert sigma_of_j((0, 0)) == 0
    assert sigma_of_j((2, -2)) == 2
    assert sigma_of_j((-1, 3, -2)) == 2


def test_decomposition_r1_is_trace():
    A = mk_random_operator(7, 2, 0.4, complex_coeffs=True)
    assert decomposition_trace(A, 1, 10) == pytest.approx(np.trace(truncate(A, 10)), abs=1e-13)


def test_decomposition_shift_pattern():
    A = mk_shift(1, 0.7) + mk_shift(-1, 0.4) + mk_multiplier([0.3, 0.2])
    assert decomposition_trace(A, 2, 10) == pytest.approx(trace_power(truncate(A, 10), 2), abs=1e-12)


@pytest.mark.parametrize("r", [1, 2, 3])
def test_decomposition_random_bandwidth3(r):
    A = mk_random_operator(11, 3, 0.4, complex_coeffs=True) + mk_smoothing(5, 0.1, 2.0, 3)
    dense = trace_power(truncate(A, 30), r)
    assert abs(decomposition_trace(A, r, 30) - dense) <= 1e-12


def test_decomposition_rejects_edge():
    with pytest.raises(ValueError, match="exceeds"):
        decomposition_trace(mk_random_operator(0, 3), 3, 8)


def test_smoothing_basics():
    assert mk_smoothing(1, 0.0, 4, 20) == CircleOperator()
    assert not np.any(truncate(mk_smoothing(1, 0.0, 4, 20), 5))
    assert np.array_equal(truncate(mk_smoothing(3, 1e-2, 4, 20), 25), truncate(mk_smoothing(3, 1e-2, 4, 20), 25))
    S = mk_smoothing(3, 1e-2, 4, 20)
    assert S.terms == ()
    assert op_norm_estimate(S, 25) <= 0.2
    assert np.max(np.abs(truncate(S, 25)[np.abs(np.arange(-25, 26)) > 20])) == 0


def test_op_norm_examples():
    assert op_norm_estimate(identity(), 4) == pytest.approx(1.0)
    assert op_norm_estimate(mk_shift(1, 0.3), 5) == pytest.approx(0.3)
    A = mk_shift(1, 0.3) + mk_shift(-2, 0.5)
    assert op_norm_estimate(A, 10) <= 0.8 + 1e-12


def test_reciprocal_multiplier_exact():
    for a in (0.5, 1.0, 2.0):
        A = mk_reciprocal_multiplier(a, 0.7)
        k = np.arange(-200, 201)
        vals = A.terms[0][1](k)
        assert np.max(np.abs(vals - 0.7 / (a + np.abs(k)))) < 1e-15


def test_multiplier_requires_zero_exceptional():
    with pytest.raises(ValueError):
        MultiplierExpansion((1.0,), (1.0,), {1: 0.0})


def test_real_series_symmetry_check():
    with pytest.raises(ValueError):
        FourierSeries({1: 1.0, -1: 0.5}, real=True)
    f = FourierSeries.from_trig(0.1, cos={1: 0.4}, sin={2: 0.3})
    assert f[-2] == pytest.approx(np.conj(f[2]))


def test_exp_series_matches_pointwise():
    lf = FourierSeries.from_trig(0.2, cos={1: 0.6})
    f = lf.exp()
    th = np.linspace(0, 2 * np.pi, 17)
    assert np.allclose(f.evaluate(th), np.exp(lf.evaluate(th)), atol=1e-14)


def test_regularizer_weights():
    Q = ZollRegularizer()
    w = Q.power_weights(np.arange(-3, 4), 2.0)
    assert np.allclose(w, [9, 4, 1, 0, 1, 4, 9])
    Qp = ZollRegularizer(3.0, positive=True)
    assert np.allclose(Qp.power_weights([0, 2], 1.0), [3.0, 6.0])
    assert np.allclose(log_q_diagonal(2, Qp), np.log(3.0 * np.array([2, 1, 1, 1, 2])))
    assert log_q_diagonal(2, ZollRegularizer())[2] == 0
    with pytest.raises(ValueError):
        ZollRegularizer(0.0)


def test_product_truncation_is_exact():
    A = mk_random_operator(1, 2, 0.3) + mk_smoothing(1, 0.1, 3.0, 12)
    B = mk_random_operator(2, 1, 0.3)
    n = 5
    big = truncate(A, 40) @ truncate(B, 40)
    assert np.allclose((A @ B).truncate(n), big[40 - n: 40 + n + 1, 40 - n: 40 + n + 1], atol=1e-15)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), c=st.complex_numbers(max_magnitude=5, allow_nan=False, allow_infinity=False),
       n=st.integers(0, 12))
def test_scaling_exact(seed, c, n):
    A = mk_random_operator(seed, 2, 0.5, complex_coeffs=True)
    assert np.array_equal(truncate(A * c, n), c * truncate(A, n))


@settings(max_examples=20, deadline=None)
@given(coeffs=st.lists(st.floats(-1, 1), min_size=2, max_size=4), n=st.integers(1, 10))
def test_self_adjoint_pairs_hermitian(coeffs, n):
    # real multipliers on shift k and the mirrored values on shift -k
    A = mk_multiplier(coeffs) + mk_shift(1, 0.3) + mk_shift(-1, 0.3)
    T = truncate(A, n)
    assert np.array_equal(T, T.conj().T)
