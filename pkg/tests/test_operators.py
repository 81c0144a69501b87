import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from selmut.errors import AllocationFailure, HypothesisViolation, LengthMismatch
from selmut.geometry import build_quadrature, integrate
from selmut.model import KernelSpec, constant_mutation, gaussian_mutation, preset_radial_growth
from selmut.operators import apply_mutation, assemble

from .conftest import DISK, SQUARE, UNIT


def dense_constant(rho):
    # same kernel as the preset, but without the rank-one declaration
    return preset_radial_growth(rho).replace(m=constant_mutation(rho), m_const=None)


def gaussian(rho=2.0, width=0.05):
    return preset_radial_growth().replace(m=gaussian_mutation(rho, width), m_const=None)


@pytest.fixture(scope="module")
def disk24():
    return build_quadrature(DISK, 1 / 24)


def test_constant_gain_entries_on_coarse_square():
    q = build_quadrature(SQUARE, 0.5)
    for kr in (preset_radial_growth(0.5), dense_constant(0.5)):
        op = assemble(q, kr)
        np.testing.assert_array_equal(op.gain, 0.125)
        np.testing.assert_array_equal(op.out_degree, 0.5)


def test_constant_out_degree_on_disk(disk32):
    op = assemble(disk32, preset_radial_growth(3.0))
    np.testing.assert_allclose(op.out_degree, 3.0 * disk32.volume, rtol=1e-15)
    assert abs(op.out_degree[0] - 3 * math.pi / 16) < 3 * 2 * disk32.h


def test_asymmetric_table_rejected(disk24):
    n = disk24.n
    m = np.ones((n, n))
    m[0, 1] = 2.0
    kr = KernelSpec.tabulated(disk24, np.ones(n), np.ones(n), m)
    with pytest.raises(HypothesisViolation, match="not symmetric"):
        assemble(disk24, kr)


def test_negative_table_rejected(disk24):
    n = disk24.n
    m = np.ones((n, n))
    m[0, 1] = m[1, 0] = -1.0
    with pytest.raises(HypothesisViolation, match="negative"):
        assemble(disk24, KernelSpec.tabulated(disk24, np.ones(n), np.ones(n), m))


def test_node_cap(disk24):
    with pytest.raises(AllocationFailure):
        assemble(disk24, gaussian(), node_cap=10)
    op = assemble(disk24, preset_radial_growth(1.0), node_cap=10)  # rank-one path is exempt
    with pytest.raises(AllocationFailure):
        op.gain


def test_constants_are_in_the_kernel(disk24):
    for kr in (preset_radial_growth(2.0), gaussian()):
        op = assemble(disk24, kr)
        out = apply_mutation(op, np.full(disk24.n, 3.7))
        assert np.max(np.abs(out)) < 1e-13 * 3.7


def test_length_mismatch(disk24):
    op = assemble(disk24, preset_radial_growth(1.0))
    with pytest.raises(LengthMismatch):
        apply_mutation(op, np.ones(disk24.n + 1))


def test_linear_profile_on_interval():
    q = build_quadrature(UNIT, 1 / 512)
    x = q.nodes[:, 0]
    kr = KernelSpec(a=lambda p: np.ones(len(p)), k=lambda p: np.ones(len(p)), m=constant_mutation(1.0))
    op = assemble(q, kr)
    assert not op.is_constant
    np.testing.assert_allclose(apply_mutation(op, x), 0.5 - x, atol=1e-3)


field = arrays(np.float64, 0, elements=st.floats(-10, 10))


@pytest.fixture(scope="module")
def operators(disk24):
    return [assemble(disk24, preset_radial_growth(1.5)), assemble(disk24, gaussian())]


@given(st.data())
def test_mass_neutrality(operators, data):
    n = operators[0].n
    u = data.draw(arrays(np.float64, n, elements=st.floats(-10, 10)))
    for op in operators:
        total = integrate(op.quad, op.apply(u))
        scale = max(float(op.quad.weights @ np.abs(u)), 1e-300) * float(op.out_degree.max())
        assert abs(total) <= 1e-12 * max(scale, 1.0)


@given(st.data(), st.floats(-5, 5), st.floats(-5, 5))
def test_linearity(operators, data, alpha, beta):
    n = operators[0].n
    u = data.draw(arrays(np.float64, n, elements=st.floats(-10, 10)))
    v = data.draw(arrays(np.float64, n, elements=st.floats(-10, 10)))
    for op in operators:
        lhs = op.apply(alpha * u + beta * v)
        rhs = alpha * op.apply(u) + beta * op.apply(v)
        np.testing.assert_allclose(lhs, rhs, rtol=0, atol=1e-12 * (1 + np.abs(u).max() + np.abs(v).max()) * 25)


def test_dense_and_rank_one_paths_agree(disk24):
    rng = np.random.default_rng(0)
    u = rng.normal(size=disk24.n)
    fast = assemble(disk24, preset_radial_growth(2.5))
    dense = assemble(disk24, dense_constant(2.5))
    assert fast.is_constant and not dense.is_constant
    np.testing.assert_allclose(fast.apply(u), dense.apply(u), rtol=0, atol=1e-12)
    # explicit formula rho (int u - |Omega| u_i)
    np.testing.assert_allclose(fast.apply(u), 2.5 * (integrate(disk24, u) - disk24.volume * u), rtol=0, atol=1e-13)
    np.testing.assert_allclose(fast.gain, dense.gain, rtol=1e-15)


def test_gain_invariants(disk24):
    op = assemble(disk24, gaussian())
    G, w = op.gain, disk24.weights
    np.testing.assert_allclose(G / w[None, :], (G / w[None, :]).T, rtol=1e-14)
    np.testing.assert_allclose(op.out_degree, G.sum(1), rtol=1e-14)
    assert np.all(G >= 0)


def test_inf_norm_shift_makes_matrix_nonnegative(disk24):
    op = assemble(disk24, gaussian())
    a = preset_radial_growth().a(disk24.nodes)
    L = op.gain + np.diag(a - op.out_degree)
    s = op.inf_norm_shift(a)
    assert abs(s - np.abs(L).sum(1).max()) < 1e-12
    assert np.all(L + s * np.eye(op.n) >= -1e-15)
