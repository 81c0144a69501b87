import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from selmut.diagnostics import (
    DiagnosticsRecorder,
    concentration_report,
    decompose,
    dissipation_general,
    dominant_clusters,
    entropy_and_dissipation,
    entropy_identity_residual,
    gamma,
    l1_bounds,
    l2_bound,
    lambda_ode_residual,
    logistic_gamma,
    lyapunov_F,
    relative_entropy,
)
from selmut.dynamics import simulate
from selmut.errors import DegenerateState, EpsilonTooSmall, NonpositiveBaseline, ZeroInitialMass
from selmut.geometry import build_quadrature
from selmut.model import KernelSpec, gaussian_mutation, preset_radial_growth, sample
from selmut.operators import assemble
from selmut.spectral import analyze
from selmut.stationary import stationary_from_eigen

from .conftest import DISK, hand_quadrature


@pytest.fixture(scope="module")
def regular():
    q = build_quadrature(DISK, 1 / 48)
    kr = preset_radial_growth(3.0)
    a, k = sample(kr, q)
    op = assemble(q, kr)
    spec = analyze(q, kr, op)
    return q, kr, op, a, k, spec, stationary_from_eigen(spec, kr).density


@pytest.fixture(scope="module")
def dense_op():
    q = build_quadrature(DISK, 1 / 24)
    kr = preset_radial_growth().replace(m=gaussian_mutation(2.0, 0.08), m_const=None)
    return q, assemble(q, kr)


def toy():
    q = hand_quadrature([[0.0], [1.0]], [1.0, 1.0])
    m = np.array([[0.0, 1.0], [1.0, 0.0]])
    kr = KernelSpec.tabulated(q, [1.0, 1.0], [1.0, 1.0], m)
    return q, assemble(q, kr)


# --- Gamma, G_q, D_q, F_q ----------------------------------------------------------


def test_gamma_examples(regular):
    q, kr, op, a, k, spec, ubar = regular
    assert gamma(ubar, ubar, k, q) == 0.0
    assert abs(gamma(2 * ubar, ubar, k, q) + q.weights @ ubar) < 1e-14
    u0 = np.ones(q.n)
    # int k ubar = -lambda_p for k = 1
    assert abs(gamma(u0, ubar, k, q) - (-spec.lambda_p - q.weights.sum())) < 1e-10


def test_entropy_at_baseline(regular):
    q, kr, op, a, k, spec, ubar = regular
    for qq in (1, 1.5, 2, 3):
        G, D = entropy_and_dissipation(ubar, ubar, qq, op)
        assert abs(G - q.weights @ ubar**2) < 1e-12
        assert abs(D) < 1e-14


def test_two_node_toy():
    q, op = toy()
    G, D = entropy_and_dissipation(np.array([2.0, 0.0]), np.ones(2), 2, op)
    assert D == 8.0 and G == 4.0
    assert lyapunov_F(np.array([2.0, 0.0]), np.ones(2), 2, q) == 0.0


def test_lyapunov_scale_invariant_at_unit_baseline():
    q, _ = toy()
    ubar = np.array([1.0, 1.0]) / math.sqrt(2)  # int ubar^2 = 1
    for c in (0.3, 1.0, 7.0):
        assert abs(lyapunov_F(c * ubar, ubar, 2, q)) < 1e-14


def test_degenerate_and_nonpositive_baseline():
    q, op = toy()
    with pytest.raises(DegenerateState):
        lyapunov_F(np.zeros(2), np.ones(2), 2, q)
    with pytest.raises(NonpositiveBaseline):
        entropy_and_dissipation(np.ones(2), np.array([1.0, 0.0]), 2, op)
    with pytest.raises(ValueError):
        entropy_and_dissipation(np.ones(2), np.ones(2), 0.5, op)


def _positive(n):
    return arrays(np.float64, n, elements=st.floats(0.01, 10))


@given(st.data(), st.floats(1.0, 4.0))
def test_dissipation_nonnegative(regular, dense_op, data, qq):
    for q, op in ((regular[0], regular[2]), dense_op):
        u = data.draw(arrays(np.float64, q.n, elements=st.floats(0, 10)))
        ubar = data.draw(_positive(q.n))
        G, D = entropy_and_dissipation(u, ubar, qq, op)
        scale = float(q.weights @ (ubar**2 * (u / ubar) ** qq)) * float(op.out_degree.max()) * qq
        assert D >= -1e-12 * max(scale, 1.0)


@given(st.data())
def test_d1_vanishes(dense_op, data):
    q, op = dense_op
    u = data.draw(arrays(np.float64, q.n, elements=st.floats(0, 10)))
    ubar = data.draw(_positive(q.n))
    assert entropy_and_dissipation(u, ubar, 1, op)[1] == 0.0
    # the unsymmetrised form of D_1 is a genuine double sum that must cancel
    assert abs(dissipation_general(u, ubar, lambda s: s, lambda s: np.ones_like(s), op)) < 1e-12 * (1 + np.abs(u).max())


def test_symmetrised_form_equals_unsymmetrised(dense_op, regular):
    rng = np.random.default_rng(5)
    for q, op in (dense_op, (regular[0], regular[2])):
        u = rng.uniform(0, 3, q.n)
        ubar = rng.uniform(0.5, 2, q.n)
        for qq in (1.5, 2.0, 3.0):
            D = entropy_and_dissipation(u, ubar, qq, op)[1]
            Dg = dissipation_general(u, ubar, lambda s: s**qq, lambda s: qq * s ** (qq - 1), op)
            assert abs(D - Dg) <= 1e-10 * abs(Dg)


def test_constant_kernel_pair_sum_matches_dense(regular):
    q, kr, op, a, k, spec, ubar = regular
    dense = assemble(q, kr.replace(m_const=None))
    u = np.linspace(0.1, 2, q.n)
    np.testing.assert_allclose(
        entropy_and_dissipation(u, ubar, 2, op), entropy_and_dissipation(u, ubar, 2, dense), rtol=1e-10
    )


# --- identities along records ----------------------------------------------------------


def test_entropy_identity_on_stationary_records(regular):
    q, kr, op, a, k, spec, ubar = regular
    t = np.arange(5) * 0.1
    G, D = entropy_and_dissipation(ubar, ubar, 2, op)
    assert entropy_identity_residual(t, [G] * 5, [D] * 5, [gamma(ubar, ubar, k, q)] * 5, 2) <= 1e-10
    with pytest.raises(ValueError):
        entropy_identity_residual([0, 0.1, 0.3], [1] * 3, [0] * 3, [0] * 3, 2)


def test_lambda_ode_on_stationary_records():
    t = np.arange(6) * 0.01
    assert lambda_ode_residual(t, np.ones(6), np.zeros(6), -0.6) <= 1e-10


def test_lambda_ode_pure_logistic_curve():
    t = np.arange(0, 50.001, 1e-3)
    lam = logistic_gamma(t, 0.5, -0.6)
    assert abs(lam[0] - 0.5) < 1e-15 and abs(lam[-1] - 1) < 1e-12
    assert lambda_ode_residual(t, lam, np.zeros_like(t), -0.6) < 1e-3


def test_g1_identity_matches_gamma_integral(regular):
    q, kr, op, a, k, spec, ubar = regular
    rec = DiagnosticsRecorder(op, k, ubar=ubar, lambda_p=spec.lambda_p)
    simulate(np.ones(q.n), op, a, k, 1e-3, 2.0, hooks=[rec], record_every=1)
    t = rec.series("t")
    logG1 = np.log(rec.series("G", 1))
    Gam = rec.series("Gamma")
    integral = np.concatenate([[0], np.cumsum(0.5 * (Gam[1:] + Gam[:-1]) * np.diff(t))])
    assert np.max(np.abs((logG1 - logG1[0]) - integral)) < 5e-3


# --- corridors ---------------------------------------------------------------------


def test_l1_bounds_competition_form_examples():
    q = build_quadrature(DISK, 1 / 64)
    a = np.ones(q.n)
    k = np.ones(q.n)
    vol = q.volume
    u = np.ones(q.n)  # mass = vol, the discrete pi/16
    assert l1_bounds(u, a, k, q, form="competition") == (vol, vol)
    u1 = u / vol
    c1, C1 = l1_bounds(u1, a, k, q, form="competition")
    assert abs(c1 - vol) < 1e-15 and abs(C1 - 1) < 1e-12
    c1, C1 = l1_bounds(u1, a, k, q, c0=0.5, C0=2.0, form="competition")
    assert abs(c1 - min(1, vol / 2)) < 1e-15 and abs(C1 - max(1, vol / 0.5)) < 1e-12


def test_l1_bounds_growth_form():
    q = build_quadrature(DISK, 1 / 64)
    a, k = sample(preset_radial_growth(), q)
    u = np.ones(q.n)
    c1, C1 = l1_bounds(u, a, k, q)
    assert c1 == min(q.volume, a.min()) and C1 == max(q.volume, a.max())
    with pytest.raises(ZeroInitialMass):
        l1_bounds(np.zeros(q.n), a, k, q)
    with pytest.raises(ValueError):
        l1_bounds(u, a, k, q, form="other")


def test_l2_bound_formula(regular):
    q, kr, op, a, k, spec, ubar = regular
    u0 = np.ones(q.n)
    w = q.weights
    expect = 2.0 * ubar.max() * math.sqrt(w @ u0**2) / (w @ ubar)
    assert abs(l2_bound(u0, ubar, q, 2.0) - expect) < 1e-12


def test_h_decays_in_regular_regime(regular):
    q, kr, op, a, k, spec, ubar = regular
    u0 = 0.2 + 4 * np.exp(-((q.nodes - [0.1, 0.05]) ** 2).sum(1) / 0.003)
    rec = DiagnosticsRecorder(op, k, ubar=ubar, lambda_p=spec.lambda_p)
    simulate(u0, op, a, k, 0.01, 200.0, hooks=[rec], record_every=1000)
    h = rec.series("h_norm_L2")
    assert h[-1] < 0.01 * h[0]


# --- decomposition -----------------------------------------------------------------


def test_decompose_examples(regular):
    q, kr, op, a, k, spec, ubar = regular
    lam, h = decompose(ubar, ubar, q)
    assert abs(lam - 1) < 1e-14 and np.max(np.abs(h)) < 1e-14
    lam, h = decompose(3 * ubar, ubar, q)
    assert abs(lam - 3) < 1e-14 and np.max(np.abs(h)) < 1e-13
    rng = np.random.default_rng(2)
    v = rng.normal(size=q.n)
    v -= (q.weights @ (ubar * v)) / (q.weights @ ubar**2) * ubar
    lam, h = decompose(ubar + v, ubar, q)
    assert abs(lam - 1) < 1e-13
    np.testing.assert_allclose(h, v, atol=1e-13)
    u = rng.uniform(0, 5, q.n)
    lam, h = decompose(u, ubar, q)
    assert abs(q.weights @ (ubar * h)) < 1e-12
    with pytest.raises(NonpositiveBaseline):
        decompose(u, np.zeros(q.n), q)


# --- concentration -------------------------------------------------------------------


def test_concentration_of_constant_field():
    q = build_quadrature(DISK, 1 / 128)
    rep = concentration_report(np.ones(q.n), [[0, 0]], 0.05, q)
    assert abs(rep.fractions[0] - 0.04) < 0.005
    assert rep.max_density == 1.0


def test_concentration_of_indicator():
    q = build_quadrature(DISK, 1 / 128)
    u = (np.linalg.norm(q.nodes, axis=1) < 0.05).astype(float)
    assert concentration_report(u, [[0, 0]], 0.05, q).fractions == (1.0,)


def test_concentration_epsilon_guard():
    q = build_quadrature(DISK, 1 / 32)
    with pytest.raises(EpsilonTooSmall):
        concentration_report(np.ones(q.n), [[0, 0]], 0.05, q)


def test_dominant_clusters():
    from selmut.diagnostics import ConcentrationReport

    rep = ConcentrationReport((0.5, 0.1, 0.3, 0.2), 1.0)
    assert dominant_clusters(rep) == frozenset({0, 2})


# --- recorder ----------------------------------------------------------------------


def test_recorder_without_baseline_marks_entropy_absent():
    q = build_quadrature(DISK, 1 / 64)
    kr = preset_radial_growth(0.1)
    a, k = sample(kr, q)
    op = assemble(q, kr)
    rec = DiagnosticsRecorder(op, k, ubar=None, lambda_p=-0.98, centers=[[0, 0]])
    simulate(np.ones(q.n), op, a, k, 0.01, 1.0, hooks=[rec], record_every=10)
    recs = rec.finalize()
    assert all(r.Gamma is None and r.G == {} and r.lambda_t is None for r in recs)
    assert all(len(r.conc_fractions) == 1 for r in recs)


def test_recorder_rejects_nonpositive_baseline(regular):
    q, kr, op, a, k, spec, ubar = regular
    bad = ubar.copy()
    bad[0] = 0
    rec = DiagnosticsRecorder(op, k, ubar=bad)
    assert rec.ubar is None


def test_recorder_residual_columns(regular):
    q, kr, op, a, k, spec, ubar = regular
    rec = DiagnosticsRecorder(op, k, ubar=ubar, lambda_p=spec.lambda_p)
    simulate(np.ones(q.n), op, a, k, 0.01, 1.0, hooks=[rec], record_every=5)
    recs = rec.finalize()
    assert recs[0].lambda_ode_residual is None and recs[-1].lambda_ode_residual is None
    assert all(r.lambda_ode_residual is not None for r in recs[1:-1])
    assert all(2.0 in r.entropy_residual or 2 in r.entropy_residual for r in recs[1:-1])
