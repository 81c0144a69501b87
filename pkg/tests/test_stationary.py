import math

import numpy as np
import pytest

from selmut.errors import NonPositiveTheta, NotAMaximizer
from selmut.geometry import build_quadrature
from selmut.model import constant_competition, preset_constant_growth, preset_four_point_growth, preset_radial_growth
from selmut.operators import assemble
from selmut.spectral import analyze, dispersion_curve
from selmut.model import sample
from selmut.stationary import (
    Bump,
    MeasureOnOmega,
    default_test_bank,
    dirac_stationary_no_mutation,
    stationary_from_eigen,
    weak_residual,
)

from .conftest import DISK, SQUARE


def test_constant_growth_stationary_density(square64):
    kr = preset_constant_growth(0.7, 0.5)
    mu = stationary_from_eigen(analyze(square64, kr), kr)
    assert abs(mu.theta - 0.7) < 1e-12
    np.testing.assert_allclose(mu.density, 0.7 / square64.volume, rtol=1e-10)
    assert weak_residual(mu, assemble(square64, kr), kr) <= 1e-10 * 0.7**2


def test_competition_scaling(disk96):
    kr = preset_radial_growth(3.0)
    spec = analyze(disk96, kr)
    base = stationary_from_eigen(spec, kr)
    c = 2.5
    scaled = stationary_from_eigen(spec, kr.replace(k=constant_competition(c), c0=c, C0=c))
    assert abs(scaled.theta - base.theta / c) < 1e-14
    np.testing.assert_allclose(scaled.density, base.density / c, rtol=1e-14)


def test_competition_scaling_moves_atoms_too():
    q = build_quadrature(DISK, 1 / 64)
    kr = preset_radial_growth(0.1)
    spec = analyze(q, kr)
    base = stationary_from_eigen(spec, kr)
    scaled = stationary_from_eigen(spec, kr.replace(k=constant_competition(4.0), c0=4.0, C0=4.0))
    np.testing.assert_allclose(scaled.atom_masses, base.atom_masses / 4, rtol=1e-14)
    np.testing.assert_array_equal(scaled.atom_points, base.atom_points)


def test_theta_equals_minus_lambda_for_unit_competition(disk96):
    kr = preset_radial_growth(3.0)
    spec = analyze(disk96, kr)
    mu = stationary_from_eigen(spec, kr)
    assert abs(mu.theta + spec.lambda_p) < 1e-12
    assert mu.theta > 0


def test_weak_residual_of_regular_stationary_state_refines():
    res = []
    for h in (1 / 24, 1 / 48, 1 / 96):
        q = build_quadrature(DISK, h)
        kr = preset_radial_growth(3.0)
        mu = stationary_from_eigen(analyze(q, kr), kr)
        res.append(weak_residual(mu, assemble(q, kr), kr))
        assert res[-1] <= h
    assert res[-1] < res[0]


def test_weak_residual_detects_non_stationary_measure(disk96):
    kr = preset_radial_growth(3.0)
    mu = stationary_from_eigen(analyze(disk96, kr), kr)
    op = assemble(disk96, kr)
    bad = mu.scaled(2.0)
    # the quadratic term no longer balances: residual of order (int k dmu)^2
    assert weak_residual(bad, op, kr) > 0.1 * mu.theta**2 * 0.5
    assert weak_residual(mu, op, kr) < 1e-9


def test_weak_residual_with_atoms_singular_case():
    q = build_quadrature(DISK, 1 / 64)
    kr = preset_radial_growth(0.1)
    mu = stationary_from_eigen(analyze(q, kr), kr)
    op = assemble(q, kr)
    assert len(mu.atoms) == 1
    r = weak_residual(mu, op, kr)
    assert r < 0.05
    assert weak_residual(mu.scaled(2.0), op, kr) > 5 * r


def test_discrete_and_analytic_eigen_densities_agree(disk96):
    kr = preset_radial_growth(3.0)
    spec = analyze(disk96, kr)
    a, _ = sample(kr, disk96)
    curve = dispersion_curve(3.0, a, disk96, a_sup=1.0)
    phi = curve.density(spec.lambda_p)
    phi /= float(disk96.weights @ phi)
    gap = np.sqrt(disk96.weights @ (phi - spec.eigen_density) ** 2 / (disk96.weights @ phi**2))
    assert gap < disk96.h


def test_dirac_single_maximizer(disk32):
    kr = preset_radial_growth(0.0)
    mu = dirac_stationary_no_mutation(kr, [[0.0, 0.0]], disk32)
    assert len(mu.atoms) == 1 and mu.atoms[0].mass == 1.0
    assert weak_residual(mu, assemble(disk32, kr), kr) < 1e-12


def test_dirac_four_maximizers_uniform_split(disk32):
    kr = preset_four_point_growth(0.0)
    from selmut.model import FOUR_POINTS

    mu = dirac_stationary_no_mutation(kr, FOUR_POINTS, disk32)
    np.testing.assert_allclose(mu.atom_masses, 0.25)
    assert abs(mu.atom_masses.sum() - 1.0) < 1e-15
    assert weak_residual(mu, assemble(disk32, kr), kr) < 1e-10
    uneven = dirac_stationary_no_mutation(kr, FOUR_POINTS[:2], disk32, split=[0.9, 0.1])
    assert weak_residual(uneven, assemble(disk32, kr), kr) < 1e-10


def test_dirac_rejects_non_maximizer(disk32):
    with pytest.raises(NotAMaximizer):
        dirac_stationary_no_mutation(preset_radial_growth(0.0), [[0.1, 0.0]], disk32)
    with pytest.raises(ValueError):
        dirac_stationary_no_mutation(preset_radial_growth(0.0), [[0.0, 0.0]], disk32, split=[0.5])


def test_measure_validation(disk32):
    with pytest.raises(NonPositiveTheta):
        MeasureOnOmega(disk32, np.ones(disk32.n), theta=0.0)
    with pytest.raises(ValueError):
        MeasureOnOmega(disk32, -np.ones(disk32.n))


def test_measure_integration(disk32):
    from selmut.spectral import Atom

    mu = MeasureOnOmega(disk32, np.ones(disk32.n), (Atom(0, np.zeros(2), 0.5),))
    assert abs(mu.total_mass - (disk32.volume + 0.5)) < 1e-14
    assert abs(mu.integrate_fn(lambda x: np.ones(len(np.atleast_2d(x)))) - mu.total_mass) < 1e-14


def test_test_bank_deterministic_and_interior():
    b1 = default_test_bank(DISK, seed=7)
    b2 = default_test_bank(DISK, seed=7)
    assert len(b1) == 32
    for p, q in zip(b1, b2):
        np.testing.assert_array_equal(p.center, q.center)
    for bump in b1:
        corners = bump.center + bump.radius * np.array([[1, 1], [1, -1], [-1, 1], [-1, -1]])
        assert np.all(DISK.contains(corners))
    sq = default_test_bank(SQUARE, count=8, seed=1)
    assert len(sq) == 8


def test_bump_shape():
    b = Bump(np.zeros(2), 0.1)
    assert b([0.0, 0.0])[0] == 1.0
    assert b([0.1, 0.0])[0] == 0.0 and b([0.05, 0.2])[0] == 0.0
