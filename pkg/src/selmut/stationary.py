"""Stationary measures of the nonlinear problem and their weak-form residual."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import NonPositiveTheta, NotAMaximizer
from .geometry import DomainSpec, Quadrature, check_field
from .model import KernelSpec
from .operators import NonlocalOperator
from .spectral import Atom, SpectralResult


@dataclass(frozen=True, eq=False)
class MeasureOnOmega:
    """Density on the quadrature nodes plus finitely many atoms."""

    quad: Quadrature
    density: np.ndarray
    atoms: tuple = ()
    theta: float = 1.0

    def __post_init__(self):
        if not self.theta > 0:
            raise NonPositiveTheta(f"theta must be positive, got {self.theta}")
        if self.density.size and np.any(self.density < 0):
            raise ValueError("measure density must be non-negative")
        if any(at.mass < 0 for at in self.atoms):
            raise ValueError("atom masses must be non-negative")

    @property
    def atom_points(self) -> np.ndarray:
        if not self.atoms:
            return np.zeros((0, self.quad.dim))
        return np.stack([np.asarray(at.point, dtype=float) for at in self.atoms])

    @property
    def atom_masses(self) -> np.ndarray:
        return np.array([at.mass for at in self.atoms], dtype=float)

    def _dens(self) -> np.ndarray:
        return self.density if self.density.size else np.zeros(self.quad.n)

    def integrate(self, nodal, at_atoms=None) -> float:
        """``int f dmu`` given nodal values of f and, if there are atoms, its values there."""
        total = float(self.quad.weights @ (self._dens() * check_field(self.quad, nodal)))
        if self.atoms:
            total += float(self.atom_masses @ np.asarray(at_atoms, dtype=float))
        return total

    def integrate_fn(self, f) -> float:
        """``int f dmu`` for a vectorised evaluator ``f``."""
        return self.integrate(f(self.quad.nodes), f(self.atom_points) if self.atoms else None)

    @property
    def total_mass(self) -> float:
        return self.integrate(np.ones(self.quad.n), np.ones(len(self.atoms)))

    def scaled(self, factor: float) -> "MeasureOnOmega":
        atoms = tuple(Atom(at.index, at.point, factor * at.mass) for at in self.atoms)
        return MeasureOnOmega(self.quad, factor * self._dens(), atoms, self.theta * factor)


def stationary_from_eigen(spec: SpectralResult, kernel: KernelSpec, quad: Optional[Quadrature] = None) -> MeasureOnOmega:
    """Scale the normalised eigen-measure by ``theta = -lambda_p / int k dmu_p``."""
    quad = quad or spec.quad
    density = spec.eigen_density if spec.eigen_density.size else np.zeros(quad.n)
    k_nodes = kernel.k(quad.nodes)
    k_mass = float(quad.weights @ (k_nodes * density))
    if spec.atoms:
        pts = np.stack([np.asarray(at.point, dtype=float) for at in spec.atoms])
        k_mass += float(np.dot(kernel.k(pts), [at.mass for at in spec.atoms]))
    if not k_mass > 0:
        raise NonPositiveTheta("eigen-measure has no mass against k")
    theta = -spec.lambda_p / k_mass
    if not theta > 0:
        raise NonPositiveTheta(f"theta = {theta:.6g}; lambda_p = {spec.lambda_p:.6g} should be negative")
    atoms = tuple(Atom(at.index, at.point, theta * at.mass) for at in spec.atoms)
    return MeasureOnOmega(quad, theta * density, atoms, theta)


def dirac_stationary_no_mutation(
    kernel: KernelSpec,
    points,
    quad: Quadrature,
    split: Optional[Sequence[float]] = None,
    tol: float = 1e-12,
) -> MeasureOnOmega:
    """Sum of Dirac masses at maximizers of ``a`` for the mutation-free problem.

    A single atom carries ``a(x)/k(x)``.  With several points the masses
    ``split_i * a(x_i)/k(x_i)`` (split summing to 1, uniform by default)
    keep ``int k dmu = max a``, which is what stationarity needs.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[0] == 0:
        raise ValueError("need at least one point")
    a_pts = kernel.a(pts)
    top = kernel.a_sup
    if top is None:
        top = max(float(np.max(kernel.a(quad.nodes))), float(a_pts.max()))
    bad = np.flatnonzero(a_pts < top - tol * max(1.0, abs(top)))
    if bad.size:
        i = bad[0]
        raise NotAMaximizer(f"a({pts[i]}) = {a_pts[i]:.12g} is below sup a = {top:.12g}")
    s = np.full(pts.shape[0], 1.0 / pts.shape[0]) if split is None else np.asarray(split, dtype=float)
    if s.shape != (pts.shape[0],) or np.any(s < 0) or not np.isclose(s.sum(), 1.0):
        raise ValueError("split must be non-negative and sum to 1")
    masses = s * a_pts / kernel.k(pts)
    atoms = tuple(Atom(quad.nearest_node(p), p.copy(), float(mk)) for p, mk in zip(pts, masses))
    return MeasureOnOmega(quad, np.zeros(quad.n), atoms, theta=1.0)


# --- weak form ------------------------------------------------------------------


@dataclass(frozen=True)
class Bump:
    """Tensor-product bump ``prod_d (1 - ((x_d - c_d)/r)^2)_+^2``, supported in the cube of half-width r."""

    center: np.ndarray
    radius: float

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        t = (x - self.center) / self.radius
        return np.prod(np.clip(1.0 - t**2, 0.0, None) ** 2, axis=1)


def default_test_bank(domain: DomainSpec, count: int = 32, seed: int = 0) -> list[Bump]:
    """Bumps at random interior centres whose supports stay inside the domain."""
    rng = np.random.default_rng(seed)
    lo, hi = domain.bbox
    scale = float(np.min(hi - lo))
    radius = 0.2 * scale
    reach = radius * np.sqrt(domain.dim)
    bank = []
    while len(bank) < count:
        c = rng.uniform(lo, hi, size=(4 * count, domain.dim))
        ok = domain.boundary_distance(c) > reach
        bank.extend(Bump(p, radius) for p in c[ok][: count - len(bank)])
    return bank


def _mutation_at(kernel: KernelSpec, op: NonlocalOperator, points, phi_nodes, phi_points) -> np.ndarray:
    # (M phi)(p) = sum_j w_j m(p, x_j) (phi_j - phi(p)), kernel evaluated at p
    quad = op.quad
    if op.is_constant:
        rho = op.rho
        return rho * (float(quad.weights @ phi_nodes) - quad.volume * phi_points)
    table = kernel.mutation(points, quad.nodes) * quad.weights[None, :]
    return table @ phi_nodes - table.sum(axis=1) * phi_points


def weak_residual(
    measure: MeasureOnOmega,
    op: NonlocalOperator,
    kernel: KernelSpec,
    test_bank: Optional[Sequence] = None,
    seed: int = 0,
) -> float:
    """``max_phi |int (M phi + a phi) dmu - (int phi dmu)(int k dmu)|`` over the bank.

    Atom contributions use kernel evaluations at the atom locations, not
    grid values.
    """
    quad = measure.quad
    if test_bank is None:
        test_bank = default_test_bank(quad.domain, seed=seed)
    pts = measure.atom_points
    has_atoms = bool(measure.atoms)
    a_nodes = kernel.a(quad.nodes)
    a_pts = kernel.a(pts) if has_atoms else None
    k_mass = measure.integrate(kernel.k(quad.nodes), kernel.k(pts) if has_atoms else None)
    worst = 0.0
    for phi in test_bank:
        ph = phi(quad.nodes)
        pp = phi(pts) if has_atoms else None
        lhs_nodes = op.apply(ph) + a_nodes * ph
        lhs_pts = _mutation_at(kernel, op, pts, ph, pp) + a_pts * pp if has_atoms else None
        lhs = measure.integrate(lhs_nodes, lhs_pts)
        rhs = measure.integrate(ph, pp) * k_mass
        worst = max(worst, abs(lhs - rhs))
    return worst
