"""Generalised principal eigenvalue of ``mutation + a`` and the eigen-measure.

Sign convention: ``lambda_p`` is the generalised principal eigenvalue, so
the dominant eigenvalue of the discrete operator ``G + diag(a - M)`` is
``-lambda_p`` and ``lambda_p <= -min(a) < 0``.

For a constant mutation kernel ``m = rho`` the eigen-problem has the
closed-form solution ``phi = rho / (-lambda - a + rho |Omega|)`` with
``lambda`` fixed by the dispersion relation ``F(lambda) = 1``.  When the
limit of ``F`` at ``-sigma`` does not reach 1 no such density exists: the
eigenvalue sticks to ``-sigma`` and the deficit goes into atoms on the
maximizer set.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from .errors import DivergentLimit, InvalidKernel, NegativeAtomMass, NoConvergence
from .geometry import DomainSpec, Quadrature, build_quadrature, check_field
from .model import KernelSpec, sample
from .operators import NonlocalOperator, assemble

log = logging.getLogger(__name__)


class Classification(str, enum.Enum):
    REGULAR_BOUNDED = "RegularBounded"
    REGULAR_UNBOUNDED = "RegularUnbounded"
    SINGULAR = "Singular"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class Atom:
    index: int  # nearest quadrature node
    point: np.ndarray
    mass: float


@dataclass(frozen=True, eq=False)
class SpectralResult:
    lambda_p: float
    sigma: float
    argmax_set: np.ndarray
    clusters: tuple = ()
    classification: Optional[Classification] = None
    eigen_density: np.ndarray = field(default_factory=lambda: np.zeros(0))
    atoms: tuple = ()
    candidate_mass: float = math.nan
    quad: Optional[Quadrature] = field(default=None, repr=False)

    @property
    def atom_mass(self) -> float:
        return float(sum(at.mass for at in self.atoms))

    @property
    def density_mass(self) -> float:
        if self.eigen_density.size == 0:
            return 0.0
        return float(self.quad.weights @ self.eigen_density)

    @property
    def total_mass(self) -> float:
        return self.density_mass + self.atom_mass


# --- sigma and the maximizer set ------------------------------------------------


def _local_slope(quad: Quadrature, f: np.ndarray) -> float:
    """Steepest descent of f from its nodal maximum into the surrounding lattice stencil."""
    top = float(f.max())
    grid = quad.lattice_map()
    shape = np.array(quad.lattice_shape)
    offsets = np.stack(np.meshgrid(*[[-1, 0, 1]] * quad.dim, indexing="ij"), -1).reshape(-1, quad.dim)
    offsets = offsets[np.any(offsets != 0, axis=1)]
    slope = 0.0
    for i in np.flatnonzero(f >= top - 1e-14 * max(1.0, abs(top))):
        nb = quad.index[i] + offsets
        ok = np.all((nb >= 0) & (nb < shape), axis=1)
        j = grid[tuple(nb[ok].T)]
        j = j[j >= 0]
        if j.size:
            dist = np.linalg.norm(quad.nodes[j] - quad.nodes[i], axis=1)
            slope = max(slope, float(np.max(np.abs(f[i] - f[j]) / dist)))
    return slope


def _clusters(quad: Quadrature, members: np.ndarray, maximizers=None) -> tuple:
    """Connected components of the argmax set (lattice stencil adjacency).

    With known maximizers each component is further split by nearest
    maximizer, so cusp-shaped growth rates whose near-maximal sets merge
    on coarse grids still yield one cluster per maximizer.
    """
    mask = np.zeros(quad.lattice_shape, dtype=bool)
    mask[tuple(quad.index[members].T)] = True
    structure = np.ones((3,) * quad.dim, dtype=bool)
    labels, count = ndimage.label(mask, structure=structure)
    node_labels = labels[tuple(quad.index.T)]
    comps = [np.flatnonzero(node_labels == c) for c in range(1, count + 1)]
    if maximizers is None or len(maximizers) < 2:
        return tuple(comps)
    mx = np.atleast_2d(np.asarray(maximizers, dtype=float))
    out = []
    for comp in comps:
        owner = np.argmin(np.linalg.norm(quad.nodes[comp, None, :] - mx[None], axis=2), axis=1)
        out.extend(comp[owner == j] for j in range(len(mx)) if np.any(owner == j))
    return tuple(out)


def sigma_argmax(a, op: NonlocalOperator, delta: Optional[float] = None, a_sup: Optional[float] = None):
    """``sigma = sup(a - M)`` and the nodes within ``delta`` of the nodal maximum.

    With a constant kernel and a known ``a_sup`` the supremum is exact
    (``a_sup - rho |Omega|``); otherwise it is the nodal maximum.  The
    default ``delta`` is ``2h`` times the local slope of ``a - M`` around
    its nodal maximum, which keeps the set stable under refinement.
    """
    quad = op.quad
    f = check_field(quad, a) - op.out_degree
    nodal = float(f.max())
    if delta is None:
        delta = 2.0 * quad.h * _local_slope(quad, f)
    if delta < 0:
        raise ValueError("delta must be non-negative")
    sigma = nodal
    if a_sup is not None and op.is_constant:
        sigma = max(float(a_sup) - float(op.out_degree[0]), nodal)
    members = np.flatnonzero(f >= nodal - delta)
    return sigma, members


# --- discrete principal eigenpair ---------------------------------------------------


def principal_eigenvalue_discrete(
    op: NonlocalOperator,
    a,
    tol: float = 1e-12,
    residual_tol: float = 1e-10,
    max_iter: int = 100_000,
    v0=None,
):
    """Shifted power iteration on ``G + diag(a - M) + s I``.

    The shift ``s = ||G + diag(a - M)||_inf`` makes the iteration matrix
    non-negative.  The operator is self-adjoint for the weighted inner
    product, so the Rayleigh quotient is taken in that product.  Stops when
    the quotient moves by less than ``tol`` and the relative eigen-residual
    is below ``residual_tol``.  Returns ``(lambda_p, v)`` with ``int v = 1``.
    """
    quad = op.quad
    a = check_field(quad, a)
    w = quad.weights
    diag = a - op.out_degree
    shift = op.inf_norm_shift(a)

    def L(v):
        return op.gain_apply(v) + diag * v

    v = np.ones(quad.n) if v0 is None else np.array(v0, dtype=float)
    v /= math.sqrt(w @ (v * v))
    mu_old = math.inf
    res = math.inf
    for it in range(1, max_iter + 1):
        Lv = L(v)
        mu = float(w @ (v * Lv))
        res = float(np.linalg.norm(Lv - mu * v) / np.linalg.norm(v))
        if abs(mu - mu_old) < tol * max(1.0, abs(mu)) and res < residual_tol:
            break
        mu_old = mu
        y = Lv + shift * v
        v = y / math.sqrt(w @ (y * y))
    else:
        raise NoConvergence(
            f"power iteration stalled after {max_iter} iterations (residual {res:.3e})",
            residual=res,
            iterations=max_iter,
        )
    v = np.abs(v)
    v /= float(w @ v)
    return -mu, v


# --- constant-kernel dispersion relation --------------------------------------------


@dataclass(frozen=True)
class DispersionCurve:
    """``F(lambda) = rho * sum_i w_i / (-lambda - a_i + rho |Omega|)`` for ``lambda < -sigma``."""

    rho: float
    a: np.ndarray
    weights: np.ndarray
    sigma: float

    @property
    def volume(self) -> float:
        return float(self.weights.sum())

    def gaps(self) -> np.ndarray:
        # sigma + rho|Omega| - a_i >= 0, the denominators at lambda = -sigma
        return self.sigma + self.rho * self.volume - self.a

    def __call__(self, lam) -> float:
        lam = float(lam)
        if lam >= -self.sigma:
            raise ValueError(f"dispersion curve is only defined for lambda < -sigma = {-self.sigma}")
        return self._at_offset(-self.sigma - lam)

    def _at_offset(self, s: float) -> float:
        return float(self.rho * np.sum(self.weights / (self.gaps() + s)))

    def limit(self) -> float:
        """Value of F as lambda increases to -sigma (may be inf)."""
        g = self.gaps()
        if np.any(g <= 0):
            return math.inf
        return self._at_offset(0.0)

    def density(self, lam: float) -> np.ndarray:
        return self.rho / (self.gaps() + (-self.sigma - lam))

    def solve(self) -> float:
        """Root of ``F = 1`` by bisection on the offset ``s = -sigma - lambda``."""
        lo, hi = 0.0, max(self.rho * self.volume, 1e-300)
        while self._at_offset(hi) > 1.0:
            hi *= 2.0
        for _ in range(2000):
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            if self._at_offset(mid) > 1.0:
                lo = mid
            else:
                hi = mid
        s = 0.5 * (lo + hi)
        if abs(self._at_offset(s) - 1.0) > 1e-10 and lo > 0:
            raise NoConvergence("dispersion bisection failed to reach |F - 1| < 1e-10")
        return -self.sigma - s


def dispersion_curve(rho, a, quad: Quadrature, a_sup: Optional[float] = None) -> DispersionCurve:
    if rho is None:
        raise InvalidKernel("dispersion relation requires a constant mutation kernel")
    if not rho > 0:
        raise InvalidKernel(f"dispersion relation requires rho > 0, got {rho}")
    a = check_field(quad, a)
    top = float(a.max()) if a_sup is None else max(float(a_sup), float(a.max()))
    sigma = top - rho * quad.volume
    return DispersionCurve(float(rho), a, quad.weights, sigma)


def dispersion_lambda(rho, a, quad: Quadrature, a_sup: Optional[float] = None):
    """Principal eigenvalue for ``m = rho`` from the dispersion relation.

    Returns ``(lambda_p, regular)``; ``regular`` is False when the limit of
    F at ``-sigma`` is at most 1, in which case ``lambda_p = -sigma``.
    """
    curve = dispersion_curve(rho, a, quad, a_sup)
    if curve.limit() > 1.0:
        return curve.solve(), True
    return -curve.sigma, False


# --- classification -----------------------------------------------------------


def classify(lambda_p: float, sigma: float, candidate_mass: float) -> Classification:
    """Regularity of the eigen-measure.

    ``candidate_mass`` is the refined L1 mass of ``g_p / (sigma - (a - M))``
    (``inf`` when the integral diverges).
    """
    tol = 1e-9 * max(1.0, abs(sigma))
    if lambda_p < -sigma - tol:
        return Classification.REGULAR_BOUNDED
    if candidate_mass < 1.0 - 1e-9:
        return Classification.SINGULAR
    return Classification.REGULAR_UNBOUNDED


def _gap_integral(kernel: KernelSpec, quad: Quadrature) -> float:
    a, _ = sample(kernel, quad)
    top = float(a.max()) if kernel.a_sup is None else float(kernel.a_sup)
    gap = top - a
    if kernel.a_sup is not None and np.any(gap <= 0):
        return math.inf
    gap = np.where(gap > 0, gap, np.inf)
    return float(quad.weights @ (1.0 / gap))


def gap_integral(kernel: KernelSpec, domain: DomainSpec, h: float, levels: int = 3) -> float:
    """``int dx / (sup a - a(x))`` estimated on ``levels`` nested grids.

    Raises ``DivergentLimit`` when the estimates keep growing at a
    non-decaying rate (logarithmic or stronger divergence) or when the
    integrand is infinite on a node.
    """
    values = []
    for lvl in range(levels):
        v = _gap_integral(kernel, build_quadrature(domain, h / 2**lvl))
        if not math.isfinite(v):
            raise DivergentLimit("sup a - a vanishes on a node: integral is infinite")
        values.append(v)
    inc = np.diff(values)
    if inc.size >= 2:
        growing = np.all(inc > 0) and inc[-1] >= 0.8 * inc[-2] and inc[-1] > 5e-3 * values[-1]
        if growing:
            raise DivergentLimit(f"gap integral keeps growing under refinement: {values}")
    return values[-1]


@dataclass(frozen=True)
class RhoStar:
    rho_star: float
    lo: float
    hi: float
    gap_integral: float
    divergent: bool = False


def critical_rho(kernel: KernelSpec, domain: DomainSpec, h: float, levels: int = 3, rel_width: float = 1e-4) -> RhoStar:
    """Smallest constant mutation rate with a regular eigen-measure.

    Bisection on ``rho`` for ``rho * int dx / (sup a - a) >= 1``.  A
    divergent integral means every ``rho > 0`` is regular: ``rho_star = 0``.
    """
    if kernel.m_const is None:
        raise InvalidKernel("critical rate is only defined for a constant mutation kernel")
    try:
        integral = gap_integral(kernel, domain, h, levels)
    except DivergentLimit:
        return RhoStar(0.0, 0.0, 0.0, math.inf, divergent=True)

    def regular(rho):
        return rho * integral >= 1.0

    lo, hi = 0.0, 1.0
    while not regular(hi):
        lo, hi = hi, 2.0 * hi
    while hi - lo > rel_width * hi:
        mid = 0.5 * (lo + hi)
        if regular(mid):
            hi = mid
        else:
            lo = mid
    return RhoStar(0.5 * (lo + hi), lo, hi, integral)


# --- eigen-measure ------------------------------------------------------------


def _atom_sites(quad: Quadrature, a_minus_m: np.ndarray, clusters, maximizers) -> list:
    sites = []
    for members in clusters:
        best = int(members[np.argmax(a_minus_m[members])])
        point = quad.nodes[best]
        if maximizers is not None and len(maximizers):
            mx = np.atleast_2d(maximizers)
            point = mx[np.argmin(np.linalg.norm(mx - point, axis=1))]
            best = quad.nearest_node(point)
        sites.append((best, np.array(point, dtype=float)))
    return sites


def eigen_measure(
    op: NonlocalOperator,
    a,
    partial: SpectralResult,
    *,
    rho: Optional[float] = None,
    a_sup: Optional[float] = None,
    maximizers=None,
    cluster_weights: Optional[Sequence[float]] = None,
    eigvec=None,
) -> SpectralResult:
    """Fill in the normalised eigen-measure for an already classified spectrum.

    Bounded case: the discrete principal eigenvector (computed if not
    given).  Otherwise, for constant kernels, the density ``rho / (sup a - a)``
    plus atoms carrying the missing mass, one per maximizer cluster,
    split by ``cluster_weights`` (uniform by default).
    """
    quad = op.quad
    a = check_field(quad, a)
    cls = partial.classification
    if cls is None:
        raise ValueError("classify the spectrum before building its eigen-measure")
    if cls is Classification.REGULAR_BOUNDED:
        if eigvec is None:
            _, eigvec = principal_eigenvalue_discrete(op, a)
        v = np.asarray(eigvec, dtype=float)
        return replace(partial, eigen_density=v / float(quad.weights @ v), atoms=(), quad=quad)

    if rho is None:
        raise InvalidKernel("unbounded or singular eigen-measures are built for constant kernels only")
    top = float(a.max()) if a_sup is None else float(a_sup)
    gap = top - a
    density = np.where(gap > 0, rho / np.where(gap > 0, gap, 1.0), 0.0)
    reg_mass = float(quad.weights @ density)
    if cls is Classification.REGULAR_UNBOUNDED:
        return replace(partial, eigen_density=density / reg_mass, atoms=(), quad=quad)

    if reg_mass > 1.0 + 1e-6:
        raise NegativeAtomMass(f"regular part carries mass {reg_mass:.6g} > 1; spectrum is misclassified")
    deficit = max(1.0 - reg_mass, 0.0)
    clusters = partial.clusters or _clusters(quad, partial.argmax_set, maximizers)
    if cluster_weights is None:
        cw = np.ones(len(clusters))
    else:
        cw = np.asarray(cluster_weights, dtype=float)
        if cw.shape != (len(clusters),) or np.any(cw < 0) or cw.sum() <= 0:
            raise ValueError(f"need {len(clusters)} non-negative cluster weights, got {cluster_weights}")
    cw = cw / cw.sum()
    sites = _atom_sites(quad, a - op.out_degree, clusters, maximizers)
    atoms = tuple(Atom(idx, pt, deficit * wt) for (idx, pt), wt in zip(sites, cw))
    return replace(partial, eigen_density=density, atoms=atoms, clusters=clusters, quad=quad)


def analyze(
    quad: Quadrature,
    kernel: KernelSpec,
    op: Optional[NonlocalOperator] = None,
    *,
    delta: Optional[float] = None,
    cluster_weights=None,
    refine_levels: int = 3,
) -> SpectralResult:
    """Full spectral pipeline: sigma, lambda_p, classification, eigen-measure."""
    a, _ = sample(kernel, quad)
    if op is None:
        op = assemble(quad, kernel)
    sigma, members = sigma_argmax(a, op, delta=delta, a_sup=kernel.a_sup)
    clusters = _clusters(quad, members, kernel.maximizers)
    eigvec = None
    candidate = math.inf
    cls = None
    rho = kernel.m_const
    if rho is not None and rho > 0:
        curve = dispersion_curve(rho, a, quad, kernel.a_sup)
        candidate = curve.limit()
        if candidate > 1.0:
            lam = curve.solve()
        else:
            lam = -sigma
            try:
                candidate = rho * gap_integral(kernel, quad.domain, quad.h, refine_levels)
            except DivergentLimit:
                candidate = math.inf
            if candidate > 1.0:
                # the grid under-resolves a density that is regular in the limit
                log.warning("grid limit of F is <= 1 but the refined mass is %.4g; using the discrete eigenpair", candidate)
                lam, eigvec = principal_eigenvalue_discrete(op, a)
                cls = Classification.REGULAR_BOUNDED
    elif rho == 0.0:
        # no mutation: pure selection, all mass sits on the maximizers
        lam = -sigma
        candidate = 0.0
    else:
        lam, eigvec = principal_eigenvalue_discrete(op, a)
    partial = SpectralResult(
        lambda_p=lam,
        sigma=sigma,
        argmax_set=members,
        clusters=clusters,
        classification=cls or classify(lam, sigma, candidate),
        candidate_mass=candidate,
        quad=quad,
    )
    return eigen_measure(
        op,
        a,
        partial,
        rho=rho,
        a_sup=kernel.a_sup,
        maximizers=kernel.maximizers,
        cluster_weights=cluster_weights,
        eigvec=eigvec,
    )
