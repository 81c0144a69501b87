"""Growth, competition and mutation kernels.

Evaluators are vectorised: ``a(points)`` and ``k(points)`` map an
``(n, N)`` array of traits to ``(n,)``; ``m(x, y)`` maps ``(n, N)`` and
``(p, N)`` arrays to the ``(n, p)`` table of mutation rates.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import HypothesisViolation
from .geometry import Quadrature

Evaluator = Callable[[np.ndarray], np.ndarray]
PairEvaluator = Callable[[np.ndarray, np.ndarray], np.ndarray]

FOUR_POINTS = np.array([[0.1, 0.0], [-0.1, 0.0], [0.0, 0.1], [0.0, -0.1]])


def _pts(x) -> np.ndarray:
    return np.atleast_2d(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class KernelSpec:
    """Model ingredients plus the constants they are known to satisfy.

    ``m_const`` is set when the mutation kernel is the constant ``rho``;
    operators use it to pick the rank-one fast path.  ``a_sup`` and
    ``maximizers`` record the exact supremum of ``a`` over the closed
    domain and where it is attained, when known analytically.  ``m_table``
    is a dense tabulation on the nodes of ``table_quad`` (user kernels).
    """

    a: Evaluator
    k: Evaluator
    m: Optional[PairEvaluator]
    c0: float = 1.0
    C0: float = 1.0
    m_const: Optional[float] = None
    a_sup: Optional[float] = None
    maximizers: Optional[np.ndarray] = None
    name: str = "custom"
    m_table: Optional[np.ndarray] = None
    table_quad: Optional[Quadrature] = None

    def __post_init__(self):
        if not (0 < self.c0 <= self.C0):
            raise HypothesisViolation(f"competition bounds need 0 < c0 <= C0, got {self.c0}, {self.C0}")
        if self.m_const is not None and self.m_const < 0:
            raise HypothesisViolation(f"mutation rate must be non-negative, got {self.m_const}")

    @property
    def rho(self) -> Optional[float]:
        return self.m_const

    @property
    def mutation_free(self) -> bool:
        return self.m_const == 0.0

    def mutation(self, x, y) -> np.ndarray:
        x, y = _pts(x), _pts(y)
        if self.m_const is not None:
            return np.full((x.shape[0], y.shape[0]), float(self.m_const))
        if self.m is None:
            raise HypothesisViolation("kernel has no mutation evaluator")
        return np.asarray(self.m(x, y), dtype=float)

    def replace(self, **changes) -> "KernelSpec":
        return dataclasses.replace(self, **changes)

    @classmethod
    def tabulated(cls, quad: Quadrature, a, k, m, name="tabulated"):
        """Kernel given by nodal samples on ``quad``.

        Point evaluation falls back to the nearest node.  Uniform
        continuity of the underlying kernel cannot be checked from a table
        and stays the caller's responsibility.
        """
        a = np.asarray(a, dtype=float).copy()
        k = np.asarray(k, dtype=float).copy()
        m = np.asarray(m, dtype=float).copy()
        if m.shape != (quad.n, quad.n):
            raise ValueError(f"mutation table must be {quad.n}x{quad.n}, got {m.shape}")

        def lookup(values):
            def f(x):
                x = _pts(x)
                d = ((x[:, None, :] - quad.nodes[None, :, :]) ** 2).sum(-1)
                return values[np.argmin(d, axis=1)]

            return f

        def m_eval(x, y):
            ix = lookup(np.arange(quad.n))(x)
            iy = lookup(np.arange(quad.n))(y)
            return m[np.ix_(ix, iy)]

        return cls(
            a=lookup(a),
            k=lookup(k),
            m=m_eval,
            c0=float(k.min()),
            C0=float(k.max()),
            name=name,
            m_table=m,
            table_quad=quad,
        )


def constant_mutation(rho: float) -> PairEvaluator:
    def m(x, y):
        return np.full((_pts(x).shape[0], _pts(y).shape[0]), float(rho))

    return m


def gaussian_mutation(rho: float, width: float) -> PairEvaluator:
    """``rho * exp(-|x-y|^2 / (2 width^2))``; symmetric by construction."""

    def m(x, y):
        x, y = _pts(x), _pts(y)
        d2 = ((x[:, None, :] - y[None, :, :]) ** 2).sum(-1)
        return rho * np.exp(-d2 / (2.0 * width**2))

    return m


def constant_competition(value: float = 1.0):
    def k(x):
        return np.full(_pts(x).shape[0], float(value))

    return k


def preset_radial_growth(rho: float = 1.0) -> KernelSpec:
    """a(x) = 1 - sqrt(|x|), single maximizer at the origin; k = 1, m = rho."""

    def a(x):
        return 1.0 - np.sqrt(np.linalg.norm(_pts(x), axis=1))

    return KernelSpec(
        a=a,
        k=constant_competition(1.0),
        m=constant_mutation(rho),
        m_const=float(rho),
        a_sup=1.0,
        maximizers=np.zeros((1, 2)),
        name="radial",
    )


def preset_four_point_growth(rho: float = 0.01) -> KernelSpec:
    """a(x) = 1 - (d1 d2 d3 d4)**(1/4), d_i the distances to (+-0.1, 0), (0, +-0.1)."""

    def a(x):
        x = _pts(x)
        d = np.linalg.norm(x[:, None, :] - FOUR_POINTS[None, :, :], axis=2)
        return 1.0 - np.prod(d, axis=1) ** 0.25

    return KernelSpec(
        a=a,
        k=constant_competition(1.0),
        m=constant_mutation(rho),
        m_const=float(rho),
        a_sup=1.0,
        maximizers=FOUR_POINTS.copy(),
        name="four_point",
    )


def preset_constant_growth(a0: float = 0.7, rho: float = 0.5) -> KernelSpec:
    # every trait maximises a constant growth rate; no finite maximizer set
    def a(x):
        return np.full(_pts(x).shape[0], float(a0))

    return KernelSpec(
        a=a,
        k=constant_competition(1.0),
        m=constant_mutation(rho),
        m_const=float(rho),
        a_sup=float(a0),
        name="constant",
    )


def preset_linear_growth(rho: float = 1.0) -> KernelSpec:
    """a(x) = 1 - x on an interval starting at 0; maximum at the end point 0."""

    def a(x):
        return 1.0 - _pts(x)[:, 0]

    return KernelSpec(
        a=a,
        k=constant_competition(1.0),
        m=constant_mutation(rho),
        m_const=float(rho),
        a_sup=1.0,
        maximizers=np.zeros((1, 1)),
        name="linear",
    )


def sample(kernel: KernelSpec, quad: Quadrature) -> tuple[np.ndarray, np.ndarray]:
    """Nodal values of ``a`` and ``k``, checked against positivity and the k-bounds."""
    a = np.asarray(kernel.a(quad.nodes), dtype=float)
    k = np.asarray(kernel.k(quad.nodes), dtype=float)
    if a.shape != (quad.n,) or k.shape != (quad.n,):
        raise HypothesisViolation("kernel evaluators returned arrays of the wrong shape")
    for name, arr in (("a", a), ("k", k)):
        bad = np.flatnonzero(~np.isfinite(arr))
        if bad.size:
            raise HypothesisViolation(f"{name} is not finite at node {bad[0]} ({quad.nodes[bad[0]]})")
    bad = np.flatnonzero(a <= 0)
    if bad.size:
        i = bad[0]
        raise HypothesisViolation(f"growth rate a must be > 0: a={a[i]:.6g} at node {i} ({quad.nodes[i]})")
    slack = 1e-12 * kernel.C0
    bad = np.flatnonzero((k < kernel.c0 - slack) | (k > kernel.C0 + slack))
    if bad.size:
        i = bad[0]
        raise HypothesisViolation(
            f"competition k={k[i]:.6g} at node {i} ({quad.nodes[i]}) violates "
            f"c0={kernel.c0:.6g} <= k <= C0={kernel.C0:.6g}"
        )
    return a, k
