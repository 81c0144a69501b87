"""Relative-entropy and Lyapunov diagnostics along trajectories.

For a positive stationary density ``ubar`` and ``r = u / ubar``:

* ``G_q = int ubar^2 r^q`` (``G_1 = <ubar, u>``, ``G_2 = ||u||_2^2``),
* ``D_q = q/2 sum_ij w_i w_j m_ij ubar_i ubar_j (r_i - r_j)(r_i^(q-1) - r_j^(q-1)) >= 0``,
* ``Gamma = int k (ubar - u)``,

and along solutions ``dG_q/dt = -D_q + q Gamma G_q`` so that
``F_q = log(G_q / G_1^q)`` is non-increasing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DegenerateState, EpsilonTooSmall, NonpositiveBaseline, ZeroInitialMass
from .geometry import Quadrature, check_field
from .operators import NonlocalOperator

_BLOCK = 512


def gamma(u, ubar, k, quad: Quadrature) -> float:
    """``int k ubar - int k u``."""
    w = quad.weights
    return float(w @ (k * ubar)) - float(w @ (k * u))


def _ratio(u, ubar, quad):
    ubar = check_field(quad, ubar)
    if np.any(ubar <= 0):
        i = int(np.argmin(ubar))
        raise NonpositiveBaseline(f"baseline must be positive, got {ubar[i]:.3e} at node {i}")
    return check_field(quad, u) / ubar, ubar


def relative_entropy(u, ubar, q: float, quad: Quadrature) -> float:
    r, ubar = _ratio(u, ubar, quad)
    return float(quad.weights @ (ubar**2 * r**q))


def _pair_sum(op: NonlocalOperator, c, x, y) -> float:
    """``sum_ij c_i G_ij ubar_j ...`` reduced to ``sum_ij W_ij (x_i - x_j)(y_i - y_j)``.

    ``c`` must already hold ``w_i ubar_i``; the pair weight is
    ``W_ij = c_i (G_ij / w_j) c_j = w_i w_j m_ij ubar_i ubar_j``.
    """
    quad = op.quad
    if op.is_constant:
        # sum_ij c_i c_j (x_i - x_j)(y_i - y_j) = 2 C sum_i c_i (x_i - xm)(y_i - ym)
        C = float(c.sum())
        xm = float(c @ x) / C
        ym = float(c @ y) / C
        return 2.0 * op.rho * C * float(c @ ((x - xm) * (y - ym)))
    m = op.dense_gain / quad.weights[None, :]
    total = 0.0
    for s in range(0, quad.n, _BLOCK):
        e = min(s + _BLOCK, quad.n)
        W = c[s:e, None] * m[s:e] * c[None, :]
        total += float(np.sum(W * (x[s:e, None] - x[None, :]) * (y[s:e, None] - y[None, :])))
    return total


def entropy_and_dissipation(u, ubar, q: float, op: NonlocalOperator, quad: Optional[Quadrature] = None):
    """``(G_q, D_q)``; the dissipation uses the symmetrised pair sum."""
    quad = quad or op.quad
    if q < 1:
        raise ValueError("q must be >= 1")
    r, ubar = _ratio(u, ubar, quad)
    G = float(quad.weights @ (ubar**2 * r**q))
    if q == 1:
        return G, 0.0
    c = quad.weights * ubar
    D = 0.5 * q * _pair_sum(op, c, r, r ** (q - 1))
    return G, D


def dissipation_general(u, ubar, H: Callable, dH: Callable, op: NonlocalOperator) -> float:
    """Unsymmetrised dissipation for a general entropy ``H``.

    ``sum_ij w_i w_j m_ij ubar_i ubar_j [H(r_i) - H(r_j) + H'(r_i)(r_i - r_j)]``;
    dense evaluation, intended for checking the symmetrised form.
    """
    quad = op.quad
    r, ubar = _ratio(u, ubar, quad)
    c = quad.weights * ubar
    G = op.gain / quad.weights[None, :]
    W = c[:, None] * G * c[None, :]
    integrand = H(r)[:, None] - H(r)[None, :] + dH(r)[:, None] * (r[:, None] - r[None, :])
    return float(np.sum(W * integrand))


def lyapunov_F(u, ubar, q: float, quad: Quadrature) -> float:
    """``log(G_q / G_1^q)``."""
    Gq = relative_entropy(u, ubar, q, quad)
    G1 = relative_entropy(u, ubar, 1, quad)
    if not G1 > 0 or not Gq > 0:
        raise DegenerateState("G_1 vanishes: u is zero on the support of ubar")
    return math.log(Gq) - q * math.log(G1)


def _centered(t, y):
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.size < 3:
        raise ValueError("need at least three records")
    dt = np.diff(t)
    if not np.allclose(dt, dt[0], rtol=1e-6, atol=1e-12):
        raise ValueError("records must be uniformly spaced in time")
    return (y[2:] - y[:-2]) / (t[2:] - t[:-2])


def entropy_identity_residuals(t, G, D, Gamma, q: float) -> np.ndarray:
    """Pointwise ``|dG_q/dt + D_q - q Gamma G_q| / max(|G_q|, 1)`` at interior records."""
    G = np.asarray(G, dtype=float)
    dG = _centered(t, G)
    mid = slice(1, -1)
    res = dG + np.asarray(D, dtype=float)[mid] - q * np.asarray(Gamma, dtype=float)[mid] * G[mid]
    return np.abs(res) / np.maximum(np.abs(G[mid]), 1.0)


def entropy_identity_residual(t, G, D, Gamma, q: float) -> float:
    return float(np.max(entropy_identity_residuals(t, G, D, Gamma, q)))


def l1_bounds(
    u0,
    a,
    k,
    quad: Quadrature,
    c0: Optional[float] = None,
    C0: Optional[float] = None,
    form: str = "growth",
):
    """Time-uniform bounds ``c1 <= ||u(t)||_1 <= C1``.

    ``form="growth"`` (default) gives ``c1 = min(||u0||_1, inf a / C0)`` and
    ``C1 = max(||u0||_1, sup a / c0)``, which is what the logistic comparison
    for the total mass yields.  ``form="competition"`` uses ``int k`` in place
    of ``inf a`` and ``sup a``; it is kept for comparison only and is not a
    valid bound in general.
    """
    u0 = check_field(quad, u0)
    mass = float(quad.weights @ np.abs(u0))
    if not mass > 0:
        raise ZeroInitialMass("initial datum has zero mass")
    a = check_field(quad, a)
    k = check_field(quad, k)
    c0 = float(k.min()) if c0 is None else float(c0)
    C0 = float(k.max()) if C0 is None else float(C0)
    if form == "growth":
        lo, hi = float(a.min()), float(a.max())
    elif form == "competition":
        lo = hi = float(quad.weights @ k)
    else:
        raise ValueError(f"unknown corridor form {form!r}")
    return min(mass, lo / C0), max(mass, hi / c0)


def l2_bound(u0, ubar, quad: Quadrature, C1: float) -> float:
    """``C1 ||ubar||_inf ||u0||_2 / <ubar, u0>``, the bound carried by the monotone ``F_2``."""
    u0 = check_field(quad, u0)
    ubar = check_field(quad, ubar)
    w = quad.weights
    return C1 * float(ubar.max()) * math.sqrt(float(w @ (u0 * u0))) / float(w @ (ubar * u0))


def decompose(u, ubar, quad: Quadrature, phi_p=None):
    """Split ``u = lambda ubar + h`` with ``<ubar, h> = 0``; returns ``(lambda, h)``."""
    _ratio(u if phi_p is None else phi_p, ubar, quad)
    u = check_field(quad, u)
    w = quad.weights
    nb = float(w @ (ubar * ubar))
    lam = float(w @ (ubar * u)) / nb
    h = u - lam * ubar
    corr = float(w @ (ubar * h)) / nb
    if corr:
        lam += corr
        h = h - corr * ubar
    return lam, h


def lambda_ode_residuals(t, lam, k_h, lambda_p: float) -> np.ndarray:
    """``|lambda' + lambda_p (1 - lambda) lambda + (int k h) lambda| / max(|lambda|, 1)``."""
    lam = np.asarray(lam, dtype=float)
    dl = _centered(t, lam)
    mid = slice(1, -1)
    L = lam[mid]
    res = dl - (-lambda_p * (1.0 - L) * L - np.asarray(k_h, dtype=float)[mid] * L)
    return np.abs(res) / np.maximum(np.abs(L), 1.0)


def lambda_ode_residual(t, lam, k_h, lambda_p: float) -> float:
    return float(np.max(lambda_ode_residuals(t, lam, k_h, lambda_p)))


def logistic_gamma(t, gamma0: float, lambda_p: float) -> np.ndarray:
    """Closed form of ``gamma' = -lambda_p gamma (1 - gamma)``."""
    t = np.asarray(t, dtype=float)
    return 1.0 / (1.0 + (1.0 / gamma0 - 1.0) * np.exp(lambda_p * t))


@dataclass(frozen=True)
class ConcentrationReport:
    fractions: tuple
    max_density: float


def concentration_report(u, centers, eps: float, quad: Quadrature) -> ConcentrationReport:
    """Mass fraction of ``u`` within ``eps`` of each centre, plus ``max u``."""
    if not eps > 2 * quad.h:
        raise EpsilonTooSmall(f"eps={eps:g} must exceed 2h={2 * quad.h:g}")
    u = check_field(quad, u)
    wu = quad.weights * u
    total = float(wu.sum())
    fr = []
    for c in np.atleast_2d(np.asarray(centers, dtype=float)):
        inside = np.linalg.norm(quad.nodes - c, axis=1) < eps
        fr.append(float(wu[inside].sum()) / total if total > 0 else 0.0)
    return ConcentrationReport(tuple(fr), float(u.max()))


def dominant_clusters(report: ConcentrationReport, threshold: float = 0.2) -> frozenset:
    return frozenset(i for i, f in enumerate(report.fractions) if f > threshold)


# --- recording ------------------------------------------------------------------


@dataclass
class TrajectoryRecord:
    t: float
    mass_L1: float
    norm_L2: float
    max_density: float
    conc_fractions: tuple = ()
    Gamma: Optional[float] = None
    G: dict = field(default_factory=dict)
    D: dict = field(default_factory=dict)
    F: dict = field(default_factory=dict)
    lambda_t: Optional[float] = None
    h_norm_L2: Optional[float] = None
    k_h: Optional[float] = None
    lambda_ode_residual: Optional[float] = None
    entropy_residual: dict = field(default_factory=dict)


class DiagnosticsRecorder:
    """Hook collecting a :class:`TrajectoryRecord` at each call.

    Entropy quantities need a positive stationary density ``ubar``; pass
    ``ubar=None`` (singular scenarios) and they are recorded as absent.
    """

    def __init__(
        self,
        op: NonlocalOperator,
        k,
        *,
        ubar=None,
        lambda_p: Optional[float] = None,
        centers=None,
        eps: float = 0.05,
        q_list: Sequence[float] = (1, 2),
    ):
        self.op = op
        self.quad = op.quad
        self.k = check_field(self.quad, k)
        self.ubar = None if ubar is None else check_field(self.quad, ubar)
        if self.ubar is not None and np.any(self.ubar <= 0):
            self.ubar = None
        self.lambda_p = lambda_p
        self.centers = None if centers is None or len(centers) == 0 else np.atleast_2d(centers)
        self.eps = eps
        self.q_list = tuple(q_list)
        if self.centers is not None and not eps > 2 * self.quad.h:
            raise EpsilonTooSmall(f"eps={eps:g} must exceed 2h={2 * self.quad.h:g}")
        self.records: list[TrajectoryRecord] = []

    def __call__(self, step, state):
        quad, w, u = self.quad, self.quad.weights, state.u
        conc = ()
        if self.centers is not None:
            conc = concentration_report(u, self.centers, self.eps, quad).fractions
        rec = TrajectoryRecord(
            t=state.t,
            mass_L1=float(w @ np.abs(u)),
            norm_L2=math.sqrt(float(w @ (u * u))),
            max_density=float(u.max()),
            conc_fractions=conc,
        )
        ub = self.ubar
        if ub is not None:
            rec.Gamma = gamma(u, ub, self.k, quad)
            for q in self.q_list:
                rec.G[q], rec.D[q] = entropy_and_dissipation(u, ub, q, self.op, quad)
            G1 = rec.G[1] if 1 in rec.G else relative_entropy(u, ub, 1, quad)
            for q in self.q_list:
                if q != 1 and G1 > 0 and rec.G[q] > 0:
                    rec.F[q] = math.log(rec.G[q]) - q * math.log(G1)
            lam, h = decompose(u, ub, quad)
            rec.lambda_t = lam
            rec.h_norm_L2 = math.sqrt(float(w @ (h * h)))
            rec.k_h = float(w @ (self.k * h))
        self.records.append(rec)

    def finalize(self) -> list[TrajectoryRecord]:
        """Fill the centred-difference residual columns where neighbours exist."""
        recs = self.records
        if self.ubar is None or len(recs) < 3:
            return recs
        t = np.array([r.t for r in recs])
        spacing = np.diff(t)
        # the last record may sit off the uniform grid
        n = len(recs)
        if spacing.size > 1 and not np.isclose(spacing[-1], spacing[0], rtol=1e-6):
            n -= 1
        if n < 3:
            return recs
        t = t[:n]
        Gam = [r.Gamma for r in recs[:n]]
        for q in self.q_list:
            res = entropy_identity_residuals(t, [r.G[q] for r in recs[:n]], [r.D[q] for r in recs[:n]], Gam, q)
            for r, v in zip(recs[1 : n - 1], res):
                r.entropy_residual[q] = float(v)
        if self.lambda_p is not None:
            res = lambda_ode_residuals(t, [r.lambda_t for r in recs[:n]], [r.k_h for r in recs[:n]], self.lambda_p)
            for r, v in zip(recs[1 : n - 1], res):
                r.lambda_ode_residual = float(v)
        return recs

    def series(self, name: str, q=None) -> np.ndarray:
        if q is None:
            return np.array([getattr(r, name) for r in self.records], dtype=float)
        return np.array([getattr(r, name).get(q, np.nan) for r in self.records], dtype=float)
