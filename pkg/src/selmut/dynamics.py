"""Time integration of ``u_t = M u + (a - int k u) u``."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Callable, Iterable, Optional, Sequence

import numpy as np

from .errors import PositivityLost
from .geometry import Quadrature, check_field
from .operators import NonlocalOperator

if TYPE_CHECKING:  # pragma: no cover
    from .config import ScenarioConfig
    from .model import KernelSpec
    from .spectral import SpectralResult

Hook = Callable[[int, "EvolutionState"], None]


@dataclass(frozen=True, eq=False)
class EvolutionState:
    t: float
    u: np.ndarray
    mass: float  # int u
    competition: float  # int k u

    @classmethod
    def initial(cls, u0, quad: Quadrature, k, t: float = 0.0) -> "EvolutionState":
        u = np.array(check_field(quad, u0), dtype=float)
        if np.any(u < 0):
            raise ValueError("initial datum must be non-negative")
        return cls.make(t, u, quad, k)

    @classmethod
    def make(cls, t, u, quad: Quadrature, k) -> "EvolutionState":
        u.setflags(write=False)
        wu = quad.weights * u
        return cls(float(t), u, float(wu.sum()), float(wu @ k))


def step_semi_implicit(state: EvolutionState, dt: float, op: NonlocalOperator, a, k) -> EvolutionState:
    """Gain/loss split Euler step: gains explicit, losses implicit.

    ``u+ = (u (1 + dt a) + dt G u) / (1 + dt (M + K))`` with the
    competition ``K = int k u`` frozen at the start of the step.  Keeps
    ``u >= 0`` for every ``dt > 0``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    u = state.u
    gain = op.gain_apply(u)
    new = (u * (1.0 + dt * a) + dt * gain) / (1.0 + dt * (op.out_degree + state.competition))
    return EvolutionState.make(state.t + dt, new, op.quad, k)


def rhs(u, op: NonlocalOperator, a, k) -> np.ndarray:
    competition = float(op.quad.weights @ (k * u))
    return op.apply(u) + (a - competition) * u


def step_rk4(state: EvolutionState, dt: float, op: NonlocalOperator, a, k) -> EvolutionState:
    """Classical explicit RK4 step; refuses steps that can break positivity."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    u = state.u
    stiff = float(np.max(np.maximum(op.out_degree + state.competition - a, 0.0)))
    if dt * stiff >= 1.0:
        raise PositivityLost(f"dt={dt:g} exceeds the positivity bound 1/{stiff:.6g}")
    k1 = rhs(u, op, a, k)
    k2 = rhs(u + 0.5 * dt * k1, op, a, k)
    k3 = rhs(u + 0.5 * dt * k2, op, a, k)
    k4 = rhs(u + dt * k3, op, a, k)
    new = u + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if new.min() < -1e-12:
        i = int(np.argmin(new))
        raise PositivityLost(f"RK4 produced u={new[i]:.3e} at node {i} (t={state.t + dt:g})")
    return EvolutionState.make(state.t + dt, new, op.quad, k)


STEPPERS = {"semi_implicit": step_semi_implicit, "rk4": step_rk4}


def simulate(
    u0,
    op: NonlocalOperator,
    a,
    k,
    dt: float,
    T: float,
    *,
    scheme: str = "semi_implicit",
    hooks: Iterable[Hook] = (),
    record_every: int = 10,
) -> EvolutionState:
    """Integrate from ``t = 0`` to ``T`` with ``round(T/dt)`` steps.

    Hooks are called as ``hook(step, state)`` at step 0, every
    ``record_every`` steps and at the final step.
    """
    if not (dt > 0 and T > 0):
        raise ValueError("dt and T must be positive")
    step = STEPPERS[scheme]
    quad = op.quad
    a = check_field(quad, a)
    k = check_field(quad, k)
    hooks: Sequence[Hook] = list(hooks)
    n_steps = int(round(T / dt))
    state = EvolutionState.initial(u0, quad, k)
    for hook in hooks:
        hook(0, state)
    for n in range(1, n_steps + 1):
        state = step(state, dt, op, a, k)
        # re-anchor time to avoid drift from repeated addition
        state = EvolutionState(n * dt, state.u, state.mass, state.competition)
        if hooks and (n % record_every == 0 or n == n_steps):
            for hook in hooks:
                hook(n, state)
    return state


def logistic(t, u0: float, a0: float) -> np.ndarray:
    """Exact solution of ``u' = u (a0 - u)`` used for spatially flat data."""
    t = np.asarray(t, dtype=float)
    return a0 / (1.0 + (a0 / u0 - 1.0) * np.exp(-a0 * t))


def l2_distance(quad: Quadrature, u, v) -> float:
    d = np.asarray(u) - np.asarray(v)
    return math.sqrt(float(quad.weights @ (d * d)))


@dataclass(frozen=True, eq=False)
class EvolveResult:
    """Final state of a configured run together with everything built for it."""

    state: EvolutionState
    records: list
    quad: Quadrature
    kernel: "KernelSpec"
    op: NonlocalOperator
    a: np.ndarray
    k: np.ndarray
    spectrum: "SpectralResult"
    ubar: Optional[np.ndarray]
    centers: Optional[np.ndarray]


def evolve(config: "ScenarioConfig", hooks: Iterable[Hook] = ()) -> EvolveResult:
    """Run a configured scenario with diagnostics recorded every ``record_every`` steps.

    The stationary density used by the entropy diagnostics is only
    available when the spectrum is regular and bounded; otherwise those
    columns stay empty.  Concentration fractions are measured around the
    maximizers declared by the growth preset.
    """
    from .errors import ConfigError
    from .diagnostics import DiagnosticsRecorder
    from .model import sample
    from .operators import assemble
    from .spectral import Classification, analyze
    from .stationary import stationary_from_eigen

    T = config.time.T
    if T is None:
        raise ConfigError("[time] T is required to evolve")
    quad = config.quadrature()
    kernel = config.kernel_spec()
    a, k = sample(kernel, quad)
    op = assemble(quad, kernel, node_cap=config.kernel.node_cap)
    spec = analyze(quad, kernel, op, cluster_weights=config.kernel.cluster_weights)
    ubar = None
    if spec.classification is Classification.REGULAR_BOUNDED:
        ubar = stationary_from_eigen(spec, kernel).density
    u0 = config.initial_datum(quad, kernel, ubar)
    centers = None
    if kernel.maximizers is not None and np.shape(kernel.maximizers)[1] == quad.dim:
        centers = np.asarray(kernel.maximizers, dtype=float)
    recorder = DiagnosticsRecorder(
        op,
        k,
        ubar=ubar,
        lambda_p=spec.lambda_p,
        centers=centers,
        eps=config.output.epsilon,
        q_list=config.output.q,
    )
    state = simulate(
        u0,
        op,
        a,
        k,
        config.time.dt,
        T,
        scheme=config.time.scheme,
        hooks=[recorder, *hooks],
        record_every=config.time.record_every,
    )
    return EvolveResult(state, recorder.finalize(), quad, kernel, op, a, k, spec, ubar, centers)
