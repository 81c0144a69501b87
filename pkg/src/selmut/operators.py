"""Collocation discretisation of the mutation operator.

On a midpoint quadrature the operator ``v -> int m(x, y) (v(y) - v(x)) dy``
becomes ``(M v)_i = sum_j G_ij v_j - M_i v_i`` with gain ``G_ij = w_j m(x_i, x_j)``
and out-degree ``M_i = sum_j G_ij``.  This is the finite-element triple
product ``mass @ K @ mass`` with a diagonal mass matrix ``diag(w)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import AllocationFailure, HypothesisViolation
from .geometry import Quadrature, check_field
from .model import KernelSpec

DEFAULT_NODE_CAP = 20_000
_BLOCK = 2048


@dataclass(frozen=True, eq=False)
class NonlocalOperator:
    """Discrete mutation operator.

    Either ``rho`` is set (constant kernel, rank-one gain ``rho * 1 w^T``,
    never stored densely) or ``dense_gain`` holds the full ``n x n`` gain.
    """

    quad: Quadrature
    out_degree: np.ndarray
    rho: Optional[float] = None
    dense_gain: Optional[np.ndarray] = None
    node_cap: int = DEFAULT_NODE_CAP

    def __post_init__(self):
        self.out_degree.setflags(write=False)
        if self.dense_gain is not None:
            self.dense_gain.setflags(write=False)

    @property
    def is_constant(self) -> bool:
        return self.rho is not None

    @property
    def n(self) -> int:
        return self.quad.n

    @property
    def gain(self) -> np.ndarray:
        """Dense gain matrix; materialised on demand for constant kernels."""
        if self.dense_gain is not None:
            return self.dense_gain
        if self.n > self.node_cap:
            raise AllocationFailure(f"refusing to materialise a {self.n}x{self.n} gain matrix")
        return np.broadcast_to(self.rho * self.quad.weights, (self.n, self.n)).copy()

    def gain_apply(self, u) -> np.ndarray:
        """``sum_j G_ij u_j`` for every node i."""
        u = check_field(self.quad, u)
        if self.rho is not None:
            return np.full(self.n, self.rho * float(self.quad.weights @ u))
        return self.dense_gain @ u

    def apply(self, u) -> np.ndarray:
        u = check_field(self.quad, u)
        return self.gain_apply(u) - self.out_degree * u

    def inf_norm_shift(self, a) -> float:
        """``||G + diag(a - M)||_inf``, the shift making the iteration matrix non-negative."""
        a = check_field(self.quad, a)
        if self.rho is not None:
            diag = self.rho * self.quad.weights
            off = self.out_degree - diag
        else:
            diag = np.diag(self.dense_gain)
            off = self.out_degree - diag
        return float(np.max(off + np.abs(diag + a - self.out_degree)))


def _kernel_table(quad: Quadrature, kernel: KernelSpec) -> np.ndarray:
    if kernel.m_table is not None and kernel.table_quad is quad:
        return np.asarray(kernel.m_table, dtype=float)
    table = np.empty((quad.n, quad.n))
    for start in range(0, quad.n, _BLOCK):
        stop = min(start + _BLOCK, quad.n)
        table[start:stop] = kernel.mutation(quad.nodes[start:stop], quad.nodes)
    return table


def assemble(quad: Quadrature, kernel: KernelSpec, node_cap: int = DEFAULT_NODE_CAP) -> NonlocalOperator:
    """Assemble the mutation operator of ``kernel`` on ``quad``.

    Constant kernels get the rank-one representation regardless of size;
    other kernels are tabulated densely, which is refused above ``node_cap``.
    """
    if kernel.m_const is not None:
        rho = float(kernel.m_const)
        return NonlocalOperator(quad, np.full(quad.n, rho * quad.volume), rho=rho, node_cap=node_cap)
    if quad.n > node_cap:
        raise AllocationFailure(f"{quad.n} nodes exceeds the dense-operator cap of {node_cap}")
    table = _kernel_table(quad, kernel)
    if table.shape != (quad.n, quad.n) or not np.all(np.isfinite(table)):
        raise HypothesisViolation("mutation kernel table is malformed or not finite")
    if np.any(table < 0):
        i, j = np.argwhere(table < 0)[0]
        raise HypothesisViolation(f"mutation kernel is negative at node pair ({i}, {j})")
    scale = max(float(np.abs(table).max()), 1e-300)
    asym = np.abs(table - table.T)
    if asym.max() > 1e-12 * scale:
        i, j = np.unravel_index(np.argmax(asym), asym.shape)
        raise HypothesisViolation(
            f"mutation kernel is not symmetric: m(x{i}, x{j})={table[i, j]:.6g} != m(x{j}, x{i})={table[j, i]:.6g}"
        )
    gain = table * quad.weights[None, :]
    return NonlocalOperator(quad, gain.sum(axis=1), dense_gain=gain, node_cap=node_cap)


def apply_mutation(op: NonlocalOperator, u) -> np.ndarray:
    return op.apply(u)
