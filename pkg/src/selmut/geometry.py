"""Trait domains and midpoint quadratures on masked Cartesian lattices.

A quadrature is the set of lattice cell centres that fall inside the
domain, each carrying the cell measure ``h**N`` as its weight.  Lattices
are anchored so that cell corners sit on ``anchor + k*h`` (the interval
or rectangle lower corner, or the disk centre); for a disk this means the
centre itself is never a node.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyQuadrature, LengthMismatch

__all__ = [
    "DomainSpec",
    "Quadrature",
    "build_quadrature",
    "integrate",
    "check_field",
    "write_grid",
    "read_grid",
]

_SHAPES = ("interval", "rectangle", "disk")


@dataclass(frozen=True)
class DomainSpec:
    shape: str
    lo: tuple[float, ...] = ()
    hi: tuple[float, ...] = ()
    center: tuple[float, ...] = ()
    radius: float = 0.0

    def __post_init__(self):
        if self.shape not in _SHAPES:
            raise ValueError(f"unknown domain shape {self.shape!r}")
        if self.shape == "disk":
            if len(self.center) != 2:
                raise ValueError("disk centre must have two coordinates")
            if not self.radius > 0:
                raise ValueError("disk radius must be positive")
        else:
            want = 1 if self.shape == "interval" else 2
            if len(self.lo) != want or len(self.hi) != want:
                raise ValueError(f"{self.shape} needs {want} bound(s) per side")
            if any(not l < u for l, u in zip(self.lo, self.hi)):
                raise ValueError("domain bounds must be strictly ordered")

    @classmethod
    def interval(cls, a, b):
        return cls("interval", lo=(float(a),), hi=(float(b),))

    @classmethod
    def rectangle(cls, lo, hi):
        return cls("rectangle", lo=tuple(map(float, lo)), hi=tuple(map(float, hi)))

    @classmethod
    def disk(cls, center=(0.0, 0.0), radius=0.25):
        return cls("disk", center=tuple(map(float, center)), radius=float(radius))

    @property
    def dim(self) -> int:
        return 1 if self.shape == "interval" else 2

    @property
    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        if self.shape == "disk":
            c = np.asarray(self.center)
            return c - self.radius, c + self.radius
        return np.asarray(self.lo), np.asarray(self.hi)

    @property
    def anchor(self) -> np.ndarray:
        if self.shape == "disk":
            return np.asarray(self.center, dtype=float)
        return np.asarray(self.lo, dtype=float)

    @property
    def measure(self) -> float:
        """Exact Lebesgue measure of the domain."""
        if self.shape == "disk":
            return math.pi * self.radius**2
        return float(np.prod(np.subtract(self.hi, self.lo)))

    def contains(self, points) -> np.ndarray:
        """Open-set membership test for an ``(n, N)`` array of points."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        if self.shape == "disk":
            d = np.linalg.norm(p - np.asarray(self.center), axis=1)
            return d < self.radius
        lo, hi = self.bbox
        return np.all((p > lo) & (p < hi), axis=1)

    def boundary_distance(self, points) -> np.ndarray:
        """Distance from each point to the complement (0 outside)."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        if self.shape == "disk":
            d = self.radius - np.linalg.norm(p - np.asarray(self.center), axis=1)
        else:
            lo, hi = self.bbox
            d = np.min(np.minimum(p - lo, hi - p), axis=1)
        return np.maximum(d, 0.0)


@dataclass(frozen=True, eq=False)
class Quadrature:
    """Midpoint rule on the lattice cells whose centres lie in the domain.

    ``index`` holds the integer lattice coordinates of every node, and
    ``lattice_shape`` the size of the bounding lattice; together they let
    callers rebuild the full grid (neighbour search, image export).
    """

    nodes: np.ndarray
    weights: np.ndarray
    h: float
    domain: DomainSpec
    index: np.ndarray
    lattice_shape: tuple[int, ...]
    lattice_origin: np.ndarray = field(repr=False)

    def __post_init__(self):
        for arr in (self.nodes, self.weights, self.index, self.lattice_origin):
            arr.setflags(write=False)

    def __len__(self):
        return self.weights.shape[0]

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.nodes.shape[1]

    @property
    def volume(self) -> float:
        return float(self.weights.sum())

    def lattice_map(self) -> np.ndarray:
        """Bounding-lattice array holding node numbers, -1 off the domain."""
        grid = np.full(self.lattice_shape, -1, dtype=np.int64)
        grid[tuple(self.index.T)] = np.arange(self.n)
        return grid

    def lattice_values(self, values, fill=0.0) -> np.ndarray:
        grid = np.full(self.lattice_shape, fill, dtype=float)
        grid[tuple(self.index.T)] = check_field(self, values)
        return grid

    def nearest_node(self, point) -> int:
        d = np.linalg.norm(self.nodes - np.asarray(point, dtype=float), axis=1)
        return int(np.argmin(d))


def build_quadrature(domain: DomainSpec, h: float) -> Quadrature:
    """Cell-centre quadrature of ``domain`` with spacing ``h``.

    Raises ``ValueError`` unless the bounding box holds at least four cells
    (and two per axis), and ``EmptyQuadrature`` if no cell centre lands
    inside the domain.
    """
    h = float(h)
    if not h > 0:
        raise ValueError("spacing h must be positive")
    lo, hi = domain.bbox
    extent = hi - lo
    cells = extent / h
    if np.any(cells < 2 - 1e-9) or np.prod(cells) < 4 - 1e-9:
        raise ValueError(f"h={h} leaves fewer than 4 lattice cells in the bounding box")

    anchor = domain.anchor
    # corners at anchor + k*h, covering the bounding box
    kmin = np.floor((lo - anchor) / h + 1e-9).astype(int)
    kmax = np.ceil((hi - anchor) / h - 1e-9).astype(int)
    counts = kmax - kmin
    axes = [anchor[d] + (np.arange(kmin[d], kmax[d]) + 0.5) * h for d in range(domain.dim)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    idx = np.stack(
        [m.ravel() for m in np.meshgrid(*[np.arange(c) for c in counts], indexing="ij")],
        axis=1,
    )
    keep = domain.contains(pts)
    if not keep.any():
        raise EmptyQuadrature(f"no lattice node of spacing {h} lies inside {domain}")
    nodes = pts[keep]
    weights = np.full(nodes.shape[0], h**domain.dim)
    origin = anchor + kmin * h
    return Quadrature(nodes, weights, h, domain, idx[keep], tuple(int(c) for c in counts), origin)


def check_field(quad: Quadrature, f) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.ndim != 1 or f.shape[0] != quad.n:
        raise LengthMismatch(f"field of shape {f.shape} does not match {quad.n} nodes")
    return f


def integrate(quad: Quadrature, f) -> float:
    """Quadrature sum ``sum_i w_i f_i``."""
    return float(quad.weights @ check_field(quad, f))


def write_grid(path, quad: Quadrature, values) -> None:
    values = check_field(quad, values)
    lines = [f"# N={quad.dim} count={quad.n} h={quad.h:.15g}"]
    for x, w, v in zip(quad.nodes, quad.weights, values):
        coords = " ".join(f"{c:.15g}" for c in x)
        lines.append(f"{coords} {w:.15g} {v:.15g}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_grid(path):
    """Parse a grid dump back into ``(nodes, weights, values, h)``."""
    text = Path(path).read_text().splitlines()
    header = dict(tok.split("=") for tok in text[0].lstrip("# ").split())
    dim, count, h = int(header["N"]), int(header["count"]), float(header["h"])
    data = np.loadtxt(text[1:], ndmin=2)
    if data.shape != (count, dim + 2):
        raise ValueError(f"grid dump {path} is malformed")
    return data[:, :dim], data[:, dim], data[:, dim + 1], h
