"""Grid and time-step refinement of the principal eigenvalue and the time stepper.

Part one compares the discrete eigenvalue of the 1-D linear preset with the
closed form 1/(1-e) as h halves.  Part two measures the semi-implicit error
against RK4 on the constant-growth scenario as dt halves.
"""

import math

import numpy as np

from selmut.dynamics import l2_distance, simulate
from selmut.geometry import DomainSpec, build_quadrature
from selmut.model import preset_constant_growth, preset_linear_growth, sample
from selmut.operators import assemble
from selmut.spectral import principal_eigenvalue_discrete


def main():
    exact = 1 / (1 - math.e)
    prev = None
    print("1-D eigenvalue gap")
    for n in (128, 256, 512, 1024, 2048, 4096):
        q = build_quadrature(DomainSpec.interval(0, 1), 1 / n)
        kr = preset_linear_growth(1.0)
        a, _ = sample(kr, q)
        lam, _ = principal_eigenvalue_discrete(assemble(q, kr), a)
        gap = abs(lam - exact)
        ratio = f"{prev / gap:.3f}" if prev else ""
        print(f"  n={n:<5} lambda={lam:.12f} gap={gap:.3e} {ratio}")
        prev = gap
    print("semi-implicit vs RK4 at T=10")
    q = build_quadrature(DomainSpec.rectangle((0, 0), (1, 1)), 1 / 64)
    kr = preset_constant_growth(0.7, 0.5)
    a, k = sample(kr, q)
    op = assemble(q, kr)
    u0 = np.full(q.n, 0.3)
    prev = None
    for dt in (0.02, 0.01, 0.005, 0.0025):
        err = l2_distance(q, simulate(u0, op, a, k, dt, 10.0).u, simulate(u0, op, a, k, dt, 10.0, scheme="rk4").u)
        ratio = f"{prev / err:.3f}" if prev else ""
        print(f"  dt={dt:<7} error={err:.3e} {ratio}")
        prev = err


if __name__ == "__main__":
    main()
