"""Long-time behaviour of the radial preset in the regular and singular regimes.

For each rate the script evolves a uniform start and reports the distance
to the stationary density (regular case) or the mass fraction near the
origin and the peak density (singular case).
"""

import argparse
from pathlib import Path

import numpy as np

from selmut.artifacts import write_csv, write_pgm
from selmut.diagnostics import concentration_report
from selmut.dynamics import l2_distance, simulate
from selmut.geometry import DomainSpec, build_quadrature
from selmut.model import preset_radial_growth, sample
from selmut.operators import assemble
from selmut.spectral import Classification, analyze
from selmut.stationary import stationary_from_eigen


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--h", type=float, default=1 / 96)
    ap.add_argument("--T", type=float, default=200.0)
    ap.add_argument("--dt", type=float, default=0.01)
    ap.add_argument("--rho", type=float, nargs="+", default=[0.1, 1.0, 3.0])
    ap.add_argument("--out", type=Path, default=None, help="directory for CSV and PGM snapshots")
    args = ap.parse_args()
    q = build_quadrature(DomainSpec.disk(), args.h)
    rows = []
    for rho in args.rho:
        kr = preset_radial_growth(rho)
        a, k = sample(kr, q)
        op = assemble(q, kr)
        spec = analyze(q, kr, op)
        final = simulate(np.ones(q.n), op, a, k, args.dt, args.T)
        rep = concentration_report(final.u, [[0.0, 0.0]], 0.05, q)
        dist = np.nan
        if spec.classification is Classification.REGULAR_BOUNDED:
            ubar = stationary_from_eigen(spec, kr).density
            dist = l2_distance(q, final.u, ubar) / l2_distance(q, ubar, 0 * ubar)
        rows.append((rho, spec.classification.value, spec.lambda_p, final.mass, rep.fractions[0], rep.max_density, dist))
        print(
            f"rho={rho:<5} {spec.classification.value:<17} mass={final.mass:.4f} "
            f"near-origin fraction={rep.fractions[0]:.3f} max u={rep.max_density:.3g} rel dist={dist:.2e}"
        )
        if args.out:
            write_pgm(args.out / f"radial_rho{rho:g}.pgm", q, final.u)
    if args.out:
        header = ["rho", "classification", "lambda_p", "mass", "fraction_origin", "max_density", "rel_dist_stationary"]
        write_csv(args.out / "radial_regimes.csv", header, rows)


if __name__ == "__main__":
    main()
