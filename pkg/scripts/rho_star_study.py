"""Critical mutation rate for the radial preset: grid convergence and the regime flip.

Prints rho_star at several grid sizes, then the classification and the
atom mass of the eigen-measure for rates on either side of rho_star.
"""

import argparse
import math
from pathlib import Path

from selmut.artifacts import write_csv
from selmut.geometry import DomainSpec, build_quadrature
from selmut.model import preset_radial_growth
from selmut.spectral import analyze, critical_rho


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=None, help="directory for rho_star_study.csv")
    args = ap.parse_args()
    disk = DomainSpec.disk()
    exact = 6 / math.pi
    print(f"{'h':>8} {'rho_star':>10} {'rel err':>10}")
    for n in (32, 64, 128, 256, 512):
        r = critical_rho(preset_radial_growth(), disk, 1 / n)
        print(f"1/{n:<6} {r.rho_star:10.6f} {r.rho_star / exact - 1:10.2e}")
    rows = []
    q = build_quadrature(disk, 1 / 128)
    for rho in (0.1, 0.5, 1.0, 1.5, 1.8, 2.0, 2.5, 3.0):
        s = analyze(q, preset_radial_growth(rho))
        rows.append((rho, s.lambda_p, s.sigma, s.classification.value, s.atom_mass))
        print(f"rho={rho:<4} lambda_p={s.lambda_p:+.6f} {s.classification.value:<17} atom mass {s.atom_mass:.4f}")
    if args.out:
        write_csv(args.out / "rho_star_study.csv", ["rho", "lambda_p", "sigma", "classification", "atom_mass"], rows)


if __name__ == "__main__":
    main()
