"""Command-line driver: ``selmut <command> --config run.ini --out results/``.

Exit codes: 0 on success, 2 for invalid input (bad config, hypothesis
violations, missing output directory, wrong kernel type), 3 when an
iterative solver fails to converge.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
import time
from contextlib import nullcontext
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .artifacts import fmt, read_csv, time_tag, write_csv, write_manifest, write_pgm
from .config import ScenarioConfig, load_config
from .diagnostics import ConcentrationReport, dominant_clusters
from .dynamics import evolve
from .errors import ConfigError, NoConvergence, SelmutError
from .geometry import write_grid
from .model import sample
from .operators import assemble
from .spectral import analyze, critical_rho
from .stationary import stationary_from_eigen, weak_residual

log = logging.getLogger("selmut")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NO_CONVERGENCE = 3

THREADS_ENV = "SELMUT_THREADS"


class _Run:
    """Per-invocation context: config, output directory and produced files."""

    def __init__(self, args, config: Optional[ScenarioConfig], need_out: bool):
        self.args = args
        self.config = config
        self.files: list[Path] = []
        out = args.out if args.out is not None else (config.output.dir if config else None)
        self.out: Optional[Path] = None
        if out is not None:
            self.out = Path(out)
            if not self.out.is_dir():
                raise ConfigError(f"output directory {self.out} does not exist")
        elif need_out:
            raise ConfigError("no output directory: pass --out or set [output] dir")

    def path(self, name: str) -> Path:
        p = self.out / name
        self.files.append(p)
        return p

    @property
    def pgm(self) -> bool:
        return bool(self.args.pgm or (self.config and self.config.output.pgm))


# --- commands -----------------------------------------------------------------


def cmd_mesh(run: _Run) -> int:
    cfg = run.config
    quad = cfg.quadrature()
    kernel = cfg.kernel_spec()
    a, _ = sample(kernel, quad)
    write_grid(run.path("mesh.dat"), quad, a)
    if run.pgm:
        write_pgm(run.path("mesh.pgm"), quad, a)
    print(f"nodes={quad.n} h={fmt(quad.h)} volume={fmt(quad.volume)} lattice={'x'.join(map(str, quad.lattice_shape))}")
    return EXIT_OK


def _atom_rows(atoms):
    for at in atoms:
        yield [*np.asarray(at.point, dtype=float).tolist(), at.mass]


def _atom_header(quad):
    return ["x", "y"][: quad.dim] + ["mass"]


def _spectrum(run: _Run):
    cfg = run.config
    quad = cfg.quadrature()
    kernel = cfg.kernel_spec()
    op = assemble(quad, kernel, node_cap=cfg.kernel.node_cap)
    spec = analyze(quad, kernel, op, cluster_weights=cfg.kernel.cluster_weights)
    return quad, kernel, op, spec


def cmd_spectrum(run: _Run) -> int:
    quad, kernel, op, spec = _spectrum(run)
    masses = ";".join(fmt(at.mass) for at in spec.atoms)
    write_csv(
        run.path("spectrum.csv"),
        ["lambda_p", "sigma", "classification", "n_atoms", "atom_masses", "candidate_mass", "nodes", "h"],
        [[spec.lambda_p, spec.sigma, spec.classification.value, len(spec.atoms), masses, spec.candidate_mass, quad.n, quad.h]],
    )
    write_grid(run.path("eigen_density.dat"), quad, spec.eigen_density)
    write_csv(run.path("eigen_atoms.csv"), _atom_header(quad), _atom_rows(spec.atoms))
    if run.pgm:
        write_pgm(run.path("eigen_density.pgm"), quad, spec.eigen_density)
    print(f"lambda_p={fmt(spec.lambda_p)} sigma={fmt(spec.sigma)} classification={spec.classification.value} atoms={len(spec.atoms)}")
    return EXIT_OK


def cmd_stationary(run: _Run) -> int:
    quad, kernel, op, spec = _spectrum(run)
    measure = stationary_from_eigen(spec, kernel)
    resid = weak_residual(measure, op, kernel, seed=run.config.seed)
    write_grid(run.path("stationary_density.dat"), quad, measure.density)
    write_csv(run.path("atoms.csv"), _atom_header(quad), _atom_rows(measure.atoms))
    write_csv(
        run.path("summary.csv"),
        ["theta", "weak_residual", "lambda_p", "classification", "total_mass", "n_atoms"],
        [[measure.theta, resid, spec.lambda_p, spec.classification.value, measure.total_mass, len(measure.atoms)]],
    )
    if run.pgm:
        write_pgm(run.path("stationary_density.pgm"), quad, measure.density)
    print(f"theta={fmt(measure.theta)} weak_residual={fmt(resid)} mass={fmt(measure.total_mass)}")
    return EXIT_OK


def _q_tag(q) -> str:
    return f"{float(q):g}"


def trajectory_table(records, q_list, n_clusters: int):
    """Header and rows of the trajectory CSV in the fixed column order."""
    qs = [float(q) for q in q_list]
    header = ["t", "mass_L1", "norm_L2", "Gamma", "F2", "D2", "lambda_t", "h_norm"]
    header += [f"conc_{i}" for i in range(n_clusters)]
    header += ["max_density", "k_h", "lambda_ode_residual"]
    extra_q = []
    for q in qs:
        tag = _q_tag(q)
        header.append(f"G{tag}")
        if q != 2.0:
            header.append(f"D{tag}")
            if q != 1.0:
                header.append(f"F{tag}")
        header.append(f"entropy_residual_q{tag}")
        extra_q.append(q)
    rows = []
    for r in records:
        conc = list(r.conc_fractions) + [None] * (n_clusters - len(r.conc_fractions))
        row = [r.t, r.mass_L1, r.norm_L2, r.Gamma, r.F.get(2.0), r.D.get(2.0), r.lambda_t, r.h_norm_L2]
        row += conc
        row += [r.max_density, r.k_h, r.lambda_ode_residual]
        for q in extra_q:
            row.append(r.G.get(q))
            if q != 2.0:
                row.append(r.D.get(q))
                if q != 1.0:
                    row.append(r.F.get(q))
            row.append(r.entropy_residual.get(q))
        rows.append(row)
    return header, rows


class _DumpHook:
    def __init__(self, run: _Run, quad, every: int):
        self.run, self.quad, self.every = run, quad, every
        self.last_step = None

    def dump(self, step, state):
        tag = time_tag(state.t)
        write_grid(self.run.path(f"u_t{tag}.dat"), self.quad, state.u)
        if self.run.pgm:
            write_pgm(self.run.path(f"u_t{tag}.pgm"), self.quad, state.u)
        self.last_step = step

    def __call__(self, step, state):
        if self.every and step % self.every == 0:
            self.dump(step, state)


def cmd_evolve(run: _Run) -> int:
    cfg = run.config
    quad = cfg.quadrature()
    hook = _DumpHook(run, quad, cfg.time.dump_every)
    res = evolve(cfg, hooks=[hook])
    n_steps = int(round(cfg.time.T / cfg.time.dt))
    if hook.last_step != n_steps:
        hook.dump(n_steps, res.state)
    n_clusters = 0 if res.centers is None else len(res.centers)
    header, rows = trajectory_table(res.records, cfg.output.q, n_clusters)
    write_csv(run.path("trajectory.csv"), header, rows)
    final = res.records[-1]
    dominant = ""
    if final.conc_fractions:
        rep = ConcentrationReport(tuple(final.conc_fractions), final.max_density)
        dominant = ";".join(str(i) for i in sorted(dominant_clusters(rep)))
    dist = None
    if res.ubar is not None:
        d = res.state.u - res.ubar
        w = quad.weights
        dist = math.sqrt(float(w @ (d * d)) / float(w @ (res.ubar * res.ubar)))
    write_csv(
        run.path("summary.csv"),
        ["t", "mass_L1", "lambda_p", "classification", "rel_L2_to_stationary", "dominant_clusters", "max_density"],
        [[res.state.t, res.state.mass, res.spectrum.lambda_p, res.spectrum.classification.value, dist, dominant, final.max_density]],
    )
    print(
        f"t={fmt(res.state.t)} mass={fmt(res.state.mass)} classification={res.spectrum.classification.value}"
        + (f" rel_L2_to_stationary={fmt(dist)}" if dist is not None else "")
        + (f" dominant={dominant}" if dominant else "")
    )
    return EXIT_OK


def cmd_rho_star(run: _Run) -> int:
    cfg = run.config
    kernel = cfg.kernel_spec()
    if cfg.kernel.mutation != "constant":
        raise ConfigError("rho-star needs a constant mutation kernel ([kernel] mutation = constant)")
    res = critical_rho(kernel, cfg.domain_spec(), cfg.domain.h)
    print(f"rho_star={fmt(res.rho_star)} bracket=[{fmt(res.lo)}, {fmt(res.hi)}] divergent={int(res.divergent)}")
    if run.out is not None:
        write_csv(
            run.path("rho_star.csv"),
            ["rho_star", "lo", "hi", "gap_integral", "divergent"],
            [[res.rho_star, res.lo, res.hi, res.gap_integral, res.divergent]],
        )
    return EXIT_OK


def report_table(path) -> list[tuple[str, Optional[float], Optional[float], Optional[float]]]:
    """Per-column ``(name, min, max, final)`` of a numeric CSV; empty cells are skipped."""
    header, rows = read_csv(path)
    out = []
    for j, name in enumerate(header):
        vals = []
        for row in rows:
            cell = row[j] if j < len(row) else ""
            try:
                vals.append(float(cell))
            except ValueError:
                vals.append(None)
        present = [v for v in vals if v is not None and not math.isnan(v)]
        if not present and any(row[j] for row in rows if j < len(row)):
            continue  # non-numeric column
        final = next((v for v in reversed(vals) if v is not None), None)
        out.append((name, min(present) if present else None, max(present) if present else None, final))
    return out


def cmd_report(run: _Run) -> int:
    table = report_table(run.args.csv)
    width = max([6] + [len(n) for n, *_ in table])
    lines = [f"{'column':<{width}}  {'min':>22}  {'max':>22}  {'final':>22}"]
    for name, lo, hi, final in table:
        lines.append(f"{name:<{width}}  {fmt(lo):>22}  {fmt(hi):>22}  {fmt(final):>22}")
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if run.out is not None:
        run.path("report.txt").write_text(text)
    return EXIT_OK


COMMANDS = {
    "mesh": (cmd_mesh, True),
    "spectrum": (cmd_spectrum, True),
    "stationary": (cmd_stationary, True),
    "evolve": (cmd_evolve, True),
    "rho-star": (cmd_rho_star, False),
    "report": (cmd_report, False),
}


# --- entry point --------------------------------------------------------------


def _u64(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="existing output directory (overrides [output] dir)")
    common.add_argument("--threads", type=int, help=f"BLAS/OpenMP thread cap (fallback: ${THREADS_ENV})")
    common.add_argument("--seed", type=_u64, help="seed for randomised test functions (overrides [output] seed)")
    common.add_argument("--pgm", action="store_true", help="also write P5 heatmaps next to grid dumps")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = argparse.ArgumentParser(prog="selmut", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"selmut {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name == "report":
            p.add_argument("csv", help="CSV file to summarise")
            p.add_argument("--config", help="ignored; accepted for uniformity")
        else:
            p.add_argument("--config", required=True, help="scenario INI file")
    return parser


def _threads(args) -> Optional[int]:
    n = args.threads
    if n is None and os.environ.get(THREADS_ENV):
        try:
            n = int(os.environ[THREADS_ENV])
        except ValueError:
            raise ConfigError(f"${THREADS_ENV} must be an integer, got {os.environ[THREADS_ENV]!r}") from None
    if n is not None and n < 1:
        raise ConfigError(f"thread count must be positive, got {n}")
    return n


def _thread_limit(n: Optional[int]):
    if n is None:
        return nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse usage errors are input errors
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    handler, need_out = COMMANDS[args.command]
    started = time.perf_counter()
    try:
        threads = _threads(args)
        config = None
        if args.command != "report":
            config = load_config(args.config).with_overrides(seed=args.seed)
        run = _Run(args, config, need_out)
        with _thread_limit(threads):
            code = handler(run)
        if run.out is not None and run.files:
            write_manifest(
                run.out,
                command=args.command,
                config=config.echo() if config else None,
                config_path=str(args.config) if args.config else None,
                seed=config.seed if config else 0,
                threads=threads,
                wall_clock=time.perf_counter() - started,
                files=run.files,
            )
        return code
    except NoConvergence as exc:
        print(f"selmut: no convergence: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    except SelmutError as exc:
        print(f"selmut: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
