"""Deterministic file outputs: CSV tables, PGM heatmaps and run manifests."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import platform
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .geometry import Quadrature, check_field


def fmt(value) -> str:
    """Fixed 15-significant-digit rendering; ``None`` and NaN become empty fields."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return ""
        return f"{v:.15g}"
    return str(value)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
    return path


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path} is empty")
    return rows[0], rows[1:]


def pgm_bytes(quad: Quadrature, values) -> bytes:
    """Binary ``P5`` graymap of the bounding lattice, top row at the largest y.

    Pixels are ``round(255 u / max u)``; off-domain pixels are 0.
    """
    values = check_field(quad, values)
    grid = quad.lattice_values(values, fill=0.0)
    if grid.ndim == 1:
        grid = grid[:, None]
    img = grid.T[::-1]  # rows = y descending, columns = x ascending
    top = float(values.max()) if values.size else 0.0
    if top > 0:
        pix = np.rint(255.0 * np.clip(img, 0.0, None) / top)
    else:
        pix = np.zeros_like(img)
    pix = np.clip(pix, 0, 255).astype(np.uint8)
    height, width = pix.shape
    return f"P5\n{width} {height}\n255\n".encode("ascii") + pix.tobytes()


def write_pgm(path, quad: Quadrature, values) -> Path:
    path = Path(path)
    path.write_bytes(pgm_bytes(quad, values))
    return path


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError(f"{path} is not a binary PGM")
    width, height = map(int, parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(height, width)


def sha256(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def time_tag(t: float) -> str:
    """Compact decimal time for file names: 200.0 -> '200', 0.25 -> '0.25'."""
    tag = f"{t:.6f}".rstrip("0").rstrip(".")
    return tag or "0"


def write_manifest(
    out_dir,
    *,
    command: str,
    config: Optional[dict],
    config_path: Optional[str],
    seed: int,
    threads: Optional[int],
    wall_clock: float,
    files: Sequence[Path],
) -> Path:
    """``manifest.json`` listing every output with its checksum."""
    import numpy
    import scipy

    from . import __version__

    out_dir = Path(out_dir)
    inventory = {}
    for f in sorted({Path(p) for p in files}, key=lambda p: p.name):
        inventory[f.name] = {"sha256": sha256(f), "bytes": f.stat().st_size}
    manifest = {
        "command": command,
        "config_path": config_path,
        "config": config,
        "versions": {
            "selmut": __version__,
            "numpy": numpy.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "seed": seed,
        "threads": threads,
        "wall_clock_s": round(wall_clock, 3),
        "files": inventory,
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=list) + "\n")
    return path
