"""Text snapshot formats.

``VORTEXF 1 <dim> <K> <L> <c> <t>`` followed by one line per stored wavevector
(integer components, then ``c`` pairs of re/im). Every non-Nyquist, nonzero
``n`` whose leading nonzero component is positive is written, zeros
included, so the body length is fixed at ``((K - 1)^dim - 1) / 2`` and
truncation is detectable.

``BROWN 1 <q> <N_fine> <h_fine> <seed>`` followed by ``N_fine`` lines of ``q``
increments.
"""
from __future__ import annotations

import itertools
from pathlib import Path

import numpy as np

from .snse import BrownianPath
from .spectral import PeriodicGrid, SpectralField, SymmetryError


class SnapshotError(ValueError):
    """Malformed or truncated snapshot."""


class VersionError(SnapshotError):
    """Unsupported format version."""


def _g(x: float) -> str:
    return format(float(x), ".17g")


def half_lattice(dim: int, K: int):
    """Stored wavevectors in file order."""
    r = range(-K // 2 + 1, K // 2)
    for n in itertools.product(r, repeat=dim):
        lead = next((v for v in n if v), 0)
        if lead > 0:
            yield n


def _is_stored(n, K) -> bool:
    lead = next((v for v in n if v), 0)
    return lead > 0 and all(abs(v) < K // 2 for v in n)


def write_snapshot(field: SpectralField, path, t: float = 0.0) -> Path:
    g = field.grid
    lines = [f"VORTEXF 1 {g.dim} {g.K} {_g(g.L)} {field.components} {_g(t)}"]
    for n in half_lattice(g.dim, g.K):
        c = field.coeff(n)
        vals = " ".join(f"{_g(z.real)} {_g(z.imag)}" for z in c)
        lines.append(" ".join(map(str, n)) + " " + vals)
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path


def _header(line: str, magic: str, fields: int) -> list[str]:
    parts = line.split()
    if not parts or parts[0] != magic:
        raise SnapshotError(f"expected {magic} header, got {line[:40]!r}")
    if len(parts) < 2:
        raise SnapshotError("header has no version")
    if parts[1] != "1":
        raise VersionError(f"{magic} version {parts[1]} is not supported (expected 1)")
    if len(parts) != fields:
        raise SnapshotError(f"{magic} header needs {fields} fields, got {len(parts)}")
    return parts


def read_snapshot(path) -> tuple[SpectralField, float]:
    """Returns ``(field, t)``."""
    text = Path(path).read_text()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise SnapshotError(f"{path} is empty")
    parts = _header(lines[0], "VORTEXF", 7)
    try:
        dim, K, L, c, t = int(parts[2]), int(parts[3]), float(parts[4]), int(parts[5]), float(parts[6])
        grid = PeriodicGrid(dim, K, L)
    except ValueError as exc:
        raise SnapshotError(f"bad VORTEXF header: {exc}") from exc
    expected = ((K - 1) ** dim - 1) // 2
    body = lines[1:]
    if len(body) != expected:
        raise SnapshotError(f"expected {expected} coefficient lines, found {len(body)} (truncated?)")
    modes = {}
    for ln in body:
        tok = ln.split()
        if len(tok) != dim + 2 * c:
            raise SnapshotError(f"malformed coefficient line {ln[:60]!r}")
        n = tuple(int(v) for v in tok[:dim])
        if not _is_stored(n, K):
            raise SymmetryError(f"wavevector {n} lies outside the stored half-lattice")
        if n in modes:
            raise SnapshotError(f"duplicate wavevector {n}")
        vals = np.array([float(v) for v in tok[dim:]])
        modes[n] = vals[0::2] + 1j * vals[1::2]
    return SpectralField.from_modes(grid, modes, components=c), t


def write_brownian(path_obj: BrownianPath, path) -> Path:
    lines = [f"BROWN 1 {path_obj.q} {path_obj.steps} {_g(path_obj.h_fine)} {path_obj.seed}"]
    lines += [" ".join(_g(v) for v in row) for row in path_obj.increments]
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path


def read_brownian(path) -> BrownianPath:
    text = Path(path).read_text()
    lines = text[:-1].split("\n") if text.endswith("\n") else text.split("\n")
    if not lines or not lines[0].strip():
        raise SnapshotError(f"{path} is empty")
    parts = _header(lines[0], "BROWN", 6)
    try:
        q, n, h, seed = int(parts[2]), int(parts[3]), float(parts[4]), int(parts[5])
    except ValueError as exc:
        raise SnapshotError(f"bad BROWN header: {exc}") from exc
    body = lines[1:]
    if len(body) != n:
        raise SnapshotError(f"expected {n} increment lines, found {len(body)} (truncated?)")
    inc = np.empty((n, q))
    for i, ln in enumerate(body):
        tok = ln.split()
        if len(tok) != q:
            raise SnapshotError(f"line {i + 2} has {len(tok)} values, expected {q}")
        inc[i] = [float(v) for v in tok]
    inc.flags.writeable = False
    return BrownianPath(inc, h, seed)
