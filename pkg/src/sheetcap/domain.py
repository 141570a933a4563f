"""Time/space geometry: sup norms, the two partial orders on the quadrant,
and finite discretizations of compact sets of 2-parameter time."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np


class MeshError(ValueError):
    """Raised for invalid or empty meshes."""


@dataclass(frozen=True)
class TimePoint:
    s1: float
    s2: float

    def __post_init__(self):
        for v in (self.s1, self.s2):
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"time coordinates must be finite and >= 0, got {self}")

    def __iter__(self):
        yield self.s1
        yield self.s2


@dataclass(frozen=True)
class SpacePoint:
    coords: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "coords", tuple(float(c) for c in self.coords))
        if len(self.coords) < 1:
            raise ValueError("SpacePoint needs at least one coordinate")

    @property
    def d(self) -> int:
        return len(self.coords)

    def sup_norm(self) -> float:
        return max(abs(c) for c in self.coords)


def as_timepoint(p) -> TimePoint:
    if isinstance(p, TimePoint):
        return p
    s1, s2 = p
    return TimePoint(float(s1), float(s2))


def sup_norm_time(p) -> float:
    p = as_timepoint(p)
    return max(p.s1, p.s2)


def sup_dist_time(p, q) -> float:
    p, q = as_timepoint(p), as_timepoint(q)
    return max(abs(p.s1 - q.s1), abs(p.s2 - q.s2))


class OrderRelation(NamedTuple):
    """Flags of the two coordinatewise orders between a pair ``(p, q)``.

    ``p_ord1_q`` means p dominates q in both coordinates; ``p_ord2_q`` means
    p is to the right of q and not above it.
    """

    p_ord1_q: bool
    p_ord2_q: bool
    q_ord1_p: bool
    q_ord2_p: bool

    def any(self) -> bool:
        return self.p_ord1_q or self.p_ord2_q or self.q_ord1_p or self.q_ord2_p


def ord1(p, q) -> bool:
    p, q = as_timepoint(p), as_timepoint(q)
    return p.s1 >= q.s1 and p.s2 >= q.s2


def ord2(p, q) -> bool:
    p, q = as_timepoint(p), as_timepoint(q)
    return p.s1 >= q.s1 and p.s2 <= q.s2


def partial_order(p, q) -> OrderRelation:
    return OrderRelation(ord1(p, q), ord2(p, q), ord1(q, p), ord2(q, p))


@dataclass(frozen=True, eq=False)
class CompactMesh:
    """Finite stand-in for a compact set E in the closed positive quadrant.

    ``atoms`` is an ``(n, 2)`` float array of distinct points; ``cell_weights``
    holds the Lebesgue mass (area or length) each atom represents and
    ``mesh_gauge`` the largest sup-norm diameter of a cell. The radii ``c1``
    and ``c2`` are the smallest and largest sup norms over the atoms.
    """

    atoms: np.ndarray
    cell_weights: np.ndarray
    mesh_gauge: float
    c1: float = field(init=False)
    c2: float = field(init=False)

    def __post_init__(self):
        atoms = np.array(self.atoms, dtype=float).reshape(-1, 2)
        weights = np.array(self.cell_weights, dtype=float).reshape(-1)
        if atoms.shape[0] == 0:
            raise MeshError("mesh has no atoms")
        if not np.all(np.isfinite(atoms)) or np.any(atoms < 0):
            raise MeshError("atoms must be finite points of the closed positive quadrant")
        if weights.shape[0] != atoms.shape[0]:
            raise MeshError("cell_weights must have one entry per atom")
        if np.any(weights <= 0):
            raise MeshError("cell_weights must be positive")
        if not (self.mesh_gauge > 0 and math.isfinite(self.mesh_gauge)):
            raise MeshError("mesh_gauge must be positive")
        if np.unique(atoms, axis=0).shape[0] != atoms.shape[0]:
            raise MeshError("atoms must be distinct")
        atoms.setflags(write=False)
        weights.setflags(write=False)
        norms = atoms.max(axis=1)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "cell_weights", weights)
        object.__setattr__(self, "mesh_gauge", float(self.mesh_gauge))
        object.__setattr__(self, "c1", float(norms.min()))
        object.__setattr__(self, "c2", float(norms.max()))

    def __len__(self) -> int:
        return self.atoms.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, CompactMesh):
            return NotImplemented
        return (
            self.mesh_gauge == other.mesh_gauge
            and np.array_equal(self.atoms, other.atoms)
            and np.array_equal(self.cell_weights, other.cell_weights)
        )

    def __hash__(self):
        return hash((self.atoms.tobytes(), self.cell_weights.tobytes(), self.mesh_gauge))

    def timepoints(self) -> list[TimePoint]:
        return [TimePoint(float(a), float(b)) for a, b in self.atoms]

    def sup_norms(self) -> np.ndarray:
        return self.atoms.max(axis=1)

    def distance_matrix(self) -> np.ndarray:
        """Pairwise sup-norm distances between atoms."""
        diff = np.abs(self.atoms[:, None, :] - self.atoms[None, :, :])
        return diff.max(axis=2)

    def reference_measure(self) -> np.ndarray:
        """Normalized cell weights, i.e. the discretized Lebesgue measure."""
        return self.cell_weights / self.cell_weights.sum()

    def to_dict(self) -> dict:
        return {
            "atoms": self.atoms.tolist(),
            "cell_weights": self.cell_weights.tolist(),
            "mesh_gauge": self.mesh_gauge,
            "c1": self.c1,
            "c2": self.c2,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "CompactMesh":
        atoms = np.asarray(doc["atoms"], dtype=float).reshape(-1, 2)
        weights = doc.get("cell_weights")
        if weights is None:
            weights = np.ones(atoms.shape[0])
        gauge = doc.get("mesh_gauge")
        if gauge is None:
            gauge = default_gauge(atoms)
        mesh = cls(atoms, weights, float(gauge))
        for key in ("c1", "c2"):
            if key in doc and not math.isclose(doc[key], getattr(mesh, key), rel_tol=1e-12, abs_tol=1e-15):
                raise MeshError(f"stored {key}={doc[key]} disagrees with atoms ({getattr(mesh, key)})")
        return mesh

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "CompactMesh":
        return cls.from_dict(json.loads(Path(path).read_text()))


def default_gauge(atoms: np.ndarray) -> float:
    """Smallest positive pairwise sup distance, or 1.0 for a single atom."""
    atoms = np.asarray(atoms, dtype=float).reshape(-1, 2)
    if atoms.shape[0] < 2:
        return 1.0
    dist = np.abs(atoms[:, None, :] - atoms[None, :, :]).max(axis=2)
    pos = dist[dist > 0]
    return float(pos.min()) if pos.size else 1.0


def mesh_from_atoms(
    atoms: Iterable[Sequence[float]],
    mesh_gauge: float | None = None,
    cell_weights: Sequence[float] | None = None,
) -> CompactMesh:
    """Mesh from an explicit atom list (unit cell weights unless given)."""
    arr = np.array([tuple(as_timepoint(a)) for a in atoms], dtype=float).reshape(-1, 2)
    if cell_weights is None:
        cell_weights = np.ones(arr.shape[0])
    if mesh_gauge is None:
        mesh_gauge = default_gauge(arr)
    return CompactMesh(arr, cell_weights, mesh_gauge)


def build_rect_mesh(t_lo, t_hi, n1: int, n2: int) -> CompactMesh:
    """Cell-center atoms of the uniform ``n1 x n2`` grid on ``[t_lo, t_hi]``."""
    lo, hi = as_timepoint(t_lo), as_timepoint(t_hi)
    if n1 < 1 or n2 < 1:
        raise MeshError("n1 and n2 must be >= 1")
    if not (hi.s1 > lo.s1 and hi.s2 > lo.s2):
        raise MeshError(f"degenerate rectangle [{lo}, {hi}]")
    h1 = (hi.s1 - lo.s1) / n1
    h2 = (hi.s2 - lo.s2) / n2
    x = lo.s1 + h1 * (np.arange(n1) + 0.5)
    y = lo.s2 + h2 * (np.arange(n2) + 0.5)
    xx, yy = np.meshgrid(x, y, indexing="ij")
    atoms = np.column_stack([xx.ravel(), yy.ravel()])
    return CompactMesh(atoms, np.full(n1 * n2, h1 * h2), max(h1, h2))


def build_segment_mesh(endpoints, n: int) -> CompactMesh:
    """``n`` atoms at the midpoints of ``n`` equal sub-segments."""
    p, q = (as_timepoint(e) for e in endpoints)
    if n < 1:
        raise MeshError("n must be >= 1")
    if p == q:
        raise MeshError("segment endpoints coincide")
    frac = (np.arange(n) + 0.5) / n
    a = np.array([p.s1, p.s2])
    b = np.array([q.s1, q.s2])
    atoms = a + frac[:, None] * (b - a)
    length = float(np.hypot(*(b - a)))
    return CompactMesh(atoms, np.full(n, length / n), sup_dist_time(p, q) / n)


def restrict_mesh(mesh: CompactMesh, min_norm: float) -> CompactMesh:
    """Keep the atoms whose sup norm is at least ``min_norm``."""
    keep = mesh.sup_norms() >= min_norm
    if not keep.any():
        raise MeshError(f"no atom has sup norm >= {min_norm} (c2={mesh.c2})")
    return CompactMesh(mesh.atoms[keep], mesh.cell_weights[keep], mesh.mesh_gauge)
