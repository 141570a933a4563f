"""Gaussian simulation of the 2-parameter Brownian sheet and of additive
Brownian motion.

Every sampler is a small object that knows how many standard normals one
coordinate of one draw consumes (``width``) and how to turn them into field
values (``transform``). ``draw`` and ``iter_draws`` feed it reproducible
normals from :mod:`sheetcap.rng`. Coordinates of the d-dimensional field are
independent copies, so each draw uses ``d * width`` normals.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .domain import CompactMesh, TimePoint, as_timepoint, mesh_from_atoms, ord1, ord2
from .rng import CHUNK_DRAWS, SeedSpec, as_seedspec, iter_normal_chunks

JITTER_START = 1e-12
JITTER_STOP = 1e-6


class CovarianceError(np.linalg.LinAlgError):
    """Covariance matrix could not be factorized even with maximal jitter."""


class OrderError(ValueError):
    """Target points are not ordered relative to the base point as required."""


def sheet_covariance(p, q) -> float:
    p, q = as_timepoint(p), as_timepoint(q)
    return min(p.s1, q.s1) * min(p.s2, q.s2)


def sheet_covariance_matrix(atoms: np.ndarray) -> np.ndarray:
    atoms = np.asarray(atoms, dtype=float).reshape(-1, 2)
    m1 = np.minimum(atoms[:, None, 0], atoms[None, :, 0])
    m2 = np.minimum(atoms[:, None, 1], atoms[None, :, 1])
    return m1 * m2


def additive_covariance_matrix(atoms: np.ndarray) -> np.ndarray:
    atoms = np.asarray(atoms, dtype=float).reshape(-1, 2)
    return np.minimum(atoms[:, None, 0], atoms[None, :, 0]) + np.minimum(atoms[:, None, 1], atoms[None, :, 1])


def bm_covariance_matrix(times) -> np.ndarray:
    times = np.asarray(times, dtype=float).reshape(-1)
    return np.minimum(times[:, None], times[None, :])


def increment_variance_ord1(s, t) -> float:
    """Per-coordinate variance of ``B(s) - B(t)`` for ``s`` dominating ``t``."""
    s, t = as_timepoint(s), as_timepoint(t)
    if not ord1(s, t):
        raise OrderError(f"{s} does not dominate {t} coordinatewise")
    return s.s2 * (s.s1 - t.s1) + t.s1 * (s.s2 - t.s2)


class GaussianFactor:
    """Square-root factor of a covariance matrix, ``cov ~= L @ L.T``.

    Indices with zero variance are split off and always produce exact zeros
    (their covariances with everything else must vanish too). The remaining
    block is Cholesky-factorized, adding diagonal jitter that starts at
    ``1e-12`` times the largest variance and grows tenfold up to ``1e-6``.
    """

    def __init__(self, cov: np.ndarray):
        cov = np.asarray(cov, dtype=float)
        n = cov.shape[0]
        if cov.shape != (n, n):
            raise ValueError("covariance must be square")
        diag = np.diag(cov)
        if np.any(diag < 0):
            raise CovarianceError("negative variance on the diagonal")
        self.size = n
        self.support = np.flatnonzero(diag > 0)
        self.jitter = 0.0
        self.factor = np.zeros((0, 0))
        if self.support.size:
            sub = cov[np.ix_(self.support, self.support)]
            self.factor, self.jitter = _jittered_cholesky(sub)

    @property
    def width(self) -> int:
        return int(self.support.size)

    def apply(self, z: np.ndarray) -> np.ndarray:
        """Map normals ``(..., width)`` to correlated values ``(..., size)``."""
        out = np.zeros(z.shape[:-1] + (self.size,))
        if self.support.size:
            out[..., self.support] = z @ self.factor.T
        return out


def _jittered_cholesky(cov: np.ndarray) -> tuple[np.ndarray, float]:
    scale = float(np.max(np.diag(cov)))
    try:
        return np.linalg.cholesky(cov), 0.0
    except np.linalg.LinAlgError:
        pass
    eye = np.eye(cov.shape[0])
    jitter = JITTER_START
    while jitter <= JITTER_STOP * (1 + 1e-9):
        try:
            return np.linalg.cholesky(cov + jitter * scale * eye), jitter * scale
        except np.linalg.LinAlgError:
            jitter *= 10
    raise CovarianceError(
        f"covariance not positive definite after jitter {JITTER_STOP:g} x max variance"
    )


@dataclass(frozen=True, eq=False)
class SheetSample:
    """Realized field values at the atoms of ``mesh``.

    ``values`` has shape ``(n_atoms, d)`` for one draw, or
    ``(n_draws, n_atoms, d)`` for a batch.
    """

    mesh: CompactMesh
    values: np.ndarray
    seed: SeedSpec
    kind: str = "sheet"

    @property
    def d(self) -> int:
        return self.values.shape[-1]

    @property
    def batched(self) -> bool:
        return self.values.ndim == 3

    def to_csv(self, path: str | Path) -> None:
        """One row per atom (and per draw when batched): ``[draw,] s1, s2, b1..bd``."""
        cols = [f"b{i + 1}" for i in range(self.d)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            if self.batched:
                w.writerow(["draw", "s1", "s2", *cols])
                for k, vals in enumerate(self.values):
                    for atom, v in zip(self.mesh.atoms, vals):
                        w.writerow([k, *_cells(atom), *_cells(v)])
            else:
                w.writerow(["s1", "s2", *cols])
                for atom, v in zip(self.mesh.atoms, self.values):
                    w.writerow([*_cells(atom), *_cells(v)])


def _cells(x) -> list[str]:
    """Shortest round-trip text for each float."""
    return [repr(float(v)) for v in x]


class _Sampler:
    kind = "sheet"
    mesh: CompactMesh
    d: int
    width: int

    def transform(self, z: np.ndarray) -> np.ndarray:
        """Normals ``(m, d, width)`` -> values ``(m, n_atoms, d)``."""
        raise NotImplementedError

    def iter_draws(self, seed, n_draws: int, chunk: int = CHUNK_DRAWS) -> Iterator[tuple[int, np.ndarray]]:
        seed = as_seedspec(seed)
        for start, z in iter_normal_chunks(seed, n_draws, self.d * self.width, chunk):
            yield start, self.transform(z.reshape(-1, self.d, self.width))

    def draw(self, seed, size: int | None = None) -> SheetSample:
        seed = as_seedspec(seed)
        n = 1 if size is None else int(size)
        vals = np.concatenate([v for _, v in self.iter_draws(seed, n)], axis=0)
        if size is None:
            vals = vals[0]
        return SheetSample(self.mesh, vals, seed, self.kind)


class ExactSheetSampler(_Sampler):
    """Exact joint law at arbitrary atoms via the full covariance factor."""

    def __init__(self, mesh: CompactMesh, d: int):
        if d < 1:
            raise ValueError("d must be >= 1")
        self.mesh, self.d = mesh, d
        self.gauss = GaussianFactor(sheet_covariance_matrix(mesh.atoms))
        self.width = self.gauss.width

    def transform(self, z):
        return np.swapaxes(self.gauss.apply(z), 1, 2)


class AdditiveBMSampler(_Sampler):
    """``Z(s1, s2) = X(s1) + Y(s2)`` with X, Y independent Brownian motions."""

    kind = "additive"

    def __init__(self, mesh: CompactMesh, d: int):
        if d < 1:
            raise ValueError("d must be >= 1")
        self.mesh, self.d = mesh, d
        self.u, self.iu = np.unique(mesh.atoms[:, 0], return_inverse=True)
        self.v, self.iv = np.unique(mesh.atoms[:, 1], return_inverse=True)
        self.su = np.sqrt(np.diff(self.u, prepend=0.0))
        self.sv = np.sqrt(np.diff(self.v, prepend=0.0))
        self.width = self.u.size + self.v.size

    def transform(self, z):
        nu = self.u.size
        x = np.cumsum(z[..., :nu] * self.su, axis=-1)
        y = np.cumsum(z[..., nu:] * self.sv, axis=-1)
        vals = x[..., self.iu] + y[..., self.iv]
        return np.swapaxes(vals, 1, 2)


class ChentsovGridSampler(_Sampler):
    """Sheet on the ``(n1+1) x (n2+1)`` node grid of ``[0, t_hi]``.

    Values are 2-D cumulative sums of independent cell masses of white noise
    with variance equal to the cell area, so node values are exact in law.
    Atoms are ordered with the first time coordinate varying slowest.
    """

    def __init__(self, t_hi, n1: int, n2: int, d: int):
        t_hi = as_timepoint(t_hi)
        if n1 < 1 or n2 < 1:
            raise ValueError("n1 and n2 must be >= 1")
        if d < 1:
            raise ValueError("d must be >= 1")
        self.n1, self.n2, self.d = n1, n2, d
        self.h1, self.h2 = t_hi.s1 / n1, t_hi.s2 / n2
        x = np.linspace(0.0, t_hi.s1, n1 + 1)
        y = np.linspace(0.0, t_hi.s2, n2 + 1)
        xx, yy = np.meshgrid(x, y, indexing="ij")
        atoms = np.column_stack([xx.ravel(), yy.ravel()])
        self.mesh = CompactMesh(atoms, np.full(atoms.shape[0], max(self.h1 * self.h2, 1e-300)), max(self.h1, self.h2))
        self.width = n1 * n2

    def transform(self, z):
        m = z.shape[0]
        cells = z.reshape(m, self.d, self.n1, self.n2) * np.sqrt(self.h1 * self.h2)
        grid = np.zeros((m, self.d, self.n1 + 1, self.n2 + 1))
        grid[:, :, 1:, 1:] = np.cumsum(np.cumsum(cells, axis=2), axis=3)
        return np.swapaxes(grid.reshape(m, self.d, -1), 1, 2)


def _fragment_atoms(t: TimePoint, targets: Sequence) -> list[TimePoint]:
    pts = [t]
    for p in map(as_timepoint, targets):
        if p not in pts:
            pts.append(p)
    return pts


class DecompositionOrd1Sampler(_Sampler):
    """Sheet beyond ``t`` in the first order, assembled as
    ``B(t) + sqrt(t2) beta1(s1 - t1) + sqrt(t1) beta2(s2 - t2) + W(s - t)``
    with independent Brownian motions ``beta1, beta2`` and a fresh sheet ``W``.

    Atoms of the resulting mesh are ``t`` followed by the distinct targets.
    """

    def __init__(self, t, targets: Sequence, d: int):
        t = as_timepoint(t)
        pts = _fragment_atoms(t, targets)
        for p in pts:
            if not ord1(p, t):
                raise OrderError(f"target {p} does not dominate {t}")
        self.t, self.d = t, d
        self.mesh = mesh_from_atoms(pts)
        atoms = self.mesh.atoms
        inc = atoms - np.array([t.s1, t.s2])
        self.parts = [
            GaussianFactor(np.array([[t.s1 * t.s2]])),
            GaussianFactor(bm_covariance_matrix(inc[:, 0])),
            GaussianFactor(bm_covariance_matrix(inc[:, 1])),
            GaussianFactor(sheet_covariance_matrix(inc)),
        ]
        self.width = sum(p.width for p in self.parts)

    def _split(self, z):
        out, k = [], 0
        for part in self.parts:
            out.append(part.apply(z[..., k:k + part.width]))
            k += part.width
        return out

    def transform(self, z):
        bt, beta1, beta2, w = self._split(z)
        vals = bt + np.sqrt(self.t.s2) * beta1 + np.sqrt(self.t.s1) * beta2 + w
        return np.swapaxes(vals, 1, 2)


class DecompositionOrd2Sampler(DecompositionOrd1Sampler):
    """Sheet at points ``s`` right of and below ``t``, assembled as
    ``V(s2) + U(s) + (s2/t2) B(t)``.

    ``V`` is a Brownian bridge on ``[0, t2]`` scaled by ``t1``, sampled
    jointly from its marginal covariance ``t1 (min(u, v) - u v / t2)``; ``U``
    is the white-noise mass of ``[t1, s1] x [0, s2]``. Both ends of the bridge
    have zero variance and come out exactly 0.
    """

    def __init__(self, t, targets: Sequence, d: int):
        t = as_timepoint(t)
        if t.s2 <= 0:
            raise OrderError("base point needs t2 > 0")
        pts = _fragment_atoms(t, targets)
        for p in pts:
            if not ord2(p, t):
                raise OrderError(f"target {p} is not right of and below {t}")
        self.t, self.d = t, d
        self.mesh = mesh_from_atoms(pts)
        atoms = self.mesh.atoms
        self.ratio = atoms[:, 1] / t.s2
        self.parts = [
            GaussianFactor(np.array([[t.s1 * t.s2]])),
            GaussianFactor(bridge_covariance_matrix(atoms[:, 1], t.s2, t.s1)),
            GaussianFactor(
                (np.minimum(atoms[:, None, 0], atoms[None, :, 0]) - t.s1)
                * np.minimum(atoms[:, None, 1], atoms[None, :, 1])
            ),
        ]
        self.width = sum(p.width for p in self.parts)

    def transform(self, z):
        bt, v, u = self._split(z)
        vals = v + u + self.ratio * bt
        return np.swapaxes(vals, 1, 2)

    def bridge(self, z):
        """Bridge values ``V(s2)`` at the atoms, shape ``(m, d, n_atoms)``."""
        return self._split(z)[1]


def bridge_covariance_matrix(times, horizon: float, scale: float = 1.0) -> np.ndarray:
    """``scale * (min(u, v) - u v / horizon)``, written so both ends are exactly 0."""
    times = np.asarray(times, dtype=float).reshape(-1)
    lo = np.minimum(times[:, None], times[None, :])
    hi = np.maximum(times[:, None], times[None, :])
    return scale * lo * (horizon - hi) / horizon


def sample_exact(mesh: CompactMesh, d: int, seed, size: int | None = None) -> SheetSample:
    return ExactSheetSampler(mesh, d).draw(seed, size)


def sample_grid_chentsov(t_hi, n1: int, n2: int, d: int, seed, size: int | None = None) -> SheetSample:
    return ChentsovGridSampler(t_hi, n1, n2, d).draw(seed, size)


def sample_decomposition_ord1(t, targets, d: int, seed, size: int | None = None) -> SheetSample:
    return DecompositionOrd1Sampler(t, targets, d).draw(seed, size)


def sample_decomposition_ord2(t, targets, d: int, seed, size: int | None = None) -> SheetSample:
    return DecompositionOrd2Sampler(t, targets, d).draw(seed, size)


def sample_additive_bm(mesh: CompactMesh, d: int, seed, size: int | None = None) -> SheetSample:
    return AdditiveBMSampler(mesh, d).draw(seed, size)


def make_sampler(mesh: CompactMesh, d: int, field_kind: str = "sheet") -> _Sampler:
    if field_kind == "sheet":
        return ExactSheetSampler(mesh, d)
    if field_kind == "additive":
        return AdditiveBMSampler(mesh, d)
    raise ValueError(f"unknown field kind {field_kind!r}")
