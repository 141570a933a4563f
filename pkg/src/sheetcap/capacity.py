"""Discrete Riesz energies and capacities.

A measure on a mesh is a weight vector ``w`` on the probability simplex and
its energy is the quadratic form ``w @ K @ w`` for a kernel matrix ``K``.
The capacity is the reciprocal of the smallest energy over the simplex.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .domain import CompactMesh

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 100_000
BRUTE_FORCE_MAX_ATOMS = 5


class KernelDivergence(ZeroDivisionError):
    """Untruncated Riesz kernel evaluated at distance zero."""


@dataclass(frozen=True)
class KernelSpec:
    """``kappa(r) = max(eps, sqrt(r)) ** (-2 beta)`` for sup time distance ``r``.

    With ``beta = d/2`` this is the eps-truncated kernel of the hitting
    estimates; with ``eps = 0`` it is the Riesz kernel ``r ** (-beta)``.
    """

    beta: float
    truncation_eps: float = 0.0

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if not self.truncation_eps >= 0:
            raise ValueError("truncation_eps must be nonnegative")


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).reshape(-1)
        if w.size == 0 or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be nonnegative and sum to 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def __len__(self):
        return self.weights.size

    @classmethod
    def uniform(cls, n: int) -> "DiscreteMeasure":
        return cls(np.full(n, 1.0 / n))

    @classmethod
    def normalized(cls, w) -> "DiscreteMeasure":
        w = np.clip(np.asarray(w, dtype=float), 0.0, None)
        return cls(w / w.sum())


@dataclass(frozen=True, eq=False)
class CapacityResult:
    optimal_measure: DiscreteMeasure
    energy: float
    capacity: float
    iterations: int
    duality_gap: float
    converged: bool = True
    method: str = "pairwise-fw"

    def to_dict(self) -> dict:
        return {
            "energy": self.energy,
            "capacity": self.capacity,
            "duality_gap": self.duality_gap,
            "iterations": self.iterations,
            "converged": self.converged,
            "method": self.method,
            "weights": self.optimal_measure.weights.tolist(),
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def kernel_value(spec: KernelSpec, r: float) -> float:
    if r < 0:
        raise ValueError("distance must be nonnegative")
    level = max(spec.truncation_eps, math.sqrt(r))
    if level == 0:
        raise KernelDivergence("Riesz kernel diverges at r = 0 without truncation")
    return level ** (-2.0 * spec.beta)


def kernel_matrix(mesh: CompactMesh, spec: KernelSpec) -> np.ndarray:
    """Dense Gram matrix ``K[i, j] = kernel_value(spec, |atom_i - atom_j|)``.

    With ``truncation_eps = 0`` the diagonal, where the Riesz kernel diverges,
    is evaluated at distance ``mesh_gauge`` instead: a cell is not resolved
    below its own diameter.
    """
    r = mesh.distance_matrix()
    if spec.truncation_eps == 0:
        np.fill_diagonal(r, mesh.mesh_gauge)
    level = np.maximum(spec.truncation_eps, np.sqrt(r))
    if np.any(level <= 0):
        raise KernelDivergence("zero truncation level in kernel matrix")
    return level ** (-2.0 * spec.beta)


def energy(K: np.ndarray, m) -> float:
    w = m.weights if isinstance(m, DiscreteMeasure) else np.asarray(m, dtype=float)
    K = np.asarray(K, dtype=float)
    if K.shape != (w.size, w.size):
        raise ValueError(f"kernel shape {K.shape} does not match {w.size} weights")
    return float(w @ K @ w)


def _check_kernel(K) -> np.ndarray:
    K = np.asarray(K, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1] or K.shape[0] == 0:
        raise ValueError("kernel matrix must be square and nonempty")
    if not np.allclose(K, K.T, rtol=1e-12, atol=0):
        raise ValueError("kernel matrix must be symmetric")
    if np.any(np.diag(K) <= 0):
        raise ValueError("kernel matrix needs a positive diagonal")
    return K


def _result(w, f, k, gap, tol, method) -> CapacityResult:
    w = np.clip(w, 0.0, None)
    w = w / w.sum()
    return CapacityResult(
        DiscreteMeasure(w),
        float(f),
        1.0 / f if f > 0 and math.isfinite(f) else 0.0,
        k,
        max(float(gap), 0.0),
        bool(gap <= tol * f),
        method,
    )


def minimize_energy(
    K,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    step: str = "pairwise",
) -> CapacityResult:
    """Minimize ``w @ K @ w`` over the probability simplex by Frank-Wolfe.

    The linear step picks the vertex with the smallest gradient entry (lowest
    index on ties). ``step="pairwise"`` moves mass from the active vertex
    with the largest gradient entry to that vertex with an exact line search;
    ``step="open-loop"`` is the classical ``2/(k+2)`` update. Both stop when
    the Frank-Wolfe gap ``g.(w - e_s)`` drops to ``tol`` times the current
    energy; the gap bounds the distance to the optimal energy from above.
    """
    K = _check_kernel(K)
    if step not in ("pairwise", "open-loop"):
        raise ValueError(f"unknown step rule {step!r}")
    n = K.shape[0]
    w = np.zeros(n)
    start = int(np.argmin(np.diag(K)))
    w[start] = 1.0
    Kw = K[:, start].copy()
    f = gap = float("inf")
    for k in range(max_iter + 1):
        f = float(w @ Kw)
        g = 2.0 * Kw
        s = int(np.argmin(g))
        gap = float(g @ w - g[s])
        if gap <= tol * f or k == max_iter:
            break
        if step == "open-loop":
            gamma = 2.0 / (k + 2.0)
            w *= 1.0 - gamma
            w[s] += gamma
            Kw = (1.0 - gamma) * Kw + gamma * K[:, s]
            continue
        active = np.flatnonzero(w > 0)
        a = int(active[np.argmax(g[active])])
        curv = K[s, s] + K[a, a] - 2.0 * K[s, a]
        slope = Kw[a] - Kw[s]
        gamma = w[a] if curv <= 0 else min(w[a], slope / curv)
        w[s] += gamma
        w[a] -= gamma
        if w[a] <= 0:
            w[a] = 0.0
        Kw += gamma * (K[:, s] - K[:, a])
        # periodic refresh keeps the incremental K @ w from drifting
        if k % 1000 == 999:
            Kw = K @ w
    return _result(w, f, k, gap, tol, f"{step}-fw")


def lattice_error_bound(K, grid_steps: int) -> float:
    """Worst-case energy excess of the best lattice point over the simplex minimum."""
    K = np.asarray(K, dtype=float)
    n = K.shape[0]
    kmax = float(np.abs(K).max())
    delta = n / grid_steps
    return 2.0 * kmax * delta + kmax * delta**2


def _bounded_compositions(total: int, k: int) -> np.ndarray:
    """All nonnegative integer vectors of length ``k`` with sum ``<= total``."""
    if k == 0:
        return np.zeros((1, 0), dtype=np.int64)
    if k == 1:
        return np.arange(total + 1, dtype=np.int64)[:, None]
    blocks = []
    for first in range(total + 1):
        tail = _bounded_compositions(total - first, k - 1)
        blocks.append(np.column_stack([np.full(tail.shape[0], first, dtype=np.int64), tail]))
    return np.concatenate(blocks)


def brute_force_energy_min(K, grid_steps: int = 1000) -> CapacityResult:
    """Exhaustive minimum over the simplex lattice ``{w : w * grid_steps integer}``.

    The last two coordinates are handled in closed form: once the others are
    fixed the energy is a 1-D quadratic in the split between them, so its
    lattice minimum is among the clamped floor/ceil of the vertex and the
    endpoints. Everything else is enumerated.
    """
    K = _check_kernel(K)
    n = K.shape[0]
    if n > BRUTE_FORCE_MAX_ATOMS:
        raise ValueError(f"brute force supports at most {BRUTE_FORCE_MAX_ATOMS} atoms, got {n}")
    R = int(grid_steps)
    if R < 1:
        raise ValueError("grid_steps must be >= 1")
    if n == 1:
        return _result(np.ones(1), K[0, 0], 0, 0.0, 0.0, "lattice")

    # prefix: integer counts of the first n-2 coordinates with sum <= R
    prefix = _bounded_compositions(R, n - 2)
    rest = R - prefix.sum(axis=1)
    P = prefix / R
    x, y = n - 2, n - 1
    Kp = K[:x, :x]
    # energy(a) with w_x = a/R, w_y = (rest - a)/R: c0 + c1 * a + c2 * a^2
    base = np.einsum("ij,jk,ik->i", P, Kp, P)
    Px = P @ K[:x, x]
    Py = P @ K[:x, y]
    r = rest / R
    c0 = base + 2 * r * Py + r * r * K[y, y]
    c1 = (2 * Px - 2 * Py + 2 * r * K[x, y] - 2 * r * K[y, y]) / R
    c2 = (K[x, x] + K[y, y] - 2 * K[x, y]) / R**2
    cands = [np.zeros_like(rest), rest]
    if c2 > 0:
        vertex = -c1 / (2 * c2)
        for a in (np.floor(vertex), np.ceil(vertex)):
            cands.append(np.clip(a, 0, rest).astype(np.int64))
    best_val = np.full(rest.shape, np.inf)
    best_a = np.zeros_like(rest)
    for a in cands:
        val = c0 + c1 * a + c2 * a * a
        better = val < best_val
        best_val = np.where(better, val, best_val)
        best_a = np.where(better, a, best_a)
    i = int(np.argmin(best_val))
    counts = np.concatenate([prefix[i], [best_a[i], rest[i] - best_a[i]]]).astype(float)
    w = counts / R
    return _result(w, float(w @ K @ w), int(prefix.shape[0]), 0.0, 0.0, "lattice")


def capacity_of_mesh(
    mesh: CompactMesh,
    d: int,
    eps: float = 0.0,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> CapacityResult:
    """Discrete ``d/2``-capacity of ``mesh`` with the eps-truncated kernel.

    ``eps = 0`` means the Riesz kernel with self-interaction evaluated at
    distance ``mesh.mesh_gauge``.
    """
    return minimize_energy(kernel_matrix(mesh, KernelSpec(d / 2.0, eps)), tol, max_iter)


@dataclass
class MonotoneReport:
    capacities: list[float]
    slack: float
    nondecreasing: bool
    worst_drop: float
    results: list[CapacityResult] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "capacities": self.capacities,
            "slack": self.slack,
            "nondecreasing": self.nondecreasing,
            "worst_drop": self.worst_drop,
        }


def capacity_limit_check(
    meshes: Sequence[CompactMesh],
    d: int,
    eps: float = 0.0,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> MonotoneReport:
    """Capacities along a chain of growing meshes and whether they never decrease.

    A drop counts only if it exceeds ``2 tol`` relative to the larger value.
    """
    results = [capacity_of_mesh(m, d, eps, tol, max_iter) for m in meshes]
    caps = [r.capacity for r in results]
    worst = 0.0
    for prev, cur in zip(caps, caps[1:]):
        worst = max(worst, (prev - cur) / max(prev, cur))
    return MonotoneReport(caps, 2 * tol, worst <= 2 * tol, worst, results)
