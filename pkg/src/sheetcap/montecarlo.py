"""Monte Carlo estimators for occupation integrals, eps-hitting probabilities
and the occupied volume of the image, plus the moment inequalities they feed.

Draws are consumed in fixed chunks keyed by chunk index (see
:mod:`sheetcap.rng`), and per-draw statistics are folded in draw order, so
every estimate is a deterministic function of its inputs and seed.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .capacity import DiscreteMeasure
from .constants import ProblemParams, compute_constants
from .domain import CompactMesh, SpacePoint
from .fieldsim import SheetSample, make_sampler
from .rng import as_seedspec

Z95 = 1.96
SLACK_SE = 4.0


class CoarseMeshWarning(UserWarning):
    """Mesh is too coarse for the hitting radius (gauge above eps^2)."""


@dataclass(frozen=True)
class MCEstimate:
    mean: float
    std_error: float
    n_samples: int
    ci95_lo: float
    ci95_hi: float
    degenerate: bool = False

    @classmethod
    def from_values(cls, x) -> "MCEstimate":
        """Sample mean with the plug-in standard error ``std(x) / sqrt(n)``.

        For 0/1 draws this equals :meth:`binomial`. A single draw gives a
        zero standard error and is flagged ``degenerate``.
        """
        x = np.asarray(x, dtype=float).reshape(-1)
        n = x.size
        if n < 1:
            raise ValueError("need at least one sample")
        mean = float(x.mean())
        if n == 1:
            return cls(mean, 0.0, 1, mean, mean, True)
        se = float(x.std() / math.sqrt(n))
        return cls(mean, se, n, mean - Z95 * se, mean + Z95 * se)

    @classmethod
    def binomial(cls, hits: int, n: int) -> "MCEstimate":
        p = hits / n
        se = math.sqrt(p * (1 - p) / n)
        return cls(p, se, n, p - Z95 * se, p + Z95 * se, n == 1)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Verdict:
    """``lhs <= rhs + slack``; ``margin`` is ``rhs - lhs`` and ``ratio`` is
    ``rhs / lhs`` (``None`` when ``lhs <= 0``)."""

    name: str
    lhs: float
    rhs: float
    slack: float
    margin: float
    ratio: float | None
    passed: bool
    note: str = ""

    @classmethod
    def check(cls, name: str, lhs: float, rhs: float, slack: float = 0.0, note: str = "") -> "Verdict":
        ratio = float(rhs / lhs) if lhs > 0 else None
        return cls(name, float(lhs), float(rhs), float(slack), float(rhs - lhs), ratio,
                   bool(lhs <= rhs + slack), note)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["pass"] = out.pop("passed")
        return out


@dataclass(frozen=True)
class HitQuery:
    a: SpacePoint
    eps: float
    M: float

    def __post_init__(self):
        if not isinstance(self.a, SpacePoint):
            object.__setattr__(self, "a", SpacePoint(tuple(np.atleast_1d(self.a))))
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.a.sup_norm() > self.M:
            raise ValueError("target a must lie in [-M, M]^d")

    @property
    def d(self) -> int:
        return self.a.d

    @property
    def target(self) -> np.ndarray:
        return np.asarray(self.a.coords)

    @classmethod
    def origin(cls, d: int, eps: float, M: float) -> "HitQuery":
        return cls(SpacePoint((0.0,) * d), eps, M)


def _distances(values: np.ndarray, q: HitQuery) -> np.ndarray:
    """Sup-norm distance from each realized value to the target, ``(..., n_atoms)``."""
    return np.abs(values - q.target).max(axis=-1)


def occupation_integral(sample: SheetSample, m: DiscreteMeasure, q: HitQuery):
    """Mass of ``m`` on atoms whose value lies within ``eps`` of the target.

    A batched sample gives one value per draw.
    """
    w = m.weights
    if w.size != len(sample.mesh):
        raise ValueError("measure and sample live on different meshes")
    if sample.d != q.d:
        raise ValueError("sample and target dimensions differ")
    inside = _distances(sample.values, q) <= q.eps
    out = np.clip(inside @ w, 0.0, 1.0)
    return float(out) if np.ndim(out) == 0 else out


def occupation_draws(mesh: CompactMesh, m: DiscreteMeasure, q: HitQuery, d: int,
                     n_samples: int, seed, field_kind: str = "sheet") -> np.ndarray:
    """Per-draw occupation integrals over independent field samples."""
    if m.weights.size != len(mesh):
        raise ValueError("measure and mesh sizes differ")
    if d != q.d:
        raise ValueError("dimension of target does not match d")
    sampler = make_sampler(mesh, d, field_kind)
    out = np.empty(n_samples)
    for start, vals in sampler.iter_draws(as_seedspec(seed), n_samples):
        inside = _distances(vals, q) <= q.eps
        out[start:start + vals.shape[0]] = np.clip(inside @ m.weights, 0.0, 1.0)
    return out


@dataclass(frozen=True)
class MomentResult:
    estimate: MCEstimate
    verdict: Verdict
    bounds: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"estimate": self.estimate.to_dict(), "verdict": self.verdict.to_dict(), "bounds": self.bounds}


def mean_occupation_bounds(mesh: CompactMesh, q: HitQuery) -> dict:
    cs = compute_constants(ProblemParams(q.d, q.M, mesh.c1, mesh.c2))
    return {"c3": cs.c3 * q.eps**q.d, "c3_half_power": cs.c3_half_power * q.eps**q.d}


def second_moment_bound(mesh: CompactMesh, m: DiscreteMeasure, q: HitQuery) -> float:
    """``c4 eps^d sum_ij w_i w_j min(1, eps / |t_i - t_j|^(1/2))^d``."""
    cs = compute_constants(ProblemParams(q.d, q.M, mesh.c1, mesh.c2))
    r = mesh.distance_matrix()
    with np.errstate(divide="ignore"):
        ker = np.minimum(1.0, q.eps / np.sqrt(r)) ** q.d
    w = m.weights
    return float(cs.c4 * q.eps**q.d * (w @ ker @ w))


def estimate_mean_occupation(mesh, m, q: HitQuery, d: int, n_samples: int, seed,
                             field_kind: str = "sheet") -> MomentResult:
    """Mean occupation against the weaker of the two lower bounds ``c3 eps^d``."""
    if not q.eps < q.M:
        raise ValueError("need 0 < eps < M")
    est = MCEstimate.from_values(occupation_draws(mesh, m, q, d, n_samples, seed, field_kind))
    bounds = mean_occupation_bounds(mesh, q)
    lower = min(bounds.values())
    verdict = Verdict.check("mean_occupation >= c3 eps^d", lower, est.mean, SLACK_SE * est.std_error,
                            "degenerate: one sample" if est.degenerate else "")
    return MomentResult(est, verdict, bounds)


def estimate_second_moment(mesh, m, q: HitQuery, d: int, n_samples: int, seed,
                           field_kind: str = "sheet") -> MomentResult:
    """Mean of the squared occupation against its double-sum upper bound."""
    occ = occupation_draws(mesh, m, q, d, n_samples, seed, field_kind)
    est = MCEstimate.from_values(occ**2)
    bound = second_moment_bound(mesh, m, q)
    verdict = Verdict.check("second_moment <= c4 eps^d energy", est.mean, bound, SLACK_SE * est.std_error)
    return MomentResult(est, verdict, {"c4_double_sum": bound})


@dataclass(frozen=True)
class PaleyZygmundResult:
    p_positive: float
    mean: float
    second_moment: float
    ratio: float
    std_error: float
    verdict: Verdict

    def to_dict(self) -> dict:
        out = asdict(self)
        out["verdict"] = self.verdict.to_dict()
        return out


def paley_zygmund_from_values(z) -> PaleyZygmundResult:
    """``P(Z > 0) >= (E Z)^2 / E[Z^2]`` from draws of a nonnegative ``Z``.

    The slack is four standard errors of ``P - ratio``, from the delta method
    on the joint sample covariance of ``(1{Z>0}, Z, Z^2)``, plus a rounding
    allowance so that equality cases with zero spread pass.
    """
    z = np.asarray(z, dtype=float).reshape(-1)
    n = z.size
    pos = (z > 0).astype(float)
    m1, m2, p = z.mean(), (z**2).mean(), pos.mean()
    if m2 == 0:
        ratio, se = 0.0, 0.0
    else:
        ratio = m1**2 / m2
        grad = np.array([1.0, -2 * m1 / m2, m1**2 / m2**2])
        if n > 1:
            cov = np.cov(np.vstack([pos, z, z**2]), ddof=1)
            se = float(math.sqrt(max(grad @ cov @ grad, 0.0) / n))
        else:
            se = 0.0
    rounding = 1e-12 * max(ratio, p)
    verdict = Verdict.check("paley_zygmund: (EI)^2/E[I^2] <= P(I>0)", ratio, p, SLACK_SE * se + rounding)
    return PaleyZygmundResult(float(p), float(m1), float(m2), float(ratio), se, verdict)


def paley_zygmund_check(mesh, m, q: HitQuery, d: int, n_samples: int, seed,
                        field_kind: str = "sheet") -> PaleyZygmundResult:
    return paley_zygmund_from_values(occupation_draws(mesh, m, q, d, n_samples, seed, field_kind))


def hit_draws(mesh: CompactMesh, q: HitQuery, d: int, n_samples: int, seed,
              field_kind: str = "sheet") -> np.ndarray:
    """Per-draw sup-norm distance from the image of the mesh to the target."""
    if d != q.d:
        raise ValueError("dimension of target does not match d")
    sampler = make_sampler(mesh, d, field_kind)
    out = np.empty(n_samples)
    for start, vals in sampler.iter_draws(as_seedspec(seed), n_samples):
        out[start:start + vals.shape[0]] = _distances(vals, q).min(axis=1)
    return out


def estimate_hit_probability(mesh: CompactMesh, q: HitQuery, d: int, n_samples: int, seed,
                             field_kind: str = "sheet") -> MCEstimate:
    """Fraction of draws whose image over the mesh comes within ``eps`` of ``a``.

    Warns with :class:`CoarseMeshWarning` when the mesh gauge exceeds
    ``eps^2``: hits between atoms are then likely to be missed.
    """
    if mesh.mesh_gauge > q.eps**2:
        warnings.warn(
            f"mesh gauge {mesh.mesh_gauge:g} exceeds eps^2 = {q.eps**2:g}; hits between atoms undercounted",
            CoarseMeshWarning,
            stacklevel=2,
        )
    dist = hit_draws(mesh, q, d, n_samples, seed, field_kind)
    return MCEstimate.binomial(int(np.count_nonzero(dist <= q.eps)), n_samples)


def occupied_cells(values: np.ndarray, M: float, grid_res: int) -> np.ndarray:
    """Number of distinct cells of the ``grid_res^d`` partition of ``[-M, M]^d``
    hit by the atoms' values, one count per draw (``values``: ``(m, n_atoms, d)``)."""
    m, n, d = values.shape
    width = 2 * M / grid_res
    idx = np.floor((values + M) / width).astype(np.int64)
    # right boundary belongs to the last cell
    idx = np.where(values == M, grid_res - 1, idx)
    inside = np.all((idx >= 0) & (idx < grid_res), axis=-1)
    flat = np.zeros((m, n), dtype=np.int64)
    for k in range(d):
        flat = flat * grid_res + idx[..., k]
    flat = np.where(inside, flat, -1)
    flat.sort(axis=1)
    distinct = np.count_nonzero(np.diff(flat, axis=1) != 0, axis=1) + 1
    return distinct - (flat[:, 0] < 0)


def estimate_image_measure(mesh: CompactMesh, d: int, M: float, grid_res: int, n_samples: int, seed,
                           field_kind: str = "sheet") -> MCEstimate:
    """Occupied volume of ``[-M, M]^d`` by the image of the atoms, averaged over draws.

    Counts cells of a ``grid_res^d`` partition, so it depends on both the
    mesh and the grid resolution and is biased low for coarse meshes.
    """
    if grid_res < 1:
        raise ValueError("grid_res must be >= 1")
    sampler = make_sampler(mesh, d, field_kind)
    cell_volume = (2 * M / grid_res) ** d
    out = np.empty(n_samples)
    for start, vals in sampler.iter_draws(as_seedspec(seed), n_samples):
        out[start:start + vals.shape[0]] = occupied_cells(vals, M, grid_res) * cell_volume
    return MCEstimate.from_values(out)


def covariance_zscores(values: np.ndarray, target: np.ndarray | None = None, other: np.ndarray | None = None):
    """Entrywise z-scores of empirical covariances of centered draws.

    ``values`` has shape ``(n, k)``. Against a closed-form ``target`` matrix
    the score is ``(mean(x_i x_j) - target_ij) / se_ij``; against draws
    ``other`` of a second sampler it is the two-sample difference over the
    combined standard error. Entries with zero standard error score 0 when
    they match exactly and ``inf`` otherwise.
    """
    def moments(x):
        x = np.asarray(x, dtype=float)
        n = x.shape[0]
        mean = x.T @ x / n
        sq = x * x
        var = (sq.T @ sq / n - mean**2) * n / (n - 1)
        return mean, np.sqrt(np.clip(var, 0.0, None) / n)

    emp, se = moments(values)
    if other is not None:
        emp2, se2 = moments(other)
        diff, se = emp - emp2, np.sqrt(se**2 + se2**2)
    elif target is not None:
        diff = emp - np.asarray(target, dtype=float)
    else:
        raise ValueError("need a target covariance or a second sample")
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, np.abs(diff) / se, np.where(diff == 0, 0.0, np.inf))
    return z
