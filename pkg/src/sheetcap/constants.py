"""Explicit constants of the hitting-probability bounds and their cross-checks.

Each outer constant can be reached two ways: a closed form in ``(d, M, c1, c2)``
and a composition of the moment constants, ``c3^2 / c4`` for ``A1`` and
``256 c4 / min(c5^2, c6^2)`` for ``A2``. The two routes do not agree for
``A2``, so both are kept and bound checks use the weaker member of each pair.

``c3`` has two variants that differ in the power of ``2/(pi c2^2)``: ``d``
for ``c3`` and ``d/2`` for ``c3_half_power``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass


@dataclass(frozen=True)
class ProblemParams:
    d: int
    M: float
    c1: float
    c2: float

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if not self.M > 0:
            raise ValueError("M must be positive")
        if not 0 < self.c1 <= self.c2:
            raise ValueError("need 0 < c1 <= c2")

    @classmethod
    def from_mesh(cls, mesh, d: int, M: float) -> "ProblemParams":
        return cls(d, M, mesh.c1, mesh.c2)


@dataclass(frozen=True)
class MomentConstants:
    c3: float
    c3_half_power: float
    c4: float
    c5: float
    c6: float


@dataclass(frozen=True)
class BoundConstants:
    A1: float
    A2: float
    A3: float
    A4: float
    A5: float


@dataclass(frozen=True)
class ConstantSet:
    c3: float
    c3_half_power: float
    c4: float
    c5: float
    c6: float
    A1: float
    A2: float
    A3: float
    A4: float
    A5: float
    alt_A1: float
    alt_A1_half_power: float
    alt_A2: float

    @property
    def lower(self) -> float:
        """Weakest available lower constant."""
        return min(self.A1, self.alt_A1, self.alt_A1_half_power)

    @property
    def upper(self) -> float:
        """Weakest available upper constant."""
        return max(self.A2, self.alt_A2)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["A_lower"] = self.lower
        out["A_upper"] = self.upper
        return out


def log_constants(p: ProblemParams) -> dict[str, float]:
    """Natural logarithms of every constant.

    The constants span hundreds of orders of magnitude: ``exp(-4 d M^2 / c1^2)``
    underflows a double once ``c1`` is small against ``M``. The logs stay
    finite for all valid parameters, so positivity and ratios are read off them.
    """
    d, M, c1, c2 = p.d, p.M, p.c1, p.c2
    log = math.log
    base = log(2 / (math.pi * c2**2))
    gauss = -2 * d * M**2 / c1**2
    out = {
        "c3": d * base + gauss,
        "c3_half_power": d / 2 * base + gauss,
        "c4": log(2) + d * log(4 / math.pi) - 1.5 * d * log(min(c1, 1.0)),
        "c5": d * log(2 / (math.e * math.pi)) - d / 2 * log(max(1.0, 2 * c2)),
        "c6": d * log(2 / math.pi) - d / 2 * log(max(1.0, 2**1.5 * c2)) - d * (M**2 + 1),
        "A5": 1.5 * d * log(min(1.0, c1)),
        "A3": -2 * d - d * log(min(1.0, 2 * c2)),
        "A4": -d * log(min(1.0, 2**1.5 * c2)) - 2 * d * (M**2 + 1),
    }
    out["A1"] = out["A5"] - log(2) - d * log(math.pi) - 4 * d * log(c2) - 4 * d * M**2 / c1**2
    out["A2"] = log(512) - out["A5"] - d * log(2 / math.pi) - min(out["A3"], out["A4"])
    out["alt_A1"] = 2 * out["c3"] - out["c4"]
    out["alt_A1_half_power"] = 2 * out["c3_half_power"] - out["c4"]
    out["alt_A2"] = log(256) + out["c4"] - 2 * min(out["c5"], out["c6"])
    return out


def _exp_all(logs: dict[str, float], names) -> dict[str, float]:
    # overflow saturates to inf, underflow to 0
    return {k: math.exp(logs[k]) if logs[k] < 709.78 else math.inf for k in names}


def compute_lemma_constants(p: ProblemParams) -> MomentConstants:
    return MomentConstants(**_exp_all(log_constants(p), ("c3", "c3_half_power", "c4", "c5", "c6")))


def compute_theorem_constants(p: ProblemParams) -> BoundConstants:
    return BoundConstants(**_exp_all(log_constants(p), ("A1", "A2", "A3", "A4", "A5")))


def compute_constants(p: ProblemParams) -> ConstantSet:
    logs = log_constants(p)
    return ConstantSet(**_exp_all(logs, logs))


def cross_check_relations(p: ProblemParams) -> dict:
    """Side-by-side comparison of the closed-form and composed constants.

    Deviations are reported as ratios and relative deviations; nothing is
    reconciled. Ratios come from log differences, so they stay finite even
    when the constants themselves leave double range.
    """
    cs = compute_constants(p)
    logs = log_constants(p)
    return {
        "params": asdict(p),
        "relations": [
            _relation("A1", "c3^2/c4", "alt_A1", logs),
            _relation("A1", "c3_half_power^2/c4", "alt_A1_half_power", logs),
            _relation("A2", "256*c4/min(c5^2,c6^2)", "alt_A2", logs),
        ],
        "A_lower": cs.lower,
        "A_upper": cs.upper,
        "A1_le_A2": logs["A1"] <= logs["A2"],
    }


def _relation(name: str, alt_name: str, alt_key: str, logs: dict) -> dict:
    ratio = math.exp(logs[alt_key] - logs[name])
    return {
        "constant": name,
        "value": math.exp(logs[name]),
        "relation": alt_name,
        "relation_value": math.exp(logs[alt_key]),
        "ratio": ratio,
        "relative_deviation": abs(ratio - 1.0),
        "log_ratio": logs[alt_key] - logs[name],
    }
