import math
import warnings

import numpy as np
import pytest
from scipy.special import ndtr

from sheetcap.capacity import DiscreteMeasure
from sheetcap.domain import build_rect_mesh, mesh_from_atoms, restrict_mesh
from sheetcap.fieldsim import sample_exact, sheet_covariance_matrix
from sheetcap.montecarlo import (
    CoarseMeshWarning,
    HitQuery,
    MCEstimate,
    Verdict,
    covariance_zscores,
    estimate_hit_probability,
    estimate_image_measure,
    estimate_mean_occupation,
    estimate_second_moment,
    occupation_draws,
    occupation_integral,
    occupied_cells,
    paley_zygmund_check,
    paley_zygmund_from_values,
    second_moment_bound,
)
from sheetcap.rng import SeedSpec

SINGLE = mesh_from_atoms([(1.5, 1.5)])
ONE = DiscreteMeasure([1.0])
# P(|N(0, 2.25)| <= 1) from the normal CDF
P_SINGLE = float(2 * ndtr(1 / 1.5) - 1)


def test_normal_cdf_oracle_value():
    assert P_SINGLE == pytest.approx(0.4950, abs=1e-4)


def test_estimate_from_values_invariants():
    x = np.random.default_rng(0).uniform(size=500)
    est = MCEstimate.from_values(x)
    assert est.std_error >= 0 and est.n_samples == 500
    assert est.ci95_lo == pytest.approx(est.mean - 1.96 * est.std_error)
    assert est.ci95_hi == pytest.approx(est.mean + 1.96 * est.std_error)


def test_indicator_variance_matches_binomial():
    x = (np.random.default_rng(1).uniform(size=1000) < 0.3).astype(float)
    a, b = MCEstimate.from_values(x), MCEstimate.binomial(int(x.sum()), x.size)
    assert a.mean == b.mean
    assert a.std_error**2 == pytest.approx(b.mean * (1 - b.mean) / x.size, rel=1e-12)
    assert a.std_error == pytest.approx(b.std_error, rel=1e-12)


def test_single_sample_is_degenerate():
    est = MCEstimate.from_values([0.7])
    assert est.degenerate and est.std_error == 0 and est.n_samples == 1


def test_verdict_arithmetic():
    v = Verdict.check("x", 2.0, 3.0, 0.5)
    assert v.passed and v.margin == 1.0 and v.ratio == 1.5
    d = v.to_dict()
    assert d["pass"] is True and "passed" not in d
    assert d["lhs"] <= d["rhs"] + d["slack"]
    assert not Verdict.check("y", 4.0, 3.0, 0.5).passed
    assert Verdict.check("z", 0.0, 1.0).ratio is None


@pytest.mark.parametrize("a, eps", [([3.0], 0.1), ([0.0], 0.0), ([0.0], -1.0)])
def test_hit_query_validation(a, eps):
    with pytest.raises(ValueError):
        HitQuery(np.array(a), eps, 2.0)


def test_occupation_integral_limits():
    mesh = build_rect_mesh((1, 1), (2, 2), 3, 3)
    m = DiscreteMeasure(mesh.reference_measure())
    s = sample_exact(mesh, 2, SeedSpec(1))
    assert occupation_integral(s, m, HitQuery.origin(2, 1e6, 1.0)) == 1.0
    assert occupation_integral(s, m, HitQuery.origin(2, 1e-12, 1.0)) == 0.0


def test_occupation_integral_mismatches():
    mesh = build_rect_mesh((1, 1), (2, 2), 2, 2)
    s = sample_exact(mesh, 1, SeedSpec(1))
    with pytest.raises(ValueError):
        occupation_integral(s, DiscreteMeasure.uniform(3), HitQuery.origin(1, 1, 2))
    with pytest.raises(ValueError):
        occupation_integral(s, DiscreteMeasure.uniform(4), HitQuery.origin(2, 1, 2))


def test_occupation_monotone_in_eps_per_draw():
    mesh = build_rect_mesh((1, 1), (2, 2), 4, 4)
    m = DiscreteMeasure(mesh.reference_measure())
    prev = None
    for eps in (0.1, 0.25, 0.5, 1.0, 2.0):
        occ = occupation_draws(mesh, m, HitQuery.origin(1, eps, 2.0), 1, 2000, SeedSpec(2))
        if prev is not None:
            assert np.all(occ >= prev)
        prev = occ


def test_mean_occupation_singleton_oracle():
    res = estimate_mean_occupation(SINGLE, ONE, HitQuery.origin(1, 1.0, 2.0), 1, 100_000, SeedSpec(3))
    est = res.estimate
    assert abs(est.mean - P_SINGLE) <= 4 * est.std_error
    assert set(res.bounds) == {"c3", "c3_half_power"}
    assert res.verdict.lhs == min(res.bounds.values())


def test_mean_occupation_needs_eps_below_box():
    with pytest.raises(ValueError):
        estimate_mean_occupation(SINGLE, ONE, HitQuery.origin(1, 2.0, 2.0), 1, 10, SeedSpec(0))


def test_mean_occupation_one_sample_is_flagged():
    res = estimate_mean_occupation(SINGLE, ONE, HitQuery.origin(1, 1.0, 2.0), 1, 1, SeedSpec(4))
    assert res.estimate.degenerate and res.estimate.std_error == 0
    assert "degenerate" in res.verdict.note


def test_moment_verdicts_on_2x2_mesh():
    mesh = build_rect_mesh((1, 1), (2, 2), 2, 2)
    m = DiscreteMeasure.uniform(4)
    q = HitQuery.origin(1, 0.5, 2.0)
    first = estimate_mean_occupation(mesh, m, q, 1, 20_000, SeedSpec(5))
    second = estimate_second_moment(mesh, m, q, 1, 20_000, SeedSpec(5))
    assert first.verdict.passed and second.verdict.passed
    assert first.verdict.slack == pytest.approx(4 * first.estimate.std_error)


def test_second_moment_equals_first_for_an_indicator():
    q = HitQuery.origin(1, 1.0, 2.0)
    first = estimate_mean_occupation(SINGLE, ONE, q, 1, 5000, SeedSpec(6))
    second = estimate_second_moment(SINGLE, ONE, q, 1, 5000, SeedSpec(6))
    assert first.estimate.mean == second.estimate.mean


def test_second_moment_with_wide_radius():
    mesh = build_rect_mesh((1, 1), (2, 2), 3, 3)
    m = DiscreteMeasure(mesh.reference_measure())
    q = HitQuery.origin(1, 50.0, 2.0)
    res = estimate_second_moment(mesh, m, q, 1, 2000, SeedSpec(7))
    assert res.estimate.mean == 1.0 and res.verdict.passed


def test_second_moment_bound_double_sum():
    mesh = mesh_from_atoms([(1, 1), (2, 2)])
    m = DiscreteMeasure([0.5, 0.5])
    q = HitQuery.origin(1, 0.5, 2.0)
    c4 = 2 * 4 / math.pi  # c1 >= 1, d = 1
    expected = c4 * 0.5 * (0.25 * 1 + 0.25 * 1 + 2 * 0.25 * 0.5)
    assert second_moment_bound(mesh, m, q) == pytest.approx(expected, rel=1e-12)


def test_paley_zygmund_sanity_inputs():
    one = paley_zygmund_from_values(np.ones(100))
    assert one.p_positive == one.ratio == 1.0 and one.verdict.passed
    z = (np.random.default_rng(8).uniform(size=1000) < 0.4).astype(float)
    pz = paley_zygmund_from_values(z)
    # for a 0/1 variable the inequality reads E I >= (E I)^2
    assert pz.ratio == pytest.approx(pz.mean, rel=1e-12)
    assert pz.p_positive == pz.mean and pz.verdict.passed


def test_paley_zygmund_on_mesh():
    mesh = build_rect_mesh((1, 1), (2, 2), 4, 4)
    m = DiscreteMeasure(mesh.reference_measure())
    pz = paley_zygmund_check(mesh, m, HitQuery.origin(1, 0.5, 2.0), 1, 20_000, SeedSpec(9))
    assert pz.verdict.passed and pz.std_error > 0


def test_hit_probability_certain_and_singleton():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CoarseMeshWarning)
        sure = estimate_hit_probability(SINGLE, HitQuery.origin(1, 1e6, 2.0), 1, 1000, SeedSpec(10))
        assert sure.mean == 1.0
        est = estimate_hit_probability(SINGLE, HitQuery.origin(1, 1.0, 2.0), 1, 100_000, SeedSpec(11))
    assert abs(est.mean - P_SINGLE) <= 4 * est.std_error


def test_coarse_mesh_warns():
    mesh = build_rect_mesh((1, 1), (2, 2), 2, 2)
    with pytest.warns(CoarseMeshWarning):
        estimate_hit_probability(mesh, HitQuery.origin(1, 0.25, 2.0), 1, 10, SeedSpec(0))


def test_hit_probability_16x16_inside_unit_interval():
    mesh = build_rect_mesh((1, 1), (2, 2), 16, 16)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CoarseMeshWarning)
        est = estimate_hit_probability(mesh, HitQuery.origin(1, 0.25, 2.0), 1, 100_000, SeedSpec(12))
    assert 0 < est.mean < 1 and est.ci95_hi - est.ci95_lo < 0.01


def test_hit_probability_monotone_in_eps_and_atoms():
    fine = build_rect_mesh((1, 1), (2, 2), 8, 8)
    part = restrict_mesh(fine, 1.5)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CoarseMeshWarning)
        by_eps = [estimate_hit_probability(fine, HitQuery.origin(1, e, 2.0), 1, 20_000, SeedSpec(13))
                  for e in (0.1, 0.2, 0.4)]
        small = estimate_hit_probability(part, HitQuery.origin(1, 0.2, 2.0), 1, 20_000, SeedSpec(14))
    for a, b in zip(by_eps, by_eps[1:]):
        assert a.mean <= b.mean + 3 * math.hypot(a.std_error, b.std_error)
    assert small.mean <= by_eps[1].mean + 3 * math.hypot(small.std_error, by_eps[1].std_error)


def test_estimates_invariant_under_atom_permutation():
    mesh = build_rect_mesh((1, 1), (2, 2), 4, 4)
    perm = np.random.default_rng(15).permutation(len(mesh))
    shuffled = mesh_from_atoms(mesh.atoms[perm], mesh.mesh_gauge, mesh.cell_weights[perm])
    s = sample_exact(mesh, 1, SeedSpec(16), size=500)
    t = type(s)(shuffled, s.values[:, perm, :], s.seed)
    q = HitQuery.origin(1, 0.5, 2.0)
    a = occupation_integral(s, DiscreteMeasure.uniform(16), q)
    b = occupation_integral(t, DiscreteMeasure.uniform(16), q)
    np.testing.assert_array_equal(a, b)


def test_occupied_cells_by_hand():
    vals = np.array([[[-1.9], [-1.8], [0.1], [1.9], [2.5]]])
    # cells of width 1 on [-2, 2]: -1.9, -1.8 share one; 2.5 lies outside
    assert occupied_cells(vals, 2.0, 4).tolist() == [3]
    assert occupied_cells(np.array([[[2.0, -2.0]]]), 2.0, 4).tolist() == [1]


def test_image_measure_single_atom():
    est = estimate_image_measure(SINGLE, 1, 50.0, 10, 500, SeedSpec(17))
    assert est.mean == 10.0 and est.std_error == 0


def test_image_measure_grows_with_refinement():
    coarse = build_rect_mesh((1, 1), (2, 2), 2, 2)
    fine = build_rect_mesh((1, 1), (2, 2), 8, 8)
    a = estimate_image_measure(coarse, 1, 2.0, 64, 5000, SeedSpec(18))
    b = estimate_image_measure(fine, 1, 2.0, 64, 5000, SeedSpec(19))
    assert b.mean > a.mean - 3 * math.hypot(a.std_error, b.std_error)


def test_covariance_zscores_modes():
    mesh = build_rect_mesh((1, 1), (2, 2), 2, 2)
    s = sample_exact(mesh, 1, SeedSpec(20), size=20_000).values[:, :, 0]
    assert covariance_zscores(s, sheet_covariance_matrix(mesh.atoms)).max() < 5
    assert covariance_zscores(s, 2 * sheet_covariance_matrix(mesh.atoms)).max() > 20
    zeros = np.zeros((10, 2))
    np.testing.assert_array_equal(covariance_zscores(zeros, np.zeros((2, 2))), 0.0)
    assert np.isinf(covariance_zscores(zeros, np.eye(2))[0, 0])
    with pytest.raises(ValueError):
        covariance_zscores(s)
