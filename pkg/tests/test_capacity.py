import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from sheetcap.capacity import (
    DEFAULT_TOL,
    DiscreteMeasure,
    KernelDivergence,
    KernelSpec,
    brute_force_energy_min,
    capacity_limit_check,
    capacity_of_mesh,
    energy,
    kernel_matrix,
    kernel_value,
    lattice_error_bound,
    minimize_energy,
)
from sheetcap.domain import build_rect_mesh, build_segment_mesh, mesh_from_atoms

K2 = np.array([[10.0, 1.0], [1.0, 10.0]])


def random_kernel(rng, n, d=None, eps=None):
    atoms = np.round(rng.uniform(0.5, 2.5, size=(n, 2)), 6)
    d = d or int(rng.integers(1, 4))
    eps = float(rng.uniform(0.05, 0.5)) if eps is None else eps
    return kernel_matrix(mesh_from_atoms(atoms), KernelSpec(d / 2, eps))


def slsqp_min(K):
    """Independent oracle: general-purpose constrained minimizer on the simplex."""
    n = K.shape[0]
    res = minimize(lambda w: w @ K @ w, np.full(n, 1 / n), jac=lambda w: 2 * K @ w, method="SLSQP",
                   bounds=[(0, 1)] * n, constraints=[{"type": "eq", "fun": lambda w: w.sum() - 1}],
                   options={"ftol": 1e-14, "maxiter": 1000})
    return res.fun


@pytest.mark.parametrize("beta, eps, r, expected", [(0.5, 0.1, 0, 10), (0.5, 0.1, 1, 1), (1, 0, 4, 0.25)])
def test_kernel_value_examples(beta, eps, r, expected):
    assert kernel_value(KernelSpec(beta, eps), r) == pytest.approx(expected)


def test_kernel_value_diverges_untruncated():
    with pytest.raises(KernelDivergence):
        kernel_value(KernelSpec(1.0), 0.0)


@pytest.mark.parametrize("kwargs", [dict(beta=0), dict(beta=1, truncation_eps=-0.1)])
def test_kernel_spec_validation(kwargs):
    with pytest.raises(ValueError):
        KernelSpec(**kwargs)


def test_kernel_matrix_examples():
    two = mesh_from_atoms([(1, 1), (2, 2)])
    np.testing.assert_allclose(kernel_matrix(two, KernelSpec(0.5, 0.1)), K2)
    one = mesh_from_atoms([(1.5, 1.5)])
    np.testing.assert_allclose(kernel_matrix(one, KernelSpec(0.5, 0.5)), [[2.0]])
    line = mesh_from_atoms([(1, 1), (1.5, 1), (2, 1)])
    K = kernel_matrix(line, KernelSpec(0.5, 0.25))
    s = 0.5**-0.5
    np.testing.assert_allclose(K, [[4, s, 1], [s, 4, s], [1, s, 4]])


def test_untruncated_kernel_uses_gauge_on_diagonal():
    mesh = build_rect_mesh((1, 1), (2, 2), 4, 4)
    K = kernel_matrix(mesh, KernelSpec(0.5))
    np.testing.assert_allclose(np.diag(K), mesh.mesh_gauge**-0.5)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 12), st.integers(1, 3), st.floats(0, 0.5), st.integers(0, 2**32 - 1))
def test_kernel_symmetric_and_monotone_in_distance(n, d, eps, seed):
    rng = np.random.default_rng(seed)
    mesh = mesh_from_atoms(np.round(rng.uniform(0.5, 2.5, size=(n, 2)), 6))
    K = kernel_matrix(mesh, KernelSpec(d / 2, eps))
    assert np.array_equal(K, K.T)
    r = mesh.distance_matrix()[np.triu_indices(n, 1)]
    k = K[np.triu_indices(n, 1)]
    order = np.argsort(r, kind="stable")
    assert np.all(np.diff(k[order]) <= 1e-12 * k.max())


def test_energy_examples():
    assert energy(K2, DiscreteMeasure([0.5, 0.5])) == 5.5
    assert energy(K2, DiscreteMeasure([1.0, 0.0])) == 10


@pytest.mark.parametrize("w", [[0.5, 0.6], [-0.1, 1.1], []])
def test_measure_validation(w):
    with pytest.raises(ValueError):
        DiscreteMeasure(w)


def test_two_atom_closed_form():
    res = minimize_energy(K2)
    assert res.energy == pytest.approx(5.5, abs=1e-9)
    assert res.capacity == pytest.approx(1 / 5.5, abs=1e-9)
    np.testing.assert_allclose(res.optimal_measure.weights, [0.5, 0.5], atol=1e-9)
    bf = brute_force_energy_min(K2, 1000)
    assert bf.energy == pytest.approx(5.5, abs=1e-4)


def test_singleton():
    res = minimize_energy([[4.0]])
    assert res.optimal_measure.weights.tolist() == [1.0] and res.capacity == 0.25
    assert brute_force_energy_min([[4.0]]).capacity == 0.25


def test_equidistant_atoms_give_uniform_measure():
    mesh = mesh_from_atoms([(1, 1), (2, 1), (1, 2)])
    K = kernel_matrix(mesh, KernelSpec(0.5, 0.1))
    np.testing.assert_allclose(minimize_energy(K).optimal_measure.weights, [1 / 3] * 3, atol=1e-6)


def test_brute_force_never_beats_solver_on_3_atoms():
    rng = np.random.default_rng(1)
    for _ in range(10):
        K = random_kernel(rng, 3)
        fw = minimize_energy(K)
        assert brute_force_energy_min(K, 1000).energy >= fw.energy * (1 - DEFAULT_TOL)


def test_brute_force_limits():
    with pytest.raises(ValueError):
        brute_force_energy_min(np.eye(6))
    with pytest.raises(ValueError):
        brute_force_energy_min(K2, 0)


def test_lattice_error_bound_formula():
    assert lattice_error_bound(K2, 1000) == pytest.approx(2 * 10 * 0.002 + 10 * 0.002**2)


@pytest.mark.parametrize("n", [6, 10, 25])
def test_solver_against_slsqp(n):
    rng = np.random.default_rng(n)
    K = random_kernel(rng, n, d=1)
    res = minimize_energy(K)
    assert res.converged
    assert res.energy == pytest.approx(slsqp_min(K), rel=1e-6)


def test_solver_against_kkt_interior_solution():
    # with an interior optimum the weights are proportional to K^-1 1
    mesh = build_rect_mesh((1, 1), (2, 2), 5, 5)
    K = kernel_matrix(mesh, KernelSpec(0.5, 0.2))
    v = np.linalg.solve(K, np.ones(len(mesh)))
    assert np.all(v > 0)
    res = minimize_energy(K)
    assert res.energy == pytest.approx(1 / v.sum(), rel=1e-7)
    np.testing.assert_allclose(res.optimal_measure.weights, v / v.sum(), atol=1e-4)


def test_result_invariants_and_serialization(tmp_path):
    K = random_kernel(np.random.default_rng(3), 8)
    res = minimize_energy(K)
    assert res.capacity * res.energy == pytest.approx(1.0, rel=1e-15)
    assert res.duality_gap <= DEFAULT_TOL * res.energy
    res.save(tmp_path / "cap.json")
    doc = json.loads((tmp_path / "cap.json").read_text())
    assert {"energy", "capacity", "duality_gap", "iterations", "weights"} <= set(doc)
    assert doc["weights"] == res.optimal_measure.weights.tolist()


def test_open_loop_step_is_available():
    res = minimize_energy(K2, tol=1e-4, step="open-loop")
    assert res.method == "open-loop-fw" and res.energy == pytest.approx(5.5, rel=1e-3)
    with pytest.raises(ValueError):
        minimize_energy(K2, step="other")


def test_max_iter_reports_non_convergence():
    K = random_kernel(np.random.default_rng(4), 20)
    res = minimize_energy(K, tol=1e-14, max_iter=3)
    assert res.iterations == 3 and not res.converged


@pytest.mark.parametrize("K", [np.ones((2, 3)), np.array([[1.0, 2.0], [0.0, 1.0]]), np.array([[0.0]])])
def test_rejects_bad_kernels(K):
    with pytest.raises(ValueError):
        minimize_energy(K)


def test_tie_break_is_deterministic():
    K = np.full((4, 4), 1.0) + 3 * np.eye(4)
    a, b = minimize_energy(K), minimize_energy(K)
    assert a.optimal_measure.weights.tobytes() == b.optimal_measure.weights.tobytes()
    assert a.iterations == b.iterations


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 8), st.floats(0.01, 100), st.integers(0, 2**32 - 1))
def test_scaling(n, lam, seed):
    K = random_kernel(np.random.default_rng(seed), n)
    base, scaled = minimize_energy(K), minimize_energy(lam * K)
    assert scaled.energy == pytest.approx(lam * base.energy, rel=1e-6)
    assert scaled.capacity == pytest.approx(base.capacity / lam, rel=1e-6)
    np.testing.assert_allclose(scaled.optimal_measure.weights, base.optimal_measure.weights, atol=1e-3)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_adding_an_atom_never_raises_energy(n, seed):
    rng = np.random.default_rng(seed)
    atoms = np.round(rng.uniform(0.5, 2.5, size=(n + 1, 2)), 6)
    spec = KernelSpec(0.5, 0.1)
    small = minimize_energy(kernel_matrix(mesh_from_atoms(atoms[:n], 0.1), spec))
    big = minimize_energy(kernel_matrix(mesh_from_atoms(atoms, 0.1), spec))
    assert big.energy <= small.energy * (1 + DEFAULT_TOL)


def test_energy_of_any_measure_bounds_capacity():
    rng = np.random.default_rng(5)
    K = random_kernel(rng, 12)
    cap = minimize_energy(K).capacity
    for w in rng.dirichlet(np.full(12, 0.5), size=200):
        assert energy(K, w) >= (1 / cap) * (1 - DEFAULT_TOL)


def test_capacity_of_two_atom_mesh():
    mesh = mesh_from_atoms([(1, 1), (2, 2)])
    assert capacity_of_mesh(mesh, 1, 0.1).capacity == pytest.approx(1 / 5.5, abs=1e-9)


def test_refinement_sequence_nondecreasing():
    meshes = [build_rect_mesh((1, 1), (2, 2), k, k) for k in (2, 4, 8)]
    rep = capacity_limit_check(meshes, 1, 0.05)
    assert rep.nondecreasing and rep.capacities[0] < rep.capacities[-1]


def test_segment_capacity_shrinks_at_gauge_truncation():
    caps = []
    for n in (4, 8, 16, 32):
        mesh = build_segment_mesh([(1, 1), (2, 2)], n)
        caps.append(capacity_of_mesh(mesh, 3, mesh.mesh_gauge).capacity)
    assert all(b < a for a, b in zip(caps, caps[1:]))


def test_limit_check_trivial_chains():
    mesh = build_rect_mesh((1, 1), (2, 2), 3, 3)
    one = capacity_limit_check([mesh], 1, 0.1)
    assert one.nondecreasing and one.worst_drop == 0
    same = capacity_limit_check([mesh, mesh, mesh], 1, 0.1)
    assert same.nondecreasing
    assert max(same.capacities) - min(same.capacities) <= DEFAULT_TOL * max(same.capacities)


def test_limit_check_detects_a_drop():
    big = build_rect_mesh((1, 1), (2, 2), 4, 4)
    small = mesh_from_atoms([(1.125, 1.125)], big.mesh_gauge)
    rep = capacity_limit_check([big, small], 1, 0.1)
    assert not rep.nondecreasing and rep.worst_drop > 0.1
    assert math.isclose(rep.to_dict()["slack"], 2 * DEFAULT_TOL)
