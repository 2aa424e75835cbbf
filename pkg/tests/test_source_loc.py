import numpy as np
import pytest
from hypothesis import given, strategies as st

from slatkit.model import Gaussian, Laplacian, generate_scenario, synthesize_ranges
from slatkit.source_loc import (CircleSet, ProjectorParams, build_projector, exact_projector, grid_oracle,
                                kkt_lambda, projector_error_bound, psi_gaussian, psi_laplacian,
                                sll1_locate, slcp_locate)

SQUARE = np.array([[0, 0], [2, 0], [2, 2], [0, 2]], float)
seeds = st.integers(0, 2**31 - 1)


def exact_circles(stations, y):
    return CircleSet(stations, np.linalg.norm(stations - y, axis=1))


def example3_circles(seed, noise):
    s = generate_scenario(5, 0, 1, box=(-10, 10), rng_seed=seed)
    return s, CircleSet(s.anchors, synthesize_ranges(s, noise, rng_seed=seed).at)


# -- projector and weights ---------------------------------------------------------

def test_exact_projector_annihilates_ones(rng):
    lam = rng.dirichlet(np.ones(7))
    P = exact_projector(lam)
    assert np.linalg.norm(P @ np.ones(7)) <= 1e-12 * np.linalg.norm(P)
    assert np.linalg.eigvalsh(P).min() >= -1e-9 * np.linalg.norm(P)


def test_projector_is_the_inverse(rng):
    p = ProjectorParams(rng.dirichlet(np.ones(5)), sigma=3.0)
    direct = np.linalg.inv(np.diag(p.lam) + 3.0 * np.ones((5, 5)))
    assert np.allclose(build_projector(p), direct, rtol=1e-10)


def test_projector_reference_point():
    p = ProjectorParams(np.full(100, 0.01), sigma=1e2)
    err = np.linalg.norm(exact_projector(p.lam) - build_projector(p))
    assert err <= 1e-4
    assert err <= projector_error_bound(p) * (1 + 1e-9)


@given(seeds, st.integers(2, 30), st.floats(1e-2, 1e8))
def test_projector_bound_holds(seed, N, sigma):
    p = ProjectorParams(np.random.default_rng(seed).dirichlet(np.ones(N)), sigma=sigma)
    exact = exact_projector(p.lam)
    err = np.linalg.norm(exact - build_projector(p))
    # the difference is rank one and the bound is attained, so only round-off separates them
    roundoff = 8 * N * np.finfo(float).eps * np.linalg.norm(exact)
    assert err <= projector_error_bound(p) + roundoff


def test_projector_params_validation():
    with pytest.raises(ValueError):
        ProjectorParams([0.5, 0.6])
    with pytest.raises(ValueError):
        ProjectorParams([1.0, 0.0])
    with pytest.raises(ValueError):
        ProjectorParams([0.5, 0.5], sigma=0)


def test_kkt_examples():
    assert np.allclose(kkt_lambda([1, 1]), [0.5, 0.5])
    lam = kkt_lambda([3, 1])
    assert np.allclose(lam, [0.75, 0.25])
    assert np.sum(np.array([3, 1]) ** 2 / lam) == pytest.approx(16.0)
    assert np.allclose(kkt_lambda([0, 0, 0]), 1 / 3)
    with pytest.raises(ValueError):
        kkt_lambda([1, -1])


@given(seeds, st.integers(1, 12))
def test_kkt_identity(seed, N):
    K = np.random.default_rng(seed).exponential(size=N)
    assert np.sum(K ** 2 / kkt_lambda(K)) == pytest.approx(K.sum() ** 2, rel=1e-12)


# -- circles and costs ----------------------------------------------------------

def test_circle_validation():
    with pytest.raises(ValueError):
        CircleSet([[0, 0]], [1e-6])
    with pytest.raises(ValueError):
        CircleSet([[0, 0], [1, 1]], [1.0])
    with pytest.raises(ValueError):
        CircleSet([[0, 0], [1, 0]], [1.0, 1.0]).require_relaxable()
    with pytest.raises(ValueError):
        slcp_locate(CircleSet([[0, 0], [1, 0]], [1.0, 1.0]))


def test_psi_values():
    c = CircleSet([[0, 0], [3, 0]], [1.0, 1.0])
    assert psi_gaussian([1, 0], c) == pytest.approx(1.0)
    assert psi_laplacian([1, 0], c) == pytest.approx(1.0)


# -- relaxations ----------------------------------------------------------------

@pytest.mark.parametrize("y", [(0.5, 0.7), (1.3, 1.1), (1.0, 0.4)])
def test_slcp_exact_square(y):
    res = slcp_locate(exact_circles(SQUARE, np.array(y)))
    assert np.linalg.norm(res.position - y) <= 1e-6
    assert res.rank_ratio >= 1e6


@pytest.mark.parametrize("y", [(0.5, 0.7), (1.3, 1.1)])
def test_sll1_exact_square(y):
    res = sll1_locate(exact_circles(SQUARE, np.array(y)))
    assert np.linalg.norm(res.position - y) <= 1e-5
    assert np.all(res.weights >= 0)


@pytest.mark.parametrize("seed", range(4))
def test_exact_random_stations(seed):
    rng = np.random.default_rng(seed)
    A, y = rng.uniform(-10, 10, (4, 2)), rng.uniform(-10, 10, 2)
    c = exact_circles(A, y)
    assert np.linalg.norm(slcp_locate(c).position - y) <= 1e-4
    assert np.linalg.norm(sll1_locate(c).position - y) <= 1e-4


def test_translation_and_scale_equivariance():
    _, c = example3_circles(3, Gaussian(0.05))
    base = slcp_locate(c).position
    moved = slcp_locate(CircleSet(3 * c.centers + [100, -50], 3 * c.radii)).position
    assert np.allclose(moved, 3 * base + [100, -50], atol=1e-5)


@pytest.mark.parametrize("seed", range(3))
def test_phase_feasibility(seed):
    _, c = example3_circles(40 + seed, Laplacian(0.3))
    for res in (slcp_locate(c), sll1_locate(c)):
        assert np.allclose(np.abs(res.phases), 1, atol=1e-9)
        yi = c.centers + c.radii[:, None] * np.column_stack([res.phases.real, res.phases.imag])
        assert np.allclose(np.linalg.norm(yi - c.centers, axis=1), c.radii, rtol=1e-12)


@pytest.mark.parametrize("seed", range(6))
def test_relaxations_lower_bound_the_oracle(seed):
    _, c = example3_circles(60 + seed, Laplacian(0.4))
    y_l = grid_oracle(c, "laplacian")
    assert sll1_locate(c).objective <= psi_laplacian(y_l, c) ** 2 * (1 + 1e-6)
    y_g = grid_oracle(c, "gaussian")
    assert slcp_locate(c).objective <= psi_gaussian(y_g, c) * (1 + 1e-6) + 1e-12


def test_sll1_rejects_bad_sigma():
    with pytest.raises(ValueError):
        sll1_locate(exact_circles(SQUARE, np.array([1.0, 1.0])), sigma=-1)


def test_dump(tmp_path):
    from slatkit.conic import load_problem, solve
    c = exact_circles(SQUARE, np.array([0.5, 0.7]))
    res = slcp_locate(c, dump=tmp_path / "slcp.txt")
    sol = solve(load_problem(tmp_path / "slcp.txt"), gap_tol=1e-12)
    assert sol.status.value == "Optimal"
    assert res.objective >= 0 and sol.primal_objective == pytest.approx(0.0, abs=1e-9)


# -- brute force ----------------------------------------------------------------

def test_oracle_on_single_circle():
    c = CircleSet([[1.0, -2.0]], [1.5])
    y = grid_oracle(c, "gaussian", box=([-1, -4], [3, 0]))
    assert abs(np.linalg.norm(y - [1.0, -2.0]) - 1.5) <= 1e-3


def test_oracle_symmetric_pair():
    c = CircleSet([[-1, 0], [1, 0]], [np.sqrt(2)] * 2)
    y = grid_oracle(c, "gaussian", box=([-3, -3], [3, 3]))
    assert min(np.linalg.norm(y - [0, 1]), np.linalg.norm(y - [0, -1])) <= 2e-3


@pytest.mark.parametrize("mode", ["gaussian", "laplacian"])
def test_oracle_beats_random_probes(mode):
    _, c = example3_circles(77, Laplacian(0.5))
    psi = psi_gaussian if mode == "gaussian" else psi_laplacian
    y = grid_oracle(c, mode)
    probes = np.random.default_rng(5).uniform(-20, 20, (1000, 2))
    near = y + np.random.default_rng(6).normal(0, 0.05, (1000, 2))
    best = psi(y, c)
    assert all(best <= psi(p, c) + 1e-12 for p in np.vstack([probes, near]))


def test_oracle_mode_check():
    with pytest.raises(ValueError):
        grid_oracle(exact_circles(SQUARE, np.array([1.0, 1.0])), "huber")
