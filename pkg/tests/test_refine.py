import numpy as np
import pytest
from hypothesis import given, strategies as st

from slatkit.edm import build_partial_edm, complete_edm_r, extract_coordinates
from slatkit.model import (Gaussian, Laplacian, ObservationMask, RangeData, SelectiveGaussian,
                           cost_gaussian, cost_laplacian, generate_scenario, synthesize_ranges)
from slatkit.refine import (RefinementConfig, SelectionMaps, laplacian_weights, majorizer_gap,
                            majorizer_value, mm_step, run_refinement, wmm_step)

seeds = st.integers(0, 2**31 - 1)


def instance(seed, noise=Gaussian(0.02), l=4, n=5, m=6):
    s = generate_scenario(l, n, m, rng_seed=seed)
    return s, synthesize_ranges(s, noise, rng_seed=seed)


def dense_selectors(r):
    """Explicit M_ij and N_j matrices (2 x 2(n+m))."""
    P = 2 * (r.n + r.m)
    Ms, Ns = [], []
    for i, j in r.mask.sensor_target:
        M = np.zeros((2, P))
        M[:, 2 * i:2 * i + 2] = np.eye(2)
        M[:, 2 * (r.n + j):2 * (r.n + j) + 2] = -np.eye(2)
        Ms.append(M)
    for _, j in r.mask.anchor_target:
        N = np.zeros((2, P))
        N[:, 2 * (r.n + j):2 * (r.n + j) + 2] = -np.eye(2)
        Ns.append(N)
    return Ms, Ns


def dense_mm_oracle(x_t, anchors, r, w_st=None, w_at=None):
    Ms, Ns = dense_selectors(r)
    w_st = np.ones(len(Ms)) if w_st is None else w_st
    w_at = np.ones(len(Ns)) if w_at is None else w_at
    P = 2 * (r.n + r.m)
    H, g = np.zeros((P, P)), np.zeros(P)
    for w, M, d in zip(w_st, Ms, r.st):
        H += w * M.T @ M
        g += w * d * M.T @ M @ x_t / np.linalg.norm(M @ x_t)
    for w, N, (k, _), d in zip(w_at, Ns, r.mask.anchor_target, r.at):
        a = anchors[k]
        v = a + N @ x_t
        H += w * N.T @ N
        g += w * (d * N.T @ v / np.linalg.norm(v) - N.T @ a)
    return np.linalg.solve(H, g)


def fd_gradient(f, x, h=1e-6):
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def test_config_validation():
    with pytest.raises(ValueError):
        RefinementConfig(weight_cap=0)
    with pytest.raises(ValueError):
        RefinementConfig(max_iters=0)


def test_selection_maps_reproduce_differences():
    s, r = instance(1)
    maps = SelectionMaps.from_ranges(r)
    x = s.truth()
    for (i, j), diff in zip(r.mask.sensor_target, maps.apply_m(x)):
        assert np.array_equal(diff, s.sensors[i] - s.targets[j])
    for (_, j), diff in zip(r.mask.anchor_target, maps.apply_n(x)):
        assert np.array_equal(diff, -s.targets[j])
    Ms, Ns = dense_selectors(r)
    assert np.allclose(np.array([M @ x for M in Ms]), maps.apply_m(x))
    assert np.allclose(np.array([N @ x for N in Ns]), maps.apply_n(x))


def test_mm_fixed_point_at_truth():
    s, r = instance(2, Gaussian(0.0))
    assert np.allclose(mm_step(s.truth(), s.anchors, r), s.truth(), atol=1e-12)


def test_wmm_fixed_point_at_truth():
    s, r = instance(3, Gaussian(0.0))
    w_st, w_at = laplacian_weights(s.truth(), s.anchors, r, 1e5)
    assert np.all(np.concatenate([w_st, w_at]) == 1e5)
    assert np.allclose(wmm_step(s.truth(), s.anchors, r), s.truth(), atol=1e-12)


def test_tiny_residual_weight_saturates():
    s, r = instance(4, Gaussian(0.0), n=0, m=1)
    at = r.at.copy()
    at += 0.1
    at[0] = r.at[0] + 1e-8
    r2 = RangeData(r.mask, r.st, at, n=r.n, m=r.m, l=r.l)
    _, w_at = laplacian_weights(s.truth(), s.anchors, r2, 1e5)
    assert w_at[0] == 1e5
    assert np.allclose(w_at[1:], 10.0)


def test_anchor_only_step_is_closed_form(rng):
    anchors = rng.uniform(-1, 1, (3, 2))
    r = RangeData(ObservationMask([], [(k, 0) for k in range(3)]), [], rng.uniform(0.5, 1.5, 3), n=0, m=1, l=3)
    e = rng.normal(size=2)
    # three identity blocks: x = (1/3) sum(a_k - d_k (a_k - e)/|a_k - e|)
    u = (anchors - e) / np.linalg.norm(anchors - e, axis=1)[:, None]
    expected = np.mean(anchors - r.at[:, None] * u, axis=0)
    assert np.allclose(mm_step(e, anchors, r), expected, atol=1e-13)
    assert np.allclose(dense_mm_oracle(e, anchors, r), expected, atol=1e-13)


@given(seeds)
def test_mm_matches_dense_assembly(seed):
    s, r = instance(seed % 1000, Gaussian(0.05), n=3, m=3)
    x_t = np.random.default_rng([seed, 1]).uniform(0, 2, s.truth().size)
    assert np.allclose(mm_step(x_t, s.anchors, r), dense_mm_oracle(x_t, s.anchors, r), atol=1e-9)


@given(seeds)
def test_wmm_matches_weighted_dense_assembly(seed):
    s, r = instance(seed % 1000, Laplacian(0.1), n=3, m=3)
    x_t = np.random.default_rng([seed, 1]).uniform(0, 2, s.truth().size)
    w_st, w_at = laplacian_weights(x_t, s.anchors, r, 1e5)
    oracle = dense_mm_oracle(x_t, s.anchors, r, w_st, w_at)
    assert np.allclose(wmm_step(x_t, s.anchors, r), oracle, atol=1e-8 * max(1, np.abs(oracle).max()))


@given(seeds)
def test_single_steps_descend(seed):
    s, r = instance(seed % 1000, Laplacian(0.1))
    x_t = np.random.default_rng([seed, 1]).uniform(0, 2, s.truth().size)
    assert cost_gaussian(mm_step(x_t, s.anchors, r), s.anchors, r) <= cost_gaussian(x_t, s.anchors, r) + 1e-12
    assert cost_laplacian(wmm_step(x_t, s.anchors, r), s.anchors, r) <= cost_laplacian(x_t, s.anchors, r) + 1e-12


@given(seeds)
def test_majorizer_gap_properties(seed):
    s, r = instance(seed % 1000, Laplacian(0.2))
    rng = np.random.default_rng([seed, 1])
    x_t = rng.uniform(0, 2, s.truth().size)
    assert abs(majorizer_gap(x_t, x_t, s.anchors, r)) <= 1e-12
    for _ in range(5):
        x = rng.uniform(-1, 3, x_t.size)
        gap = majorizer_gap(x, x_t, s.anchors, r)
        assert gap >= -1e-12
        two_sided = majorizer_value(x, x_t, s.anchors, r) - cost_laplacian(x, s.anchors, r)
        assert gap == pytest.approx(two_sided, rel=1e-9, abs=1e-10)


def test_exact_start_terminates_immediately():
    s, r = instance(5, Gaussian(0.0))
    for mode in ("gaussian", "laplacian"):
        tr = run_refinement(s.truth(), s.anchors, r, mode)
        assert tr.iterations <= 2 and tr.final_cost <= 1e-18


def test_unknown_mode():
    s, r = instance(5)
    with pytest.raises(ValueError):
        run_refinement(s.truth(), s.anchors, r, "cauchy")


def test_coincident_points_are_separated():
    s, r = instance(6, Gaussian(0.01), n=2, m=2)
    x_t = s.truth().copy()
    x_t[4:6] = x_t[0:2]  # first target on top of first sensor
    out = mm_step(x_t, s.anchors, r)
    assert np.all(np.isfinite(out))
    x_t[4:6] = s.anchors[0]  # and on top of an anchor
    assert np.all(np.isfinite(wmm_step(x_t, s.anchors, r)))


def _random_starts():
    for k in range(100):
        noise = Gaussian(0.03) if k % 2 else SelectiveGaussian(0.01, 1.0)
        s, r = instance(300 + k, noise)
        yield s, r, np.random.default_rng(k).uniform(0, 2, s.truth().size)


def test_traces_non_increasing_over_random_starts():
    cfg = RefinementConfig(max_iters=60)
    for s, r, x0 in _random_starts():
        for mode in ("gaussian", "laplacian"):
            costs = np.array(run_refinement(x0, s.anchors, r, mode, cfg).costs)
            assert np.all(np.diff(costs) <= 1e-12)


def test_converged_gaussian_run_is_stationary():
    s, r = instance(11, Gaussian(0.02))
    e = complete_edm_r(build_partial_edm(s.anchors, r))
    x0, _ = extract_coordinates(e, s.anchors)
    tr = run_refinement(x0, s.anchors, r, "gaussian", RefinementConfig(max_iters=5000, rel_tol=1e-14))
    assert tr.reason == "converged"
    g = fd_gradient(lambda z: cost_gaussian(z, s.anchors, r), tr.x)
    assert np.linalg.norm(g) <= 1e-5 * (1 + tr.final_cost)


def test_default_run_is_stationary_at_relative_scale():
    s, r = instance(12, Gaussian(0.02))
    e = complete_edm_r(build_partial_edm(s.anchors, r))
    x0, _ = extract_coordinates(e, s.anchors)
    tr = run_refinement(x0, s.anchors, r, "gaussian")
    g = fd_gradient(lambda z: cost_gaussian(z, s.anchors, r), tr.x)
    g0 = fd_gradient(lambda z: cost_gaussian(z, s.anchors, r), x0)
    assert tr.reason == "converged"
    assert np.linalg.norm(g) <= 1e-4 * max(1.0, np.linalg.norm(g0))
