import numpy as np
import pytest
from hypothesis import given, strategies as st

from slatkit.conic import Status
from slatkit.edm import (DegenerateGeometry, EDMSolution, build_partial_edm, complete_edm_r,
                         complete_edm_r_l1, complete_edm_sr, default_e_max, edm_of_points,
                         envelope_coefficients, extract_coordinates, save_edm_csv)
from slatkit.model import (Gaussian, ObservationMask, RangeData, Scenario, SelectiveGaussian,
                           generate_scenario, synthesize_ranges)


def all_points(s):
    # repo-wide ordering: sensors, targets, anchors
    return np.vstack([s.sensors, s.targets, s.anchors])


def exact_partial(s, mask=None):
    return build_partial_edm(s.anchors, synthesize_ranges(s, Gaussian(0.0), mask))


def check_edm(E):
    rho = E.shape[0]
    J = np.eye(rho) - 1.0 / rho
    assert np.all(np.diag(E) == 0)
    assert E.min() >= -1e-9
    assert np.max(np.abs(E - E.T)) <= 1e-9
    assert np.linalg.eigvalsh(-J @ E @ J).min() >= -1e-7


def test_anchor_block_triangle():
    anchors = np.array([[0, 0], [1, 0], [0, 1]], float)
    r = RangeData(ObservationMask([], [(0, 0)]), [], [2.0], n=0, m=1, l=3)
    p = build_partial_edm(anchors, r)
    blk = p.D[1:, 1:]
    assert np.allclose(blk, [[0, 1, 1], [1, 0, 2], [1, 2, 0]])
    assert p.D[0, 1] == p.D[1, 0] == 4.0
    assert p.W[1:, 1:].all() and np.all(np.diag(p.W))
    assert np.isnan(p.D[0, 2]) and not p.W[0, 2]


def test_partial_matches_geometry():
    s = generate_scenario(4, 3, 2, rng_seed=1)
    p = exact_partial(s)
    truth = edm_of_points(all_points(s))
    assert np.allclose(p.D[p.W], truth[p.W], atol=1e-12)
    # sensor-sensor and target-target entries stay free
    assert not p.W[0, 1] and not p.W[3, 4]


def test_sr_exact():
    s = generate_scenario(4, 3, 3, rng_seed=2)
    p = exact_partial(s)
    e = complete_edm_sr(p)
    assert e.objective_value <= 1e-10
    truth = edm_of_points(all_points(s))
    assert np.max(np.abs(e.E - truth)[p.W]) <= 1e-6
    # the free sensor-sensor entries are recovered too
    assert np.max(np.abs(e.E[:3, :3] - truth[:3, :3])) <= 1e-4
    check_edm(e.E)


def test_sr_noisy_objective_below_truth():
    s = generate_scenario(4, 5, 6, rng_seed=3)
    p = build_partial_edm(s.anchors, synthesize_ranges(s, Gaussian(0.05), rng_seed=3))
    e = complete_edm_sr(p)
    truth = edm_of_points(all_points(s))
    mask = p.W.copy()
    mask[np.ix_(p.anchor_index, p.anchor_index)] = False
    at_truth = float(np.sum((truth - np.nan_to_num(p.D))[mask] ** 2))
    assert 0 < e.objective_value <= at_truth
    check_edm(e.E)


def test_r_exact_and_tight():
    s = generate_scenario(4, 5, 6, rng_seed=4)
    p = exact_partial(s)
    e = complete_edm_r(p)
    truth = edm_of_points(all_points(s))
    assert np.max(np.abs(e.E - truth)) <= 1e-4
    Ep = e.E[e.pairs[:, 0], e.pairs[:, 1]]
    assert np.max(np.abs(e.epigraph - np.sqrt(Ep))) <= 1e-6
    check_edm(e.E)


@pytest.mark.parametrize("seed", range(3))
def test_r_noisy_epigraph_tight(seed):
    s = generate_scenario(4, 5, 6, rng_seed=seed)
    p = build_partial_edm(s.anchors, synthesize_ranges(s, Gaussian(0.03), rng_seed=seed))
    e = complete_edm_r(p)
    Ep = e.E[e.pairs[:, 0], e.pairs[:, 1]]
    assert np.max(np.abs(e.epigraph - np.sqrt(np.maximum(Ep, 0)))) <= 1e-5
    check_edm(e.E)


def test_r_single_range_matches_search():
    anchors = np.array([[0, 0], [1, 0], [0, 1]], float)
    d = 0.7
    r = RangeData(ObservationMask([], [(0, 0)]), [], [d], n=0, m=1, l=3)
    e = complete_edm_r(build_partial_edm(anchors, r))
    # brute force over the one free quantity, the squared distance E to anchor 0
    grid = np.linspace(0, 4, 400001)
    best = np.min(grid - 2 * d * np.sqrt(grid))
    assert e.objective_value == pytest.approx(best, abs=1e-6)
    assert e.E[0, 1] == pytest.approx(d * d, abs=1e-4)


def test_r_l1_exact():
    s = generate_scenario(4, 5, 6, rng_seed=5)
    p = exact_partial(s)
    e = complete_edm_r_l1(p)
    assert abs(e.objective_value) <= 1e-6
    assert np.max(np.abs(e.E - edm_of_points(all_points(s)))) <= 1e-3
    check_edm(e.E)


def test_envelope_pieces():
    d, e_max = np.array([0.5, 1.0, 2.0]), 9.0
    a, b = envelope_coefficients(d, e_max)
    assert np.allclose(a * d ** 2 + b, 0)
    assert np.allclose(a * e_max + b, np.sqrt(e_max) - d)
    # a chord of the concave branch stays below it between the two points
    E = np.linspace(d ** 2, e_max, 50)
    assert np.all(a[None] * E + b[None] <= np.sqrt(E) - d[None] + 1e-12)


def test_e_max_checks():
    s = generate_scenario(4, 2, 2, rng_seed=6)
    p = exact_partial(s)
    dmax = np.sqrt(np.nanmax(np.where(p.W, p.D, np.nan)[:p.n + p.m]))
    assert default_e_max(p) == pytest.approx((1.5 * dmax) ** 2)
    with pytest.raises(ValueError):
        complete_edm_r_l1(p, e_max=0.01)


def _outlier_free_error(e, p, truth, hit):
    pairs = e.pairs
    keep = ~hit
    return np.sqrt(np.mean((e.E[pairs[keep, 0], pairs[keep, 1]] - truth[pairs[keep, 0], pairs[keep, 1]]) ** 2))


def test_l1_beats_sr_on_outlier_free_entries():
    wins = 0
    for seed in range(20):
        s = generate_scenario(4, 5, 6, rng_seed=100 + seed)
        clean = synthesize_ranges(s, Gaussian(0.01), rng_seed=seed)
        dirty = synthesize_ranges(s, SelectiveGaussian(0.01, 0.8, 2), rng_seed=seed)
        p = build_partial_edm(s.anchors, dirty)
        pc = build_partial_edm(s.anchors, clean)
        sr, l1 = complete_edm_sr(p), complete_edm_r_l1(p)
        hit = p.D[sr.pairs[:, 0], sr.pairs[:, 1]] != pc.D[sr.pairs[:, 0], sr.pairs[:, 1]]
        assert hit.sum() == 2
        truth = edm_of_points(all_points(s))
        wins += _outlier_free_error(l1, p, truth, hit) < _outlier_free_error(sr, p, truth, hit)
    assert wins > 10


def test_more_data_never_hurts():
    for seed in range(10):
        s = generate_scenario(4, 3, 3, rng_seed=200 + seed)
        full = ObservationMask.complete(4, 3, 3)
        partial = ObservationMask(full.sensor_target[:-2], full.anchor_target)
        more = ObservationMask(full.sensor_target[:-1], full.anchor_target)
        truth = edm_of_points(all_points(s))
        errs = []
        for mask in (partial, more):
            p = exact_partial(s, mask)
            e = complete_edm_sr(p)
            W = exact_partial(s, partial).W
            errs.append(np.max(np.abs(e.E - truth)[W]))
        assert errs[1] <= errs[0] + 1e-6


def test_extract_exact():
    s = generate_scenario(4, 5, 6, rng_seed=7)
    e = EDMSolution(edm_of_points(all_points(s)), 0.0, Status.OPTIMAL, s.n, s.m, s.l)
    x, resid = extract_coordinates(e, s.anchors)
    assert np.max(np.abs(x - s.truth())) <= 1e-8
    assert resid <= 1e-16


def test_extract_picks_reflection_from_anchors():
    s = generate_scenario(4, 3, 3, rng_seed=8)
    mirror = lambda pts: pts * np.array([-1.0, 1.0])
    m = Scenario(mirror(s.anchors), mirror(s.sensors), mirror(s.targets))
    E = edm_of_points(all_points(s))
    assert np.allclose(E, edm_of_points(all_points(m)))
    for sc in (s, m):
        x, _ = extract_coordinates(EDMSolution(E, 0.0, Status.OPTIMAL, 3, 3, 4), sc.anchors)
        assert np.allclose(x, sc.truth(), atol=1e-8)


def test_extract_residual_recomputed():
    s = generate_scenario(4, 5, 6, rng_seed=9)
    p = build_partial_edm(s.anchors, synthesize_ranges(s, Gaussian(0.05), rng_seed=9))
    e = complete_edm_sr(p)
    _, resid = extract_coordinates(e, s.anchors)
    # independent recomputation: classical scaling + orthogonal Procrustes via scipy
    from scipy.linalg import orthogonal_procrustes
    rho = e.E.shape[0]
    J = np.eye(rho) - 1.0 / rho
    w, U = np.linalg.eigh(-0.5 * J @ e.E @ J)
    Y = U[:, -2:] * np.sqrt(np.maximum(w[-2:], 0))
    src = Y[-4:] - Y[-4:].mean(0)
    dst = s.anchors - s.anchors.mean(0)
    R, _ = orthogonal_procrustes(src, dst)
    assert resid == pytest.approx(np.sum((src @ R - dst) ** 2), rel=1e-8, abs=1e-14)


@given(st.integers(0, 2**31 - 1), st.integers(3, 5), st.integers(0, 4), st.integers(0, 4))
def test_extract_round_trip(seed, l, n, m):
    s = generate_scenario(l, n, m, box=(-3, 3), rng_seed=seed)
    e = EDMSolution(edm_of_points(all_points(s)), 0.0, Status.OPTIMAL, n, m, l)
    x, _ = extract_coordinates(e, s.anchors)
    assert np.allclose(x, s.truth(), atol=1e-8)


def test_extract_degenerate():
    anchors = np.array([[0, 0], [1, 1], [2, 2]], float)
    e = EDMSolution(edm_of_points(anchors), 0.0, Status.OPTIMAL, 0, 0, 3)
    with pytest.raises(DegenerateGeometry):
        extract_coordinates(e, anchors)


def test_edm_csv(tmp_path):
    s = generate_scenario(3, 1, 1, rng_seed=1)
    e = EDMSolution(edm_of_points(all_points(s)), 0.0, Status.OPTIMAL, 1, 1, 3)
    save_edm_csv(e, tmp_path / "e.csv")
    back = np.loadtxt(tmp_path / "e.csv", delimiter=",")
    assert back.shape == (5, 5)
    assert np.allclose(back, e.E, rtol=1e-11)
