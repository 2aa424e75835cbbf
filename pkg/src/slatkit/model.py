"""Scenarios, range synthesis, the two likelihood costs and the RMSE metric.

Positions are stored as ``(k, 2)`` float arrays.  The stacked vector of
unknowns holds the ``n`` sensors first and then the ``m`` targets, each as an
``(x, y)`` pair, i.e. ``coords.reshape(-1)`` of the ``(n + m, 2)`` array.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

RANGE_FLOOR = 1e-5


# -- geometry ----------------------------------------------------------------

@dataclass(frozen=True)
class Scenario:
    anchors: np.ndarray
    sensors: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        for name in ("anchors", "sensors", "targets"):
            arr = np.asarray(getattr(self, name), dtype=float).reshape(-1, 2)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} must have finite coordinates")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def l(self) -> int:
        return len(self.anchors)

    @property
    def n(self) -> int:
        return len(self.sensors)

    @property
    def m(self) -> int:
        return len(self.targets)

    def truth(self) -> np.ndarray:
        return stack(self.sensors, self.targets)


def stack(sensors, targets) -> np.ndarray:
    return np.concatenate([np.asarray(sensors, float).reshape(-1, 2),
                           np.asarray(targets, float).reshape(-1, 2)]).reshape(-1)


def unstack(x, n: int) -> tuple[np.ndarray, np.ndarray]:
    pts = np.asarray(x, dtype=float).reshape(-1, 2)
    return pts[:n], pts[n:]


def is_collinear(points, rel_tol: float = 1e-9) -> bool:
    """True when the points do not span the plane."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) < 3:
        return True
    sv = np.linalg.svd((pts - pts.mean(axis=0)).T, compute_uv=False)
    return not sv[1] > rel_tol * sv[0]


def generate_scenario(l: int, n: int, m: int, box=(0.0, 2.0), rng_seed=0) -> Scenario:
    """Draw anchors, sensors and targets uniformly in the square ``box``."""
    if l < 3:
        raise ValueError("at least three anchors are needed to fix the reference frame")
    lo, hi = map(float, box)
    if not hi > lo:
        raise ValueError("box must have positive side")
    rng = np.random.default_rng(rng_seed)
    while True:
        anchors = rng.uniform(lo, hi, size=(l, 2))
        if not is_collinear(anchors):
            break
    sensors = rng.uniform(lo, hi, size=(n, 2))
    targets = rng.uniform(lo, hi, size=(m, 2))
    return Scenario(anchors, sensors, targets)


# -- observations ------------------------------------------------------------

@dataclass(frozen=True)
class ObservationMask:
    """Which sensor-target pairs ``(i, j)`` and anchor-target pairs ``(k, j)`` are ranged."""

    sensor_target: tuple
    anchor_target: tuple

    def __init__(self, sensor_target=(), anchor_target=()):
        object.__setattr__(self, "sensor_target", tuple(sorted({tuple(map(int, p)) for p in sensor_target})))
        object.__setattr__(self, "anchor_target", tuple(sorted({tuple(map(int, p)) for p in anchor_target})))

    @classmethod
    def complete(cls, l: int, n: int, m: int) -> "ObservationMask":
        return cls([(i, j) for i in range(n) for j in range(m)],
                   [(k, j) for k in range(l) for j in range(m)])

    def __len__(self):
        return len(self.sensor_target) + len(self.anchor_target)

    def validate(self, l: int, n: int, m: int) -> None:
        for i, j in self.sensor_target:
            if not (0 <= i < n and 0 <= j < m):
                raise ValueError(f"sensor-target pair {(i, j)} out of range")
        for k, j in self.anchor_target:
            if not (0 <= k < l and 0 <= j < m):
                raise ValueError(f"anchor-target pair {(k, j)} out of range")


@dataclass(frozen=True)
class RangeData:
    """Measured ranges aligned with ``mask`` (same pair order)."""

    mask: ObservationMask
    st: np.ndarray  # distances for mask.sensor_target
    at: np.ndarray  # distances for mask.anchor_target
    n: int = field(default=-1)
    m: int = field(default=-1)
    l: int = field(default=-1)

    def __post_init__(self):
        st = np.asarray(self.st, dtype=float).reshape(-1)
        at = np.asarray(self.at, dtype=float).reshape(-1)
        if st.size != len(self.mask.sensor_target) or at.size != len(self.mask.anchor_target):
            raise ValueError("range arrays do not match the mask")
        if np.any(st < RANGE_FLOOR) or np.any(at < RANGE_FLOOR):
            raise ValueError(f"stored ranges must be >= {RANGE_FLOOR}")
        st.setflags(write=False)
        at.setflags(write=False)
        object.__setattr__(self, "st", st)
        object.__setattr__(self, "at", at)
        # infer sizes from the mask when not given
        if self.n < 0:
            object.__setattr__(self, "n", 1 + max((i for i, _ in self.mask.sensor_target), default=-1))
        if self.m < 0:
            js = [j for _, j in self.mask.sensor_target] + [j for _, j in self.mask.anchor_target]
            object.__setattr__(self, "m", 1 + max(js, default=-1))
        if self.l < 0:
            object.__setattr__(self, "l", 1 + max((k for k, _ in self.mask.anchor_target), default=-1))
        self.mask.validate(self.l, self.n, self.m)
        # index arrays are hit on every cost evaluation, so build them once
        for name, pairs in (("_st_idx", self.mask.sensor_target), ("_at_idx", self.mask.anchor_target)):
            idx = np.asarray(pairs, dtype=int).reshape(-1, 2)
            idx.setflags(write=False)
            object.__setattr__(self, name, idx)

    @property
    def sensor_target(self) -> dict:
        return dict(zip(self.mask.sensor_target, self.st.tolist()))

    @property
    def anchor_target(self) -> dict:
        return dict(zip(self.mask.anchor_target, self.at.tolist()))

    def st_index(self) -> np.ndarray:
        return self._st_idx

    def at_index(self) -> np.ndarray:
        return self._at_idx

    @property
    def count(self) -> int:
        return self.st.size + self.at.size

    def all_ranges(self) -> np.ndarray:
        return np.concatenate([self.st, self.at])


# -- noise -------------------------------------------------------------------

@dataclass(frozen=True)
class Gaussian:
    sigma: float

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ValueError("sigma must be nonnegative")


@dataclass(frozen=True)
class Laplacian:
    """Laplacian noise parameterised by its standard deviation."""

    sigma: float

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ValueError("sigma must be nonnegative")


@dataclass(frozen=True)
class SelectiveGaussian:
    """Gaussian noise everywhere plus ``|N(0, sigma_outlier)|`` on selected ranges.

    ``placement`` is ``"random-edges"`` (``outlier_count`` distinct ranges drawn
    at random) or ``("single-anchor", k)``, which corrupts every range measured
    by anchor ``k``; ``outlier_count`` is ignored in that case.
    """

    sigma_gaussian: float
    sigma_outlier: float
    outlier_count: int = 2
    placement: object = "random-edges"

    def __post_init__(self):
        if not (self.sigma_gaussian >= 0 and self.sigma_outlier > 0):
            raise ValueError("noise levels must be positive")
        if self.outlier_count < 0:
            raise ValueError("outlier_count must be nonnegative")
        if self.placement != "random-edges":
            kind, k = self.placement
            if kind != "single-anchor" or int(k) < 0:
                raise ValueError(f"bad outlier placement {self.placement!r}")


NoiseModel = Union[Gaussian, Laplacian, SelectiveGaussian]


def true_ranges(s: Scenario, mask: ObservationMask) -> tuple[np.ndarray, np.ndarray]:
    st = np.asarray(mask.sensor_target, dtype=int).reshape(-1, 2)
    at = np.asarray(mask.anchor_target, dtype=int).reshape(-1, 2)
    d_st = np.linalg.norm(s.sensors[st[:, 0]] - s.targets[st[:, 1]], axis=1)
    d_at = np.linalg.norm(s.anchors[at[:, 0]] - s.targets[at[:, 1]], axis=1)
    return d_st, d_at


def synthesize_ranges(s: Scenario, noise: NoiseModel, mask: ObservationMask | None = None,
                      rng_seed=0) -> RangeData:
    """Noisy ranges for every pair in ``mask`` (complete by default)."""
    if mask is None:
        mask = ObservationMask.complete(s.l, s.n, s.m)
    mask.validate(s.l, s.n, s.m)
    d_st, d_at = true_ranges(s, mask)
    d = np.concatenate([d_st, d_at])
    rng = np.random.default_rng(rng_seed)
    if isinstance(noise, Gaussian):
        d = d + rng.normal(0.0, noise.sigma, d.size)
    elif isinstance(noise, Laplacian):
        d = d + rng.laplace(0.0, noise.sigma / np.sqrt(2.0), d.size)
    elif isinstance(noise, SelectiveGaussian):
        d = d + rng.normal(0.0, noise.sigma_gaussian, d.size)
        if noise.placement == "random-edges":
            if noise.outlier_count > d.size:
                raise ValueError("more outliers requested than measurements")
            hit = rng.choice(d.size, size=noise.outlier_count, replace=False)
        else:
            k = int(noise.placement[1])
            if k >= s.l:
                raise ValueError(f"anchor {k} does not exist")
            at = np.asarray(mask.anchor_target, dtype=int).reshape(-1, 2)
            hit = d_st.size + np.flatnonzero(at[:, 0] == k)
        d[hit] += np.abs(rng.normal(0.0, noise.sigma_outlier, hit.size))
    else:
        raise TypeError(f"unknown noise model {noise!r}")
    d = np.maximum(d, RANGE_FLOOR)
    return RangeData(mask, d[:d_st.size], d[d_st.size:], n=s.n, m=s.m, l=s.l)


# -- costs -------------------------------------------------------------------

def residuals(x, anchors, r: RangeData) -> np.ndarray:
    """Model-minus-measured range residuals, sensor-target terms first."""
    pts = np.asarray(x, dtype=float).reshape(-1, 2)
    sens, targ = pts[:r.n], pts[r.n:]
    if len(targ) != r.m:
        raise ValueError(f"expected {r.n + r.m} unknown points, got {len(pts)}")
    anchors = np.asarray(anchors, dtype=float).reshape(-1, 2)
    st, at = r.st_index(), r.at_index()
    f = np.linalg.norm(sens[st[:, 0]] - targ[st[:, 1]], axis=1)
    g = np.linalg.norm(anchors[at[:, 0]] - targ[at[:, 1]], axis=1)
    return np.concatenate([f - r.st, g - r.at])


def cost_gaussian(x, anchors, r: RangeData) -> float:
    res = residuals(x, anchors, r)
    return float(res @ res)


def cost_laplacian(x, anchors, r: RangeData) -> float:
    return float(np.sum(np.abs(residuals(x, anchors, r))))


def total_rmse(estimates, truths) -> float:
    """Root mean squared position error pooled over runs and points."""
    est = [np.asarray(e, dtype=float).reshape(-1, 2) for e in estimates]
    tru = [np.asarray(t, dtype=float).reshape(-1, 2) for t in truths]
    if not est or len(est) != len(tru):
        raise ValueError("need one truth per estimate and at least one run")
    npts = est[0].shape[0]
    total = 0.0
    for e, t in zip(est, tru):
        if e.shape != t.shape or e.shape[0] != npts:
            raise ValueError("inconsistent dimensions")
        total += float(np.sum((e - t) ** 2))
    return float(np.sqrt(total / (len(est) * npts)))
