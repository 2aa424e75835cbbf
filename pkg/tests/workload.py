"""Collects the cone programs issued by the localisation code on a few small instances."""
import numpy as np

from slatkit import conic, edm
from slatkit.model import Gaussian, SelectiveGaussian, generate_scenario, synthesize_ranges
from slatkit.source_loc import CircleSet, sll1_locate, slcp_locate


def slat_workload(seeds=(0, 1)):
    captured = []
    original = conic.solve

    def spy(p, *args, **kwargs):
        sol = original(p, *args, **kwargs)
        captured.append((p, sol, kwargs))
        return sol

    conic.solve = spy
    try:
        for seed in seeds:
            s = generate_scenario(4, 5, 6, rng_seed=seed)
            for noise in (Gaussian(0.01), SelectiveGaussian(0.01, 1.0)):
                pe = edm.build_partial_edm(s.anchors, synthesize_ranges(s, noise, rng_seed=seed))
                edm.complete_edm_sr(pe)
                edm.complete_edm_r(pe)
                edm.complete_edm_r_l1(pe)
            rng = np.random.default_rng(seed)
            c = CircleSet(rng.uniform(-10, 10, (5, 2)), rng.uniform(3, 10, 5))
            slcp_locate(c)
            sll1_locate(c)
    finally:
        conic.solve = original
    return captured
