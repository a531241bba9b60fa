"""Shared generators for the test suite."""
import numpy as np

from brakeorb import Grid1D, Path1D


def bump_path(p, rng, a=None):
    """A path resting at ``a`` with one randomized excursion of height 0.4-0.9."""
    a = p.a_plus if a is None else a
    g = Grid1D.from_spacing(0.0, 12.0, 0.01)
    t = g.nodes
    amp, width, centre = rng.uniform(0.4, 0.9), rng.uniform(0.4, 1.2), rng.uniform(4.0, 8.0)
    direction = rng.standard_normal(p.m)
    direction /= np.linalg.norm(direction)
    if p.m == 1:
        direction = -np.abs(direction)  # excursions of the scalar model point into the well
    ripple = 0.01 * np.sin(rng.uniform(1.0, 3.0) * t) ** 2 * np.exp(-((t - centre) / (3 * width)) ** 2)
    profile = amp * np.exp(-((t - centre) / width) ** 2) + ripple
    return Path1D(g, a + profile[:, None] * direction)
