import numpy as np
import pytest

from pnn.mip import MipModel


def random_mip(rng, max_binaries=10, max_continuous=7, max_rows=10, name="R"):
    """Small random MIP with one-decimal coefficients and mixed senses."""
    m = MipModel(name)
    nb = int(rng.integers(1, max_binaries + 1))
    nc = int(rng.integers(0, max_continuous + 1))
    vs = [m.add_binary(f"b{i}") for i in range(nb)]
    for j in range(nc):
        lo = float(rng.integers(-3, 1))
        hi = lo + float(rng.integers(0, 5))
        vs.append(m.add_continuous(f"c{j}", lo, hi))
    for _ in range(int(rng.integers(1, max_rows))):
        k = rng.choice(len(vs), size=min(len(vs), int(rng.integers(1, 5))), replace=False)
        terms = [(float(np.round(rng.normal(), 1)), vs[i]) for i in k]
        m.add_constraint(terms, rng.choice(["L", "G", "E"], p=[0.45, 0.45, 0.1]), float(np.round(rng.normal() * 2, 1)))
    m.set_objective([(float(np.round(rng.normal(), 1)), v) for v in vs], rng.choice(["min", "max"]), float(rng.normal()))
    return m


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
