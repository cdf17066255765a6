import numpy as np
import pytest

import metricmesh as mm


@pytest.fixture(scope="session")
def icosphere0():
    return mm.make_icosphere(0)


@pytest.fixture(scope="session")
def icosphere1():
    return mm.make_icosphere(1)


@pytest.fixture(scope="session")
def icosphere2():
    return mm.make_icosphere(2)


def feasible_jittered(mesh, embedding, seed, amount, margin=1e-6, floor=1e-9):
    """Random feasible metric: jittered extrinsic lengths pushed back into
    the feasible set."""
    rng = np.random.default_rng(seed)
    metric = mm.MetricField.from_embedding(mesh, embedding).with_jitter(rng, amount)
    return mm.feasibility_projection(mesh, metric, margin, floor)


def two_triangle_strip():
    """Two faces sharing the edge (1, 2); vertices 0 and 3 on either side."""
    faces = np.array([[0, 1, 2], [1, 2, 3]], dtype=np.int64)
    return mm.Mesh(4, faces)
