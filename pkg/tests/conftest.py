from functools import lru_cache

import numpy as np
import pytest

from edgestab.mesh import MESH_KINDS, build_mesh, build_stencils, extract_edges


@lru_cache(maxsize=None)
def topology(kind: str, level: int):
    mesh = build_mesh(kind, level)
    edges = extract_edges(mesh)
    return mesh, edges, build_stencils(mesh, edges)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(params=MESH_KINDS)
def kind(request):
    return request.param


SYMMETRIC_KINDS = ("criss-cross", "union-jack", "three-directional")
