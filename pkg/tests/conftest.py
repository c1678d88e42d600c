import cmath
import math

import numpy as np
import pytest

from distradar.model import C_LIGHT, ClusterGeometry, SceneGrid


def dense_operator_matrix(grid, geometry, phase_matrix=None):
    """Entry-by-entry dense build of the measurement matrix.

    Independent oracle: scalar loops and cmath only, no reuse of the
    vectorized kernel construction.
    """
    coords = grid.pixel_coords()
    w_count = geometry.n_freqs
    m_count = geometry.n_apcs
    n = grid.n_pixels
    mat = np.empty((w_count * m_count, n), dtype=complex)
    for m in range(m_count):
        theta = geometry.azimuth_angles[m]
        for w in range(w_count):
            row = m * w_count + w
            scale = 4 * math.pi * geometry.frequencies[w] * math.cos(geometry.elevation) / C_LIGHT
            for j in range(n):
                arg = scale * (coords[j, 0] * math.cos(theta)
                               + coords[j, 1] * math.sin(theta))
                mat[row, j] = cmath.exp(1j * arg)
    if phase_matrix is not None:
        mat = mat * np.asarray(phase_matrix)[None, :]
    return mat


@pytest.fixture
def small_grid():
    return SceneGrid(4, 4, 1.0, 1.0)


@pytest.fixture
def small_geometry():
    return ClusterGeometry(
        azimuth_angles=np.array([0.0, 0.05]),
        elevation=math.radians(30.0),
        frequencies=np.array([9.5e9, 9.7e9]),
    )


@pytest.fixture
def medium_grid():
    return SceneGrid(16, 16, 2.0, 2.0)


@pytest.fixture
def medium_geometry():
    return ClusterGeometry(
        azimuth_angles=np.linspace(0.0, 0.06, 4),
        elevation=math.radians(30.0),
        frequencies=np.linspace(9.4e9, 9.8e9, 4),
    )
