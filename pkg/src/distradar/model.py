"""Scene geometry and the tomographic forward operator.

The forward operator maps a complex reflectivity image on a uniform grid to
de-chirped phase-history samples collected by one cluster of antenna phase
centers (APCs). The kernel is an exact nonuniform DFT evaluated directly,
O(W*M*N) per application; at desk scale exactness beats speed, and this is
the natural place to swap in an NUFFT later.
"""

from dataclasses import dataclass, field

import numpy as np

C_LIGHT = 299_792_458.0  # m/s


@dataclass(frozen=True)
class SceneGrid:
    """Uniform nx-by-ny pixel raster with physical extent in meters.

    Pixels are indexed row-major: flat index n = iy*nx + ix. Pixel centers
    are symmetric about the scene center, spanning
    [-extent/2 + delta/2, extent/2 - delta/2] along each axis.
    plane_height is metadata only (image-plane elevation offset); it does
    not enter the 2D imaging kernel.
    """

    nx: int
    ny: int
    extent_x: float
    extent_y: float
    plane_height: float = 0.0

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ValueError("grid must have nx >= 1 and ny >= 1")
        if self.extent_x <= 0 or self.extent_y <= 0:
            raise ValueError("grid extents must be positive")

    @property
    def n_pixels(self):
        return self.nx * self.ny

    def pixel_coords(self):
        """(N, 2) array of pixel-center (x, y) coordinates, row-major."""
        dx = self.extent_x / self.nx
        dy = self.extent_y / self.ny
        xs = -self.extent_x / 2 + dx * (np.arange(self.nx) + 0.5)
        ys = -self.extent_y / 2 + dy * (np.arange(self.ny) + 0.5)
        gx, gy = np.meshgrid(xs, ys)  # rows vary in y
        return np.column_stack([gx.ravel(), gy.ravel()])

    def nearest_pixel(self, x, y):
        """Flat index of the pixel whose center is nearest to (x, y)."""
        dx = self.extent_x / self.nx
        dy = self.extent_y / self.ny
        ix = int(np.clip(np.floor((x + self.extent_x / 2) / dx), 0, self.nx - 1))
        iy = int(np.clip(np.floor((y + self.extent_y / 2) / dy), 0, self.ny - 1))
        return iy * self.nx + ix


@dataclass(frozen=True)
class ClusterGeometry:
    """Sampling geometry of one cluster: APC azimuths, elevation, frequencies."""

    azimuth_angles: np.ndarray  # radians, length M
    elevation: float  # radians
    frequencies: np.ndarray  # Hz, length W, strictly increasing
    cluster_id: int = 0

    def __post_init__(self):
        object.__setattr__(self, "azimuth_angles",
                           np.asarray(self.azimuth_angles, dtype=float))
        object.__setattr__(self, "frequencies",
                           np.asarray(self.frequencies, dtype=float))
        if self.azimuth_angles.size < 1:
            raise ValueError("cluster needs at least one APC azimuth")
        if self.frequencies.size < 1:
            raise ValueError("cluster needs at least one frequency sample")
        if np.any(self.frequencies <= 0):
            raise ValueError("frequencies must be strictly positive")
        if self.frequencies.size > 1 and np.any(np.diff(self.frequencies) <= 0):
            raise ValueError("frequencies must be strictly increasing")
        if not (0 <= self.elevation < np.pi / 2):
            raise ValueError("elevation must lie in [0, pi/2)")

    @property
    def n_apcs(self):
        return self.azimuth_angles.size

    @property
    def n_freqs(self):
        return self.frequencies.size

    @property
    def center_azimuth(self):
        """Central azimuth of the cluster (mean of APC angles)."""
        return float(np.mean(self.azimuth_angles))


class ForwardOperator:
    """Matrix representation A of the cluster's measurement kernel.

    Entry A[(m, w), n] = exp(+j * 4*pi*f_w*cos(phi)/c * (x_n*cos(theta_m)
    + y_n*sin(theta_m))) * phase_matrix[n]. Output samples are ordered
    frequency-major within each APC: row index = m*W + w.

    The unit-modulus phase_matrix is the diagonal of the per-pixel phase
    matrix folded into A; it defaults to all ones. Instances are immutable
    after construction and safe to share across threads; apply/adjoint
    allocate fresh outputs.
    """

    def __init__(self, grid, geometry, phase_matrix=None):
        self.grid = grid
        self.geometry = geometry
        n = grid.n_pixels
        if phase_matrix is None:
            phase_matrix = np.ones(n, dtype=complex)
        else:
            phase_matrix = np.asarray(phase_matrix, dtype=complex)
            if phase_matrix.shape != (n,):
                raise ValueError("phase_matrix must have length N")
            if np.any(np.abs(np.abs(phase_matrix) - 1.0) > 1e-12):
                raise ValueError("phase_matrix entries must be unit modulus")
        self.phase_matrix = phase_matrix
        self._kernel = self._build_kernel()
        self._normal_cache = [None]  # lazy FFT kernel, shared across refolds

    def _build_kernel(self):
        coords = self.grid.pixel_coords()
        theta = self.geometry.azimuth_angles
        k = 4 * np.pi * self.geometry.frequencies * np.cos(self.geometry.elevation) / C_LIGHT
        # projection of every pixel onto each APC's look direction, (M, N)
        proj = np.outer(np.cos(theta), coords[:, 0]) + np.outer(np.sin(theta), coords[:, 1])
        phase = k[None, :, None] * proj[:, None, :]  # (M, W, N)
        return np.exp(1j * phase).reshape(self.n_measurements, self.grid.n_pixels)

    @property
    def n_measurements(self):
        return self.geometry.n_freqs * self.geometry.n_apcs

    def with_phase_matrix(self, phase_matrix):
        """Copy of this operator with a different folded phase matrix."""
        op = ForwardOperator.__new__(ForwardOperator)
        op.grid = self.grid
        op.geometry = self.geometry
        phase_matrix = np.asarray(phase_matrix, dtype=complex)
        if phase_matrix.shape != (self.grid.n_pixels,):
            raise ValueError("phase_matrix must have length N")
        if np.any(np.abs(np.abs(phase_matrix) - 1.0) > 1e-12):
            raise ValueError("phase_matrix entries must be unit modulus")
        op.phase_matrix = phase_matrix
        op._kernel = self._kernel
        op._normal_cache = self._normal_cache
        return op

    def _normal_fft_kernel(self):
        """FFT of the block-Toeplitz generator of K^H K (phase fold excluded).

        (K^H K)[n, n'] depends only on the pixel coordinate difference, so
        the Gram action is a 2D correlation evaluated with FFTs in
        O(N log N) instead of O(W*M*N). Built lazily and cached.
        """
        if self._normal_cache[0] is None:
            nx, ny = self.grid.nx, self.grid.ny
            dx = self.grid.extent_x / nx
            dy = self.grid.extent_y / ny
            theta = self.geometry.azimuth_angles
            k = (4 * np.pi * self.geometry.frequencies
                 * np.cos(self.geometry.elevation) / C_LIGHT)
            sx, sy = 2 * nx, 2 * ny
            # circulant embedding: index p maps to difference p or p - s
            ddx = dx * np.where(np.arange(sx) < nx, np.arange(sx), np.arange(sx) - sx)
            ddy = dy * np.where(np.arange(sy) < ny, np.arange(sy), np.arange(sy) - sy)
            gen = np.zeros((sy, sx), dtype=complex)
            for m in range(theta.size):
                proj = (np.cos(theta[m]) * ddx[None, :]
                        + np.sin(theta[m]) * ddy[:, None])
                gen += np.sum(np.exp(1j * k[:, None, None] * proj[None, :, :]),
                              axis=0)
            self._normal_cache[0] = np.fft.fft2(gen)
        return self._normal_cache[0]

    def normal_apply(self, image):
        """A^H A x via the Toeplitz/FFT fast path (phase matrix included).

        Numerically equivalent to adjoint(apply(x)) to machine precision,
        at O(N log N) cost; used by the iterative inner solvers.
        """
        image = np.asarray(image, dtype=complex)
        if image.shape != (self.grid.n_pixels,):
            raise ValueError("image length must equal the pixel count N")
        nx, ny = self.grid.nx, self.grid.ny
        u = (self.phase_matrix * image).reshape(ny, nx)
        # R[i] = sum_j T[j-i] u[j] equals conj(T * conj(u)) since T[-d]=conj(T[d])
        w = np.zeros((2 * ny, 2 * nx), dtype=complex)
        w[:ny, :nx] = np.conj(u)
        conv = np.fft.ifft2(self._normal_fft_kernel() * np.fft.fft2(w))
        r = np.conj(conv[:ny, :nx]).reshape(self.grid.n_pixels)
        return np.conj(self.phase_matrix) * r

    def apply(self, image):
        """y = A x for a complex image of length N."""
        image = np.asarray(image)
        if image.shape != (self.grid.n_pixels,):
            raise ValueError("image length must equal the pixel count N")
        return self._kernel @ (self.phase_matrix * image)

    def adjoint(self, data):
        """x = A^H y for a measurement vector of length W*M."""
        data = np.asarray(data)
        if data.shape != (self.n_measurements,):
            raise ValueError("data length must equal W*M")
        return np.conj(self.phase_matrix) * (self._kernel.conj().T @ data)


def make_operator(grid, geometry):
    """Forward operator with an all-ones phase matrix."""
    return ForwardOperator(grid, geometry)


def estimate_phase_matrix(op, measurements):
    """Per-pixel phase estimate from the back-projection of the measurements.

    Returns exp(j*angle(A^H y)) element-wise; pixels where the
    back-projection is exactly zero get phase 1. Requires an operator whose
    phase matrix has not been folded yet.
    """
    if not np.all(op.phase_matrix == 1.0):
        raise ValueError("phase estimation expects an all-ones phase matrix")
    bp = op.adjoint(measurements)
    phase = np.ones(bp.size, dtype=complex)
    nz = bp != 0
    phase[nz] = np.exp(1j * np.angle(bp[nz]))
    return phase


def backprojection_image(ops, measurements):
    """Average over clusters of the per-cluster back-projection magnitudes."""
    if len(ops) == 0:
        raise ValueError("need at least one operator")
    if len(ops) != len(measurements):
        raise ValueError("one measurement vector per operator required")
    acc = np.zeros(ops[0].grid.n_pixels)
    for op, y in zip(ops, measurements):
        acc += np.abs(op.adjoint(y))
    return acc / len(ops)
