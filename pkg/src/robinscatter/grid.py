"""Uniform planar grids and the support disk."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError


def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Disk:
    """Closed disk D = {|x - center| <= radius} in the boundary plane."""

    center: tuple[float, float] = (0.0, 0.0)
    radius: float = 1.0

    def __post_init__(self):
        if not self.radius > 0:
            raise ConfigurationError("disk radius must be positive")

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius

    def distance(self, points) -> np.ndarray:
        """Euclidean distance from planar points to D (zero inside)."""
        p = np.asarray(points, dtype=float)[..., :2]
        r = np.hypot(p[..., 0] - self.center[0], p[..., 1] - self.center[1])
        return np.maximum(r - self.radius, 0.0)

    def contains(self, points, margin: float = 0.0) -> np.ndarray:
        p = np.asarray(points, dtype=float)[..., :2]
        r = np.hypot(p[..., 0] - self.center[0], p[..., 1] - self.center[1])
        return r <= self.radius + margin

    def to_dict(self) -> dict:
        return {"center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class GridSpec2D:
    """Node-centred uniform grid on a rectangle of the boundary plane.

    Node ``(i, j)`` sits at ``origin + (i * hx, j * hy)``; arrays on the grid
    are indexed ``[i, j]`` (x first).
    """

    origin: tuple[float, float]
    extent: tuple[float, float]
    resolution: tuple[int, int]

    def __post_init__(self):
        nx, ny = self.resolution
        if nx < 8 or ny < 8 or not (_is_pow2(nx) and _is_pow2(ny)):
            raise ConfigurationError(
                f"grid resolution must be powers of two >= 8, got {self.resolution}")
        if self.extent[0] <= 0 or self.extent[1] <= 0:
            raise ConfigurationError("grid extent must be positive")
        hx, hy = self.spacing
        if abs(hx - hy) > 1e-12 * max(hx, hy):
            raise ConfigurationError("grid spacing must be equal in x and y")

    @classmethod
    def centered(cls, half_width: float, n: int, center=(0.0, 0.0)) -> "GridSpec2D":
        """Square n x n grid covering [c - w, c + w)^2."""
        L = 2.0 * half_width
        return cls((center[0] - half_width, center[1] - half_width), (L, L), (n, n))

    @property
    def spacing(self) -> tuple[float, float]:
        return (self.extent[0] / self.resolution[0], self.extent[1] / self.resolution[1])

    @property
    def h(self) -> float:
        return self.spacing[0]

    @property
    def shape(self) -> tuple[int, int]:
        return tuple(self.resolution)

    @property
    def cell_area(self) -> float:
        hx, hy = self.spacing
        return hx * hy

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        hx, hy = self.spacing
        nx, ny = self.resolution
        return (self.origin[0] + hx * np.arange(nx), self.origin[1] + hy * np.arange(ny))

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        x, y = self.axes()
        return np.meshgrid(x, y, indexing="ij")

    def points(self) -> np.ndarray:
        X, Y = self.mesh()
        return np.stack([X, Y], axis=-1)

    def frequencies(self) -> tuple[np.ndarray, np.ndarray]:
        """Angular frequency mesh (KX, KY) matching ``np.fft.fft2`` ordering."""
        hx, hy = self.spacing
        nx, ny = self.resolution
        kx = 2.0 * np.pi * np.fft.fftfreq(nx, d=hx)
        ky = 2.0 * np.pi * np.fft.fftfreq(ny, d=hy)
        return np.meshgrid(kx, ky, indexing="ij")

    @property
    def nyquist(self) -> float:
        return np.pi / self.h

    def index_of(self, point) -> tuple[float, float]:
        """Fractional node index of a planar point."""
        hx, hy = self.spacing
        return ((point[0] - self.origin[0]) / hx, (point[1] - self.origin[1]) / hy)

    def inside(self, points) -> np.ndarray:
        """True where points lie within the node hull (no extrapolation needed)."""
        p = np.asarray(points, dtype=float)
        x, y = self.axes()
        return ((p[..., 0] >= x[0]) & (p[..., 0] <= x[-1])
                & (p[..., 1] >= y[0]) & (p[..., 1] <= y[-1]))

    def check_disk(self, disk: Disk, margin_cells: float = 2.0) -> None:
        """Require D inside the node hull with a collar of ``margin_cells`` spacings."""
        x, y = self.axes()
        m = disk.radius + margin_cells * self.h
        cx, cy = disk.center
        if cx - m <= x[0] or cx + m >= x[-1] or cy - m <= y[0] or cy + m >= y[-1]:
            raise ConfigurationError(
                f"support disk (radius {disk.radius}) does not fit in the grid with a "
                f"{margin_cells}-spacing margin")

    def to_dict(self) -> dict:
        return {"origin": list(self.origin), "extent": list(self.extent),
                "resolution": list(self.resolution)}

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec2D":
        return cls(tuple(d["origin"]), tuple(d["extent"]), tuple(int(v) for v in d["resolution"]))
