"""Anisotropic local strengths and Gaussian sampling of the Robin coefficient.

The random Robin coefficient is a zero-mean Gaussian field whose covariance
is a pseudodifferential operator with symbol

    sigma(x, xi) = b(x, xi/|xi|) * (kappa^2 + |xi|^2) ** (-1 - eps)

where ``b`` is the local strength.  Samples are produced by frozen-coefficient
spectral synthesis: white noise is filtered in Fourier space and modulated node
by node, so the principal part of the symbol is reproduced exactly.
"""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.ndimage import map_coordinates

from .errors import ConfigurationError, ContractError
from .grid import Disk, GridSpec2D

DEFAULT_EPSILON = 0.5


# ---------------------------------------------------------------------------
# smooth cutoffs


def smooth_step(t):
    """C-infinity step: 1 for t <= 0, 0 for t >= 1."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(t < 1.0, np.exp(-1.0 / np.maximum(1.0 - t, 1e-300)), 0.0)
        b = np.where(t > 0.0, np.exp(-1.0 / np.maximum(t, 1e-300)), 0.0)
    return a / (a + b)


def radial_taper(grid: GridSpec2D, disk: Disk, inner: float, outer: float) -> np.ndarray:
    """Smooth radial profile equal to 1 for |x-c| <= inner and 0 beyond outer."""
    X, Y = grid.mesh()
    r = np.hypot(X - disk.center[0], Y - disk.center[1])
    return smooth_step((r - inner) / (outer - inner))


def support_bump(grid: GridSpec2D, disk: Disk, collar_cells: float = 2.0) -> np.ndarray:
    """Bump equal to 1 on D and 0 outside a collar of ``collar_cells`` spacings."""
    return radial_taper(grid, disk, disk.radius, disk.radius + collar_cells * grid.h)


def interpolate(grid: GridSpec2D, values: np.ndarray, points, order: int = 1) -> np.ndarray:
    """Spline interpolation of a grid function at planar points (zero outside)."""
    p = np.asarray(points, dtype=float)
    hx, hy = grid.spacing
    coords = np.stack([(p[..., 0] - grid.origin[0]) / hx, (p[..., 1] - grid.origin[1]) / hy])
    flat = coords.reshape(2, -1)
    out = map_coordinates(values, flat, order=order, mode="constant", cval=0.0,
                          prefilter=order > 1)
    return out.reshape(p.shape[:-1])


# ---------------------------------------------------------------------------
# anisotropy fields


@dataclass(frozen=True, eq=False)
class AnisotropyField:
    """Symmetric PSD matrix field A(x) = [[a1, a3], [a3, a2]] supported in D."""

    grid: GridSpec2D
    a1: np.ndarray
    a2: np.ndarray
    a3: np.ndarray
    support_mask: np.ndarray
    disk: Disk = Disk()
    eig_bound: float = field(default=np.nan)

    def __post_init__(self):
        for name in ("a1", "a2", "a3"):
            arr = getattr(self, name)
            if arr.shape != self.grid.shape:
                raise ConfigurationError(f"{name} has shape {arr.shape}, grid is {self.grid.shape}")
        lo, hi = self.eigenvalues()
        scale = max(float(np.max(np.abs(hi))), 1e-300)
        if np.min(lo) < -1e-12 * scale:
            raise ContractError(
                f"A(x) is not positive semidefinite (min eigenvalue {np.min(lo):.3e}); "
                "invalid covariance model")
        outside = ~self.support_mask
        if outside.any() and max(np.abs(a[outside]).max() for a in (self.a1, self.a2, self.a3)) > 0:
            raise ContractError("A must vanish outside the support mask")
        if np.isnan(self.eig_bound):
            object.__setattr__(self, "eig_bound", float(np.max(hi)) if hi.size else 0.0)

    @classmethod
    def from_components(cls, grid: GridSpec2D, disk: Disk, a1, a2, a3, clip: bool = True):
        """Build from raw component arrays, zeroing them outside D.

        Negative eigenvalues are clipped to zero (with a warning) when ``clip``.
        """
        mask = disk.contains(grid.points())
        a1, a2, a3 = (np.where(mask, np.asarray(a, dtype=float), 0.0) for a in (a1, a2, a3))
        if clip:
            a1, a2, a3 = _clip_psd(a1, a2, a3)
        return cls(grid, a1, a2, a3, mask, disk)

    def eigenvalues(self) -> tuple[np.ndarray, np.ndarray]:
        m = 0.5 * (self.a1 + self.a2)
        d = np.sqrt(0.25 * (self.a1 - self.a2) ** 2 + self.a3 ** 2)
        return m - d, m + d

    @property
    def trace(self) -> np.ndarray:
        return self.a1 + self.a2

    def components(self) -> dict[str, np.ndarray]:
        return {"a1": self.a1, "a2": self.a2, "a3": self.a3}

    def sqrt(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Symmetric square root S (S @ S = A) as (s11, s22, s12)."""
        return psd_sqrt(self.a1, self.a2, self.a3)

    def rotated(self, angle: float) -> "AnisotropyField":
        """Rotate the field jointly in space and matrix frame about the disk centre.

        Exact on the grid only for multiples of pi/2.
        """
        q = int(round(angle / (np.pi / 2)))
        if not np.isclose(q * np.pi / 2, angle):
            raise ConfigurationError("only quarter-turn rotations are exact on the grid")
        q %= 4
        a1, a2, a3 = self.a1, self.a2, self.a3
        for _ in range(q):
            # R A R^T with R = rot(pi/2): a1' = a2, a2' = a1, a3' = -a3
            a1, a2, a3 = np.rot90(a2), np.rot90(a1), -np.rot90(a3)
        return AnisotropyField(self.grid, a1, a2, a3, np.rot90(self.support_mask, q), self.disk)


def psd_sqrt(a1, a2, a3):
    """Closed-form symmetric square root of 2x2 PSD matrices [[a1, a3], [a3, a2]]."""
    s = np.sqrt(np.maximum(a1 * a2 - a3 ** 2, 0.0))
    t = np.sqrt(np.maximum(a1 + a2 + 2.0 * s, 0.0))
    safe = np.where(t > 0, t, 1.0)
    return (np.where(t > 0, (a1 + s) / safe, 0.0),
            np.where(t > 0, (a2 + s) / safe, 0.0),
            np.where(t > 0, a3 / safe, 0.0))


def _clip_psd(a1, a2, a3):
    m = 0.5 * (a1 + a2)
    d = np.sqrt(0.25 * (a1 - a2) ** 2 + a3 ** 2)
    lo, hi = m - d, m + d
    if np.any(lo < 0) or np.any(hi < 0):
        warnings.warn(f"clipping negative eigenvalues of A (min {min(lo.min(), hi.min()):.3e})",
                      RuntimeWarning, stacklevel=3)
    lo_c, hi_c = np.maximum(lo, 0.0), np.maximum(hi, 0.0)
    # eigenvector angle of the larger eigenvalue
    phi = 0.5 * np.arctan2(2.0 * a3, a1 - a2)
    c, s = np.cos(phi), np.sin(phi)
    return (hi_c * c * c + lo_c * s * s, hi_c * s * s + lo_c * c * c, (hi_c - lo_c) * c * s)


def zero_anisotropy(grid: GridSpec2D, disk: Disk = Disk()) -> AnisotropyField:
    z = np.zeros(grid.shape)
    return AnisotropyField.from_components(grid, disk, z, z, z)


def constant_anisotropy(grid: GridSpec2D, disk: Disk, matrix, taper: bool = True,
                        inner: float = 0.55, outer: float = 0.95) -> AnisotropyField:
    """A(x) = M on D, optionally tapered smoothly to zero between inner*R and outer*R."""
    M = np.asarray(matrix, dtype=float)
    prof = radial_taper(grid, disk, inner * disk.radius, outer * disk.radius) if taper \
        else np.ones(grid.shape)
    return AnisotropyField.from_components(grid, disk, M[0, 0] * prof, M[1, 1] * prof,
                                           M[0, 1] * prof)


def isotropic_anisotropy(grid: GridSpec2D, disk: Disk = Disk(), amplitude: float = 1.0,
                         taper: bool = True) -> AnisotropyField:
    return constant_anisotropy(grid, disk, amplitude * np.eye(2), taper=taper)


def default_components(X, Y, disk: Disk = Disk()):
    """Analytic (a1, a2, a3) of the default phantom at arbitrary points."""
    R = disk.radius
    u, v = (np.asarray(X) - disk.center[0]) / R, (np.asarray(Y) - disk.center[1]) / R
    g1 = np.exp(-((u + 0.2) ** 2 + (v - 0.1) ** 2) / (2 * 0.3 ** 2))
    g2 = 0.6 * np.exp(-((u - 0.25) ** 2 + (v + 0.15) ** 2) / (2 * 0.35 ** 2))
    chi = smooth_step((np.hypot(u, v) - 0.55) / 0.4)
    return chi * g1, chi * g2, 0.4 * chi * np.sqrt(g1 * g2) * np.cos(2.0 * u + v)


def default_anisotropy(grid: GridSpec2D, disk: Disk = Disk()) -> AnisotropyField:
    """Smooth phantom with three distinct, non-trivial component fields."""
    X, Y = grid.mesh()
    return AnisotropyField.from_components(grid, disk, *default_components(X, Y, disk))


def potential_anisotropy(grid: GridSpec2D, disk: Disk = Disk(), direction=(1.0, 0.0),
                         inner: float = 0.6, outer: float = 0.95) -> tuple[AnisotropyField, np.ndarray]:
    """A = v v^T for the potential field q = (v . grad) Y.

    ``v(x) = direction * chi(x)`` with ``chi = 1`` on the inner disk; returns
    ``(A, v)`` with ``v`` of shape ``(2, nx, ny)``.
    """
    d = np.asarray(direction, dtype=float)
    chi = radial_taper(grid, disk, inner * disk.radius, outer * disk.radius)
    v = np.stack([d[0] * chi, d[1] * chi])
    A = AnisotropyField.from_components(grid, disk, v[0] ** 2, v[1] ** 2, v[0] * v[1], clip=False)
    return A, v


# ---------------------------------------------------------------------------
# local strength


@dataclass(frozen=True, eq=False)
class LocalStrength:
    """Directional strength b(x, theta) sampled at ``n_ang`` equispaced angles.

    ``values[i, j, m]`` is b at node (i, j) and angle ``2*pi*m/n_ang``.  When
    built from a matrix field, ``anisotropy`` is kept so that b can be
    evaluated exactly in theta.
    """

    grid: GridSpec2D
    values: np.ndarray
    epsilon: float
    disk: Disk = Disk()
    anisotropy: AnisotropyField | None = None
    tol: float = 1e-12

    def __post_init__(self):
        n_ang = self.values.shape[-1]
        if self.values.shape[:2] != self.grid.shape:
            raise ConfigurationError("strength values do not match the grid")
        if n_ang < 32 or n_ang % 2:
            raise ConfigurationError("n_ang must be even and >= 32")
        if not self.epsilon > 0:
            raise ConfigurationError("epsilon must be positive")
        scale = max(float(np.max(np.abs(self.values))), 1.0)
        half = n_ang // 2
        if np.max(np.abs(self.values - np.roll(self.values, half, axis=-1))) > self.tol * scale:
            raise ContractError("b(x, theta) must equal b(x, -theta)")
        if np.min(self.values) < -self.tol * scale:
            raise ContractError("local strength must be nonnegative")
        outside = ~self.disk.contains(self.grid.points())
        if outside.any() and np.max(np.abs(self.values[outside])) > self.tol * scale:
            raise ContractError("local strength must vanish outside D")

    @property
    def n_ang(self) -> int:
        return self.values.shape[-1]

    @property
    def angles(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(self.n_ang) / self.n_ang

    @property
    def is_quadratic(self) -> bool:
        return self.anisotropy is not None

    @classmethod
    def from_function(cls, grid: GridSpec2D, fn, epsilon: float, disk: Disk = Disk(),
                      n_ang: int = 64) -> "LocalStrength":
        """Sample ``fn(X, Y, theta)`` on the grid (broadcast over a trailing angle axis)."""
        X, Y = grid.mesh()
        th = 2.0 * np.pi * np.arange(n_ang) / n_ang
        vals = np.asarray(fn(X[..., None], Y[..., None], th[None, None, :]), dtype=float)
        vals = np.broadcast_to(vals, grid.shape + (n_ang,)).copy()
        vals[~disk.contains(grid.points())] = 0.0
        return cls(grid, vals, epsilon, disk)

    @cached_property
    def harmonics(self) -> np.ndarray:
        """Angular rfft coefficients beta_n(x), n = 0..n_ang/2, shape (n+1, nx, ny)."""
        c = np.fft.rfft(self.values, axis=-1) / self.n_ang
        return np.moveaxis(c, -1, 0)

    @cached_property
    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.values).tobytes())
        h.update(repr((self.epsilon, self.grid.to_dict(), self.disk.to_dict())).encode())
        return h.hexdigest()[:16]

    def evaluate(self, points, theta, order: int = 1) -> np.ndarray:
        """b at planar points and directions given by angle ``theta`` (broadcast)."""
        p = np.asarray(points, dtype=float)
        theta = np.asarray(theta, dtype=float)
        if self.anisotropy is not None:
            A = self.anisotropy
            a1 = interpolate(self.grid, A.a1, p, order)
            a2 = interpolate(self.grid, A.a2, p, order)
            a3 = interpolate(self.grid, A.a3, p, order)
            c, s = np.cos(theta), np.sin(theta)
            return a1 * c * c + a2 * s * s + 2.0 * a3 * c * s
        out = 0.0
        nh = self.harmonics.shape[0]
        for n in range(0, nh, 2):
            coef = self.harmonics[n]
            re = interpolate(self.grid, coef.real, p, order)
            im = interpolate(self.grid, coef.imag, p, order)
            w = 1.0 if (n == 0 or 2 * n == self.n_ang) else 2.0
            out = out + w * (re * np.cos(n * theta) - im * np.sin(n * theta))
        return out

    def angular_fft(self) -> np.ndarray:
        """Spatial 2-D Fourier transform of b(., theta_m), shape (nx, ny, n_ang)."""
        return spatial_fft(self.grid, self.values)


def spatial_fft(grid: GridSpec2D, values: np.ndarray) -> np.ndarray:
    """Continuous-normalised Fourier transform int f(x) exp(-i x.xi) dx on grid frequencies.

    Leading two axes are spatial; the phase accounts for the grid origin.
    """
    KX, KY = grid.frequencies()
    phase = np.exp(-1j * (KX * grid.origin[0] + KY * grid.origin[1]))
    F = np.fft.fft2(values, axes=(0, 1)) * grid.cell_area
    return F * phase.reshape(phase.shape + (1,) * (values.ndim - 2))


def inverse_spatial_fft(grid: GridSpec2D, F: np.ndarray) -> np.ndarray:
    """Inverse of :func:`spatial_fft`."""
    KX, KY = grid.frequencies()
    phase = np.exp(1j * (KX * grid.origin[0] + KY * grid.origin[1]))
    G = F * phase.reshape(phase.shape + (1,) * (F.ndim - 2))
    return np.fft.ifft2(G, axes=(0, 1)) / grid.cell_area


def build_quadratic_strength(A: AnisotropyField, epsilon: float = DEFAULT_EPSILON,
                             n_ang: int = 64) -> LocalStrength:
    """b(x, theta) = <theta, A(x) theta> sampled on ``n_ang`` angles."""
    lo, _ = A.eigenvalues()
    if np.min(lo) < -1e-12 * max(A.eig_bound, 1e-300):
        raise ContractError("A fails the PSD check; invalid covariance model")
    th = 2.0 * np.pi * np.arange(n_ang) / n_ang
    c, s = np.cos(th), np.sin(th)
    vals = (A.a1[..., None] * c * c + A.a2[..., None] * s * s
            + 2.0 * A.a3[..., None] * c * s)
    vals = np.maximum(vals, 0.0)
    return LocalStrength(A.grid, vals, epsilon, A.disk, anisotropy=A)


# ---------------------------------------------------------------------------
# covariance model and sampling


@dataclass(frozen=True, eq=False)
class CovarianceModel:
    """Symbol sigma(x, xi) = b(x, xi^0) (kappa^2 + |xi|^2)^(-1-eps)."""

    strength: LocalStrength
    kappa: float = 1.0

    @property
    def epsilon(self) -> float:
        return self.strength.epsilon

    def spectral_profile(self, KX, KY) -> np.ndarray:
        return (self.kappa ** 2 + KX ** 2 + KY ** 2) ** (-1.0 - self.epsilon)

    def symbol(self, point, KX, KY, order: int = 1) -> np.ndarray:
        """sigma at a frozen spatial point on a frequency mesh."""
        alpha = np.arctan2(KY, KX)
        p = np.broadcast_to(np.asarray(point, dtype=float), alpha.shape + (2,))
        b = self.strength.evaluate(p, alpha, order)
        return np.maximum(b, 0.0) * self.spectral_profile(KX, KY)


@dataclass(frozen=True, eq=False)
class FieldRealization:
    grid: GridSpec2D
    values: np.ndarray
    seed: int
    epsilon: float
    strength_ref: str

    def at(self, points, order: int = 1) -> np.ndarray:
        return interpolate(self.grid, self.values, points, order)

    def scaled(self, factor: float) -> "FieldRealization":
        return FieldRealization(self.grid, factor * self.values, self.seed, self.epsilon,
                                f"{self.strength_ref}*{factor!r}")


def rng_for(seed: int) -> np.random.Generator:
    """Counter-based generator keyed by the 64-bit seed."""
    return np.random.Generator(np.random.Philox(key=int(seed) & 0xFFFFFFFFFFFFFFFF))


def _check_sampling_grid(model: CovarianceModel, grid: GridSpec2D) -> None:
    disk = model.strength.disk
    if disk.diameter / grid.h < 16:
        raise ConfigurationError(
            f"grid too coarse: {disk.diameter / grid.h:.1f} nodes across D (need >= 16)")
    grid.check_disk(disk)


def _strength_on(model: CovarianceModel, grid: GridSpec2D):
    """Re-sample the strength's coefficient fields onto a sampling grid."""
    st = model.strength
    if st.anisotropy is None:
        return None
    A = st.anisotropy
    if grid == st.grid:
        return A.a1, A.a2, A.a3
    pts = grid.points()
    return tuple(interpolate(st.grid, a, pts) for a in (A.a1, A.a2, A.a3))


def _white(seed: int, count: int, grid: GridSpec2D) -> np.ndarray:
    return rng_for(seed).standard_normal((count,) + grid.shape)


def sample_field(model: CovarianceModel, grid: GridSpec2D | None = None, seed: int = 0) -> FieldRealization:
    """One realization of the Gaussian Robin coefficient on ``grid``.

    Quadratic strengths use the exact factorisation A = S S^T: with Riesz
    filtered noises Z_i^(m), lambda = sum_m sum_i S_im(x) Z_i^(m)(x).  Other
    strengths expand sqrt(b(x, .)) in even angular harmonics.
    """
    grid = grid or model.strength.grid
    _check_sampling_grid(model, grid)
    KX, KY = grid.frequencies()
    nx, ny = grid.shape
    kx = KX[:, : ny // 2 + 1]
    ky = KY[:, : ny // 2 + 1]
    rho = np.hypot(kx, ky)
    amp = np.sqrt(model.spectral_profile(kx, ky)) / grid.h
    st = model.strength
    comps = _strength_on(model, grid)
    if comps is not None:
        s11, s22, s12 = psd_sqrt(*comps)
        w = _white(seed, 2, grid)
        safe = np.where(rho > 0, rho, 1.0)
        # the DC mode is assigned direction e1, matching alpha(0) = 0 in the symbol
        rx = np.where(rho > 0, 1j * kx / safe, 1.0) * amp
        ry = np.where(rho > 0, 1j * ky / safe, 0.0) * amp
        lam = np.zeros(grid.shape)
        cols = ((s11, s12), (s12, s22))  # columns of S
        for m in range(2):
            W = np.fft.rfft2(w[m])
            zx = np.fft.irfft2(rx * W, s=grid.shape)
            zy = np.fft.irfft2(ry * W, s=grid.shape)
            lam += cols[m][0] * zx + cols[m][1] * zy
    else:
        th = st.angles
        if grid == st.grid:
            root = np.sqrt(np.maximum(st.values, 0.0))
        else:
            pts = grid.points()
            root = np.sqrt(np.maximum(st.evaluate(pts[..., None, :], th[None, None, :]), 0.0))
        gam = np.fft.rfft(root, axis=-1) / st.n_ang
        w = _white(seed, 1, grid)[0]
        lam = gam[..., 0].real * np.fft.irfft2(amp * np.fft.rfft2(w), s=grid.shape)
        # harmonic n of sqrt(b) pairs with the noise filtered by exp(i n alpha(xi))
        W = np.fft.fft2(w)
        amp_full = np.sqrt(model.spectral_profile(KX, KY)) / grid.h
        e2 = np.exp(2j * np.arctan2(KY, KX))
        filt = amp_full * W
        for n in range(2, gam.shape[-1], 2):
            filt = filt * e2
            wgt = 1.0 if 2 * n == st.n_ang else 2.0
            lam += wgt * (gam[..., n] * np.fft.ifft2(filt)).real
    lam *= support_bump(grid, st.disk)
    return FieldRealization(grid, lam, int(seed), st.epsilon, st.fingerprint)


def sample_potential_field(grid: GridSpec2D, v: np.ndarray, epsilon: float = DEFAULT_EPSILON,
                           seed: int = 0, kappa: float = 1.0, disk: Disk = Disk()) -> FieldRealization:
    """q = (v . grad) Y with Y stationary, spectrum (kappa^2 + |xi|^2)^(-2-eps).

    The principal symbol of q is <xi^0, v v^T xi^0> |xi|^(-2-2eps), i.e. the
    quadratic strength with A = v v^T (see :func:`potential_anisotropy`).
    ``v`` has shape (2, nx, ny) on ``grid``.
    """
    v = np.asarray(v, dtype=float)
    if v.shape != (2,) + grid.shape:
        raise ConfigurationError("v must have shape (2, nx, ny)")
    if disk.diameter / grid.h < 16:
        raise ConfigurationError("grid too coarse for the support disk")
    KX, KY = grid.frequencies()
    ny = grid.shape[1]
    kx, ky = KX[:, : ny // 2 + 1], KY[:, : ny // 2 + 1]
    amp = (kappa ** 2 + kx ** 2 + ky ** 2) ** (-1.0 - 0.5 * epsilon) / grid.h
    W = np.fft.rfft2(_white(seed, 1, grid)[0])
    dx = np.fft.irfft2(1j * kx * amp * W, s=grid.shape)
    dy = np.fft.irfft2(1j * ky * amp * W, s=grid.shape)
    q = (v[0] * dx + v[1] * dy) * support_bump(grid, disk)
    h = hashlib.sha256(np.ascontiguousarray(v).tobytes()).hexdigest()[:16]
    return FieldRealization(grid, q, int(seed), epsilon, f"potential:{h}")


def covariance_kernel(model: CovarianceModel, z1, z2, grid: GridSpec2D | None = None) -> float:
    """c(z1, z2) = (2 pi)^-2 int exp(i (z1 - z2).xi) sigma(z1, xi) d xi.

    The integral is the discrete inverse transform over the sampling grid's
    frequencies (the same lattice the sampler uses), with x frozen at ``z1``.
    """
    grid = grid or model.strength.grid
    z1 = np.asarray(z1, dtype=float)[:2]
    z2 = np.asarray(z2, dtype=float)[:2]
    if not (grid.inside(z1) and grid.inside(z2)):
        raise ConfigurationError("covariance points must lie inside the grid")
    KX, KY = grid.frequencies()
    sig = model.symbol(z1, KX, KY)
    m = support_bump(grid, model.strength.disk)
    m1 = interpolate(grid, m, z1[None])[0]
    d = z1 - z2
    val = np.sum(sig * np.cos(KX * d[0] + KY * d[1])) / (grid.shape[0] * grid.shape[1] * grid.cell_area)
    return float(m1 * m1 * val)


@dataclass(frozen=True)
class Estimate:
    value: complex | float
    stderr: float
    n: int


def _check_same_model(realizations) -> None:
    if len(realizations) == 0:
        raise ContractError("no realizations given")
    r0 = realizations[0]
    for r in realizations[1:]:
        if r.grid != r0.grid or r.epsilon != r0.epsilon or r.strength_ref != r0.strength_ref:
            raise ContractError("realizations come from different models or grids")


def empirical_covariance(realizations, z1, z2) -> Estimate:
    """Sample mean of lambda(z1) lambda(z2) with its standard error."""
    _check_same_model(realizations)
    g = realizations[0].grid
    pts = np.array([np.asarray(z1, float)[:2], np.asarray(z2, float)[:2]])
    prods = np.array([np.prod(interpolate(g, r.values, pts)) for r in realizations])
    n = len(prods)
    se = float(np.std(prods, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return Estimate(float(np.mean(prods)), se, n)


def empirical_spectrum(realizations) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Average |F lambda|^2 over realizations on the grid's frequency mesh."""
    _check_same_model(realizations)
    g = realizations[0].grid
    acc = np.zeros(g.shape)
    for r in realizations:
        acc += np.abs(np.fft.fft2(r.values) * g.cell_area) ** 2
    KX, KY = g.frequencies()
    return KX, KY, acc / len(realizations)


def functional_second_moment(model: CovarianceModel, grid: GridSpec2D, weights: np.ndarray) -> float:
    """E|sum_x c(x) lambda(x)|^2 for the sampler's discrete field, without sampling.

    The sampler maps white noise linearly to lambda; the functional is
    rewritten as sum_x w(x) G(x) by transposing each filter (multiplier
    M(xi) becomes M(-xi)), so the second moment is sum |G|^2 over all noises.
    Nyquist bins are treated as in the full complex FFT, which differs from
    the sampler's real transforms only at those bins.
    """
    _check_sampling_grid(model, grid)
    st = model.strength
    c = np.asarray(weights) * support_bump(grid, st.disk)
    KX, KY = grid.frequencies()
    rho = np.hypot(KX, KY)
    amp = np.sqrt(model.spectral_profile(KX, KY)) / grid.h
    flip = (lambda M: np.roll(np.flip(M, axis=(0, 1)), 1, axis=(0, 1)))
    comps = _strength_on(model, grid)
    total = 0.0
    if comps is not None:
        s11, s22, s12 = psd_sqrt(*comps)
        safe = np.where(rho > 0, rho, 1.0)
        rx = np.where(rho > 0, 1j * KX / safe, 1.0) * amp
        ry = np.where(rho > 0, 1j * KY / safe, 0.0) * amp
        for col in ((s11, s12), (s12, s22)):
            G = (np.fft.ifft2(flip(rx) * np.fft.fft2(c * col[0]))
                 + np.fft.ifft2(flip(ry) * np.fft.fft2(c * col[1])))
            total += float(np.sum(np.abs(G) ** 2))
        return total
    th = st.angles
    if grid == st.grid:
        root = np.sqrt(np.maximum(st.values, 0.0))
    else:
        pts = grid.points()
        root = np.sqrt(np.maximum(st.evaluate(pts[..., None, :], th[None, None, :]), 0.0))
    gam = np.fft.rfft(root, axis=-1) / st.n_ang
    alpha = np.arctan2(KY, KX)
    G = np.fft.ifft2(flip(amp) * np.fft.fft2(c * gam[..., 0].real))
    for n in range(2, gam.shape[-1], 2):
        wgt = 0.5 if 2 * n == st.n_ang else 1.0
        M = np.exp(1j * n * alpha) * amp
        # Re(g Y) = (g Y + conj(g) conj(Y)) / 2 with conj(Y) filtered by conj(M(-xi))
        G = G + wgt * (np.fft.ifft2(flip(M) * np.fft.fft2(c * gam[..., n]))
                       + np.fft.ifft2(np.conj(M) * np.fft.fft2(c * np.conj(gam[..., n]))))
    return float(np.sum(np.abs(G) ** 2))
