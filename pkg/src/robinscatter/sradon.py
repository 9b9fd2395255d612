"""Anisotropic spherical Radon transform, its null space and Fourier slices.

For a strength b(x, theta) on the plane,

    (S b)(x', r) = int_{S^1} b(x' + r theta, theta) d|theta|

with d|theta| the arc-length measure on the unit circle.  Taking the Fourier
transform in x' gives, per frequency xi,

    (F S b)(xi, r) = int e^{i r theta.xi} (F b)(xi, theta) d|theta|.

Writing theta = alpha(xi) + psi and expanding the pi-periodic angular profile
g(psi) = (F b)(xi, alpha + psi) in cos(2 m psi), sin(2 m psi), the sine modes
integrate to zero (they span the null space) and the cosine modes contribute
2 pi (-1)^m c_m J_{2m}(r |xi|).  The fitted c_m determine exactly two values
of g that the null space cannot change: g(0) = sum c_m and g(pi/2) = sum (-1)^m c_m.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import map_coordinates
from scipy.special import jv

from .errors import ConfigurationError, ContractError, DomainError
from .field_synth import LocalStrength, inverse_spatial_fft, spatial_fft
from .grid import GridSpec2D


# ---------------------------------------------------------------------------
# angular fields


@dataclass(frozen=True, eq=False)
class AngularField:
    """Real function f(x, theta), pi-periodic in theta, stored by even harmonics.

    ``coeffs[j]`` is the coefficient field of exp(2 i j theta) for j >= 0, so
    f = Re(coeffs[0]) + 2 Re sum_{j>0} coeffs[j] exp(2 i j theta).  No sign or
    support constraint is imposed, which lets null-space components (which are
    neither nonnegative nor compactly supported) be represented.  With
    ``periodic`` the field is read as periodic over the grid box; otherwise it
    is extended by zero.
    """

    grid: GridSpec2D
    coeffs: np.ndarray
    periodic: bool = False

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.ndim != 3 or c.shape[1:] != self.grid.shape:
            raise ConfigurationError("coefficients must have shape (n_harm, nx, ny)")
        object.__setattr__(self, "coeffs", c)

    @property
    def n_harm(self) -> int:
        return self.coeffs.shape[0]

    @classmethod
    def from_samples(cls, grid: GridSpec2D, values: np.ndarray, periodic: bool = False,
                     tol: float = 1e-12) -> "AngularField":
        """From samples at equispaced angles; trailing negligible harmonics are dropped."""
        n_ang = values.shape[-1]
        c = np.moveaxis(np.fft.rfft(values, axis=-1) / n_ang, -1, 0)
        scale = max(float(np.max(np.abs(c))), 1e-300)
        odd = np.max(np.abs(c[1::2])) if c.shape[0] > 1 else 0.0
        if odd > 1e3 * tol * scale + 1e-14 * scale:
            raise ContractError("f(x, theta) is not even in theta (odd harmonics present)")
        even = c[0::2].copy()
        if 2 * (even.shape[0] - 1) == n_ang:
            # Nyquist harmonic is real-weighted once; fold it in with half weight
            even[-1] *= 0.5
        mags = np.max(np.abs(even.reshape(even.shape[0], -1)), axis=1)
        keep = np.nonzero(mags > tol * scale)[0]
        nk = int(keep[-1]) + 1 if keep.size else 1
        return cls(grid, even[:nk], periodic)

    @classmethod
    def from_strength(cls, strength: LocalStrength, periodic: bool = False) -> "AngularField":
        if strength.anisotropy is not None:
            A = strength.anisotropy
            c = np.stack([0.5 * (A.a1 + A.a2) + 0j,
                          0.25 * (A.a1 - A.a2) - 0.5j * A.a3])
            return cls(strength.grid, c, periodic)
        return cls.from_samples(strength.grid, strength.values, periodic)

    @classmethod
    def from_quadratic(cls, grid: GridSpec2D, a1, a2, a3, periodic: bool = False) -> "AngularField":
        c = np.stack([0.5 * (np.asarray(a1) + a2) + 0j, 0.25 * (np.asarray(a1) - a2) - 0.5j * np.asarray(a3)])
        return cls(grid, c, periodic)

    def at_angle(self, theta: float) -> np.ndarray:
        """f(., theta) on the grid."""
        out = self.coeffs[0].real.copy()
        for j in range(1, self.n_harm):
            out += 2.0 * (self.coeffs[j] * np.exp(2j * j * theta)).real
        return out

    def samples(self, n_ang: int) -> np.ndarray:
        th = 2.0 * np.pi * np.arange(n_ang) / n_ang
        return np.stack([self.at_angle(t) for t in th], axis=-1)

    def quadratic_components(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(a1, a2, a3) of the quadratic form, valid when only harmonics 0 and 2 are present."""
        if self.n_harm > 2 and np.max(np.abs(self.coeffs[2:])) > 0:
            raise ContractError("field has harmonics above 2; it is not a quadratic form")
        c0 = self.coeffs[0].real
        c2 = self.coeffs[1] if self.n_harm > 1 else np.zeros(self.grid.shape, complex)
        return c0 + 2 * c2.real, c0 - 2 * c2.real, -2 * c2.imag

    def __add__(self, other: "AngularField") -> "AngularField":
        if other.grid != self.grid:
            raise ConfigurationError("fields live on different grids")
        n = max(self.n_harm, other.n_harm)
        c = np.zeros((n,) + self.grid.shape, complex)
        c[: self.n_harm] += self.coeffs
        c[: other.n_harm] += other.coeffs
        return AngularField(self.grid, c, self.periodic or other.periodic)

    def scaled(self, t: float) -> "AngularField":
        return AngularField(self.grid, t * self.coeffs, self.periodic)

    def spectra(self) -> np.ndarray:
        """Spatial Fourier transforms of +n and -n harmonics, shape (2, n_harm, nx, ny)."""
        pos = spatial_fft(self.grid, np.moveaxis(self.coeffs, 0, -1))
        neg = spatial_fft(self.grid, np.moveaxis(np.conj(self.coeffs), 0, -1))
        return np.stack([np.moveaxis(pos, -1, 0), np.moveaxis(neg, -1, 0)])


def _as_field(f) -> AngularField:
    if isinstance(f, AngularField):
        return f
    if isinstance(f, LocalStrength):
        return AngularField.from_strength(f)
    raise ContractError("expected a LocalStrength or AngularField")


# ---------------------------------------------------------------------------
# forward transform


@dataclass(frozen=True, eq=False)
class RadonGrid:
    """(S b)(x', r): ``values[..., q]`` at ``centers[...]`` and ``radii[q]``.

    ``center_grid`` is set when the centers form a uniform grid.
    """

    centers: np.ndarray
    radii: np.ndarray
    values: np.ndarray
    center_grid: GridSpec2D | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise ContractError("Radon values must be finite")


def default_n_theta(r_max: float, h: float, minimum: int = 64) -> int:
    """Even angle count with arc spacing at radius ``r_max`` no coarser than ``h``."""
    n = max(minimum, int(math.ceil(2.0 * math.pi * r_max / h)))
    return n + (n % 2)


def _theta_groups(radii: np.ndarray, n_theta, h: float) -> list[tuple[int, np.ndarray]]:
    """Group radii by angle count: a fixed count, or "auto" (per radius, multiples of 32)."""
    if n_theta != "auto":
        n = int(n_theta) if n_theta is not None else default_n_theta(float(radii.max()), h)
        if n < 64 or n % 2:
            raise ConfigurationError("n_theta must be even and >= 64")
        return [(n, np.arange(radii.size))]
    counts = np.array([32 * math.ceil(default_n_theta(float(r), h) / 32) for r in radii])
    return [(int(c), np.nonzero(counts == c)[0]) for c in np.unique(counts)]


def radon_forward(f, centers, radii, n_theta: int | None = None,
                  boundary: str | None = None) -> RadonGrid:
    """Ring quadrature of b(x' + r theta, theta) with bilinear interpolation of b.

    ``centers`` is a GridSpec2D or an array of planar points.  ``n_theta``
    trapezoid angles (default: arc spacing at the largest radius no coarser
    than the strength grid spacing, at least 64); ``"auto"`` picks the count
    per radius.  ``boundary``: ``"strict"``
    raises when a circle leaves the strength grid, ``"zero"`` extends b by
    zero, ``"periodic"`` wraps; default follows the field (periodic or strict).
    """
    fld = _as_field(f)
    g = fld.grid
    radii = np.asarray(radii, dtype=float)
    if radii.ndim != 1 or np.any(radii < 0):
        raise ConfigurationError("radii must be a 1-D array of nonnegative values")
    cgrid = centers if isinstance(centers, GridSpec2D) else None
    pts = centers.points() if cgrid is not None else np.asarray(centers, dtype=float)
    if boundary is None:
        boundary = "periodic" if fld.periodic else "strict"
    if boundary not in ("strict", "zero", "periodic"):
        raise ConfigurationError(f"unknown boundary mode {boundary!r}")
    rmax = float(radii.max()) if radii.size else 0.0
    if boundary == "strict":
        x, y = g.axes()
        lo = pts.reshape(-1, 2).min(axis=0) - rmax
        hi = pts.reshape(-1, 2).max(axis=0) + rmax
        if lo[0] < x[0] or lo[1] < y[0] or hi[0] > x[-1] or hi[1] > y[-1]:
            raise DomainError("circles of integration leave the strength grid")
    stride = _aligned_stride(g, cgrid) if cgrid is not None else None
    out = np.zeros(pts.shape[:-1] + radii.shape)
    hx, hy = g.spacing
    fx = (pts[..., 0] - g.origin[0]) / hx
    fy = (pts[..., 1] - g.origin[1]) / hy
    mode = "grid-wrap" if boundary == "periodic" else "constant"
    groups = _theta_groups(radii, n_theta, g.h)
    for nt, sel in groups:
        w = 2.0 * np.pi / nt
        rs = radii[sel]
        # strided sums pay a full-field synthesis per angle; worth it only for many centers
        if stride is not None and 8 * rs.size * math.prod(cgrid.shape) >= math.prod(g.shape):
            out[..., sel] = w * _radon_strided(fld, cgrid, stride, rs, nt, boundary)
            continue
        out[..., sel] = w * _radon_scattered(fld, fx, fy, rs, nt, mode).reshape(
            pts.shape[:-1] + rs.shape)
    n_theta = groups[0][0] if len(groups) == 1 else "auto"
    return RadonGrid(pts, radii, out, cgrid, {"n_theta": n_theta, "boundary": boundary})


def _radon_scattered(fld: AngularField, fx, fy, radii, n_theta: int, mode: str,
                     chunk: int = 1 << 20) -> np.ndarray:
    """Ring sums at arbitrary centers (fractional indices fx, fy).

    The harmonic coefficient fields are interpolated at the circle points and
    combined with exp(2 i j theta) there, which avoids synthesising b on the
    whole grid for every angle.
    """
    hx, hy = fld.grid.spacing
    th = 2.0 * np.pi * np.arange(n_theta) / n_theta
    fx = np.asarray(fx).ravel()
    fy = np.asarray(fy).ravel()
    acc = np.zeros((fx.size, radii.size))
    planes = [fld.coeffs[0].real]
    for j in range(1, fld.n_harm):
        planes += [fld.coeffs[j].real, fld.coeffs[j].imag]
    per = max(1, chunk // max(1, fx.size * radii.size))
    for a in range(0, n_theta, per):
        t = th[a:a + per]
        cx = fx[:, None, None] + radii[None, :, None] * (np.cos(t) / hx)[None, None, :]
        cy = fy[:, None, None] + radii[None, :, None] * (np.sin(t) / hy)[None, None, :]
        coords = np.stack([cx.ravel(), cy.ravel()])
        val = map_coordinates(planes[0], coords, order=1, mode=mode, cval=0.0,
                              prefilter=False).reshape(cx.shape)
        for j in range(1, fld.n_harm):
            re = map_coordinates(planes[2 * j - 1], coords, order=1, mode=mode, cval=0.0,
                                 prefilter=False).reshape(cx.shape)
            im = map_coordinates(planes[2 * j], coords, order=1, mode=mode, cval=0.0,
                                 prefilter=False).reshape(cx.shape)
            val += 2.0 * (re * np.cos(2 * j * t) - im * np.sin(2 * j * t))
        acc += val.sum(axis=-1)
    return acc


def _aligned_stride(g: GridSpec2D, cgrid: GridSpec2D) -> int | None:
    """Integer m when center nodes are every m-th strength node (up to an integer offset)."""
    m = cgrid.h / g.h
    off = np.array(cgrid.origin) - np.array(g.origin)
    if abs(m - round(m)) > 1e-9 or round(m) < 1:
        return None
    if np.any(np.abs(off / g.h - np.round(off / g.h)) > 1e-9):
        return None
    return int(round(m))


def _radon_strided(fld: AngularField, cgrid: GridSpec2D, m: int, radii, n_theta: int,
                   boundary: str) -> np.ndarray:
    """Ring sums for centers aligned with the strength grid.

    For fixed (theta, r) the shift r*theta is the same for every center, so the
    bilinear weights are constant and the samples are four strided slices of
    the (padded) field.
    """
    g = fld.grid
    h = g.h
    ncx, ncy = cgrid.shape
    off = np.rint((np.array(cgrid.origin) - np.array(g.origin)) / h).astype(int)
    reach = int(math.ceil(float(np.max(radii)) / h)) + 2 if radii.size else 2
    lo_x = max(0, -(off[0] - reach))
    lo_y = max(0, -(off[1] - reach))
    hi_x = max(0, off[0] + m * (ncx - 1) + reach + 2 - g.shape[0])
    hi_y = max(0, off[1] + m * (ncy - 1) + reach + 2 - g.shape[1])
    pad = ((lo_x, hi_x), (lo_y, hi_y))
    out = np.zeros((ncx, ncy, radii.size))
    for j in range(n_theta):
        th = 2.0 * np.pi * j / n_theta
        bj = fld.at_angle(th)
        P = np.pad(bj, pad, mode="wrap" if boundary == "periodic" else "constant")
        sx = radii * math.cos(th) / h
        sy = radii * math.sin(th) / h
        ix = np.floor(sx).astype(int)
        iy = np.floor(sy).astype(int)
        tx = sx - ix
        ty = sy - iy
        for q in range(radii.size):
            a = off[0] + lo_x + ix[q]
            b = off[1] + lo_y + iy[q]
            sl = lambda da, db: P[a + da: a + da + m * (ncx - 1) + 1: m,
                                  b + db: b + db + m * (ncy - 1) + 1: m]
            out[..., q] += ((1 - tx[q]) * ((1 - ty[q]) * sl(0, 0) + ty[q] * sl(0, 1))
                            + tx[q] * ((1 - ty[q]) * sl(1, 0) + ty[q] * sl(1, 1)))
    return out


# ---------------------------------------------------------------------------
# Fourier analysis


@dataclass(frozen=True, eq=False)
class FourierRadon:
    """(F S b)(xi, r) on the center grid's frequency mesh (fft2 ordering)."""

    grid: GridSpec2D
    radii: np.ndarray
    values: np.ndarray

    def frequencies(self):
        return self.grid.frequencies()


def fourier_radon(rgrid: RadonGrid) -> FourierRadon:
    """Continuous-normalised 2-D Fourier transform over centers, per radius."""
    if rgrid.center_grid is None:
        raise ConfigurationError("fourier_radon needs centers on a uniform grid (unsupported layout)")
    return FourierRadon(rgrid.center_grid, rgrid.radii, spatial_fft(rgrid.center_grid, rgrid.values))


def harmonic_spectra_on(fld: AngularField, grid: GridSpec2D) -> np.ndarray:
    """Fourier transforms of the +-n harmonic fields evaluated on ``grid``'s frequency lattice.

    The field is zero-padded to the target box when the target box is larger
    (the target lattice must then be a sub-lattice of the padded one).
    Returns shape (2, n_harm, nx, ny) for (+n, -n).
    """
    g = fld.grid
    if grid == g:
        return fld.spectra()
    Lx = grid.extent[0]
    n = int(round(Lx / g.h))
    if abs(n * g.h - Lx) > 1e-9 * Lx or grid.extent[0] != grid.extent[1]:
        raise ConfigurationError("target box must be a whole number of strength-grid cells")
    if n < g.shape[0]:
        raise ConfigurationError("target box smaller than the strength grid")
    N = 1 << (n - 1).bit_length()
    big = GridSpec2D((g.origin[0], g.origin[1]), (N * g.h, N * g.h), (N, N))
    if abs(N * g.h - Lx) > 1e-9 * Lx:
        raise ConfigurationError("target box extent must be a power-of-two multiple of the spacing")
    c = np.zeros((fld.n_harm, N, N), complex)
    c[:, : g.shape[0], : g.shape[1]] = fld.coeffs
    spec = AngularField(big, c).spectra()
    KX, KY = grid.frequencies()
    step = 2.0 * np.pi / (N * g.h)
    ix = np.rint(KX / step).astype(int) % N
    iy = np.rint(KY / step).astype(int) % N
    return spec[:, :, ix, iy]


def fourier_radon_identity(f, grid: GridSpec2D, radii) -> np.ndarray:
    """Right-hand side sum_n (F b_n)(xi) 2 pi i^n J_n(r |xi|) e^{i n alpha(xi)}.

    Evaluated directly from the strength's harmonic spectra (Jacobi-Anger);
    used as an oracle for :func:`fourier_radon`.
    """
    fld = _as_field(f)
    spec = harmonic_spectra_on(fld, grid)
    KX, KY = grid.frequencies()
    rho = np.hypot(KX, KY)
    alpha = np.arctan2(KY, KX)
    radii = np.asarray(radii, dtype=float)
    out = np.zeros(grid.shape + radii.shape, complex)
    for j in range(fld.n_harm):
        n = 2 * j
        J = jv(n, rho[..., None] * radii)
        # J_{-n} = (-1)^n J_n = J_n for even n
        ph = (1j ** n) * 2.0 * np.pi * J
        out += spec[0, j][..., None] * np.exp(1j * n * alpha)[..., None] * ph
        if j > 0:
            out += spec[1, j][..., None] * np.exp(-1j * n * alpha)[..., None] * ph
    return out


def direct_slices(f, grid: GridSpec2D) -> tuple[np.ndarray, np.ndarray]:
    """(F b)(xi, xi^0) and (F b)(xi, (xi^0)^perp) computed from b directly."""
    fld = _as_field(f)
    spec = harmonic_spectra_on(fld, grid)
    KX, KY = grid.frequencies()
    alpha = np.arctan2(KY, KX)
    par = np.zeros(grid.shape, complex)
    perp = np.zeros(grid.shape, complex)
    for j in range(fld.n_harm):
        n = 2 * j
        for sgn, s in ((1, spec[0, j]), (-1, spec[1, j])):
            if j == 0 and sgn < 0:
                continue
            par += s * np.exp(1j * sgn * n * alpha)
            perp += s * np.exp(1j * sgn * n * (alpha + np.pi / 2))
    return par, perp


@dataclass(frozen=True, eq=False)
class SpectralSlices:
    """Fourier slices on a frequency lattice; ``mask`` marks well-conditioned xi.

    ``trace`` is slice_par + slice_perp, which at xi = 0 holds tr(A)^(0)
    obtained from the r-independent DC of the transform.
    """

    grid: GridSpec2D
    slice_par: np.ndarray
    slice_perp: np.ndarray
    mask: np.ndarray
    cond: np.ndarray
    modes: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def trace(self) -> np.ndarray:
        return self.slice_par + self.slice_perp

    @property
    def masked_fraction(self) -> float:
        """Fraction of non-DC frequencies inside the fitted band that were masked."""
        KX, KY = self.grid.frequencies()
        rho = np.hypot(KX, KY)
        band = (rho > 0) & (rho <= self.diagnostics.get("xi_max", np.inf))
        return float(1.0 - self.mask[band].mean()) if band.any() else 0.0


def extract_slices(fr: FourierRadon, r_window=None, M: int = 8, ridge: float = 1e-8,
                   cond_cap: float = 1e6, xi_max: float | None = None) -> SpectralSlices:
    """Per-xi ridge fit of even angular modes against the radial Bessel system.

    For each xi the data y(r) = (F S b)(xi, r), r in ``r_window``, is fitted by
    sum_m c_m 2 pi (-1)^m J_{2m}(r |xi|), m <= M_eff(xi), where M_eff keeps only
    modes whose Bessel turning point lies in the first half of the window
    (2m <= r_max |xi| / 2, at least one mode).  Modes beyond that are nearly
    collinear on the window and would amplify quadrature error into the
    slices.  Regularisation is Tikhonov with weight
    ``ridge`` times the largest singular value.  xi with condition number above
    ``cond_cap`` (or beyond ``xi_max``) are masked and set to zero.
    """
    r = fr.radii
    sel = np.ones(r.shape, bool) if r_window is None else (r >= r_window[0]) & (r <= r_window[1])
    r = r[sel]
    if r.size < 4:
        raise ConfigurationError("radial window holds fewer than 4 radii")
    Y = fr.values[..., sel]
    KX, KY = fr.grid.frequencies()
    rho = np.hypot(KX, KY)
    if xi_max is None:
        xi_max = 0.5 * fr.grid.nyquist
    rmax = float(r.max())
    if rmax * float(rho[rho <= xi_max].max()) < 4.0 * np.pi:
        raise ConfigurationError("radial window spans fewer than two oscillations at the top frequency "
                                 "(refine the center grid or widen the window)")
    par = np.zeros(rho.shape, complex)
    perp = np.zeros(rho.shape, complex)
    mask = np.zeros(rho.shape, bool)
    cond = np.full(rho.shape, np.inf)
    modes = np.zeros(rho.shape, int)
    # frequencies sharing |xi| share the design matrix
    scale = fr.grid.nyquist
    uniq, inv = np.unique(np.round(rho.ravel() / scale, 12), return_inverse=True)
    Yf = Y.reshape(-1, r.size)
    for u in range(uniq.size):
        idx = np.nonzero(inv == u)[0]
        q = float(rho.ravel()[idx[0]])
        if q > xi_max:
            continue
        if q == 0.0:
            # xi^0 is undefined; only the trace (2 c_0) is meaningful here
            m_eff = 0
        else:
            m_eff = int(min(M, max(1, math.floor(rmax * q / 4.0))))
        ms = np.arange(m_eff + 1)
        Amat = 2.0 * np.pi * ((-1.0) ** ms)[None, :] * jv(2 * ms[None, :], q * r[:, None])
        U, s, Vt = np.linalg.svd(Amat, full_matrices=False)
        c_num = s[0] / s[-1] if s[-1] > 0 else np.inf
        flat = np.unravel_index(idx, rho.shape)
        cond[flat] = c_num
        modes[flat] = m_eff
        if c_num > cond_cap:
            continue
        tau = ridge * s[0]
        filt = s / (s * s + tau * tau)
        C = ((Yf[idx] @ U) * filt) @ Vt  # (n_xi, modes); the design matrix is real
        par[flat] = C.sum(axis=1)
        perp[flat] = (C * ((-1.0) ** ms)).sum(axis=1)
        mask[flat] = q > 0.0
    return SpectralSlices(fr.grid, par, perp, mask, cond, modes,
                          {"r_window": [float(r.min()), rmax], "M": M, "ridge": ridge,
                           "cond_cap": cond_cap, "xi_max": xi_max})


# ---------------------------------------------------------------------------
# null space


def null_space_project(f) -> tuple[AngularField, AngularField]:
    """Split f into (null-space part, symmetric complement).

    Per xi the angular profile of (F f)(xi, .) is antisymmetrised about the
    axis through xi^0 (equivalently (xi^perp)^0 for pi-periodic profiles):
    in harmonics, P F_n = (F_n - exp(-2 i n alpha) F_{-n}) / 2.  At xi = 0 the
    axis is taken as alpha = 0.  The result is periodic over the grid box.
    """
    fld = _as_field(f)
    g = fld.grid
    KX, KY = g.frequencies()
    alpha = np.arctan2(KY, KX)
    spec = fld.spectra()
    proj = np.zeros_like(fld.coeffs)
    # Nyquist rows/columns have no distinct partner -xi; they stay in the complement
    nyq = np.zeros(g.shape, bool)
    nyq[g.shape[0] // 2, :] = True
    nyq[:, g.shape[1] // 2] = True
    for j in range(1, fld.n_harm):
        n = 2 * j
        Pn = 0.5 * (spec[0, j] - np.exp(-2j * n * alpha) * spec[1, j])
        Pn[nyq] = 0.0
        proj[j] = inverse_spatial_fft(g, Pn[..., None])[..., 0]
    null = AngularField(g, proj, periodic=True)
    comp = AngularField(g, fld.coeffs - proj, periodic=True)
    return null, comp


def check_evenness(values: np.ndarray, tol: float = 1e-10) -> None:
    half = values.shape[-1] // 2
    scale = max(float(np.max(np.abs(values))), 1e-300)
    if np.max(np.abs(values - np.roll(values, half, axis=-1))) > tol * scale:
        raise ContractError("input violates evenness f(x, theta) = f(x, -theta)")


def warn_masked(slices: SpectralSlices, limit: float = 0.2) -> None:
    if slices.masked_fraction > limit:
        warnings.warn(f"{100 * slices.masked_fraction:.1f}% of frequencies masked; zero-filled",
                      RuntimeWarning, stacklevel=3)
