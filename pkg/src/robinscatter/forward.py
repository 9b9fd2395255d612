"""Half-space Helmholtz scattering from a random Robin boundary.

Conventions: the boundary is the plane x3 = 0, the medium is x3 > 0 and the
Robin coefficient at wavenumber k is lambda_k = lambda / k**p.  Both boundary
single-layer operators use the kernel g_k(x - z) = exp(ik|x-z|) / (4 pi |x-z|);
the image source is already folded into the incident field u_in = 2 g_k(z - y).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.sparse.linalg import LinearOperator, gmres

from .errors import (AccuracyError, AliasingError, AssumptionViolation, ConfigurationError,
                     ContractError, DomainError, SingularityError, SolverError)
from .field_synth import CovarianceModel, Estimate, FieldRealization, sample_field
from .grid import Disk, GridSpec2D
from .parallel import ordered_map, ordered_sum

# integral of 1/|x| over the square [-1/2, 1/2]^2
_SELF_CELL = 4.0 * math.log(1.0 + math.sqrt(2.0))


# ---------------------------------------------------------------------------
# configuration and data types


@dataclass(frozen=True, eq=False)
class MeasurementConfig:
    """Measurement points and band-quadrature settings.

    ``p`` defaults to ``epsilon + 1``.  The band [1, K] is split into unit-width
    Gauss-Legendre panels with ``nodes_per_unit`` nodes each.
    """

    points: np.ndarray
    band: tuple[float, float] = (1.0, 200.0)
    p: float | None = None
    epsilon: float = 0.5
    nodes_per_unit: int = 8
    disk: Disk = Disk()

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.shape[-1] != 3:
            raise ConfigurationError("measurement points must be 3-vectors")
        object.__setattr__(self, "points", pts)
        if self.p is None:
            object.__setattr__(self, "p", self.epsilon + 1.0)
        if not self.epsilon > 0:
            raise ConfigurationError("epsilon must be positive")
        if not self.p > self.epsilon + 0.5:
            raise AssumptionViolation("(A4)", f"p ≤ ε + 1/2 (p = {self.p}, ε = {self.epsilon})")
        if np.any(pts[:, 2] <= 0):
            raise DomainError("measurement points need x3 > 0")
        inside = self.disk.contains(pts[:, :2])
        if np.any(inside):
            bad = pts[np.argmax(inside)]
            raise AssumptionViolation(
                "(A3)", f"projection ({bad[0]:g}, {bad[1]:g}) of a measurement point lies in D")
        lo, hi = self.band
        if lo != 1.0 or not hi > 1.0:
            raise ConfigurationError("band must be [1, K] with K > 1")
        if hi < 8:
            warnings.warn(f"band [1, {hi:g}] is short; ergodic averaging is unreliable (K < 8)",
                          RuntimeWarning, stacklevel=3)
        if self.nodes_per_unit < 8:
            raise ConfigurationError("use at least 8 quadrature nodes per unit k")

    @property
    def K(self) -> float:
        return float(self.band[1])

    @property
    def n_panels(self) -> int:
        return max(1, math.ceil(self.K - 1.0 - 1e-12))

    @property
    def band_nodes(self) -> int:
        return self.n_panels * self.nodes_per_unit

    def quadrature(self) -> tuple[np.ndarray, np.ndarray]:
        """Band nodes and weights (weights sum to K - 1)."""
        t, w = leggauss(self.nodes_per_unit)
        edges = np.linspace(1.0, self.K, self.n_panels + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        nodes = (mid[:, None] + half[:, None] * t[None, :]).ravel()
        weights = (half[:, None] * w[None, :]).ravel()
        return nodes, weights

    def panel_edges(self) -> np.ndarray:
        return np.linspace(1.0, self.K, self.n_panels + 1)

    def to_dict(self) -> dict:
        return {"points": self.points.tolist(), "band": list(self.band), "p": self.p,
                "epsilon": self.epsilon, "nodes_per_unit": self.nodes_per_unit,
                "disk": self.disk.to_dict()}


@dataclass(frozen=True, eq=False)
class BoundaryDensity:
    grid: GridSpec2D
    values: np.ndarray
    k: float
    residual_history: list = field(default_factory=list)

    def norm(self) -> float:
        return float(np.linalg.norm(self.values) * self.grid.h)


@dataclass(frozen=True, eq=False)
class MeasureResult:
    """Band average with diagnostics.

    ``running`` holds the average over [1, K'] at every panel end K'; ``tail``
    is the relative change of the running average over the last quarter of
    the band.
    """

    value: float
    nodes: np.ndarray
    integrand: np.ndarray
    running_K: np.ndarray
    running: np.ndarray
    tail: float


@dataclass(frozen=True, eq=False)
class BackscatterDataset:
    config: MeasurementConfig
    n0: np.ndarray
    stderr: np.ndarray
    solver: str = "born"
    seed: int | None = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        n0 = np.asarray(self.n0, dtype=float)
        if n0.shape != (len(self.config.points),):
            raise ContractError("n0 must have one value per measurement point")
        if not np.all(np.isfinite(n0)):
            raise ContractError("n0 must be finite")
        object.__setattr__(self, "n0", n0)
        object.__setattr__(self, "stderr", np.broadcast_to(
            np.asarray(self.stderr, dtype=float), n0.shape).copy())


# ---------------------------------------------------------------------------
# kernels


def greens(x, k: float):
    """g_k(x) = exp(ik|x|) / (4 pi |x|) for 3-vectors (vectorised on leading axes)."""
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1)
    if np.any(r == 0):
        raise SingularityError("greens evaluated at |x| = 0")
    out = np.exp(1j * k * r) / (4.0 * np.pi * r)
    return out if out.ndim else complex(out)


def incident(z, y, k: float):
    """Incident field on the boundary, u_in(z; y, k) = 2 g_k(z - y)."""
    z = np.asarray(z, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(np.abs(z[..., 2]) > 0):
        raise DomainError("incident: z must lie on the boundary plane")
    if y[2] <= 0:
        raise DomainError("incident: source needs y3 > 0")
    return 2.0 * greens(z - y, k)


def incident_full(x, y, k: float):
    """u_in(x; y, k) = g_k(x - y) + g_k(x~ - y) anywhere in the closed half space."""
    x = np.asarray(x, dtype=float)
    xr = x * np.array([1.0, 1.0, -1.0])
    return greens(x - np.asarray(y, float), k) + greens(xr - np.asarray(y, float), k)


def _M2(rho, k):
    """Continuous second antiderivative in rho of the radial multiplier, M2(0) = M2'(0) = 0."""
    rho = np.abs(np.asarray(rho, dtype=float))
    out = np.empty(rho.shape, dtype=complex)
    ins = rho <= k
    r = rho[ins]
    out[ins] = 0.5j * (r * np.arcsin(r / k) + np.sqrt(k * k - r * r) - k)
    r = rho[~ins]
    m2k = 0.5j * (k * np.pi / 2 - k)
    out[~ins] = (m2k + 0.25j * np.pi * (r - k)
                 + 0.5 * (r * np.arccosh(r / k) - np.sqrt(r * r - k * k)))
    return out


def slp_multiplier(KX, KY, k: float, dxi: float) -> np.ndarray:
    """Symbol of S_k^B on a frequency mesh of cell width ``dxi``.

    1/(2 sqrt(|xi|^2 - k^2)) outside the circle |xi| = k and
    i/(2 sqrt(k^2 - |xi|^2)) inside.  Cells within two widths of the circle get
    the exact average of the symbol over the cell, from the second radial
    antiderivative and the trapezoidal width profile of a square seen along a
    direction.
    """
    rho = np.hypot(KX, KY)
    with np.errstate(divide="ignore"):
        m = np.where(rho > k, 0.5 / np.sqrt(np.abs(rho ** 2 - k ** 2)),
                     0.5j / np.sqrt(np.abs(k ** 2 - rho ** 2)) + 0j)
    near = np.abs(rho - k) < 2.0 * dxi
    if not near.any():
        return m
    rc = rho[near]
    c = np.abs(KX[near]) / rc
    s = np.abs(KY[near]) / rc
    a = 0.5 * (c + s) * dxi
    b = 0.5 * np.abs(c - s) * dxi
    ramp = np.minimum(c, s) * dxi
    height = dxi / np.maximum(c, s)
    val = np.empty(rc.shape, dtype=complex)
    tr = ramp > 1e-9 * dxi
    val[tr] = (height[tr] / ramp[tr]) * (_M2(rc[tr] - a[tr], k) - _M2(rc[tr] - b[tr], k)
                                         - _M2(rc[tr] + b[tr], k) + _M2(rc[tr] + a[tr], k))
    box = ~tr
    if box.any():
        # axis-aligned direction: the cell profile is a box of width dxi
        hh = 1e-4 * dxi

        def M1(r):
            return (_M2(r + hh, k) - _M2(r - hh, k)) / (2 * hh)

        val[box] = dxi * (M1(rc[box] + dxi / 2) - M1(rc[box] - dxi / 2))
    m[near] = val / dxi ** 2
    return m


def _next_pow2(n: int) -> int:
    return 1 << max(0, int(n - 1).bit_length())


class SlpOperator:
    """S_k^B as a zero-padded Fourier multiplier on a window of grid nodes.

    The frequency lattice is shifted by half a cell so |xi| = k never falls on
    a node.  ``window`` is ``(i0, j0, ni, nj)`` in grid indices.
    """

    def __init__(self, grid: GridSpec2D, k: float, window=None, pad: int = 4, shift: bool = True):
        if not k > 0:
            raise ConfigurationError("wavenumber must be positive")
        if grid.nyquist <= 2.0 * k:
            raise AliasingError(
                f"grid Nyquist {grid.nyquist:.3g} does not exceed 2k = {2 * k:.3g}")
        self.grid, self.k = grid, float(k)
        self.window = window or (0, 0) + grid.shape
        i0, j0, ni, nj = self.window
        N = _next_pow2(max(2, pad) * max(ni, nj))
        self.N = N
        h = grid.h
        d = 2.0 * np.pi / (N * h)
        self.delta = 0.5 * d if shift else 0.0
        f = 2.0 * np.pi * np.fft.fftfreq(N, d=h) + self.delta
        KX, KY = np.meshgrid(f, f, indexing="ij")
        self.m = slp_multiplier(KX, KY, self.k, d)
        self.E = np.exp(-1j * self.delta * h * np.arange(N))

    def _apply(self, phi, mult):
        ni, nj = self.window[2:]
        P = np.zeros((self.N, self.N), dtype=complex)
        P[:ni, :nj] = phi * self.E[:ni, None] * self.E[None, :nj]
        out = np.fft.ifft2(np.fft.fft2(P) * mult)[:ni, :nj]
        return out * np.conj(self.E[:ni, None]) * np.conj(self.E[None, :nj])

    def apply(self, phi: np.ndarray) -> np.ndarray:
        return self._apply(phi, self.m)

    def adjoint(self, phi: np.ndarray) -> np.ndarray:
        return self._apply(phi, np.conj(self.m))


def disk_window(grid: GridSpec2D, disk: Disk) -> tuple[tuple[int, int, int, int], np.ndarray]:
    """Smallest index window containing D's nodes, and the D mask on it."""
    mask = disk.contains(grid.points())
    ii, jj = np.nonzero(mask)
    if ii.size == 0:
        raise ConfigurationError("no grid nodes inside D")
    i0, i1, j0, j1 = ii.min(), ii.max(), jj.min(), jj.max()
    win = (int(i0), int(j0), int(i1 - i0 + 1), int(j1 - j0 + 1))
    return win, mask[i0:i1 + 1, j0:j1 + 1]


def apply_slp_boundary(phi: BoundaryDensity, k: float | None = None, disk: Disk | None = None,
                       pad: int = 4, shift: bool = True) -> np.ndarray:
    """S_k^B phi on the whole grid via the Fourier multiplier."""
    k = phi.k if k is None else k
    if disk is not None:
        outside = ~disk.contains(phi.grid.points())
        if np.any(phi.values[outside] != 0):
            raise ContractError("density must be supported in D")
    return SlpOperator(phi.grid, k, pad=pad, shift=shift).apply(phi.values)


def apply_slp_direct(phi: BoundaryDensity, k: float | None = None, chunk: int = 2048) -> np.ndarray:
    """Nystrom quadrature of S_k^B phi with the self-cell singularity integrated exactly.

    The 1/(4 pi r) part of the diagonal cell is integrated analytically and the
    smooth remainder (exp(ikr) - 1)/(4 pi r) -> ik/(4 pi) is taken at r = 0.
    Cost grows like (support nodes) x (grid nodes): meant for small grids.
    """
    k = phi.k if k is None else k
    g = phi.grid
    h = g.h
    pts = g.points().reshape(-1, 2)
    f = phi.values.ravel()
    nz = np.nonzero(f)[0]
    out = np.zeros(pts.shape[0], dtype=complex)
    src = pts[nz]
    for i0 in range(0, pts.shape[0], chunk):
        P = pts[i0:i0 + chunk]
        R = np.hypot(P[:, None, 0] - src[None, :, 0], P[:, None, 1] - src[None, :, 1])
        with np.errstate(divide="ignore", invalid="ignore"):
            G = np.where(R > 0, np.exp(1j * k * R) / (4.0 * np.pi * R), 0.0)
        out[i0:i0 + chunk] = h * h * (G @ f[nz])
    out += f * (h * _SELF_CELL / (4.0 * np.pi) + h * h * 1j * k / (4.0 * np.pi))
    return out.reshape(g.shape)


def slp_norm(grid: GridSpec2D, disk: Disk, k: float, pad: int = 4, tol: float = 1e-4,
             maxiter: int = 300, seed: int = 0) -> float:
    """Operator norm of chi_D S_k^B chi_D by power iteration on A* A."""
    win, mask = disk_window(grid, disk)
    op = SlpOperator(grid, k, win, pad=pad)
    rng = np.random.default_rng(seed)
    x = (rng.standard_normal(mask.shape) + 1j * rng.standard_normal(mask.shape)) * mask
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(maxiter):
        y = op.adjoint(op.apply(x) * mask) * mask
        new = math.sqrt(float(np.linalg.norm(y)))
        x = y / np.linalg.norm(y)
        if abs(new - est) <= tol * new:
            est = new
            break
        est = new
    return est


# ---------------------------------------------------------------------------
# boundary integral equation


def _lambda_on_window(lam: FieldRealization, disk: Disk):
    win, mask = disk_window(lam.grid, disk)
    i0, j0, ni, nj = win
    vals = lam.values[i0:i0 + ni, j0:j0 + nj]
    full_mask = disk.contains(lam.grid.points())
    outside = np.abs(lam.values[~full_mask])
    scale = max(float(np.max(np.abs(lam.values))), 1e-300)
    if outside.size and outside.max() > 1e-10 * scale:
        raise ContractError("Robin coefficient must be supported in D")
    return win, mask, np.where(mask, vals, 0.0)


def _window_points(grid: GridSpec2D, win) -> np.ndarray:
    i0, j0, ni, nj = win
    x, y = grid.axes()
    X, Y = np.meshgrid(x[i0:i0 + ni], y[j0:j0 + nj], indexing="ij")
    return np.stack([X, Y, np.zeros_like(X)], axis=-1)


def _embed(grid: GridSpec2D, win, vals) -> np.ndarray:
    i0, j0, ni, nj = win
    out = np.zeros(grid.shape, dtype=complex)
    out[i0:i0 + ni, j0:j0 + nj] = vals
    return out


def _check_source(y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.shape != (3,) or y[2] <= 0:
        raise DomainError("source point needs three coordinates and y3 > 0")
    return y


def solve_density(lam: FieldRealization, y, k: float, config: MeasurementConfig,
                  pad: int = 4, tol: float = 1e-8, maxiter: int = 200) -> BoundaryDensity:
    """Solve (1/2 - lambda_k S_k^B) phi = lambda_k u_in on D by GMRES."""
    y = _check_source(y)
    win, mask, lw = _lambda_on_window(lam, config.disk)
    lk = lw / k ** config.p
    if not np.any(lk):
        return BoundaryDensity(lam.grid, np.zeros(lam.grid.shape, complex), k, [0.0])
    op = SlpOperator(lam.grid, k, win, pad=pad)
    idx = np.nonzero(mask)
    n = idx[0].size
    lk_d = lk[idx]

    def matvec(v):
        full = np.zeros(mask.shape, dtype=complex)
        full[idx] = v
        return 0.5 * v - lk_d * op.apply(full)[idx]

    A = LinearOperator((n, n), matvec=matvec, dtype=complex)
    z = _window_points(lam.grid, win)[idx]
    rhs = lk_d * incident(z, y, k)
    bnorm = np.linalg.norm(rhs)
    history: list[float] = []
    sol, info = gmres(A, rhs, rtol=tol, atol=0.0, restart=min(n, 50), maxiter=maxiter,
                      callback=lambda r: history.append(float(r)), callback_type="pr_norm")
    res = float(np.linalg.norm(matvec(sol) - rhs) / bnorm)
    history.append(res)
    if info != 0 or res > 10 * tol:
        raise SolverError(f"GMRES did not reach relative residual {tol:g} (got {res:.3e})",
                          history)
    full = np.zeros(mask.shape, dtype=complex)
    full[idx] = sol
    return BoundaryDensity(lam.grid, _embed(lam.grid, win, full), k, history)


@dataclass(frozen=True, eq=False)
class BornSeries:
    terms: list
    ratios: np.ndarray

    @property
    def converging(self) -> bool:
        tail = self.ratios[-3:] if self.ratios.size >= 3 else self.ratios
        return bool(tail.size) and bool(np.all(tail < 1.0))

    def partial_sum(self, n: int) -> np.ndarray:
        return ordered_sum([t.values for t in self.terms[:n]])


def born_series(lam: FieldRealization, y, k: float, config: MeasurementConfig, n_terms: int = 8,
                pad: int = 4) -> BornSeries:
    """Neumann terms phi_1 = 2 lambda_k u_in, phi_{n+1} = 2 lambda_k S_k^B phi_n."""
    y = _check_source(y)
    win, mask, lw = _lambda_on_window(lam, config.disk)
    lk = lw / k ** config.p
    op = SlpOperator(lam.grid, k, win, pad=pad)
    z = _window_points(lam.grid, win)
    phi = np.where(mask, 2.0 * lk * incident(z, y, k), 0.0)
    terms = [BoundaryDensity(lam.grid, _embed(lam.grid, win, phi), k)]
    norms = [np.linalg.norm(phi)]
    for _ in range(n_terms - 1):
        phi = np.where(mask, 2.0 * lk * op.apply(phi), 0.0)
        terms.append(BoundaryDensity(lam.grid, _embed(lam.grid, win, phi), k))
        norms.append(np.linalg.norm(phi))
    norms = np.array(norms)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(norms[:-1] > 0, norms[1:] / norms[:-1], 0.0)
    return BornSeries(terms, ratios)


def empirical_k0(lam: FieldRealization, y, ks, config: MeasurementConfig,
                 n_terms: int = 8) -> float:
    """Smallest scanned k above which every scanned Born series passes the ratio test."""
    ks = np.sort(np.asarray(ks, dtype=float))
    ok = np.array([born_series(lam, y, k, config, n_terms).converging for k in ks])
    if ok.all():
        return float(ks[0])
    bad = np.nonzero(~ok)[0]
    if bad[-1] == ks.size - 1:
        return math.inf
    return float(ks[bad[-1] + 1])


def scattered_field(phi: BoundaryDensity, x, k: float | None = None):
    """u_s(x) = (S_k^+ phi)(x) by node quadrature over the density's support."""
    k = phi.k if k is None else k
    x = np.asarray(x, dtype=float)
    if x.shape != (3,) or x[2] <= 0:
        raise DomainError("scattered field needs a point strictly above the boundary")
    g = phi.grid
    idx = np.nonzero(phi.values)
    if idx[0].size == 0:
        return 0j
    X, Y = g.mesh()
    d = np.stack([x[0] - X[idx], x[1] - Y[idx], np.full(idx[0].size, x[2])], axis=-1)
    return complex(np.sum(phi.values[idx] * greens(d, k)) * g.cell_area)


# ---------------------------------------------------------------------------
# Born term and measurement


def born_geometry(grid: GridSpec2D, x, y) -> tuple[np.ndarray, np.ndarray]:
    """Path length s(z) = |x-z| + |y-z| and weight h^2 / (|x-z||y-z|) at every node."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x[2] <= 0 or y[2] <= 0:
        raise DomainError("Born term needs x3 > 0 and y3 > 0")
    X, Y = grid.mesh()
    rx = np.sqrt((x[0] - X) ** 2 + (x[1] - Y) ** 2 + x[2] ** 2)
    ry = np.sqrt((y[0] - X) ** 2 + (y[1] - Y) ** 2 + y[2] ** 2)
    return rx + ry, grid.cell_area / (rx * ry)


def _born_weights(lam: FieldRealization, x, y):
    s, g = born_geometry(lam.grid, x, y)
    idx = np.nonzero(lam.values)
    return s[idx], lam.values[idx] * g[idx]


def _check_kh(lam: FieldRealization, kmax: float) -> None:
    if kmax * lam.grid.h > 0.25 + 1e-12:
        raise AccuracyError(
            f"k*h = {kmax * lam.grid.h:.3g} > 1/4: refine the grid to at most h = {0.25 / kmax:.3g}")


def born_u1(lam: FieldRealization, x, y, k: float, p: float) -> complex:
    """u_1(x, y, k) = (4 pi^2 k^p)^-1 sum_z exp(ik(|x-z| + |y-z|)) / (|x-z||y-z|) lambda(z) h^2."""
    _check_kh(lam, k)
    s, w = _born_weights(lam, x, y)
    return complex(np.sum(w * np.exp(1j * k * s)) / (4.0 * np.pi ** 2 * k ** p))


def born_band(lam: FieldRealization, x, y, ks, p: float, method: str = "binned",
              bin_phase: float = 0.2) -> np.ndarray:
    """u_1 at many wavenumbers.

    The phase depends on z only through s = |x-z| + |y-z|, so the node sum
    collapses to a 1-D sum over bins of s.  Within a bin of width delta the
    exponential is expanded to second order about the bin centre, with the
    moments of (s - centre) accumulated exactly; the truncation error is
    below (k delta / 2)^3 / 6 per node.  ``method="direct"`` sums nodes.
    """
    ks = np.asarray(ks, dtype=float)
    _check_kh(lam, float(ks.max()))
    s, w = _born_weights(lam, x, y)
    out = np.zeros(ks.shape, dtype=complex)
    if s.size == 0:
        return out
    if method == "direct":
        for i in range(0, ks.size, 32):
            out[i:i + 32] = np.exp(1j * np.outer(ks[i:i + 32], s)) @ w
    elif method == "binned":
        delta = bin_phase / ks.max()
        s0 = s.min()
        ib = np.floor((s - s0) / delta).astype(np.int64)
        nb = int(ib.max()) + 1
        c = s0 + (np.arange(nb) + 0.5) * delta
        t = s - c[ib]
        W0 = np.bincount(ib, w, nb)
        W1 = np.bincount(ib, w * t, nb)
        W2 = np.bincount(ib, w * t * t, nb)
        for i in range(0, ks.size, 64):
            kk = ks[i:i + 64, None]
            E = np.exp(1j * kk * c[None, :])
            out[i:i + 64] = E @ W0 + 1j * ks[i:i + 64] * (E @ W1) - 0.5 * ks[i:i + 64] ** 2 * (E @ W2)
    else:
        raise ConfigurationError(f"unknown method {method!r}")
    return out / (4.0 * np.pi ** 2 * ks ** p)


def _check_band_resolution(lam: FieldRealization, x, config: MeasurementConfig) -> None:
    s, _ = _born_weights(lam, x, x)
    if s.size == 0:
        return
    spread = 0.5 * float(s.max() - s.min())
    nodes, _ = config.quadrature()
    gap = float(np.max(np.diff(nodes))) if nodes.size > 1 else 0.0
    if spread > 0 and gap > np.pi / (4.0 * spread):
        raise AccuracyError(
            f"band node spacing {gap:.3g} exceeds pi/(4 * {spread:.3g}); raise nodes_per_unit")


def _band_result(nodes, weights, vals, config: MeasurementConfig) -> MeasureResult:
    per = config.nodes_per_unit
    panel = (weights * vals).reshape(-1, per).sum(axis=1)
    edges = config.panel_edges()
    cum = np.cumsum(panel)
    running = cum / (edges[1:] - 1.0)
    value = float(running[-1])
    q = max(1, int(round(0.75 * len(running)))) - 1
    tail = abs(value - running[q]) / value if value > 0 else 0.0
    return MeasureResult(value, nodes, vals, edges[1:], running, float(tail))


def measure(lam: FieldRealization, x, config: MeasurementConfig, solver: str = "born",
            pad: int = 4) -> MeasureResult:
    """(K-1)^-1 int_1^K k^(2(1+eps+p)) |u_s(x; x, k)|^2 dk by panel Gauss-Legendre."""
    x = np.asarray(x, dtype=float)
    if not np.any(np.all(np.isclose(config.points, x[None, :]), axis=1)):
        raise ContractError("x must be one of the configured measurement points")
    nodes, weights = config.quadrature()
    expo = 2.0 * (1.0 + config.epsilon + config.p)
    if solver == "born":
        _check_band_resolution(lam, x, config)
        u = born_band(lam, x, x, nodes, config.p)
    elif solver == "full":
        u = np.array([scattered_field(solve_density(lam, x, k, config, pad=pad), x, k)
                      for k in nodes])
    else:
        raise ConfigurationError(f"unknown solver {solver!r}")
    vals = nodes ** expo * np.abs(u) ** 2
    return _band_result(nodes, weights, vals, config)


def measure_dataset(lam: FieldRealization, config: MeasurementConfig, solver: str = "born",
                    workers: int = 1) -> BackscatterDataset:
    """Band-averaged backscatter at every configured point for one realization."""
    res = ordered_map(lambda x: measure(lam, x, config, solver), list(config.points), workers)
    return BackscatterDataset(config, np.array([r.value for r in res]),
                              np.array([r.tail * r.value for r in res]), solver, lam.seed,
                              {"running_K": res[0].running_K.tolist(),
                               "running": [r.running.tolist() for r in res]})


def measure_ensemble(model: CovarianceModel, grid: GridSpec2D, config: MeasurementConfig,
                     seeds, solver: str = "born", workers: int = 1) -> BackscatterDataset:
    """Mean of the band average over independent realizations, with standard errors."""
    seeds = [int(s) for s in seeds]

    def one(seed):
        lam = sample_field(model, grid, seed)
        return np.array([measure(lam, x, config, solver).value for x in config.points])

    vals = np.array(ordered_map(one, seeds, workers))
    n = len(seeds)
    se = vals.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros(vals.shape[1])
    return BackscatterDataset(config, ordered_sum(list(vals)) / n, se, solver, seeds[0],
                              {"realizations": n})


def estimate_correlation(model: CovarianceModel, x, y, k1: float, k2: float, n_realizations: int,
                         grid: GridSpec2D | None = None, p: float | None = None, seed: int = 0,
                         workers: int = 1) -> Estimate:
    """Monte Carlo estimate of E[u_1(x,y,k1) conj(u_1(x,y,k2))] with its standard error."""
    if n_realizations < 2:
        raise ConfigurationError("need at least two realizations")
    grid = grid or model.strength.grid
    p = model.epsilon + 1.0 if p is None else p
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    disk = model.strength.disk
    if np.any(disk.contains(np.array([x[:2], y[:2]]))):
        raise AssumptionViolation("(A3)", "a measurement projection lies in D")

    def one(i):
        lam = sample_field(model, grid, seed + i)
        u = born_band(lam, x, y, np.array([k1, k2]), p, method="direct")
        return u[0] * np.conj(u[1])

    vals = np.array(ordered_map(one, range(n_realizations), workers))
    mean = ordered_sum(list(vals)) / n_realizations
    se = float(np.sqrt((np.var(vals.real, ddof=1) + np.var(vals.imag, ddof=1)) / n_realizations))
    return Estimate(complex(mean), se, n_realizations)
