"""From backscatter data to the anisotropy field.

Pipeline: for each center x' the heights profile n0(x', x3) is inverted for
the radial profile (S b)(x', r) (a first-kind equation with kernel
r / (r^2 + x3^2)^2); the profiles on a center grid are Fourier analysed into
slices (see :mod:`robinscatter.sradon`); the slices give the trace
r1 + r2 = tr(A)^ directly and, with one component known, the other two from

    r1 - r2 = (a1^ - a2^) cos 2 alpha + 2 a3^ sin 2 alpha.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.optimize import nnls

from .asymptotics import normalisation, radial_kernel
from .errors import ConfigurationError, ContractError, DomainError, InconsistencyError, ModelMismatchError
from .field_synth import inverse_spatial_fft, spatial_fft
from .grid import Disk, GridSpec2D
from .parallel import ordered_map
from .sradon import RadonGrid, SpectralSlices, extract_slices, fourier_radon


# ---------------------------------------------------------------------------
# heights -> radii


def make_heights(center, disk: Disk, n: int = 24, lo: float = 0.05, hi: float = 2.0) -> np.ndarray:
    """Log-spaced heights on [lo * s, hi * (dist + diam)], s = max(dist, radius)."""
    dist = float(disk.distance(np.asarray(center, float)))
    return np.geomspace(lo * max(dist, disk.radius), hi * (dist + disk.diameter), n)


def make_radii(center, disk: Disk, n: int = 64) -> np.ndarray:
    """Uniform radii over [dist, dist + diam], the support of r -> (S b)(x', r)."""
    dist = float(disk.distance(np.asarray(center, float)))
    return np.linspace(dist, dist + disk.diameter, n)


@dataclass(frozen=True, eq=False)
class ReductionProblem:
    """n0(x', x3) at one center for a list of heights, to be inverted for (S b)(x', r)."""

    center: tuple[float, float]
    heights: np.ndarray
    n0: np.ndarray
    radii: np.ndarray
    epsilon: float = 0.5
    disk: Disk = Disk()
    weight: float = 1e-4
    noise: float = 1e-2
    convention: str = "area"

    def __post_init__(self):
        H = np.asarray(self.heights, dtype=float)
        n0 = np.asarray(self.n0, dtype=float)
        r = np.asarray(self.radii, dtype=float)
        if H.ndim != 1 or n0.shape != H.shape:
            raise ConfigurationError("heights and n0 must be 1-D of equal length")
        if np.any(H <= 0):
            raise ConfigurationError("heights must be strictly positive")
        if np.unique(H).size < 12:
            raise ConfigurationError("need at least 12 distinct heights")
        lr = np.diff(np.log(np.sort(H)))
        if np.ptp(lr) > 1e-6 * max(abs(lr.mean()), 1e-300):
            raise ConfigurationError("heights must be log-spaced")
        if not np.all(np.isfinite(n0)):
            raise ContractError("n0 must be finite")
        if r.ndim != 1 or r.size < 4 or np.any(np.diff(r) <= 0):
            raise ConfigurationError("radii must be increasing, at least 4 values")
        dist = float(self.disk.distance(np.asarray(self.center, float)))
        tol = 1e-9 * self.disk.diameter
        if r[0] > dist + tol or r[-1] < dist + self.disk.diameter - tol:
            raise ConfigurationError("radii must cover [dist(x', D), dist(x', D) + diam(D)]")
        if not self.noise > 0:
            raise ConfigurationError("a positive noise level is required")
        object.__setattr__(self, "heights", H)
        object.__setattr__(self, "n0", n0)
        object.__setattr__(self, "radii", r)


@dataclass(frozen=True, eq=False)
class ReductionResult:
    radii: np.ndarray
    values: np.ndarray
    residual: float
    weight: float
    diagnostics: dict = field(default_factory=dict)


def reduction_matrix(radii, heights, epsilon: float, convention: str = "area",
                     order: int = 16) -> np.ndarray:
    """K[j, q] = C int hat_q(r) w(r, x3_j) dr for piecewise-linear hats on ``radii``."""
    r = np.asarray(radii, dtype=float)
    H = np.asarray(heights, dtype=float)
    if convention == "derived" and r[0] <= 0:
        raise DomainError("derived kernel is singular at r = 0")
    t, w = leggauss(order)
    u = 0.5 * (t + 1.0)  # local coordinate in [0, 1]
    a, b = r[:-1], r[1:]
    rr = a[:, None] + (b - a)[:, None] * u[None, :]  # (n_int, order)
    ww = 0.5 * (b - a)[:, None] * w[None, :]
    ker = radial_kernel(rr[None], H[:, None, None], epsilon, convention) * ww[None]
    K = np.zeros((H.size, r.size))
    K[:, :-1] += np.einsum("jiq,q->ji", ker, 1.0 - u)
    K[:, 1:] += np.einsum("jiq,q->ji", ker, u)
    return normalisation(epsilon, convention) * K


def _second_difference(n: int) -> np.ndarray:
    D = np.zeros((n - 2, n))
    i = np.arange(n - 2)
    D[i, i], D[i, i + 1], D[i, i + 2] = 1.0, -2.0, 1.0
    return D


def reduce_to_radon(problem: ReductionProblem) -> ReductionResult:
    """Nonnegative, curvature-regularised least squares for (S b)(x', r) on the radii.

    Rows are weighted by 1/n0 so every height counts by its relative misfit;
    the penalty is ``weight * ||K||_2`` times the second difference of the
    profile.  The returned residual is the RMS relative misfit; above three
    times the supplied noise level the data are declared inconsistent with
    the model.
    """
    P = problem
    n = P.radii.size
    if not np.any(P.n0):
        return ReductionResult(P.radii, np.zeros(n), 0.0, P.weight, {"trivial": True})
    if np.any(P.n0 < 0):
        raise ModelMismatchError("negative backscatter data cannot come from b >= 0")
    K = reduction_matrix(P.radii, P.heights, P.epsilon, P.convention)
    s = 1.0 / np.where(P.n0 > 0, P.n0, P.n0.max())
    Kn = K * s[:, None]
    rhs = P.n0 * s
    norm = np.linalg.norm(Kn, 2)
    A = np.vstack([Kn, P.weight * norm * _second_difference(n)])
    y = np.concatenate([rhs, np.zeros(n - 2)])
    x, _ = nnls(A, y, maxiter=50 * n)
    res = float(np.linalg.norm(Kn @ x - rhs) / math.sqrt(rhs.size))
    if res > 3.0 * P.noise:
        raise ModelMismatchError(
            f"reduction residual {res:.3g} exceeds 3x the noise level {P.noise:.3g}")
    sv = np.linalg.svd(Kn / norm, compute_uv=False)
    return ReductionResult(P.radii, x, res, P.weight,
                           {"kernel_singular_values": [float(sv[0]), float(sv[-1])]})


def reduce_grid(n0: np.ndarray, centers: GridSpec2D, heights: np.ndarray, epsilon: float,
                disk: Disk = Disk(), radii=None, r_window: float | None = None, n_local: int = 64,
                weight: float = 1e-4, noise: float = 1e-2, workers: int = 1) -> RadonGrid:
    """Reduce n0 on every center of a grid and resample onto common radii.

    Centers farther than the radial window from D carry no signal within it
    and are set to zero.  Local profiles are piecewise linear on
    :func:`make_radii` and are zero outside [dist, dist + diam].
    """
    r_window = disk.diameter if r_window is None else float(r_window)
    if radii is None:
        radii = np.linspace(0.0, r_window, 65)[:-1]
    radii = np.asarray(radii, dtype=float)
    H = np.asarray(heights, dtype=float)
    if H.ndim == 1:
        H = np.broadcast_to(H, centers.shape + H.shape)
    P = centers.points()
    dist = disk.distance(P)
    todo = [tuple(ij) for ij in np.argwhere(dist < r_window)]

    def one(ij):
        c = P[ij]
        prob = ReductionProblem((float(c[0]), float(c[1])), H[ij], n0[ij], make_radii(c, disk, n_local),
                                epsilon, disk, weight, noise)
        res = reduce_to_radon(prob)
        return np.interp(radii, res.radii, res.values, left=0.0, right=0.0), res.residual

    out = np.zeros(centers.shape + radii.shape)
    resid = np.zeros(centers.shape)
    for ij, (vals, r) in zip(todo, ordered_map(one, todo, workers)):
        out[ij] = vals
        resid[ij] = r
    return RadonGrid(P, radii, out, centers,
                     {"source": "reduction", "max_residual": float(resid.max()),
                      "weight": weight, "noise": noise, "n_centers": len(todo)})


# ---------------------------------------------------------------------------
# slices -> anisotropy


@dataclass(frozen=True, eq=False)
class RecoveredAnisotropy:
    """Recovered fields on the center grid; component fields are None when not recovered."""

    grid: GridSpec2D
    trace: np.ndarray
    a1: np.ndarray | None = None
    a2: np.ndarray | None = None
    a3: np.ndarray | None = None
    known: str | None = None
    diagnostics: dict = field(default_factory=dict)

    def components(self) -> dict[str, np.ndarray]:
        return {k: v for k, v in (("trace", self.trace), ("a1", self.a1), ("a2", self.a2),
                                  ("a3", self.a3)) if v is not None}


def _to_field(grid: GridSpec2D, spec: np.ndarray) -> tuple[np.ndarray, float]:
    f = inverse_spatial_fft(grid, spec[..., None])[..., 0]
    scale = max(float(np.max(np.abs(f.real))), 1e-300)
    return f.real, float(np.max(np.abs(f.imag)) / scale)


def recover_trace(slices: SpectralSlices, warn_limit: float = 0.2) -> RecoveredAnisotropy:
    """tr(A) = inverse FFT of slice_par + slice_perp (masked frequencies zero-filled).

    The xi = 0 value comes from the r-independent DC of the transform, which
    the slice fit stores at the origin.
    """
    frac = slices.masked_fraction
    if frac > warn_limit:
        warnings.warn(f"{100 * frac:.1f}% of frequencies masked; zero-fill inpainting applied",
                      RuntimeWarning, stacklevel=2)
    tr, imag = _to_field(slices.grid, _trace_spectrum(slices))
    return RecoveredAnisotropy(slices.grid, tr, diagnostics={"imag_residual": imag,
                                                            "masked_fraction": frac})


def _trace_spectrum(slices: SpectralSlices) -> np.ndarray:
    T = np.where(slices.mask, slices.trace, 0.0)
    T[0, 0] = slices.trace[0, 0]
    return T


def _fill_by_continuity(F: np.ndarray, bad: np.ndarray, iters: int = 400) -> np.ndarray:
    """Replace ``bad`` entries by iterated averages of their lattice neighbours.

    Neighbours wrap in fft ordering, so the fill is continuous across the
    axes through the origin where the excluded sets lie.
    """
    G = np.where(bad, 0.0, F)
    if not bad.any():
        return G
    for _ in range(iters):
        avg = 0.25 * (np.roll(G, 1, 0) + np.roll(G, -1, 0) + np.roll(G, 1, 1) + np.roll(G, -1, 1))
        new = np.where(bad, avg, G)
        if np.max(np.abs(new - G)) <= 1e-12 * max(np.max(np.abs(G)), 1e-300):
            G = new
            break
        G = new
    return G


def recover_components(slices: SpectralSlices, known: str, values: np.ndarray,
                       exclude: float = 0.2, noise: float = 0.02) -> RecoveredAnisotropy:
    """Recover the two unknown components of A given one of a1, a2, a3 on the slices grid.

    Frequencies where the relation degenerates (|cos 2 alpha| < ``exclude``
    for known a3, |sin 2 alpha| < ``exclude`` otherwise) are filled by
    continuity from their neighbours.  On the near-degenerate set the
    relation reduces to a constraint on the known component alone; its RMS
    misfit relative to the data must stay below 3x ``noise``.
    """
    if known not in ("a1", "a2", "a3"):
        raise ConfigurationError("known must be one of 'a1', 'a2', 'a3'")
    g = slices.grid
    vals = np.asarray(values, dtype=float)
    if vals.shape != g.shape:
        raise ConfigurationError("known field must live on the slices grid")
    KX, KY = g.frequencies()
    alpha = np.arctan2(KY, KX)
    c2, s2 = np.cos(2 * alpha), np.sin(2 * alpha)
    mask = slices.mask.copy()
    mask[0, 0] = True
    T = _trace_spectrum(slices)
    D = np.where(mask, slices.slice_par - slices.slice_perp, 0.0)
    Kf = np.where(mask, spatial_fft(g, vals[..., None])[..., 0], 0.0)
    # at xi = 0 the slices hold only the trace, so the difference relation says nothing there
    dc = np.zeros(g.shape, bool)
    dc[0, 0] = True
    if known == "a3":
        bad = mask & ((np.abs(c2) < exclude) | dc)
        diff = np.where(bad | ~mask, 0.0, (D - 2.0 * Kf * s2) / np.where(bad | ~mask, 1.0, c2))
        diff = np.where(mask, _fill_by_continuity(diff, bad), 0.0)
        check = mask & (np.abs(c2) < 0.05) & ~dc
        resid = D - 2.0 * Kf * s2
        A1, A2, A3 = 0.5 * (T + diff), 0.5 * (T - diff), Kf
    else:
        A1 = Kf if known == "a1" else T - Kf
        A2 = T - A1
        bad = mask & ((np.abs(s2) < exclude) | dc)
        a3 = np.where(bad | ~mask, 0.0, (D - (A1 - A2) * c2) / np.where(bad | ~mask, 1.0, 2.0 * s2))
        A3 = np.where(mask, _fill_by_continuity(a3, bad), 0.0)
        check = mask & (np.abs(s2) < 0.05) & ~dc
        resid = D - (A1 - A2) * c2
    # the misfit is measured against the slice magnitude; D alone vanishes for isotropic A
    live = mask & ~dc
    scale = math.sqrt(np.mean(np.abs(D[live]) ** 2 + np.abs(T[live]) ** 2)) if live.any() else 0.0
    rms = math.sqrt(np.mean(np.abs(resid[check]) ** 2)) if check.any() else 0.0
    rel = rms / scale if scale > 0 else (0.0 if rms == 0 else float("inf"))
    if rel > 3.0 * noise:
        raise InconsistencyError(
            f"known {known} is inconsistent with the slices (relative misfit {rel:.3g})")
    fields = {}
    imag = 0.0
    for name, spec in (("a1", A1), ("a2", A2), ("a3", A3), ("trace", T)):
        fields[name], im = _to_field(g, spec)
        imag = max(imag, im)
    if known in fields:
        fields[known] = vals.copy()
    return RecoveredAnisotropy(g, fields["trace"], fields["a1"], fields["a2"], fields["a3"], known,
                               {"imag_residual": imag, "consistency_misfit": rel,
                                "excluded_fraction": float(bad.sum() / max(mask.sum(), 1)),
                                "masked_fraction": slices.masked_fraction})


def slices_from_radon(rgrid: RadonGrid, r_window=None, **kw) -> SpectralSlices:
    return extract_slices(fourier_radon(rgrid), r_window, **kw)


def relative_l2(estimate: np.ndarray, truth: np.ndarray) -> float:
    den = float(np.linalg.norm(truth))
    return float(np.linalg.norm(estimate - truth) / den) if den > 0 else float(np.linalg.norm(estimate))
