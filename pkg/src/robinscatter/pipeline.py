"""Configuration-driven pipeline: synth -> forward -> measure -> reduce -> radon -> recover -> verify.

Configuration is flat ``key = value`` text; ``#`` starts a comment and a key
given several times forms an array (``point``, ``stage``, ``forward.k`` ...).
Every stage writes its artifacts into the output directory and registers
them, with SHA-256 hashes, in ``manifest.json``.  Artifacts contain no
timestamps or timings, so identical configurations give identical hashes.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .asymptotics import diagonal_R_grid, verify_asymptotic_law
from .errors import AssumptionViolation, ConfigurationError, ContractError
from .field_synth import (AnisotropyField, CovarianceModel, FieldRealization, build_quadratic_strength,
                          constant_anisotropy, default_anisotropy, interpolate, isotropic_anisotropy,
                          potential_anisotropy, sample_field, sample_potential_field, zero_anisotropy)
from .forward import (MeasurementConfig, born_series, born_u1, measure, scattered_field, slp_norm,
                      solve_density)
from .grid import Disk, GridSpec2D
from .parallel import ordered_map
from .recovery import (make_heights, recover_components, recover_trace, reduce_grid, relative_l2,
                       slices_from_radon)
from .sradon import RadonGrid, radon_forward

log = logging.getLogger(__name__)

STAGES = ("synth", "forward", "measure", "reduce", "radon", "recover", "verify")
EXECUTION_KEYS = ("workers", "output")
PRESETS = ("default", "isotropic", "zero", "constant", "potential", "file")

# key: (type, default, repeated, description)
SCHEMA: dict[str, tuple] = {
    "stage": (str, [], True, "stages to run, in any order (executed in dependency order)"),
    "output": (str, "run", False, "output directory"),
    "seed": (int, 0, False, "realization seed"),
    "workers": (int, 1, False, "worker threads for independent work items"),
    "emit_plots": (bool, False, False, "write CSV traces for figure-like diagnostics"),
    "epsilon": (float, 0.5, False, "order parameter of the covariance symbol"),
    "p": (float, None, False, "frequency exponent of lambda_k (default epsilon + 1)"),
    "kappa": (float, 1.0, False, "low-frequency regularisation of the symbol"),
    "disk.center": ("vec2", (0.0, 0.0), False, "support disk center"),
    "disk.radius": (float, 1.0, False, "support disk radius"),
    "grid.n": (int, 256, False, "sampling grid nodes per side (power of two)"),
    "grid.half_width": (float, 1.25, False, "sampling grid half width"),
    "anisotropy": (str, "default", False, "A preset: " + ", ".join(PRESETS)),
    "anisotropy.matrix": ("vec3", (1.0, 0.5, 0.0), False, "a1, a2, a3 for the constant preset"),
    "anisotropy.direction": ("vec2", (1.0, 0.0), False, "v for the potential preset"),
    "anisotropy.file": (str, "", False, "field container with a1, a2, a3 (preset 'file')"),
    "point": ("vec3", [], True, "measurement point x1, x2, x3"),
    "band.K": (float, 50.0, False, "upper end of the band [1, K]"),
    "band.nodes_per_unit": (int, 8, False, "Gauss-Legendre nodes per unit k"),
    "solver": (str, "born", False, "measurement solver: born or full"),
    "forward.k": (float, [], True, "wavenumbers for the forward stage"),
    "forward.born_terms": (int, 6, False, "Neumann terms reported by the forward stage"),
    "centers.n": (int, 64, False, "center grid nodes per side"),
    "centers.half_width": (float, 4.0, False, "center grid half width"),
    "heights.n": (int, 24, False, "heights per center for the reduction"),
    "radii.n": (int, 64, False, "local radii per center for the reduction"),
    "reduce.source": (str, "asymptotic", False, "asymptotic (noiseless R) or direct (S b)"),
    "reduce.weight": (float, 1e-4, False, "curvature regularisation weight"),
    "reduce.noise": (float, 1e-2, False, "relative noise level of n0"),
    "slices.M": (int, 8, False, "maximum angular mode in the slice fit"),
    "recover.known": (str, "none", False, "known component: none, a1, a2 or a3"),
    "verify.k": (float, [], True, "wavenumbers for the asymptotic-law check"),
    "verify.realizations": (int, 16, False, "realizations for the asymptotic-law check"),
    "verify.norm_k": (float, [], True, "wavenumbers for the norm-decay fit"),
}


def _parse_value(kind, text: str):
    text = text.strip()
    if kind is bool:
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigurationError(f"not a boolean: {text!r}")
    if kind in ("vec2", "vec3"):
        parts = [float(t) for t in text.replace(",", " ").split()]
        if len(parts) != int(kind[-1]):
            raise ConfigurationError(f"expected {kind[-1]} numbers, got {text!r}")
        return tuple(parts)
    return kind(text)


def parse_config_text(text: str) -> dict:
    """Parse flat key-value text into a raw dict (repeated keys become lists)."""
    raw: dict = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {n}: expected 'key = value'")
        k, v = (s.strip() for s in line.split("=", 1))
        if k not in SCHEMA:
            raise ConfigurationError(f"line {n}: unknown key {k!r}")
        raw.setdefault(k, []).append(v)
    return raw


def _coerce(raw: dict) -> dict:
    out = {}
    for key, (kind, default, repeated, _) in SCHEMA.items():
        if key not in raw:
            out[key] = list(default) if repeated else default
            continue
        vals = raw[key] if isinstance(raw[key], list) else [raw[key]]
        try:
            parsed = [v if not isinstance(v, str) else _parse_value(kind, v) for v in vals]
        except ValueError as exc:
            raise ConfigurationError(f"{key}: {exc}") from None
        if repeated:
            out[key] = [q for v in parsed for q in (v if isinstance(v, list) else [v])]
        else:
            out[key] = parsed[-1]
    return out


@dataclass
class PipelineConfig:
    """Validated pipeline settings; ``values`` maps schema keys to typed values."""

    values: dict = field(default_factory=dict)

    @classmethod
    def from_text(cls, text: str, overrides: dict | None = None) -> "PipelineConfig":
        raw = parse_config_text(text)
        for k, v in (overrides or {}).items():
            if k not in SCHEMA:
                raise ConfigurationError(f"unknown key {k!r}")
            raw[k] = v if isinstance(v, list) else [v]
        return cls.from_raw(raw)

    @classmethod
    def from_raw(cls, raw: dict) -> "PipelineConfig":
        cfg = cls(_coerce(raw))
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path, overrides: dict | None = None) -> "PipelineConfig":
        return cls.from_text(Path(path).read_text(), overrides)

    def __getitem__(self, key):
        return self.values[key]

    @property
    def stages(self) -> list[str]:
        return [s for s in STAGES if s in self.values["stage"]]

    @property
    def disk(self) -> Disk:
        return Disk(tuple(self["disk.center"]), self["disk.radius"])

    @property
    def grid(self) -> GridSpec2D:
        return GridSpec2D.centered(self["grid.half_width"], self["grid.n"], self["disk.center"])

    @property
    def centers(self) -> GridSpec2D:
        return GridSpec2D.centered(self["centers.half_width"], self["centers.n"], self["disk.center"])

    @property
    def p(self) -> float:
        return self["epsilon"] + 1.0 if self["p"] is None else self["p"]

    def validate(self) -> None:
        bad = [s for s in self.values["stage"] if s not in STAGES]
        if bad:
            raise ConfigurationError(f"unknown stage(s) {bad}; choose from {STAGES}")
        if not self["epsilon"] > 0:
            raise AssumptionViolation("(A2)", f"homogeneity order needs ε > 0 (ε = {self['epsilon']})")
        if not self.p > self["epsilon"] + 0.5:
            raise AssumptionViolation("(A4)", f"p ≤ ε + 1/2 (p = {self.p}, ε = {self['epsilon']})")
        disk = self.disk
        pts = np.asarray(self["point"], dtype=float).reshape(-1, 3)
        if len(pts) and np.any(disk.contains(pts[:, :2])):
            i = int(np.argmax(disk.contains(pts[:, :2])))
            raise AssumptionViolation(
                "(A3)", f"U′ ∩ D ≠ ∅: point ({pts[i, 0]:g}, {pts[i, 1]:g}, {pts[i, 2]:g}) projects into D")
        if len(pts) and np.any(pts[:, 2] <= 0):
            raise ConfigurationError("measurement points need x3 > 0")
        if self["anisotropy"] not in PRESETS:
            raise ConfigurationError(f"unknown anisotropy preset {self['anisotropy']!r}")
        if self["anisotropy"] == "constant":
            a1, a2, a3 = self["anisotropy.matrix"]
            if a1 < 0 or a2 < 0 or a1 * a2 - a3 * a3 < -1e-12:
                raise AssumptionViolation("(A5)", "constant A is not positive semidefinite")
        if self["anisotropy"] == "file" and not self["anisotropy.file"]:
            raise ConfigurationError("preset 'file' needs anisotropy.file")
        if self["solver"] not in ("born", "full"):
            raise ConfigurationError("solver must be 'born' or 'full'")
        if self["reduce.source"] not in ("asymptotic", "direct"):
            raise ConfigurationError("reduce.source must be 'asymptotic' or 'direct'")
        if self["recover.known"] not in ("none", "a1", "a2", "a3"):
            raise ConfigurationError("recover.known must be none, a1, a2 or a3")
        if self["heights.n"] < 12:
            raise ConfigurationError("need at least 12 heights")
        if self["workers"] < 1:
            raise ConfigurationError("workers must be >= 1")
        needs_points = {"forward", "measure"} & set(self.stages)
        if needs_points and not len(pts):
            raise ConfigurationError(f"stages {sorted(needs_points)} need at least one point")
        if "forward" in self.stages and not self["forward.k"]:
            raise ConfigurationError("forward stage needs forward.k values")
        if "verify" in self.stages:
            ks = self["verify.k"]
            if ks and max(ks) < 10 * min(ks) * (1 - 1e-12):
                raise ConfigurationError("verify.k must span at least one decade")

    def canonical_text(self) -> str:
        """Normalised config text (one key per line, arrays repeated).

        Execution-only keys (workers, output) are left out so the text, and
        its hash, depend only on what is computed.
        """
        lines = []
        for key, (kind, _, repeated, _) in SCHEMA.items():
            if key in EXECUTION_KEYS:
                continue
            vals = self.values[key] if repeated else [self.values[key]]
            for v in vals:
                if v is None:
                    continue
                if isinstance(v, tuple):
                    v = ", ".join(repr(float(t)) for t in v)
                lines.append(f"{key} = {v}")
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# model construction


def build_anisotropy(cfg: PipelineConfig, grid: GridSpec2D) -> AnisotropyField:
    """The configured A on ``grid``; (A5) is enforced here for file input."""
    disk = cfg.disk
    preset = cfg["anisotropy"]
    if preset == "default":
        return default_anisotropy(grid, disk)
    if preset == "isotropic":
        return isotropic_anisotropy(grid, disk)
    if preset == "zero":
        return zero_anisotropy(grid, disk)
    if preset == "constant":
        a1, a2, a3 = cfg["anisotropy.matrix"]
        return constant_anisotropy(grid, disk, [[a1, a3], [a3, a2]])
    if preset == "potential":
        return potential_anisotropy(grid, disk, cfg["anisotropy.direction"])[0]
    src_grid, vals, _ = io.read_field(cfg["anisotropy.file"])
    if vals.ndim != 3 or vals.shape[2] != 3:
        raise ConfigurationError("anisotropy file must hold three components a1, a2, a3")
    if not np.all(np.isfinite(vals)):
        raise AssumptionViolation("(A5)", "A has non-finite entries (eigenvalues unbounded)")
    outside = ~disk.contains(src_grid.points())
    if np.any(np.abs(vals[outside]) > 1e-12 * max(np.abs(vals).max(), 1e-300)):
        raise AssumptionViolation("(A5)", "supp(A) is not contained in D")
    pts = grid.points()
    comps = [interpolate(src_grid, vals[..., c], pts) for c in range(3)]
    return AnisotropyField.from_components(grid, disk, *comps)


def radon_strength_grid(cfg: PipelineConfig) -> GridSpec2D:
    """Strength grid aligned with the center grid at half its spacing, covering D."""
    c = cfg.centers
    h = 0.5 * c.h
    need = 2.0 * (cfg.disk.radius + 4.0 * h) / h
    n = max(8, 1 << math.ceil(math.log2(need)))
    return GridSpec2D.centered(0.5 * n * h, n, cfg["disk.center"])


def _strength(cfg: PipelineConfig, grid: GridSpec2D):
    try:
        return build_quadratic_strength(build_anisotropy(cfg, grid), cfg["epsilon"])
    except ContractError as exc:
        label = "(A1)" if "b(x, theta)" in str(exc) else "(A5)"
        raise AssumptionViolation(label, str(exc)) from None


def _measurement(cfg: PipelineConfig) -> MeasurementConfig:
    return MeasurementConfig(np.asarray(cfg["point"], float).reshape(-1, 3), (1.0, cfg["band.K"]),
                             cfg.p, cfg["epsilon"], cfg["band.nodes_per_unit"], cfg.disk)


# ---------------------------------------------------------------------------
# stages


@dataclass
class RunContext:
    cfg: PipelineConfig
    out: Path
    manifest: io.Manifest
    cache: dict = field(default_factory=dict)

    def path(self, name: str) -> Path:
        return self.out / name

    def register(self, name: str, path: Path, stage: str) -> None:
        self.manifest.add(name, path, stage)
        side = path.with_suffix(".json")
        if path.suffix != ".json" and side.exists():
            self.manifest.add(name + ".meta", side, stage)

    def require(self, name: str) -> Path:
        p = self.path(name)
        if not p.exists():
            raise ConfigurationError(f"missing input {p}: run the producing stage first")
        return p


def _realization(ctx: RunContext) -> FieldRealization:
    if "lam" not in ctx.cache:
        grid, vals, meta = io.read_field(ctx.require("realization.rscf"))
        ctx.cache["lam"] = FieldRealization(grid, vals, int(meta["seed"]), float(meta["epsilon"]),
                                            meta.get("meta", {}).get("strength", ""))
    return ctx.cache["lam"]


def stage_synth(ctx: RunContext) -> None:
    cfg = ctx.cfg
    grid = cfg.grid
    st = _strength(cfg, grid)
    A = st.anisotropy
    p = io.write_field(ctx.path("anisotropy.rscf"), grid, np.stack([A.a1, A.a2, A.a3], -1),
                       cfg["epsilon"], None, {"preset": cfg["anisotropy"], "components": ["a1", "a2", "a3"]})
    ctx.register("anisotropy", p, "synth")
    if cfg["anisotropy"] == "potential":
        _, v = potential_anisotropy(grid, cfg.disk, cfg["anisotropy.direction"])
        lam = sample_potential_field(grid, v, cfg["epsilon"], cfg["seed"], cfg["kappa"], cfg.disk)
    else:
        lam = sample_field(CovarianceModel(st, cfg["kappa"]), grid, cfg["seed"])
    p = io.write_field(ctx.path("realization.rscf"), grid, lam.values, cfg["epsilon"], cfg["seed"],
                       {"strength": lam.strength_ref})
    ctx.register("realization", p, "synth")
    ctx.cache["lam"] = lam


def stage_forward(ctx: RunContext) -> None:
    cfg = ctx.cfg
    lam = _realization(ctx)
    mc = _measurement(cfg)
    items = [(i, float(k)) for i in range(len(mc.points)) for k in cfg["forward.k"]]

    def one(item):
        i, k = item
        x = mc.points[i]
        phi = solve_density(lam, x, k, mc)
        us = scattered_field(phi, x, k)
        u1 = born_u1(lam, x, x, k, mc.p)
        bs = born_series(lam, x, k, mc, cfg["forward.born_terms"])
        return {"point": i, "k": k, "u_s_re": us.real, "u_s_im": us.imag, "u1_re": u1.real,
                "u1_im": u1.imag, "born_rel_diff": abs(us - u1) / abs(u1) if u1 != 0 else 0.0,
                "gmres_iterations": len(phi.residual_history) - 1,
                "born_ratio_max": float(np.max(bs.ratios)) if len(bs.ratios) else 0.0}

    rows = ordered_map(one, items, cfg["workers"])
    p = io.write_csv(ctx.path("forward.csv"), rows)
    ctx.register("forward", p, "forward")


def stage_measure(ctx: RunContext) -> None:
    cfg = ctx.cfg
    lam = _realization(ctx)
    mc = _measurement(cfg)
    res = ordered_map(lambda x: measure(lam, x, mc, cfg["solver"]), list(mc.points), cfg["workers"])
    n0 = np.array([r.value for r in res])
    se = np.array([r.tail * r.value for r in res])
    p = io.write_dataset(ctx.path("dataset.csv"), mc.points, n0, se,
                         {"config": mc.to_dict(), "solver": cfg["solver"], "seed": cfg["seed"],
                          "stderr": "relative tail change over the last quarter of the band, times n0"})
    ctx.register("dataset", p, "measure")
    if cfg["emit_plots"]:
        rows = [{"point": i, "K": float(K), "running": float(v)}
                for i, r in enumerate(res) for K, v in zip(r.running_K, r.running)]
        ctx.register("plot.band_convergence", io.write_csv(ctx.path("plot_band_convergence.csv"), rows),
                     "measure")


def stage_reduce(ctx: RunContext) -> None:
    cfg = ctx.cfg
    disk = cfg.disk
    centers = cfg.centers
    st = _strength(cfg, radon_strength_grid(cfg))
    P = centers.points()
    H = np.stack([make_heights(P[i, j], disk, cfg["heights.n"])
                  for i in range(centers.shape[0]) for j in range(centers.shape[1])])
    H = H.reshape(centers.shape + (cfg["heights.n"],))
    radii = np.linspace(0.0, disk.diameter, 65)[:-1]
    if cfg["reduce.source"] == "asymptotic":
        n0 = diagonal_R_grid(st, centers, H, "area", width=0.25)
        rg = reduce_grid(n0, centers, H, cfg["epsilon"], disk, radii, n_local=cfg["radii.n"],
                         weight=cfg["reduce.weight"], noise=cfg["reduce.noise"], workers=cfg["workers"])
        p = io.write_field(ctx.path("n0_grid.rscf"), centers, n0, cfg["epsilon"], None,
                           {"heights": "per center, see make_heights", "n_heights": cfg["heights.n"]})
        ctx.register("n0_grid", p, "reduce")
    else:
        rg = radon_forward(st, centers, radii, boundary="zero")
    p = io.write_field(ctx.path("radon.rscf"), centers, rg.values, cfg["epsilon"], None,
                       {"radii": radii.tolist(), "source": cfg["reduce.source"],
                        "meta": {k: v for k, v in rg.meta.items()}})
    ctx.register("radon", p, "reduce")
    ctx.cache["radon"] = rg


def _radon(ctx: RunContext) -> RadonGrid:
    if "radon" not in ctx.cache:
        grid, vals, meta = io.read_field(ctx.require("radon.rscf"))
        radii = np.asarray(meta["meta"]["radii"])
        ctx.cache["radon"] = RadonGrid(grid.points(), radii, vals.reshape(grid.shape + radii.shape), grid)
    return ctx.cache["radon"]


def stage_radon(ctx: RunContext) -> None:
    cfg = ctx.cfg
    sl = slices_from_radon(_radon(ctx), M=cfg["slices.M"])
    vals = np.stack([sl.slice_par.real, sl.slice_par.imag, sl.slice_perp.real, sl.slice_perp.imag,
                     sl.mask.astype(float)], -1)
    p = io.write_field(ctx.path("slices.rscf"), sl.grid, vals, cfg["epsilon"], None,
                       {"components": ["par_re", "par_im", "perp_re", "perp_im", "mask"],
                        "diagnostics": sl.diagnostics, "masked_fraction": sl.masked_fraction})
    ctx.register("slices", p, "radon")
    ctx.cache["slices"] = sl
    if cfg["emit_plots"]:
        KX, KY = sl.grid.frequencies()
        rho = np.hypot(KX, KY)
        rows = [{"xi": float(q), "abs_par": float(np.abs(sl.slice_par[rho == q]).mean()),
                 "abs_perp": float(np.abs(sl.slice_perp[rho == q]).mean())}
                for q in np.unique(rho[sl.mask])]
        ctx.register("plot.slices", io.write_csv(ctx.path("plot_slice_magnitudes.csv"), rows), "radon")


def _slices(ctx: RunContext):
    if "slices" not in ctx.cache:
        from .sradon import SpectralSlices
        grid, v, meta = io.read_field(ctx.require("slices.rscf"))
        m = meta["meta"]
        ctx.cache["slices"] = SpectralSlices(grid, v[..., 0] + 1j * v[..., 1], v[..., 2] + 1j * v[..., 3],
                                             v[..., 4] > 0.5, np.zeros(grid.shape), np.zeros(grid.shape, int),
                                             m["diagnostics"])
    return ctx.cache["slices"]


def stage_recover(ctx: RunContext) -> None:
    cfg = ctx.cfg
    sl = _slices(ctx)
    truth = build_anisotropy(cfg, sl.grid)
    known = cfg["recover.known"]
    if known == "none":
        rec = recover_trace(sl)
    else:
        rec = recover_components(sl, known, getattr(truth, known))
    comps = rec.components()
    p = io.write_field(ctx.path("recovered.rscf"), sl.grid, np.stack(list(comps.values()), -1),
                       cfg["epsilon"], None, {"components": list(comps)})
    ctx.register("recovered", p, "recover")
    truth_f = {"trace": truth.a1 + truth.a2, "a1": truth.a1, "a2": truth.a2, "a3": truth.a3}
    errors = {k: relative_l2(v, truth_f[k]) for k, v in comps.items()}
    report = {"errors_rel_l2": errors, "diagnostics": rec.diagnostics, "known": known,
              "slices": sl.diagnostics}
    p = io.write_json(ctx.path("recovery_report.json"), report)
    ctx.register("recovery_report", p, "recover")
    if cfg["emit_plots"]:
        X, Y = sl.grid.mesh()
        err = comps["trace"] - truth_f["trace"]
        rows = [{"x1": float(a), "x2": float(b), "trace": float(t), "error": float(e)}
                for a, b, t, e in zip(X.ravel(), Y.ravel(), comps["trace"].ravel(), err.ravel())]
        ctx.register("plot.recovery_error", io.write_csv(ctx.path("plot_recovery_error.csv"), rows),
                     "recover")


def stage_verify(ctx: RunContext) -> None:
    cfg = ctx.cfg
    out: dict = {}
    if cfg["verify.norm_k"]:
        ks = np.asarray(cfg["verify.norm_k"], float)
        norms = np.array(ordered_map(lambda k: slp_norm(cfg.grid, cfg.disk, float(k)), ks, cfg["workers"]))
        slope = float(np.polyfit(np.log(ks), np.log(norms), 1)[0])
        out["norm_decay"] = {"k": ks.tolist(), "norm": norms.tolist(), "slope": slope}
        if cfg["emit_plots"]:
            ctx.register("plot.norm_decay", io.write_csv(
                ctx.path("plot_norm_decay.csv"), [{"k": float(k), "norm": float(n)} for k, n in zip(ks, norms)]),
                "verify")
    if cfg["verify.k"] and len(cfg["point"]):
        st = _strength(cfg, cfg.grid)
        rep = verify_asymptotic_law(CovarianceModel(st, cfg["kappa"]), cfg["point"][0], cfg["verify.k"],
                                    cfg["verify.realizations"], cfg.grid, cfg.p, cfg["seed"],
                                    workers=cfg["workers"])
        out["asymptotic_law"] = rep.to_dict()
        if cfg["emit_plots"]:
            ctx.register("plot.asymptotic", io.write_csv(ctx.path("plot_asymptotic_law.csv"), rep.rows()),
                         "verify")
    p = io.write_json(ctx.path("verify.json"), out)
    ctx.register("verify", p, "verify")


STAGE_FUNCS = {"synth": stage_synth, "forward": stage_forward, "measure": stage_measure,
               "reduce": stage_reduce, "radon": stage_radon, "recover": stage_recover,
               "verify": stage_verify}


def run_pipeline(cfg: PipelineConfig, stages=None) -> tuple[int, io.Manifest]:
    """Run ``stages`` (default: the configured ones) in dependency order.

    Returns (exit status, manifest).  With no stages nothing is written and
    the manifest is empty.
    """
    todo = [s for s in STAGES if s in (cfg.stages if stages is None else stages)]
    manifest = io.Manifest()
    if not todo:
        return 0, manifest
    out = Path(cfg["output"])
    out.mkdir(parents=True, exist_ok=True)
    mpath = out / "manifest.json"
    if mpath.exists():
        prev = io.read_json(mpath).get("artifacts", {})
        manifest.entries.update({k: v for k, v in prev.items()
                                 if v.get("stage") not in todo and (out / v["path"]).exists()})
    cfg_path = out / "config.txt"
    cfg_path.write_text(cfg.canonical_text())
    manifest.add("config", cfg_path, "config")
    ctx = RunContext(cfg, out, manifest)
    for s in todo:
        log.info("stage %s", s)
        STAGE_FUNCS[s](ctx)
    manifest.write(mpath)
    return 0, manifest
