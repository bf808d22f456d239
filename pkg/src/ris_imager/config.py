"""Structured key-value configuration files.

Format: one `dotted.key = value` per line, `#` starts a comment. Values are
booleans, numbers, `inf`, bare strings, or whitespace-separated number
tuples. Unknown keys are rejected so typos fail loudly (exit code 2 at the
CLI). Defaults reproduce the joint multi-view simulation table.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import Box, PlanarArray, Trajectory, VoxelGrid
from .scene import PriorParams


class ConfigError(Exception):
    """Malformed or inconsistent configuration."""


KNOWN_KEYS = {
    "roi.center": "floats",
    "roi.counts": "ints",
    "roi.voxel_size": "float",
    "ris.center": "floats",
    "ris.rows": "int",
    "ris.cols": "int",
    "ris.spacing": "float",
    "ap.position": "floats",
    "ue.trajectory": "floats",
    "ue.region": "floats",
    "ue.T": "int",
    "ue.d0": "float",
    "ue.seed": "int",
    "prior.alpha": "float",
    "prior.eta": "float",
    "prior.sigma2": "float",
    "prior.p01": "float",
    "prior.rho": "float",
    "prior.truncate_negative": "bool",
    "codebook.k": "int",
    "codebook.mode": "str",
    "codebook.bits": "int",
    "codebook.seed": "int",
    "codebook.file": "str",
    "noise.snr_db": "float",
    "solver.algorithm": "str",
    "solver.damping": "float",
    "solver.max_iters": "int",
    "solver.tol": "float",
    "solver.outer_iters": "int",
    "solver.refine": "str",
    "solver.em_learn": "bool",
    "solver.em_init": "str",
    "experiment.trials": "int",
    "experiment.seed": "int",
    "experiment.sweep": "str",
    "experiment.sweep_values": "floats",
    "experiment.metric": "str",
    "experiment.targets": "ints",
    "experiment.out": "str",
}

SWEEP_AXES = ("none", "D", "K", "T", "gamma", "voxel", "snr", "roi-position")
ALGORITHMS = ("gamp", "turbo", "sp", "sals", "ls")


def _parse_scalar(token: str):
    low = token.lower()
    if low in ("true", "false"):
        return low == "true"
    if low in ("inf", "+inf"):
        return float("inf")
    try:
        return int(token)
    except ValueError:
        pass
    try:
        return float(token)
    except ValueError:
        return token


def parse_config_text(text: str) -> dict:
    """Flat dict of dotted keys; raises ConfigError on malformed lines."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in KNOWN_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        tokens = value.split()
        if not tokens:
            raise ConfigError(f"line {lineno}: empty value for {key!r}")
        parsed = [_parse_scalar(t) for t in tokens]
        out[key] = parsed[0] if len(parsed) == 1 else tuple(parsed)
    return out


@dataclass(frozen=True)
class UeConfig:
    """Either a fixed trajectory or the parameters of a random one.

    With `seed` unset the harness derives one random trajectory per Monte
    Carlo trial; with `seed` set the trajectory is fixed across trials.
    """

    trajectory: tuple | None = None
    region: tuple = (0.0, 100.0, -50.0, 50.0, -15.0, 15.0)
    n_positions: int = 10
    step: float = 5.0
    seed: int | None = None

    def box(self) -> Box:
        lo = (self.region[0], self.region[2], self.region[4])
        hi = (self.region[1], self.region[3], self.region[5])
        return Box(lo=lo, hi=hi)

    def fixed_positions(self) -> np.ndarray | None:
        if self.trajectory is None:
            return None
        flat = np.asarray(self.trajectory, dtype=float)
        if flat.size % 3 != 0:
            raise ConfigError("ue.trajectory must list x y z triples")
        return flat.reshape(-1, 3)


@dataclass(frozen=True)
class GeometryConfig:
    roi_center: tuple = (50.0, 0.0, 0.0)
    roi_counts: tuple = (10, 10, 10)
    roi_voxel: float = 2.0
    ris_center: tuple = (0.0, 0.0, 0.0)
    ris_rows: int = 48
    ris_cols: int = 48
    ris_spacing: float = 0.5
    ap_position: tuple = (20.0, 20.0, 30.0)
    ue: UeConfig = field(default_factory=UeConfig)

    def grid(self) -> VoxelGrid:
        return VoxelGrid(center=self.roi_center, counts=self.roi_counts, voxel_size=self.roi_voxel)

    def ris(self) -> PlanarArray:
        return PlanarArray(
            center=self.ris_center, rows=self.ris_rows, cols=self.ris_cols, spacing=self.ris_spacing
        )


@dataclass(frozen=True)
class CodebookConfig:
    k: int = 80
    mode: str = "continuous"
    bits: int = 1
    seed: int | None = None
    file: str | None = None


@dataclass(frozen=True)
class SolverConfig:
    algorithm: str = "turbo"
    damping: float = 0.4
    max_iters: int = 300
    tol: float = 1e-6
    outer_iters: int = 5
    refine: str = "full"
    em_learn: bool = True
    em_init: str = "config"


@dataclass(frozen=True)
class ExperimentConfig:
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    prior: PriorParams = field(
        default_factory=lambda: PriorParams(alpha=0.02, eta=1.0, sigma2=1.0, p01=0.1, rho=0.9)
    )
    truncate_negative: bool = False
    codebook: CodebookConfig = field(default_factory=CodebookConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    snr_db: float = 20.0
    trials: int = 100
    seed: int = 0
    sweep: str = "none"
    sweep_values: tuple = ()
    metric: str = "nmse"
    targets: tuple | None = None
    out: str = "results"

    def validate(self) -> "ExperimentConfig":
        if self.trials < 1:
            raise ConfigError("experiment.trials must be >= 1")
        if self.sweep not in SWEEP_AXES:
            raise ConfigError(f"experiment.sweep must be one of {SWEEP_AXES}")
        if self.solver.algorithm not in ALGORITHMS:
            raise ConfigError(f"solver.algorithm must be one of {ALGORITHMS}")
        if self.metric not in ("nmse", "phi"):
            raise ConfigError("experiment.metric must be nmse or phi")
        if self.metric == "phi" and self.targets is not None and len(self.targets) != 2:
            raise ConfigError("experiment.targets needs exactly two voxel indices")
        if self.solver.refine not in ("full", "light", "off"):
            raise ConfigError("solver.refine must be full, light or off")
        if self.codebook.mode not in ("continuous", "discrete"):
            raise ConfigError("codebook.mode must be continuous or discrete")
        try:
            self.geometry.grid()
            self.geometry.ris()
            self.geometry.ue.box()
            self.geometry.ue.fixed_positions()
        except (ValueError, ConfigError) as exc:
            raise ConfigError(str(exc)) from exc
        return self


def config_from_mapping(flat: dict) -> ExperimentConfig:
    def take(key, default):
        return flat.get(key, default)

    base = ExperimentConfig()
    ue = UeConfig(
        trajectory=flat.get("ue.trajectory"),
        region=take("ue.region", UeConfig.region),
        n_positions=int(take("ue.T", UeConfig.n_positions)),
        step=float(take("ue.d0", UeConfig.step)),
        seed=flat.get("ue.seed"),
    )
    if ue.trajectory is not None and np.isscalar(ue.trajectory):
        raise ConfigError("ue.trajectory must list at least one x y z triple")
    geometry = GeometryConfig(
        roi_center=take("roi.center", GeometryConfig.roi_center),
        roi_counts=take("roi.counts", GeometryConfig.roi_counts),
        roi_voxel=float(take("roi.voxel_size", GeometryConfig.roi_voxel)),
        ris_center=take("ris.center", GeometryConfig.ris_center),
        ris_rows=int(take("ris.rows", GeometryConfig.ris_rows)),
        ris_cols=int(take("ris.cols", GeometryConfig.ris_cols)),
        ris_spacing=float(take("ris.spacing", GeometryConfig.ris_spacing)),
        ap_position=take("ap.position", GeometryConfig.ap_position),
        ue=ue,
    )
    try:
        prior = PriorParams(
            alpha=float(take("prior.alpha", base.prior.alpha)),
            eta=float(take("prior.eta", base.prior.eta)),
            sigma2=float(take("prior.sigma2", base.prior.sigma2)),
            p01=float(take("prior.p01", base.prior.p01)),
            rho=float(take("prior.rho", base.prior.rho)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    codebook = CodebookConfig(
        k=int(take("codebook.k", CodebookConfig.k)),
        mode=str(take("codebook.mode", CodebookConfig.mode)),
        bits=int(take("codebook.bits", CodebookConfig.bits)),
        seed=flat.get("codebook.seed"),
        file=flat.get("codebook.file"),
    )
    solver = SolverConfig(
        algorithm=str(take("solver.algorithm", SolverConfig.algorithm)),
        damping=float(take("solver.damping", SolverConfig.damping)),
        max_iters=int(take("solver.max_iters", SolverConfig.max_iters)),
        tol=float(take("solver.tol", SolverConfig.tol)),
        outer_iters=int(take("solver.outer_iters", SolverConfig.outer_iters)),
        refine=str(take("solver.refine", SolverConfig.refine)),
        em_learn=bool(take("solver.em_learn", SolverConfig.em_learn)),
        em_init=str(take("solver.em_init", SolverConfig.em_init)),
    )
    raw_targets = flat.get("experiment.targets")
    if raw_targets is not None and np.isscalar(raw_targets):
        raw_targets = (int(raw_targets),)
    sweep_values = flat.get("experiment.sweep_values", ())
    if np.isscalar(sweep_values):
        sweep_values = (sweep_values,)
    cfg = ExperimentConfig(
        geometry=geometry,
        prior=prior,
        truncate_negative=bool(take("prior.truncate_negative", False)),
        codebook=codebook,
        solver=solver,
        snr_db=float(take("noise.snr_db", 20.0)),
        trials=int(take("experiment.trials", 100)),
        seed=int(take("experiment.seed", 0)),
        sweep=str(take("experiment.sweep", "none")),
        sweep_values=tuple(sweep_values),
        metric=str(take("experiment.metric", "nmse")),
        targets=tuple(int(t) for t in raw_targets) if raw_targets is not None else None,
        out=str(take("experiment.out", "results")),
    )
    return cfg.validate()


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as handle:
        return config_from_mapping(parse_config_text(handle.read()))


def canonical_text(cfg: ExperimentConfig) -> str:
    """Stable textual form used for hashing and the JSON sidecar."""
    geometry = cfg.geometry
    ue = geometry.ue
    lines = {
        "roi.center": geometry.roi_center,
        "roi.counts": geometry.roi_counts,
        "roi.voxel_size": geometry.roi_voxel,
        "ris.center": geometry.ris_center,
        "ris.rows": geometry.ris_rows,
        "ris.cols": geometry.ris_cols,
        "ris.spacing": geometry.ris_spacing,
        "ap.position": geometry.ap_position,
        "ue.trajectory": ue.trajectory,
        "ue.region": ue.region,
        "ue.T": ue.n_positions,
        "ue.d0": ue.step,
        "ue.seed": ue.seed,
        "prior.alpha": cfg.prior.alpha,
        "prior.eta": cfg.prior.eta,
        "prior.sigma2": cfg.prior.sigma2,
        "prior.p01": cfg.prior.p01,
        "prior.rho": cfg.prior.rho,
        "prior.truncate_negative": cfg.truncate_negative,
        "codebook.k": cfg.codebook.k,
        "codebook.mode": cfg.codebook.mode,
        "codebook.bits": cfg.codebook.bits,
        "codebook.seed": cfg.codebook.seed,
        "codebook.file": cfg.codebook.file,
        "noise.snr_db": cfg.snr_db,
        "solver.algorithm": cfg.solver.algorithm,
        "solver.damping": cfg.solver.damping,
        "solver.max_iters": cfg.solver.max_iters,
        "solver.tol": cfg.solver.tol,
        "solver.outer_iters": cfg.solver.outer_iters,
        "solver.refine": cfg.solver.refine,
        "solver.em_learn": cfg.solver.em_learn,
        "solver.em_init": cfg.solver.em_init,
        "experiment.trials": cfg.trials,
        "experiment.seed": cfg.seed,
        "experiment.sweep": cfg.sweep,
        "experiment.sweep_values": cfg.sweep_values,
        "experiment.metric": cfg.metric,
        "experiment.targets": cfg.targets,
        "experiment.out": cfg.out,
    }

    def fmt(value):
        if isinstance(value, (tuple, list)):
            return " ".join(fmt(v) for v in value)
        if isinstance(value, float):
            return repr(value)
        return str(value)

    return "\n".join(f"{k} = {fmt(v)}" for k, v in sorted(lines.items()) if v is not None) + "\n"


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(canonical_text(cfg).encode("utf-8")).hexdigest()[:16]


def with_overrides(cfg: ExperimentConfig, **kwargs) -> ExperimentConfig:
    return replace(cfg, **kwargs).validate()
