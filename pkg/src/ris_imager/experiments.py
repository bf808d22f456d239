"""Monte Carlo orchestration: sweep expansion, the per-trial pipeline
(trajectory -> scene -> channels -> codebook -> measurements -> solve ->
metrics), preset experiments at desk scale, and result serialization.

Every trial derives its random streams from (seed, point index, trial index),
so identical configurations produce byte-identical result tables.
"""

from __future__ import annotations

import json
import subprocess
from dataclasses import dataclass, replace

import numpy as np

from . import __version__
from .channel import (
    ChannelSet,
    build_channels,
    build_sensing_matrices,
    calibrate_noise,
    freespace_subpath,
    load_codebook_csv,
    random_codebook,
    synthesize_measurements,
)
from .config import ConfigError, ExperimentConfig, canonical_text, config_hash, with_overrides
from .geometry import Trajectory, pairwise_distances, random_trajectory, voxel_centers
from .metrics import NMSE_FLOOR_DB, ave_nmse_ratio, two_point_success
from .scene import (
    MultiViewScene,
    PriorParams,
    compose_images,
    gamma_scaling,
    generate_scene,
    sample_amplitude_process,
)
from .solvers import GampConfig, em_turbo_gamp, gamp_single, ls_baseline, sals_oracle, sp_baseline


class NumericalError(Exception):
    """Unrecoverable numerical failure of a whole experiment run."""


@dataclass(frozen=True)
class MetricRecord:
    sweep_axis: str
    sweep_value: float | str
    algorithm: str
    metric: str
    mean: float
    std: float
    n_trials: int
    n_failures: int


def build_id() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True,
            text=True,
            timeout=5,
        )
        if out.returncode == 0 and out.stdout.strip():
            return out.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    return f"ris-imager-{__version__}"


def expand_sweep(cfg: ExperimentConfig) -> list:
    """List of (sweep_value, config) pairs realizing the sweep axis."""
    axis = cfg.sweep
    if axis == "none":
        return [("-", cfg)]
    values = cfg.sweep_values
    if not values:
        raise ConfigError("experiment.sweep_values required for a sweep")
    points = []
    if axis == "roi-position":
        if len(values) % 2 != 0:
            raise ConfigError("roi-position sweep needs x y pairs")
        for x, y in zip(values[0::2], values[1::2]):
            geo = replace(cfg.geometry, roi_center=(float(x), float(y), 0.0))
            points.append((f"{x:g},{y:g}", with_overrides(cfg, geometry=geo)))
        return points
    for value in values:
        if axis == "D":
            geo = replace(cfg.geometry, roi_center=(float(value), 0.0, 0.0))
            sub = with_overrides(cfg, geometry=geo)
        elif axis == "K":
            sub = with_overrides(cfg, codebook=replace(cfg.codebook, k=int(value)))
        elif axis == "T":
            ue = replace(cfg.geometry.ue, n_positions=int(value))
            sub = with_overrides(cfg, geometry=replace(cfg.geometry, ue=ue))
        elif axis == "gamma":
            step, p01, rho = gamma_scaling(float(value))
            ue = replace(cfg.geometry.ue, step=max(step, 1e-3))
            sub = with_overrides(
                cfg,
                geometry=replace(cfg.geometry, ue=ue),
                prior=cfg.prior.with_(p01=p01, rho=rho),
            )
        elif axis == "voxel":
            sub = with_overrides(cfg, geometry=replace(cfg.geometry, roi_voxel=float(value)))
        elif axis == "snr":
            sub = with_overrides(cfg, snr_db=float(value))
        else:
            raise ConfigError(f"unsupported sweep axis {axis!r}")
        points.append((float(value), sub))
    return points


class _PointContext:
    """Geometry-level cache shared by all trials of one sweep point."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.grid = cfg.geometry.grid()
        self.ris = cfg.geometry.ris()
        self.voxels = voxel_centers(self.grid)
        static = build_channels(
            self.grid, self.ris, cfg.geometry.ap_position, [self._probe_point()], gain=1.0
        )
        self.h_sa = static.h_sa
        self.H_vs = static.H_vs
        self.fixed_codebook = None
        if cfg.codebook.file:
            self.fixed_codebook = load_codebook_csv(cfg.codebook.file)
        elif cfg.codebook.seed is not None:
            self.fixed_codebook = random_codebook(
                cfg.codebook.k,
                self.ris.n_elements,
                mode=cfg.codebook.mode,
                bits=cfg.codebook.bits,
                seed=cfg.codebook.seed,
            )
        self.fixed_positions = cfg.geometry.ue.fixed_positions()
        self.targets = cfg.targets or self._default_targets()

    def _probe_point(self):
        # any point away from the geometry works; only H_vs/h_sa are kept
        return np.asarray(self.cfg.geometry.ap_position, dtype=float) + np.array([1.0, 2.0, 3.0])

    def _default_targets(self):
        nx, ny, nz = self.grid.counts
        if ny < 2:
            return (0, min(1, self.grid.n_voxels - 1))
        j = ny // 2
        return (
            self.grid.ijk_to_index(nx // 2, j - 1, nz // 2),
            self.grid.ijk_to_index(nx // 2, j, nz // 2),
        )

    def channels_for(self, positions) -> ChannelSet:
        d_uv = pairwise_distances(np.atleast_2d(positions), self.voxels)
        return ChannelSet(h_sa=self.h_sa, H_vs=self.H_vs, h_uv=freespace_subpath(d_uv), gain=1.0)


def _trajectory(ctx: _PointContext, trial_seed) -> np.ndarray:
    cfg = ctx.cfg.geometry.ue
    if ctx.fixed_positions is not None:
        return ctx.fixed_positions
    seed = cfg.seed if cfg.seed is not None else trial_seed
    if cfg.n_positions == 1:
        # degenerate walk: single uniform point
        return random_trajectory(cfg.box(), 1, min(cfg.step, 1.0), seed=seed).positions
    return random_trajectory(cfg.box(), cfg.n_positions, cfg.step, seed=seed).positions


def _scene(ctx: _PointContext, n_views, trial_seed) -> MultiViewScene:
    cfg = ctx.cfg
    n = ctx.grid.n_voxels
    if cfg.metric == "phi":
        # two fixed point targets, amplitudes still evolving across views
        amps = sample_amplitude_process(cfg.prior, 2, n_views, seed=trial_seed)
        if cfg.truncate_negative:
            amps = np.maximum(amps, 0.0)
        supports = np.zeros((n_views, n), dtype=np.int8)
        amplitudes = np.zeros((n_views, n))
        supports[:, list(ctx.targets)] = 1
        amplitudes[:, list(ctx.targets)] = amps
        return MultiViewScene(
            supports=supports, amplitudes=amplitudes, images=compose_images(supports, amplitudes)
        )
    seq = trial_seed if isinstance(trial_seed, np.random.SeedSequence) else np.random.SeedSequence(trial_seed)
    for child in seq.spawn(64):
        scene = generate_scene(cfg.prior, n, n_views, seed=child, truncate_negative=cfg.truncate_negative)
        if np.all(np.linalg.norm(scene.images, axis=1) > 0):
            return scene
    raise NumericalError("could not draw a scene with nonzero views; alpha too small?")


def _solver_prior(cfg: ExperimentConfig, chi2: float, measurements) -> PriorParams:
    prior = cfg.prior.with_(chi2=max(chi2, 1e-18))
    mode = cfg.solver.em_init
    if mode == "config":
        return prior
    if mode == "perturbed":
        return PriorParams(
            alpha=min(prior.alpha * 2.0, 0.5),
            eta=prior.eta * 0.7,
            sigma2=prior.sigma2 * 2.0,
            p01=min(prior.p01 * 2.0 + 0.05, 0.9),
            rho=prior.rho * 0.6,
            chi2=prior.chi2 * 4.0,
        )
    if mode == "data":
        power = float(np.mean(np.abs(measurements) ** 2))
        return PriorParams(
            alpha=0.05, eta=1.0, sigma2=1.0, p01=0.2, rho=0.5, chi2=max(0.01 * power, 1e-18)
        )
    raise ConfigError(f"unknown solver.em_init mode {mode!r}")


def _gamp_cfg(cfg: ExperimentConfig) -> GampConfig:
    return GampConfig(
        max_iters=cfg.solver.max_iters,
        tol=cfg.solver.tol,
        damping=cfg.solver.damping,
        refine=cfg.solver.refine,
    )


def run_trial(ctx: _PointContext, point_index: int, trial: int) -> float:
    """One Monte Carlo trial; returns the per-trial metric value."""
    cfg = ctx.cfg
    seq = np.random.SeedSequence([cfg.seed, point_index, trial])
    s_traj, s_scene, s_code, s_noise = seq.spawn(4)

    positions = _trajectory(ctx, s_traj)
    n_views = positions.shape[0]
    channels = ctx.channels_for(positions)
    codebook = ctx.fixed_codebook or random_codebook(
        cfg.codebook.k, ctx.ris.n_elements, mode=cfg.codebook.mode, bits=cfg.codebook.bits, seed=s_code
    )
    sensing = build_sensing_matrices(channels, codebook)
    scene = _scene(ctx, n_views, s_scene)
    measurements = synthesize_measurements(sensing, scene.images, cfg.snr_db, seed=s_noise)
    prior = _solver_prior(cfg, measurements.chi2, measurements.y)
    gamp_cfg = _gamp_cfg(cfg)

    algorithm = cfg.solver.algorithm
    if algorithm == "turbo":
        out = em_turbo_gamp(
            list(sensing.a),
            list(measurements.y),
            prior,
            gamp_cfg,
            outer_iters=cfg.solver.outer_iters,
            learn=cfg.solver.em_learn,
        )
        estimates = out.x_hat
    elif algorithm == "gamp":
        estimates = np.stack(
            [gamp_single(sensing.a[t], measurements.y[t], prior, gamp_cfg).x_hat for t in range(n_views)]
        )
    elif algorithm == "sp":
        sparsity = max(1, int(round(cfg.prior.alpha * ctx.grid.n_voxels)))
        estimates = np.stack(
            [sp_baseline(sensing.a[t], measurements.y[t], sparsity) for t in range(n_views)]
        )
    elif algorithm == "sals":
        estimates = []
        for t in range(n_views):
            x_hat, _ = sals_oracle(sensing.a[t], measurements.y[t], np.flatnonzero(scene.images[t]))
            estimates.append(x_hat)
        estimates = np.stack(estimates)
    else:  # ls
        estimates = np.stack(
            [ls_baseline(sensing.a[t], measurements.y[t]) for t in range(n_views)]
        )

    if cfg.metric == "phi":
        mean_abs = np.mean(np.abs(estimates), axis=0)
        return float(two_point_success(mean_abs, ctx.targets))
    return ave_nmse_ratio(estimates, scene.images)


def run_point(cfg: ExperimentConfig, point_index: int) -> tuple:
    """All trials of one sweep point. Returns (values, n_failures)."""
    ctx = _PointContext(cfg)
    values = []
    failures = 0
    for trial in range(cfg.trials):
        try:
            values.append(run_trial(ctx, point_index, trial))
        except (np.linalg.LinAlgError, ValueError, FloatingPointError):
            failures += 1
    return values, failures


def summarize(cfg: ExperimentConfig, sweep_value, values, failures) -> MetricRecord:
    fixed = cfg.geometry.ue.fixed_positions()
    n_views = cfg.geometry.ue.n_positions if fixed is None else fixed.shape[0]
    multi = n_views > 1
    if cfg.metric == "phi":
        phi = float(np.mean(values)) if values else float("nan")
        std = float(np.sqrt(max(phi * (1 - phi), 0.0) / max(len(values), 1)))
        name = "phi"
        mean = phi
    else:
        name = "avenmse_db" if multi else "nmse_db"
        if values:
            ratio = float(np.mean(values))
            mean = NMSE_FLOOR_DB if ratio <= 10 ** (NMSE_FLOOR_DB / 10) else float(10.0 * np.log10(ratio))
            per_db = 10.0 * np.log10(np.maximum(values, 1e-30))
            std = float(np.std(per_db))
        else:
            mean, std = float("nan"), float("nan")
    return MetricRecord(
        sweep_axis=cfg.sweep,
        sweep_value=sweep_value,
        algorithm=cfg.solver.algorithm,
        metric=name,
        mean=mean,
        std=std,
        n_trials=len(values),
        n_failures=failures,
    )


def run_experiment(cfg: ExperimentConfig) -> list:
    """Execute the sweep described by `cfg`; returns MetricRecord rows."""
    rows = []
    for point_index, (sweep_value, sub) in enumerate(expand_sweep(cfg)):
        values, failures = run_point(sub, point_index)
        rows.append(summarize(sub, sweep_value, values, failures))
    return rows


CSV_HEADER = "sweep_axis,sweep_value,algorithm,metric,mean,std,n_trials,n_failures,config_hash,seed,build_id"


def write_results(path_prefix: str, rows: list, cfg: ExperimentConfig) -> tuple:
    """Write <prefix>.csv plus a JSON sidecar echoing the configuration."""
    digest = config_hash(cfg)
    bid = build_id()
    csv_path = f"{path_prefix}.csv"
    json_path = f"{path_prefix}.json"
    with open(csv_path, "w", encoding="utf-8") as handle:
        handle.write(CSV_HEADER + "\n")
        for r in rows:
            handle.write(
                f"{r.sweep_axis},{r.sweep_value},{r.algorithm},{r.metric},"
                f"{r.mean!r},{r.std!r},{r.n_trials},{r.n_failures},{digest},{cfg.seed},{bid}\n"
            )
    sidecar = {
        "config": canonical_text(cfg),
        "config_hash": digest,
        "build_id": bid,
        "rows": len(rows),
    }
    with open(json_path, "w", encoding="utf-8") as handle:
        json.dump(sidecar, handle, indent=2, sort_keys=True)
        handle.write("\n")
    return csv_path, json_path
