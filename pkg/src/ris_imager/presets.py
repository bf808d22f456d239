"""Desk-scale experiment presets.

Each preset returns a list of (run_label, ExperimentConfig) pairs whose rows
are written into one result table. Trial counts default well below the
published Monte Carlo budgets so a preset finishes in minutes; pass
`trials` to tighten the confidence intervals.
"""

from __future__ import annotations

from dataclasses import replace

from .config import CodebookConfig, ExperimentConfig, GeometryConfig, SolverConfig, UeConfig, with_overrides
from .scene import PriorParams

SINGLE_VIEW_UE = (30.0, 30.0, 10.0)
AP_POSITION = (20.0, 20.0, 30.0)


def table3_config(**overrides) -> ExperimentConfig:
    """Joint multi-view defaults: the simulation-parameter table."""
    cfg = ExperimentConfig()
    return with_overrides(cfg, **overrides) if overrides else cfg.validate()


def single_view_config(k: int = 200, trials: int = 100, seed: int = 0) -> ExperimentConfig:
    """Fixed-terminal single-view scenario used for the K-sweep and codebook studies."""
    geometry = GeometryConfig(
        ue=UeConfig(trajectory=SINGLE_VIEW_UE, n_positions=1),
        ap_position=AP_POSITION,
    )
    return with_overrides(
        table3_config(),
        geometry=geometry,
        codebook=CodebookConfig(k=k),
        solver=SolverConfig(algorithm="gamp"),
        trials=trials,
        seed=seed,
    )


def _alpha_for_voxel(voxel: float) -> float:
    # sparse rate 4% at one-wavelength voxels, scaled inversely with size
    return min(max(0.04 / voxel, 1e-4), 0.5)


def preset_fig6(trials: int | None = None, seed: int = 0) -> list:
    """NMSE of SP / GAMP / SALS versus distance for two voxel sizes."""
    trials = trials or 10
    runs = []
    for voxel in (2.0, 4.0):
        for algorithm in ("sp", "gamp", "sals"):
            counts = (10, 10, 10) if voxel == 2.0 else (5, 5, 5)
            geometry = GeometryConfig(
                roi_counts=counts,
                roi_voxel=voxel,
                ue=UeConfig(n_positions=1, step=5.0),
                ap_position=AP_POSITION,
            )
            cfg = with_overrides(
                table3_config(),
                geometry=geometry,
                prior=PriorParams(alpha=_alpha_for_voxel(voxel), eta=1.0, sigma2=1.0, p01=0.1, rho=0.9),
                codebook=CodebookConfig(k=80),
                solver=SolverConfig(algorithm=algorithm),
                sweep="D",
                sweep_values=(30.0, 50.0, 70.0, 90.0),
                trials=trials,
                seed=seed,
            )
            runs.append((f"voxel{voxel:g}-{algorithm}", cfg))
    return runs


def preset_fig7(trials: int | None = None, seed: int = 0) -> list:
    """Single-view NMSE versus the number of RIS configurations."""
    cfg = with_overrides(
        single_view_config(trials=trials or 20, seed=seed),
        sweep="K",
        sweep_values=(40.0, 80.0, 120.0, 200.0, 300.0, 400.0),
    )
    return [("k-sweep", cfg)]


def preset_fig9(trials: int | None = None, seed: int = 0) -> list:
    """Joint multi-view versus per-view reconstruction versus distance."""
    trials = trials or 10
    runs = []
    for algorithm in ("turbo", "gamp", "sals"):
        cfg = with_overrides(
            table3_config(),
            solver=SolverConfig(algorithm=algorithm),
            sweep="D",
            sweep_values=(30.0, 40.0, 50.0, 60.0, 70.0),
            trials=trials,
            seed=seed,
        )
        runs.append((algorithm, cfg))
    return runs


def preset_fig10(trials: int | None = None, seed: int = 0) -> list:
    """Multi-view gain versus the correlation-degree scaling factor."""
    trials = trials or 20
    runs = []
    for algorithm in ("turbo", "gamp"):
        cfg = with_overrides(
            table3_config(),
            solver=SolverConfig(algorithm=algorithm),
            sweep="gamma",
            sweep_values=(0.5, 1.0, 2.0, 5.0, 10.0),
            trials=trials,
            seed=seed,
        )
        runs.append((algorithm, cfg))
    return runs


def preset_fig11(trials: int | None = None, seed: int = 0) -> list:
    """Measurement-count sweep for several view counts (pilot-saving tradeoff)."""
    trials = trials or 20
    runs = []
    for n_views in (1, 3, 6, 9):
        ue = UeConfig(n_positions=n_views, step=5.0)
        algorithm = "gamp" if n_views == 1 else "turbo"
        cfg = with_overrides(
            table3_config(),
            geometry=replace(table3_config().geometry, ue=ue),
            solver=SolverConfig(algorithm=algorithm),
            sweep="K",
            sweep_values=(20.0, 40.0, 60.0, 80.0, 100.0),
            trials=trials,
            seed=seed,
        )
        runs.append((f"T{n_views}", cfg))
    return runs


def _resolution_config(voxel: float, n_views: int, trials: int, seed: int, snr_db: float = 20.0) -> ExperimentConfig:
    geometry = GeometryConfig(
        roi_center=(60.0, 0.0, 0.0),
        roi_counts=(10, 10, 10),
        roi_voxel=voxel,
        ris_rows=36,
        ris_cols=36,
        ue=UeConfig(n_positions=n_views, step=5.0),
        ap_position=AP_POSITION,
    )
    algorithm = "gamp" if n_views == 1 else "turbo"
    return with_overrides(
        table3_config(),
        geometry=geometry,
        codebook=CodebookConfig(k=80),
        solver=SolverConfig(algorithm=algorithm),
        snr_db=snr_db,
        metric="phi",
        trials=trials,
        seed=seed,
    )


def preset_fig12(trials: int | None = None, seed: int = 0) -> list:
    """Two-point success detection rate versus the number of views."""
    trials = trials or 100
    runs = []
    for voxel in (2.5, 2.0, 1.5):
        for n_views in (1, 2, 3):
            runs.append(
                (f"voxel{voxel:g}-T{n_views}", _resolution_config(voxel, n_views, trials, seed))
            )
    return runs


def preset_table4(trials: int | None = None, seed: int = 0, full: bool = False) -> list:
    """Least-views rows of the resolution table (gating rows only by default)."""
    trials = trials or 200
    rows = [(2.5, 1, 20.0), (2.0, 2, 20.0)]
    if full:
        rows += [(1.5, 3, 20.0), (1.0, 10, 20.0), (2.5, 2, 0.0), (2.0, 2, 0.0), (1.5, 5, 0.0)]
    return [
        (f"voxel{voxel:g}-T{n_views}-snr{snr:g}", _resolution_config(voxel, n_views, trials, seed, snr))
        for voxel, n_views, snr in rows
    ]


PRESETS = {
    "fig6": preset_fig6,
    "fig7": preset_fig7,
    "fig9": preset_fig9,
    "fig10": preset_fig10,
    "fig11": preset_fig11,
    "fig12": preset_fig12,
    "table4": preset_table4,
}
