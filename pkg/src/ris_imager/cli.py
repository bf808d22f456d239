"""Command-line interface.

Subcommands: `simulate` (run a configured experiment), `optimize-phases`
(projected-gradient codebook design), `analyze` (psf | coherence | rcs |
limits), and `reproduce` (desk-scale presets of the published experiments).

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .channel import build_sensing_matrices, random_codebook, save_codebook_csv
from .coherence import build_coherence_report, optimize_phases, theorem1_check
from .config import ConfigError, load_config, with_overrides
from .experiments import (
    NumericalError,
    _PointContext,
    build_id,
    run_experiment,
    write_results,
)
from .geometry import diffraction_limits, subtended_angle_sine
from .presets import PRESETS
from .rcs import Plate, fluctuation_sweep, rcs_sweep
from .scene import export_scene_csv


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ris-imager", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run the experiment described by a config file")
    sim.add_argument("--config", required=True)
    sim.add_argument("--trials", type=int, default=None)
    sim.add_argument("--seed", type=int, default=None)
    sim.add_argument("--out", required=True, help="output prefix for .csv/.json")
    sim.add_argument("--dump-matrices", default=None, help="debug dump of A_t (.npy) and codebook")
    sim.add_argument("--dump-scene", default=None, help="CSV dump of the first trial's scene")

    opt = sub.add_parser("optimize-phases", help="optimize a RIS codebook for one scenario")
    opt.add_argument("--config", required=True)
    opt.add_argument("--out", required=True, help="codebook CSV (phases in radians)")
    opt.add_argument("--tau", type=float, default=100.0)
    opt.add_argument("--iters", type=int, default=200)
    opt.add_argument("--seed", type=int, default=0)
    opt.add_argument("--view", type=int, default=0, help="trajectory position index")
    opt.add_argument("--trace", default=None, help="CSV of the objective per iteration")

    ana = sub.add_parser("analyze", help="coherence / PSF / RCS / resolution-limit analyses")
    ana_sub = ana.add_subparsers(dest="analysis", required=True)

    psf_p = ana_sub.add_parser("psf", help="sensing-matrix PSF summary")
    coh_p = ana_sub.add_parser("coherence", help="subpath correlation + PSF deviation summary")
    for p in (psf_p, coh_p):
        p.add_argument("--config", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--full", action="store_true", help="also dump full matrices as .npy")
    coh_p.add_argument("--theorem1", default=None, help="comma-separated K list for the deviation check")

    rcs_p = ana_sub.add_parser("rcs", help="flat-plate RCS sweeps per pixel size")
    rcs_p.add_argument("--out", required=True)
    rcs_p.add_argument("--plate", type=float, default=10.0, help="plate side (wavelengths)")
    rcs_p.add_argument("--pixels", default="0.25,0.5,1.0", help="comma-separated pixel sizes")
    rcs_p.add_argument("--points", type=int, default=121, help="angle samples over +/-90 deg")

    lim_p = ana_sub.add_parser("limits", help="diffraction resolution limits of the scenario")
    lim_p.add_argument("--config", required=True)
    lim_p.add_argument("--bandwidth-hz", type=float, default=None)
    lim_p.add_argument("--carrier-hz", type=float, default=None)

    rep = sub.add_parser("reproduce", help="run a desk-scale preset experiment")
    rep.add_argument("name", choices=sorted(PRESETS))
    rep.add_argument("--out", required=True, help="output prefix for .csv/.json")
    rep.add_argument("--trials", type=int, default=None)
    rep.add_argument("--seed", type=int, default=0)
    rep.add_argument("--full", action="store_true", help="include the non-gating stretch rows (table4)")
    return parser


def _apply_overrides(cfg, trials, seed):
    if trials is not None:
        cfg = with_overrides(cfg, trials=trials)
    if seed is not None:
        cfg = with_overrides(cfg, seed=seed)
    return cfg


def _single_view_matrix(cfg, view):
    ctx = _PointContext(cfg)
    from .experiments import _trajectory

    positions = _trajectory(ctx, np.random.SeedSequence([cfg.seed, 0, 0]).spawn(1)[0])
    channels = ctx.channels_for(positions)
    codebook = ctx.fixed_codebook or random_codebook(
        cfg.codebook.k, ctx.ris.n_elements, mode=cfg.codebook.mode, bits=cfg.codebook.bits,
        seed=cfg.codebook.seed if cfg.codebook.seed is not None else cfg.seed,
    )
    sensing = build_sensing_matrices(channels, codebook)
    view = min(view, sensing.n_views - 1)
    return ctx, channels, codebook, sensing, view


def cmd_simulate(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args.trials, args.seed)
    if args.dump_matrices or args.dump_scene:
        from .experiments import _scene

        ctx, channels, codebook, sensing, _ = _single_view_matrix(cfg, 0)
        if args.dump_matrices:
            os.makedirs(args.dump_matrices, exist_ok=True)
            for t in range(sensing.n_views):
                np.save(os.path.join(args.dump_matrices, f"a_{t}.npy"), sensing.a[t])
            save_codebook_csv(codebook, os.path.join(args.dump_matrices, "codebook.csv"))
            print(f"dumped {sensing.n_views} sensing matrices to {args.dump_matrices}")
        if args.dump_scene:
            scene = _scene(ctx, sensing.n_views, np.random.SeedSequence([cfg.seed, 0, 0]).spawn(2)[1])
            export_scene_csv(scene, args.dump_scene)
            print(f"dumped scene to {args.dump_scene}")
    rows = run_experiment(cfg)
    csv_path, json_path = write_results(args.out, rows, cfg)
    for row in rows:
        print(
            f"{row.sweep_axis}={row.sweep_value} {row.algorithm} {row.metric}="
            f"{row.mean:.3f} (std {row.std:.3f}, n={row.n_trials}, failures={row.n_failures})"
        )
    print(f"wrote {csv_path} and {json_path} [build {build_id()}]")
    return 0


def cmd_optimize(args) -> int:
    cfg = load_config(args.config)
    _, channels, _, sensing, view = _single_view_matrix(cfg, args.view)
    codebook, trace = optimize_phases(
        sensing.b(view), k=cfg.codebook.k, tau=args.tau, max_iters=args.iters, seed=args.seed
    )
    save_codebook_csv(codebook, args.out)
    if args.trace:
        np.savetxt(args.trace, trace, delimiter=",", header="beta_prime", comments="")
    print(f"optimized {codebook.k}x{codebook.m} codebook -> {args.out}")
    print(f"objective: {trace[0]:.4f} -> {trace[-1]:.4f} over {args.iters} iterations")
    return 0


def cmd_analyze_psf(args, with_mu: bool) -> int:
    cfg = load_config(args.config)
    _, channels, _, sensing, view = _single_view_matrix(cfg, 0)
    report = build_coherence_report(np.asarray(sensing.a[view]), channels.H_vs)
    with open(args.out, "w", encoding="utf-8") as handle:
        handle.write("voxel,psf_max_sidelobe,subpath_max_sidelobe\n")
        for n in range(report.psf_sidelobes.shape[0]):
            handle.write(f"{n},{report.psf_sidelobes[n]!r},{report.subpath_sidelobes[n]!r}\n")
    print(f"beta={report.beta:.4f} beta_prime={report.beta_prime:.4f}")
    print(
        f"PSF-vs-subpath deviation: max={report.deviation_max:.4f} "
        f"median={report.deviation_median:.4f}"
    )
    if args.full:
        np.save(args.out + ".psf.npy", report.psf)
        np.save(args.out + ".mu.npy", report.mu)
    if with_mu and getattr(args, "theorem1", None):
        k_values = [int(v) for v in args.theorem1.split(",")]
        stats = theorem1_check(channels.H_vs, channels.h_sa, k_values, seed=cfg.seed)
        for (mode, k), (dmax, dmed) in sorted(stats.items()):
            print(f"theorem1 {mode} K={k}: max|PSF-mu|={dmax:.4f} median={dmed:.4f}")
    print(f"wrote {args.out}")
    return 0


def cmd_analyze_rcs(args) -> int:
    pixel_sizes = [float(v) for v in args.pixels.split(",")]
    angles = np.linspace(-np.pi / 2, np.pi / 2, args.points)
    columns = [np.degrees(angles)]
    header = ["angle_deg"]
    floor = 1e-12
    for pix in pixel_sizes:
        plate = Plate(args.plate, args.plate, pix, pix)
        for aniso, tag in ((True, "true"), (False, "isotropic")):
            sweep = rcs_sweep(plate, angles, anisotropic=aniso)
            columns.append(10.0 * np.log10(np.maximum(sweep, floor)))
            header.append(f"sigma_db_pixel{pix:g}_{tag}")
        print(f"pixel {pix:g}: single-pixel fluctuation {fluctuation_sweep(pix):.2f} dB over +/-90 deg")
    np.savetxt(
        args.out, np.column_stack(columns), delimiter=",", header=",".join(header), comments=""
    )
    print(f"wrote {args.out}")
    return 0


def cmd_analyze_limits(args) -> int:
    cfg = load_config(args.config)
    ris = cfg.geometry.ris()
    distance = float(np.linalg.norm(np.asarray(cfg.geometry.roi_center) - np.asarray(cfg.geometry.ris_center)))
    sine = subtended_angle_sine(ris.aperture, distance)
    d_range, d_cross = diffraction_limits(sine, bandwidth=args.bandwidth_hz, carrier=args.carrier_hz)
    print(f"aperture R = {ris.aperture:g} wavelengths, distance D = {distance:g} wavelengths")
    print(f"sin(psi/2) = {sine:.5f}")
    print(f"delta_range = {d_range:g} wavelengths" + (" (single frequency: unbounded)" if np.isinf(d_range) else ""))
    print(f"delta_cross = {d_cross:g} wavelengths")
    voxel = cfg.geometry.roi_voxel
    verdict = "anisotropic (>= lambda/2)" if voxel >= 0.5 else "approximately isotropic (< lambda/2)"
    print(f"voxel size {voxel:g} wavelengths -> scattering regime: {verdict}")
    return 0


def cmd_reproduce(args) -> int:
    preset = PRESETS[args.name]
    kwargs = {"trials": args.trials, "seed": args.seed}
    if args.name == "table4":
        kwargs["full"] = args.full
    runs = preset(**kwargs)
    all_rows = []
    base_cfg = runs[0][1]
    for label, cfg in runs:
        rows = run_experiment(cfg)
        for row in rows:
            print(
                f"[{label}] {row.sweep_axis}={row.sweep_value} {row.algorithm} "
                f"{row.metric}={row.mean:.3f} (n={row.n_trials})"
            )
        all_rows.extend(rows)
    csv_path, json_path = write_results(args.out, all_rows, base_cfg)
    print(f"wrote {csv_path} and {json_path}")
    return 0


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "simulate":
            return cmd_simulate(args)
        if args.command == "optimize-phases":
            return cmd_optimize(args)
        if args.command == "analyze":
            if args.analysis == "psf":
                return cmd_analyze_psf(args, with_mu=False)
            if args.analysis == "coherence":
                return cmd_analyze_psf(args, with_mu=True)
            if args.analysis == "rcs":
                return cmd_analyze_rcs(args)
            return cmd_analyze_limits(args)
        if args.command == "reproduce":
            return cmd_reproduce(args)
        raise ConfigError(f"unknown command {args.command!r}")
    except (ConfigError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError, OverflowError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
