"""
Command-line front end.

Subcommands
-----------
synth     scene file(s) -> CSI capture + GPS trajectory per scene
estimate  scene -> synthetic sounding (PSS, pilots, LS) -> estimated CSI, prints NMSE
analyze   CSI + trajectory (or scene file(s), or a saved manifest) -> CSV bundle
report    summary files of several runs -> one table, one row per trajectory

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric error.
The default output root is ``$A2GCHAN_OUTPUT`` (falls back to
``./a2gchan-output``). Every run writes a manifest next to its outputs;
``analyze --manifest`` replays one.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (MANIFEST_NAME, SUMMARY_COLUMNS, SUMMARY_NAME, AnalysisParams,
                       RunManifest, analyze, atomic_write, read_summary, write_outputs,
                       write_summary)
from .csi import TrajectoryLog, align_trajectory, load_csi, store_csi
from .errors import A2GError, ConfigError, DataError
from .geochannel import load_scene, synth_csi
from .sounder import sound

log = logging.getLogger("a2gchan")

OUTPUT_ENV = "A2GCHAN_OUTPUT"
DEFAULT_OUTPUT = "a2gchan-output"
WORK_DTYPE = np.complex64   # exact for the 16-bit file format, half the memory


def output_root(arg=None) -> Path:
    return Path(arg or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT)


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------
def _pair(kind):
    def parse(text):
        try:
            a, b = (kind(v) for v in text.split(","))
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected two comma-separated values, got {text!r}")
        return (a, b)
    return parse


def _floats(text):
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _clip(text):
    return None if text.lower() in ("none", "off") else float(text)


def _add_scene_options(p):
    p.add_argument("--duration", type=float, help="seconds to synthesize (default: whole trajectory)")
    p.add_argument("--snr", type=float, dest="snr_db", help="SNR in dB (default: scene setting)")
    p.add_argument("--seed", type=int, help="noise seed (default: scene setting)")


def _add_analysis_options(p):
    d = AnalysisParams()
    g = p.add_argument_group("analysis parameters")
    g.add_argument("-W", "--window", type=int, default=d.window, help="snapshots per window")
    g.add_argument("--c-th", type=float, default=d.c_th, help="CMD stationarity threshold")
    g.add_argument("--band", type=_pair(int), help="frequency bins START,STOP (default: all)")
    g.add_argument("--angle-span", type=_pair(float), default=d.angle_span, metavar="LO,HI")
    g.add_argument("--angle-step", type=float, default=d.angle_step, help="angle grid step [deg]")
    g.add_argument("--stride", type=int, help="distance-map spacing in snapshots (default: W)")
    g.add_argument("--clip-db", type=_clip, default=d.clip_db,
                   help="zero PDP taps this far below the peak ('none' disables)")
    g.add_argument("--taper", default=d.taper, choices=["hann", "hamming", "none"])
    g.add_argument("--reference", default=d.reference, choices=["global", "snapshot", "none"])
    g.add_argument("--rho-thresholds", type=_floats, default=d.rho_thresholds, metavar="T1,T2")
    g.add_argument("--element", type=_pair(int), default=d.spatial_element, metavar="ROW,COL",
                   dest="spatial_element")
    g.add_argument("--spatial-angle", type=float, default=d.spatial_angle)
    g.add_argument("--spatial-window", type=int)
    g.add_argument("--stacking", default=d.stacking, choices=["column", "row"])


def _params_from_args(args) -> AnalysisParams:
    return AnalysisParams(
        window=args.window, c_th=args.c_th, band=args.band, angle_span=args.angle_span,
        angle_step=args.angle_step, stride=args.stride, clip_db=args.clip_db,
        taper=None if args.taper == "none" else args.taper, reference=args.reference,
        rho_thresholds=args.rho_thresholds, spatial_element=args.spatial_element,
        spatial_angle=args.spatial_angle, spatial_window=args.spatial_window,
        stacking=args.stacking,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="a2gchan", description=__doc__.split("\n\n")[0].strip(),
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="synthesize CSI captures from scene files")
    p.add_argument("scenes", nargs="+", type=Path)
    p.add_argument("-o", "--out", type=Path, help=f"output directory (default: ${OUTPUT_ENV})")
    _add_scene_options(p)

    p = sub.add_parser("estimate", help="run the sounding chain on a synthetic scene")
    p.add_argument("scene", type=Path)
    p.add_argument("-o", "--out", type=Path)
    p.add_argument("--threshold", type=float, default=0.7, help="PSS detection threshold")
    _add_scene_options(p)

    p = sub.add_parser("analyze", help="stationarity analysis of a capture or scene(s)")
    p.add_argument("csi", nargs="?", type=Path, help="CSI capture")
    p.add_argument("trajectory", nargs="?", type=Path, help="GPS trajectory CSV")
    p.add_argument("--scene", action="append", type=Path, default=[],
                   help="synthesize this scene instead of reading a capture (repeatable)")
    p.add_argument("--manifest", type=Path, help="replay a saved analysis manifest")
    p.add_argument("--name", help="trajectory label (default: file stem)")
    p.add_argument("-o", "--out", type=Path)
    _add_scene_options(p)
    _add_analysis_options(p)

    p = sub.add_parser("report", help="tabulate summaries of several analysis runs")
    p.add_argument("runs", nargs="+", type=Path, help="analysis directories or summary files")
    p.add_argument("-o", "--out", type=Path, help="write the combined table to this CSV")
    return parser


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------
def _synth_scene(path, duration=None, snr_db=None, seed=None):
    scene, config = load_scene(path)
    tensor = synth_csi(scene, config, duration, snr_db, seed, dtype=WORK_DTYPE)
    return scene, tensor


def cmd_synth(args) -> int:
    out = output_root(args.out)
    for path in args.scenes:
        scene, tensor = _synth_scene(path, args.duration, args.snr_db, args.seed)
        csi_path = out / f"{scene.name}.csi"
        traj_path = out / f"{scene.name}_trajectory.csv"
        atomic_write(csi_path, lambda p: store_csi(tensor, p))
        duration = tensor.num_snapshots * tensor.config.csi_interval
        gps = scene.gps_log(min(duration, scene.max_duration), tensor.config.gps_interval)
        atomic_write(traj_path, gps.to_csv)
        RunManifest("synth", {"scene": str(path.resolve())},
                    {"duration": args.duration, "snr_db": args.snr_db}, str(out.resolve()),
                    scene.seed if args.seed is None else args.seed, scene.name
                    ).write(out / f"{scene.name}.manifest.json")
        print(f"{scene.name}: T={tensor.num_snapshots} -> {csi_path}, {traj_path}")
    return 0


def cmd_estimate(args) -> int:
    out = output_root(args.out)
    scene, truth = _synth_scene(args.scene, args.duration, snr_db=None, seed=args.seed)
    snr = scene.snr_db if args.snr_db is None else args.snr_db
    seed = scene.seed if args.seed is None else args.seed
    est, report = sound(truth, snr, seed, threshold=args.threshold)
    csi_path = out / f"{scene.name}_est.csi"
    atomic_write(csi_path, lambda p: store_csi(est, p))
    gps = scene.gps_log(min(truth.num_snapshots * truth.config.csi_interval, scene.max_duration),
                        truth.config.gps_interval)
    atomic_write(out / f"{scene.name}_trajectory.csv", gps.to_csv)
    RunManifest("estimate", {"scene": str(args.scene.resolve())},
                {"duration": args.duration, "snr_db": snr, "threshold": args.threshold},
                str(out.resolve()), seed, scene.name,
                {"nmse_db": report.nmse_db if np.isfinite(report.nmse_db) else str(report.nmse_db),
                 "timing_errors": report.timing_errors}
                ).write(out / f"{scene.name}_est.manifest.json")
    snr_txt = "off" if snr is None else f"{snr:g} dB"
    print(f"{scene.name}: SNR {snr_txt}, NMSE {report.nmse_db:.2f} dB, "
          f"timing errors {report.timing_errors}/{truth.num_snapshots} -> {csi_path}")
    return 0


def run_analysis(manifest: RunManifest) -> Path:
    """Execute an analysis manifest; returns the output directory."""
    params = AnalysisParams.from_mapping(manifest.params)
    out = Path(manifest.output)
    inputs = manifest.inputs
    if "scene" in inputs:
        scene, tensor = _synth_scene(Path(inputs["scene"]), inputs.get("duration"),
                                     inputs.get("snr_db"), manifest.seed)
        positions = scene.position_at(tensor.timestamps)
    elif "csi" in inputs and "trajectory" in inputs:
        tensor = load_csi(inputs["csi"], dtype=WORK_DTYPE)
        positions = align_trajectory(TrajectoryLog.from_csv(inputs["trajectory"]), tensor)
    else:
        raise ConfigError("manifest needs a 'scene' or a 'csi' + 'trajectory' input",
                          module="cli")
    result = analyze(tensor, positions, params, manifest.name or "trajectory")
    write_outputs(result, params, out)
    manifest.write(out / MANIFEST_NAME)
    return out


def _analysis_manifests(args) -> list[RunManifest]:
    if args.manifest is not None:
        m = RunManifest.load(args.manifest)
        if m.command != "analyze":
            raise ConfigError(f"{args.manifest} is a {m.command!r} manifest", module="cli")
        if args.out is not None:
            m.output = str(args.out.resolve())
        return [m]
    params = asdict(_params_from_args(args))
    root = output_root(args.out)
    if args.scene:
        if args.csi is not None:
            raise ConfigError("give either a CSI capture or --scene, not both", module="cli")
        out = []
        for path in args.scene:
            scene, _ = load_scene(path)
            name = args.name if args.name and len(args.scene) == 1 else scene.name
            seed = scene.seed if args.seed is None else args.seed
            sub = root / name if len(args.scene) > 1 or args.out is None else root
            out.append(RunManifest(
                "analyze", {"scene": str(path.resolve()), "duration": args.duration,
                            "snr_db": args.snr_db},
                params, str(sub.resolve()), seed, name))
        return out
    if args.csi is None or args.trajectory is None:
        raise ConfigError("analyze needs CSI + trajectory, --scene or --manifest", module="cli")
    name = args.name or args.csi.stem
    out = root if args.out is not None else root / name
    return [RunManifest("analyze", {"csi": str(args.csi.resolve()),
                                    "trajectory": str(args.trajectory.resolve())},
                        params, str(out.resolve()), args.seed or 0, name)]


def cmd_analyze(args) -> int:
    for manifest in _analysis_manifests(args):
        out = run_analysis(manifest)
        print(f"{manifest.name}: outputs in {out}")
    return 0


def _summary_files(paths):
    for p in paths:
        f = p / SUMMARY_NAME if p.is_dir() else p
        if not f.is_file():
            raise DataError(f"no summary found at {p}", module="cli")
        yield f


def format_table(rows) -> str:
    cols = SUMMARY_COLUMNS
    cells = [cols] + [[r["trajectory"]] + [f"{r[c]:.4g}" for c in cols[1:]] for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(cols))]
    return "\n".join("  ".join(v.rjust(w) for v, w in zip(row, widths)) for row in cells)


def cmd_report(args) -> int:
    rows = [r for f in _summary_files(args.runs) for r in read_summary(f)]
    if args.out is not None:
        write_summary(rows, args.out)
    print(format_table(rows))
    return 0


COMMANDS = {"synth": cmd_synth, "estimate": cmd_estimate, "analyze": cmd_analyze,
            "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except A2GError as exc:
        print(f"a2gchan: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"a2gchan: error: [io] {exc}", file=sys.stderr)
        return DataError.exit_code


if __name__ == "__main__":
    sys.exit(main())
