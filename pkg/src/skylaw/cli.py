"""Command line pipeline.

Subcommands cover the full workflow: ``build-starmap`` fits the spatial
relation layers a constitution needs, ``infer-field`` exports the rule
satisfaction field, ``route`` runs the two-stage router and writes the
Pareto set (CSV plus per-path GeoJSON), ``clearance`` / ``explain`` /
``optimize`` operate on a proposal path, and ``export-plots`` renders
grids, rejection curves and path overlays as figures.

Exit codes: 0 success (clearance granted), 1 clearance denied, 2 input
error, 3 no feasible route.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import constitution as cl
from .config import ConfigError, load_config, rewrite_setting
from .geo import (
    GeoInputError,
    load_geojson,
    waypoints_from_geojson,
    waypoints_to_geojson,
)
from .grids import GridError, read_grid3, write_grid3
from .inference import InferenceError, MissionSetting, probability_field
from .mission import MissionError, clearance_with_inference, explain, optimize_setting
from .pipeline import PipelineError, build_star_map, resample_waypoints, route
from .router import RouterError, UnreachableError
from .starmap import StarMap, StarMapError

EXIT_OK = 0
EXIT_DENIED = 1
EXIT_INPUT = 2
EXIT_INFEASIBLE = 3


class _InputError(Exception):
    pass


def _fail(message: str) -> "_InputError":
    return _InputError(message)


def _load_constitution(path: str) -> cl.Constitution:
    try:
        return cl.parse(Path(path).read_text())
    except OSError as exc:
        raise _fail(f"cannot read constitution: {exc}") from exc
    except cl.ConstitutionError as exc:
        raise _fail(f"constitution: {exc}") from exc


def _load_map(path: str):
    try:
        return load_geojson(Path(path).read_text())
    except OSError as exc:
        raise _fail(f"cannot read map: {exc}") from exc
    except GeoInputError as exc:
        raise _fail(f"map: {exc}") from exc


def _load_starmap(path: str) -> StarMap:
    try:
        return StarMap.load(path)
    except (OSError, StarMapError, GridError, json.JSONDecodeError) as exc:
        raise _fail(f"star map: {exc}") from exc


def _load_config_arg(path: str | None):
    try:
        return load_config(path)
    except OSError as exc:
        raise _fail(f"cannot read config: {exc}") from exc
    except ConfigError as exc:
        raise _fail(f"config: {exc}") from exc


def _validate_or_fail(c: cl.Constitution, sm: StarMap) -> None:
    diagnostics = cl.validate(c, sm)
    if diagnostics:
        details = "\n".join(f"  {d}" for d in diagnostics)
        raise _fail(f"constitution does not validate against the star map:\n{details}")


def _parse_point(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise _fail(f"expected 'x,y,z', got {text!r}")
    try:
        return tuple(float(p) for p in parts)  # type: ignore[return-value]
    except ValueError as exc:
        raise _fail(f"expected numeric 'x,y,z', got {text!r}") from exc


def _setting_from(config, c: cl.Constitution, override: str | None) -> MissionSetting:
    options = config.setting
    if override is not None:
        options = tuple(o.strip() for o in override.split(",") if o.strip())
    try:
        return MissionSetting.resolve(c, options)
    except InferenceError as exc:
        raise _fail(str(exc)) from exc


def _load_path_waypoints(path: str, config):
    try:
        waypoints, properties = waypoints_from_geojson(Path(path).read_text())
    except OSError as exc:
        raise _fail(f"cannot read path: {exc}") from exc
    except GeoInputError as exc:
        raise _fail(f"path: {exc}") from exc
    return resample_waypoints(waypoints, config.waypoint_resolution), properties


# ----------------------------------------------------------------------
# subcommands


def _cmd_build_starmap(args) -> int:
    config = _load_config_arg(args.config)
    if args.seed is not None:
        config.seed = args.seed
    c = _load_constitution(args.constitution)
    feature_map = _load_map(args.map)
    try:
        sm = build_star_map(feature_map, c, config)
    except (PipelineError, StarMapError) as exc:
        raise _fail(str(exc)) from exc
    sm.source = Path(args.map).name
    out = Path(args.output)
    sm.save(out)
    for warning in feature_map.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    print(f"wrote {len(sm.layers)} layers to {out}")
    return EXIT_OK


def _cmd_infer_field(args) -> int:
    config = _load_config_arg(args.config)
    c = _load_constitution(args.constitution)
    sm = _load_starmap(args.starmap)
    _validate_or_fail(c, sm)
    setting = _setting_from(config, c, args.setting)
    try:
        field = probability_field(
            c, sm, config.navigation_grid(), setting,
            query=args.objective, limit_bits=config.model_bits_limit,
        )
    except InferenceError as exc:
        raise _fail(str(exc)) from exc
    write_grid3(field, args.output)
    print(f"wrote probability field to {args.output}")
    return EXIT_OK


def _cmd_route(args) -> int:
    config = _load_config_arg(args.config)
    if args.seed is not None:
        config.seed = args.seed
    c = _load_constitution(args.constitution)
    feature_map = _load_map(args.map)
    sm = _load_starmap(args.starmap)
    _validate_or_fail(c, sm)
    start = _parse_point(args.start)
    goal = _parse_point(args.goal)
    if start == goal:
        raise _fail("start and goal must differ")

    try:
        result = route(c, sm, feature_map, config, start, goal)
    except UnreachableError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (PipelineError, RouterError, InferenceError, GridError) as exc:
        raise _fail(str(exc)) from exc

    out = Path(args.output)
    paths_dir = out / "paths"
    paths_dir.mkdir(parents=True, exist_ok=True)

    rows = []
    for index in range(len(result.pareto)):
        waypoints = result.waypoints[index]
        score = result.clearance_scores[index]
        granted = score > config.clearance_threshold
        path_file = f"paths/member_{index:03d}.geojson"
        doc = waypoints_to_geojson(
            waypoints,
            (config.origin_lat, config.origin_lon),
            {
                "member": index,
                "clearance_score": score,
                "granted": granted,
                "clearance": [float(p) for p in result.waypoint_probabilities[index]],
                "objectives": {
                    name: float(v)
                    for name, v in zip(result.objective_names, result.pareto.objectives[index])
                },
            },
        )
        (out / path_file).write_text(json.dumps(doc, indent=1, sort_keys=True))
        extreme_for = [
            result.objective_names[m]
            for m, member in enumerate(result.extreme_indices)
            if member == index
        ]
        rows.append(
            [index]
            + [repr(float(v)) for v in result.pareto.objectives[index]]
            + [
                result.pareto.template.n_control,
                repr(score),
                int(index == result.knee_index),
                ";".join(extreme_for),
                path_file,
            ]
        )

    with (out / "pareto.csv").open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            ["member"]
            + result.objective_names
            + ["n_control", "clearance", "is_knee", "extreme_for", "path_file"]
        )
        writer.writerows(rows)

    with (out / "rejection.csv").open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["threshold", "rejection_rate"])
        for t, r in zip(result.rejection_thresholds, result.rejection_rates):
            writer.writerow([repr(float(t)), repr(float(r))])

    print(
        f"front size {len(result.pareto)}, knee member {result.knee_index}, "
        f"rejection area {result.rejection_area:.4f}"
    )
    print(f"wrote {out / 'pareto.csv'}, {out / 'rejection.csv'} and {len(rows)} path files")
    return EXIT_OK


def _mission_inputs(args):
    config = _load_config_arg(args.config)
    c = _load_constitution(args.constitution)
    sm = _load_starmap(args.starmap)
    _validate_or_fail(c, sm)
    waypoints, _ = _load_path_waypoints(args.path, config)
    return config, c, sm, waypoints


def _cmd_clearance(args) -> int:
    config, c, sm, waypoints = _mission_inputs(args)
    setting = _setting_from(config, c, args.setting)
    threshold = config.clearance_threshold if args.threshold is None else args.threshold
    try:
        report = clearance_with_inference(c, sm, waypoints, setting, threshold)
    except (InferenceError, MissionError) as exc:
        raise _fail(str(exc)) from exc
    verdict = "granted" if report.granted else "denied"
    print(f"clearance = {report.score:.6f} (threshold {report.threshold:g}): {verdict}")
    return EXIT_OK if report.granted else EXIT_DENIED


def _cmd_explain(args) -> int:
    config, c, sm, waypoints = _mission_inputs(args)
    try:
        report = explain(c, sm, waypoints, limit=config.explain_limit)
    except (InferenceError, MissionError) as exc:
        raise _fail(str(exc)) from exc
    print("setting".ljust(48) + "clearance  granted")
    threshold = config.clearance_threshold
    for setting, score in report.entries:
        name = ", ".join(setting.choices) if setting.choices else "(no parameters)"
        granted = "yes" if score > threshold else "no"
        print(f"{name:<48}{score:>9.6f}  {granted}")
    for group, impact in zip(c.parameter_groups, report.group_impacts):
        print(f"impact of {{{', '.join(group.options)}}}: {impact:.6f}")
    if args.output:
        with Path(args.output).open("w", newline="") as handle:
            writer = csv.writer(handle)
            groups = [f"group_{i}" for i in range(len(c.parameter_groups))]
            writer.writerow(groups + ["clearance", "granted"])
            for setting, score in report.entries:
                writer.writerow(
                    list(setting.choices) + [repr(score), int(score > threshold)]
                )
        print(f"wrote {args.output}")
    return EXIT_OK


def _cmd_optimize(args) -> int:
    config, c, sm, waypoints = _mission_inputs(args)
    allowed = None
    if args.allowed:
        allowed = [
            tuple(o.strip() for o in spec.split(",") if o.strip()) for spec in args.allowed
        ]
        if len(allowed) != len(c.parameter_groups):
            raise _fail(
                f"--allowed must be given once per parameter group "
                f"({len(c.parameter_groups)})"
            )
    try:
        setting, score = optimize_setting(c, sm, waypoints, allowed, limit=config.explain_limit)
    except (InferenceError, MissionError) as exc:
        raise _fail(str(exc)) from exc
    print(f"optimal setting: {', '.join(setting.choices) or '(no parameters)'}")
    print(f"clearance = {score:.6f}")
    if args.output:
        original = Path(args.config).read_text() if args.config else ""
        Path(args.output).write_text(rewrite_setting(original, setting.choices))
        print(f"wrote updated config to {args.output}")
    return EXIT_OK


def _cmd_export_plots(args) -> int:
    from . import plots  # deferred: pulls in matplotlib

    config = _load_config_arg(args.config)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    wrote_any = False

    for grid_path in args.grid or []:
        try:
            grid = read_grid3(grid_path)
        except (OSError, GridError) as exc:
            raise _fail(f"grid {grid_path}: {exc}") from exc
        altitudes = args.altitude or [grid.spec.origin[2]]
        stem = Path(grid_path).stem
        for path in plots.save_grid_slices(grid, altitudes, out, stem):
            print(f"wrote {path}")
        wrote_any = True

    for curve_path in args.rejection or []:
        try:
            with open(curve_path, newline="") as handle:
                reader = csv.reader(handle)
                header = next(reader)
                if len(header) < 2:
                    raise _fail(f"rejection csv {curve_path}: expected two columns")
                data = np.array([[float(row[0]), float(row[1])] for row in reader])
        except OSError as exc:
            raise _fail(f"cannot read {curve_path}: {exc}") from exc
        except ValueError as exc:
            raise _fail(f"rejection csv {curve_path}: {exc}") from exc
        if data.size == 0:
            print(f"warning: {curve_path} has no data, curve omitted", file=sys.stderr)
            continue
        path = plots.save_rejection_curve(
            data[:, 0], data[:, 1], out / f"rejection_{Path(curve_path).stem}.png"
        )
        print(f"wrote {path}")
        wrote_any = True

    if args.paths:
        overlay = []
        for path_file in args.paths:
            try:
                waypoints, properties = waypoints_from_geojson(Path(path_file).read_text())
            except (OSError, GeoInputError) as exc:
                raise _fail(f"path {path_file}: {exc}") from exc
            overlay.append((waypoints, float(properties.get("clearance_score", 1.0))))
        if overlay:
            threshold = (
                config.clearance_threshold if args.threshold is None else args.threshold
            )
            path = plots.save_path_overlay(overlay, threshold, out / "paths_overlay.png")
            print(f"wrote {path}")
            wrote_any = True
        else:
            print("warning: empty path set, overlay omitted", file=sys.stderr)

    if not wrote_any:
        print("warning: nothing to plot", file=sys.stderr)
    return EXIT_OK


# ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="skylaw",
        description="Compliant and effective UAV routing pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, output=True):
        p.add_argument("--config", help="mission config file (flat key = value)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--threads", type=int, default=None, help="worker cap (advisory)")
        if output:
            p.add_argument("--output", required=True, help="output file or directory")

    p = sub.add_parser("build-starmap", help="fit relation layers for a constitution")
    p.add_argument("--map", required=True, help="GeoJSON feature map")
    p.add_argument("--constitution", required=True, help="constitution source file")
    common(p)
    p.set_defaults(fn=_cmd_build_starmap)

    p = sub.add_parser("infer-field", help="export the rule satisfaction field")
    p.add_argument("--constitution", required=True)
    p.add_argument("--starmap", required=True, help="star map directory")
    p.add_argument("--setting", help="comma-separated parameter options")
    p.add_argument("--objective", help="query a single logic objective")
    common(p)
    p.set_defaults(fn=_cmd_infer_field)

    p = sub.add_parser("route", help="run the two-stage router")
    p.add_argument("--map", required=True)
    p.add_argument("--constitution", required=True)
    p.add_argument("--starmap", required=True)
    p.add_argument("--start", required=True, help="x,y,z in local meters")
    p.add_argument("--goal", required=True, help="x,y,z in local meters")
    common(p)
    p.set_defaults(fn=_cmd_route)

    for name, fn in (("clearance", _cmd_clearance), ("explain", _cmd_explain)):
        p = sub.add_parser(name, help=f"{name} for a proposal path")
        p.add_argument("--path", required=True, help="path GeoJSON")
        p.add_argument("--constitution", required=True)
        p.add_argument("--starmap", required=True)
        if name == "clearance":
            p.add_argument("--setting", help="comma-separated parameter options")
            p.add_argument("--threshold", type=float, help="override clearance threshold")
            common(p, output=False)
        else:
            common(p, output=False)
            p.add_argument("--output", help="also write the setting table as CSV")
        p.set_defaults(fn=fn)

    p = sub.add_parser("optimize", help="find the clearance-maximizing setting")
    p.add_argument("--path", required=True)
    p.add_argument("--constitution", required=True)
    p.add_argument("--starmap", required=True)
    p.add_argument(
        "--allowed",
        action="append",
        help="comma-separated allowed options, once per group (default: all)",
    )
    common(p, output=False)
    p.add_argument("--output", help="write a config copy with the optimal setting")
    p.set_defaults(fn=_cmd_optimize)

    p = sub.add_parser("export-plots", help="render grids, curves and path overlays")
    p.add_argument("--grid", action="append", help="GRID3 file (repeatable)")
    p.add_argument(
        "--altitude", action="append", type=float, help="slice altitude in m (repeatable)"
    )
    p.add_argument("--rejection", action="append", help="rejection curve CSV (repeatable)")
    p.add_argument("--paths", nargs="*", help="path GeoJSON files for the overlay")
    p.add_argument("--threshold", type=float, help="clearance threshold for coloring")
    common(p)
    p.set_defaults(fn=_cmd_export_plots)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except _InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
